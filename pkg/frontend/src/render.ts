/**
 * HTML string rendering.  Contribution bodies are untrusted: everything is
 * escaped before any markup is added, and fenced code blocks become
 * monospaced <pre><code> sections.
 */

import type { AgreementPayload, FlagInfo, ReviewRecord } from "./types.js";
import type { PickerState } from "./picker.js";

export function escapeHtml(value: string): string {
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

/** Escape first, then promote ```fences``` to code blocks. */
export function renderBody(body: string): string {
  const escaped = escapeHtml(body);
  const lines = escaped.split("\n");
  const out: string[] = [];
  let inCode = false;
  for (const line of lines) {
    if (line.trimStart().startsWith("```")) {
      out.push(inCode ? "</code></pre>" : '<pre class="code"><code>');
      inCode = !inCode;
      continue;
    }
    out.push(inCode ? line : `${line}<br>`);
  }
  if (inCode) {
    out.push("</code></pre>");
  }
  return `<div class="body">${out.join("\n")}</div>`;
}

export function renderFlagPicker(
  flags: FlagInfo[],
  picker: PickerState,
): string {
  const groups: Record<string, string[]> = {};
  for (const flag of flags) {
    if (!flag.active) {
      continue;
    }
    const selected = picker.selected.includes(flag.id);
    const disabled = picker.disabled.includes(flag.id);
    const classes = ["flag", flag.group.toLowerCase()];
    if (selected) classes.push("selected");
    const button =
      `<button data-flag="${flag.id}" class="${classes.join(" ")}"` +
      `${disabled ? " disabled" : ""} title="${escapeHtml(flag.description)}">` +
      `${flag.id} ${escapeHtml(flag.name)}</button>`;
    (groups[flag.group] ??= []).push(button);
  }
  const sections = (["Positive", "Negative", "Neutral"] as const)
    .filter((g) => groups[g])
    .map(
      (g) =>
        `<div class="flag-group"><h3>${g}</h3>${groups[g].join("")}</div>`,
    );
  const hint = picker.hint
    ? `<p class="hint">${escapeHtml(picker.hint)}</p>`
    : "";
  return `<div class="picker">${sections.join("")}${hint}</div>`;
}

function formatKappa(value: number | null): string {
  return value === null ? "n/a" : value.toFixed(2);
}

export function renderAgreementPanel(payload: AgreementPayload | null): string {
  if (!payload || payload.complete_items === 0) {
    return '<div class="agreement empty">No fully double-labeled items yet.</div>';
  }
  const unanimity =
    payload.unanimity_pct === null ? "n/a" : `${payload.unanimity_pct.toFixed(2)}%`;
  const rows = Object.entries(payload.per_flag_kappa)
    .map(
      ([flag, kappa]) =>
        `<tr><td>${escapeHtml(flag)}</td><td>${formatKappa(kappa)}</td></tr>`,
    )
    .join("");
  const disagreements = payload.disagreements
    .map((d) => `<li>${escapeHtml(d.contribution_id)}</li>`)
    .join("");
  return (
    '<div class="agreement">' +
    `<p>Complete items: ${payload.complete_items} · ` +
    `unanimity <strong data-role="unanimity">${unanimity}</strong> · ` +
    `macro kappa ${formatKappa(payload.macro_kappa)}</p>` +
    (rows
      ? `<table><thead><tr><th>flag</th><th>kappa</th></tr></thead>` +
        `<tbody>${rows}</tbody></table>`
      : "") +
    (disagreements ? `<details><summary>Disagreements</summary><ul>${disagreements}</ul></details>` : "") +
    "</div>"
  );
}

export function renderReviewRecord(record: ReviewRecord): string {
  const badges = [
    record.repaired ? '<span class="badge repaired">repaired</span>' : "",
    record.needs_review
      ? '<span class="badge review">needs review</span>'
      : "",
  ].join(" ");
  const notes = record.notes
    .map((n) => `<li>${escapeHtml(n)}</li>`)
    .join("");
  const rationale = Object.entries(record.rationale)
    .map(
      ([flag, text]) =>
        `<dt>${escapeHtml(flag)}</dt><dd>${escapeHtml(text)}</dd>`,
    )
    .join("");
  return (
    '<div class="review-record">' +
    `<h3>${escapeHtml(record.contribution_id)} ${badges}</h3>` +
    (record.body ? renderBody(record.body) : "") +
    `<p>Labels: ${record.labels.map(escapeHtml).join(", ")}</p>` +
    (rationale ? `<dl>${rationale}</dl>` : "") +
    (notes ? `<ul class="notes">${notes}</ul>` : "") +
    `<pre class="raw">${escapeHtml(record.raw_output)}</pre>` +
    "</div>"
  );
}
