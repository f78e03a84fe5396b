/**
 * Browser entry point: wires the sessions to the DOM.
 *
 * The service origin defaults to the page origin and can be overridden
 * with ?api=http://host:port for local development.
 */

import { ApiClient } from "./api.js";
import { AnnotationSession, ReviewSession } from "./session.js";
import {
  renderAgreementPanel,
  renderBody,
  renderFlagPicker,
  renderReviewRecord,
  escapeHtml,
} from "./render.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return (override ?? window.location.origin).replace(/\/$/, "");
}

async function runAnnotation(annotator: string): Promise<void> {
  const client = new ApiClient(apiBase());
  const session = new AnnotationSession(client, annotator);
  const contribution = el("contribution");
  const picker = el("picker");
  const agreement = el("agreement");
  const status = el("status");
  const submit = el("submit") as HTMLButtonElement;

  const repaint = () => {
    const state = session.snapshot();
    if (state.retryMessage) {
      status.innerHTML =
        `<span class="banner">${escapeHtml(state.retryMessage)}</span>` +
        '<button id="retry">Retry</button>';
      el("retry").onclick = async () => {
        await session.retry();
        repaint();
      };
      return;
    }
    if (state.phase === "done") {
      contribution.innerHTML = "<p>Queue empty. Thanks!</p>";
      picker.innerHTML = "";
      submit.disabled = true;
      status.textContent = `Labeled ${state.labeledCount} items.`;
    } else if (state.item) {
      const c = state.item.contribution;
      contribution.innerHTML =
        `<h2>${escapeHtml(c.id)} <small>${escapeHtml(c.kind)} · ` +
        `${escapeHtml(c.source)}</small></h2>` +
        renderBody(c.body);
      picker.innerHTML = renderFlagPicker(session.flagList(), state.picker);
      picker.querySelectorAll<HTMLButtonElement>("button[data-flag]").forEach(
        (button) => {
          button.onclick = () => {
            session.toggle(button.dataset.flag!);
            repaint();
          };
        },
      );
      submit.disabled = !state.picker.canSubmit;
      status.textContent = state.rejectionReasons.length
        ? `Rejected by server: ${state.rejectionReasons.join(", ")}`
        : `Remaining: ${state.item.remaining_for_annotator}`;
    }
    agreement.innerHTML = renderAgreementPanel(state.agreement);
  };

  submit.onclick = async () => {
    await session.submit();
    repaint();
  };

  await session.start();
  repaint();
}

async function runReview(reviewer: string): Promise<void> {
  const client = new ApiClient(apiBase());
  const session = new ReviewSession(client, reviewer);
  const container = el("contribution");
  const status = el("status");
  el("picker").innerHTML = "";
  (el("submit") as HTMLButtonElement).hidden = true;

  const repaint = () => {
    const record = session.current();
    const state = session.snapshot();
    if (!record) {
      container.innerHTML = "<p>Review queue is empty.</p>";
      status.textContent = `Resolved ${state.resolvedIds.length} records.`;
      return;
    }
    container.innerHTML =
      renderReviewRecord(record) +
      '<button id="confirm">Confirm labels</button> ' +
      '<button id="skip">Skip</button>';
    el("confirm").onclick = async () => {
      await session.resolve();
      repaint();
    };
    el("skip").onclick = () => {
      session.skip();
      repaint();
    };
    status.textContent = state.message ?? "";
  };

  await session.start();
  repaint();
}

function boot(): void {
  const form = el("login") as HTMLFormElement;
  form.onsubmit = (event) => {
    event.preventDefault();
    const annotator = (el("annotator-id") as HTMLInputElement).value.trim();
    const mode = (el("mode") as HTMLSelectElement).value;
    if (!annotator) {
      return;
    }
    form.hidden = true;
    el("workspace").hidden = false;
    const run = mode === "review" ? runReview : runAnnotation;
    run(annotator).catch((err) => {
      el("status").textContent = `Failed to start: ${String(err)}`;
    });
  };
}

boot();
