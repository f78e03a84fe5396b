/**
 * Constraint-aware flag picker state.
 *
 * Mirrors the server's label-set rules so the UI can never build a
 * submission the server would reject for constraint reasons (the server
 * stays authoritative and re-validates anyway).  Group knowledge comes
 * from the flags fetched via GET /flags, never from hardcoded ids.
 */

import type { FlagInfo } from "./types.js";

export interface Validation {
  valid: boolean;
  violations: string[];
}

export interface PickerState {
  selected: string[];
  disabled: string[];
  canSubmit: boolean;
  hint: string;
}

const byId = (flags: FlagInfo[]) => new Map(flags.map((f) => [f.id, f]));

/** Same rule names the server reports: empty-set, mixed-group, ... */
export function validateSelection(
  flags: FlagInfo[],
  selected: Iterable<string>,
): Validation {
  const index = byId(flags);
  const ids = [...new Set(selected)];
  const violations: string[] = [];
  for (const id of ids) {
    if (!index.has(id)) {
      violations.push(`unknown-flag:${id}`);
    }
  }
  if (ids.length === 0) {
    violations.push("empty-set");
  }
  if (ids.some((id) => index.get(id) && !index.get(id)!.active)) {
    violations.push("inactive-flag");
  }
  const groups = new Set(
    ids.map((id) => index.get(id)?.group).filter((g) => g !== undefined),
  );
  if (groups.has("Neutral") && ids.length > 1) {
    violations.push("neutral-combined");
  }
  if (groups.has("Positive") && groups.has("Negative")) {
    violations.push("mixed-group");
  }
  return { valid: violations.length === 0, violations };
}

const HINTS: Record<string, string> = {
  "empty-set": "Select at least one flag (use No Flag when nothing applies).",
  "mixed-group": "Positive and negative flags cannot be combined.",
  "neutral-combined": "No Flag stands alone; deselect it to pick others.",
  "inactive-flag": "That flag is inactive and cannot be assigned.",
};

export function hintFor(violations: string[]): string {
  for (const rule of violations) {
    if (HINTS[rule]) {
      return HINTS[rule];
    }
  }
  return violations.length ? "Invalid selection." : "";
}

/**
 * Recompute disabled flags and submit availability for a selection.
 *
 * A flag is disabled when it is inactive or when adding it to the current
 * selection would violate a rule; with nothing selected every active flag
 * is available.
 */
export function computePicker(
  flags: FlagInfo[],
  selected: Iterable<string>,
): PickerState {
  const ids = [...new Set(selected)];
  const disabled: string[] = [];
  for (const flag of flags) {
    if (!flag.active) {
      disabled.push(flag.id);
      continue;
    }
    if (ids.includes(flag.id)) {
      continue; // deselecting is always allowed
    }
    const withFlag = validateSelection(flags, [...ids, flag.id]);
    if (!withFlag.valid) {
      disabled.push(flag.id);
    }
  }
  const current = validateSelection(flags, ids);
  const hint = ids.length === 0 ? "" : hintFor(current.violations);
  return {
    selected: ids,
    disabled,
    canSubmit: current.valid,
    hint,
  };
}

export function toggleFlag(
  flags: FlagInfo[],
  selected: Iterable<string>,
  flagId: string,
): PickerState {
  const ids = new Set(selected);
  if (ids.has(flagId)) {
    ids.delete(flagId);
  } else {
    const state = computePicker(flags, ids);
    if (!state.disabled.includes(flagId)) {
      ids.add(flagId);
    }
  }
  return computePicker(flags, ids);
}
