/** Taxonomy payload as served by GET /flags, plus the shared 4-item corpus. */

import type { ContributionView, FlagInfo } from "../src/types.js";

export const FLAGS: FlagInfo[] = [
  { id: "F1", name: "Empathy and Kindness", description: "Demonstrating understanding and compassion towards others.", group: "Positive", active: true },
  { id: "F2", name: "Respect for Differences", description: "Valuing diverse perspectives and backgrounds.", group: "Positive", active: true },
  { id: "F3", name: "Constructive Feedback", description: "Providing feedback that is helpful and aimed at improvement.", group: "Positive", active: true },
  { id: "F4", name: "Responsibility and Apology", description: "Taking responsibility for one's actions and apologizing when necessary.", group: "Positive", active: true },
  { id: "F5", name: "Common Good", description: "Acting in ways that benefit the broader community.", group: "Positive", active: true },
  { id: "F6", name: "Sexualized Language", description: "Using language that is inappropriate and sexual in nature.", group: "Negative", active: true },
  { id: "F7", name: "Insulting or Derogatory Comments", description: "Making comments that insult or demean others.", group: "Negative", active: true },
  { id: "F8", name: "Public Harassment", description: "Engaging in behavior that intimidates or harasses others.", group: "Negative", active: true },
  { id: "F9", name: "Publishing Private Information", description: "Sharing private information about others without consent.", group: "Negative", active: true },
  { id: "F10", name: "Inappropriate Conduct", description: "Behaving in a manner that is not suitable in a professional setting.", group: "Negative", active: false },
  { id: "F11", name: "No Flag", description: "Comments that do not exhibit any ethical behaviors.", group: "Neutral", active: true },
];

export const ACTIVE_IDS = FLAGS.filter((f) => f.active).map((f) => f.id);

export function contribution(id: string, body: string): ContributionView {
  return {
    id,
    repo: "acme/widgets",
    kind: "issue",
    body,
    created_at: "2024-06-01T00:00:00+00:00",
    source: "mined",
  };
}

/**
 * The four-item fixture shared with the backend test suite: annotator a2
 * disagrees on c02 only, so the service reports unanimity 75%.
 */
export const FOUR_ITEMS: ContributionView[] = [
  contribution("c01", "Thanks for the fast fix!"),
  contribution("c02", "Repro attached; the loader drops the locale."),
  contribution("c03", "Any update?"),
  contribution("c04", "This code is an insult to compilers everywhere."),
];

export const SESSION_PLAN: Record<string, Record<string, string[]>> = {
  a1: { c01: ["F1"], c02: ["F3"], c03: ["F11"], c04: ["F7"] },
  a2: { c01: ["F1"], c02: ["F1", "F3"], c03: ["F11"], c04: ["F7"] },
};
