/** Wire types for the annotation service JSON API. */

export type FlagGroup = "Positive" | "Negative" | "Neutral";

export interface FlagInfo {
  id: string;
  name: string;
  description: string;
  group: FlagGroup;
  active: boolean;
}

export interface ContributionView {
  id: string;
  repo: string;
  kind: string;
  body: string;
  created_at: string;
  source: string;
}

export interface QueueItem {
  contribution: ContributionView;
  pending_annotators: string[];
  remaining_for_annotator: number;
}

export interface QueueResponse {
  item: QueueItem | null;
  done: boolean;
}

export interface SubmitResponse {
  accepted: boolean;
  reasons: string[];
  item_complete: boolean;
}

export interface Disagreement {
  contribution_id: string;
  labels: Record<string, string[]>;
}

export interface AgreementPayload {
  complete_items: number;
  unanimity_pct: number | null;
  macro_kappa: number | null;
  per_flag_kappa: Record<string, number | null>;
  disagreements: Disagreement[];
}

export interface ReviewRecord {
  contribution_id: string;
  body: string | null;
  labels: string[];
  rationale: Record<string, string>;
  raw_output: string;
  repaired: boolean;
  needs_review: boolean;
  notes: string[];
}

/**
 * What the sessions need from the backend.  ApiClient implements it over
 * HTTP; tests implement it in memory with the same semantics.
 */
export interface ServiceClient {
  getFlags(): Promise<FlagInfo[]>;
  nextItem(annotator: string): Promise<QueueResponse>;
  submitLabels(
    annotator: string,
    contributionId: string,
    flags: string[],
  ): Promise<SubmitResponse>;
  agreement(): Promise<AgreementPayload>;
  review(): Promise<ReviewRecord[]>;
}
