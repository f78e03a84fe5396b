/**
 * Annotation and review session state machines.
 *
 * Pure state + injected ServiceClient, so the flows are testable without a
 * DOM: fetch next -> pick flags -> submit -> advance, with the agreement
 * panel refreshed after every accepted submission.  Network failures keep
 * all local state and raise a retry banner; a stale item (labeled from
 * another tab) skips forward instead of erroring.
 */

import { NetworkError } from "./api.js";
import { computePicker, toggleFlag, type PickerState } from "./picker.js";
import type {
  AgreementPayload,
  FlagInfo,
  QueueItem,
  ReviewRecord,
  ServiceClient,
} from "./types.js";

export type Phase = "loading" | "labeling" | "done" | "network-error";

export interface AnnotationState {
  phase: Phase;
  item: QueueItem | null;
  picker: PickerState;
  agreement: AgreementPayload | null;
  rejectionReasons: string[];
  retryMessage: string | null;
  labeledCount: number;
}

export class AnnotationSession {
  private flags: FlagInfo[] = [];
  private state: AnnotationState = {
    phase: "loading",
    item: null,
    picker: { selected: [], disabled: [], canSubmit: false, hint: "" },
    agreement: null,
    rejectionReasons: [],
    retryMessage: null,
    labeledCount: 0,
  };
  private lastAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly annotator: string,
  ) {}

  snapshot(): AnnotationState {
    return { ...this.state, picker: { ...this.state.picker } };
  }

  flagList(): FlagInfo[] {
    return [...this.flags];
  }

  async start(): Promise<void> {
    await this.guard(async () => {
      this.flags = await this.client.getFlags();
      await this.advance();
      await this.refreshAgreement();
    });
  }

  toggle(flagId: string): void {
    if (this.state.phase !== "labeling") {
      return;
    }
    this.state.picker = toggleFlag(this.flags, this.state.picker.selected, flagId);
    this.state.rejectionReasons = [];
  }

  async submit(): Promise<void> {
    if (this.state.phase !== "labeling" || !this.state.item) {
      return;
    }
    if (!this.state.picker.canSubmit) {
      return; // the picker invariant: the button should not even be enabled
    }
    const contributionId = this.state.item.contribution.id;
    const flags = this.state.picker.selected;
    await this.guard(async () => {
      const response = await this.client.submitLabels(
        this.annotator,
        contributionId,
        flags,
      );
      if (response.accepted) {
        this.state.labeledCount += 1;
        this.state.rejectionReasons = [];
        await this.refreshAgreement();
        await this.advance();
        return;
      }
      if (response.reasons.includes("already labeled")) {
        // stale item: labeled elsewhere; skip forward, nothing lost
        await this.advance();
        return;
      }
      this.state.rejectionReasons = response.reasons;
    });
  }

  async retry(): Promise<void> {
    const action = this.lastAction;
    if (action) {
      await this.guard(action); // clears the banner on success
    }
  }

  async refreshAgreement(): Promise<void> {
    this.state.agreement = await this.client.agreement();
  }

  private async advance(): Promise<void> {
    const response = await this.client.nextItem(this.annotator);
    this.state.item = response.item;
    this.state.picker = computePicker(this.flags, []);
    this.state.phase = response.item ? "labeling" : "done";
  }

  /** Run an action; on network failure keep state and arm the retry banner. */
  private async guard(action: () => Promise<void>): Promise<void> {
    this.lastAction = action;
    const before = this.state.phase;
    try {
      this.state.retryMessage = null;
      await action();
    } catch (err) {
      if (err instanceof NetworkError) {
        this.state.phase = before === "loading" ? "loading" : "network-error";
        this.state.retryMessage =
          "Connection problem; nothing was lost. Retry when ready.";
        return;
      }
      throw err;
    }
  }
}

export interface ReviewState {
  records: ReviewRecord[];
  index: number;
  resolvedIds: string[];
  message: string | null;
}

export class ReviewSession {
  private flags: FlagInfo[] = [];
  private state: ReviewState = {
    records: [],
    index: 0,
    resolvedIds: [],
    message: null,
  };

  constructor(
    private readonly client: ServiceClient,
    private readonly reviewer: string,
  ) {}

  snapshot(): ReviewState {
    return { ...this.state, records: [...this.state.records] };
  }

  current(): ReviewRecord | null {
    return this.state.records[this.state.index] ?? null;
  }

  async start(): Promise<void> {
    this.flags = await this.client.getFlags();
    this.state.records = await this.client.review();
    this.state.index = 0;
    this.state.message = this.state.records.length
      ? null
      : "Review queue is empty.";
  }

  /** Confirm the record's labels as-is, or override with a corrected set. */
  async resolve(overrideFlags?: string[]): Promise<boolean> {
    const record = this.current();
    if (!record) {
      return false;
    }
    const flags = overrideFlags ?? record.labels;
    const picker = computePicker(this.flags, flags);
    if (!picker.canSubmit) {
      this.state.message = `Invalid override: ${picker.hint}`;
      return false;
    }
    const response = await this.client.submitLabels(
      this.reviewer,
      record.contribution_id,
      flags,
    );
    if (!response.accepted) {
      this.state.message = `Rejected: ${response.reasons.join(", ")}`;
      return false;
    }
    this.state.resolvedIds.push(record.contribution_id);
    this.state.index += 1;
    this.state.message = this.current() ? null : "Review queue is empty.";
    return true;
  }

  skip(): void {
    if (this.state.index < this.state.records.length) {
      this.state.index += 1;
    }
  }
}
