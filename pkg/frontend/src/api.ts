/** HTTP client for the annotation service JSON API. */

import type {
  AgreementPayload,
  FlagInfo,
  QueueResponse,
  ReviewRecord,
  ServiceClient,
  SubmitResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly body: unknown,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient implements ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) =>
      globalThis.fetch(input, init),
  ) {}

  private async request<T>(
    path: string,
    init?: RequestInit,
    okStatuses: number[] = [200],
  ): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(`request to ${path} failed: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON error bodies are still reported via ApiError below
    }
    if (!okStatuses.includes(response.status)) {
      throw new ApiError(
        `${path} returned ${response.status}`,
        response.status,
        body,
      );
    }
    return body as T;
  }

  async getFlags(): Promise<FlagInfo[]> {
    const payload = await this.request<{ flags: FlagInfo[] }>("/flags");
    return payload.flags;
  }

  nextItem(annotator: string): Promise<QueueResponse> {
    return this.request<QueueResponse>(
      `/queue/next?annotator=${encodeURIComponent(annotator)}`,
    );
  }

  // 409 (duplicate) and 422 (constraint rejection) carry the same response
  // shape and are part of the protocol, not transport failures
  submitLabels(
    annotator: string,
    contributionId: string,
    flags: string[],
  ): Promise<SubmitResponse> {
    return this.request<SubmitResponse>(
      "/labels",
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          annotator,
          contribution_id: contributionId,
          flags,
        }),
      },
      [200, 409, 422],
    );
  }

  agreement(): Promise<AgreementPayload> {
    return this.request<AgreementPayload>("/agreement");
  }

  async review(): Promise<ReviewRecord[]> {
    const payload = await this.request<{ records: ReviewRecord[] }>("/review");
    return payload.records;
  }
}
