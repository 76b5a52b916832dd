/** Typed client for the review-service HTTP API.
 *
 * Every request the console makes goes through this class; no other
 * endpoint is ever called. Errors carry the service's error name so views
 * can tell an expired lease (409) from a real failure.
 */

import type {
  ChoiceResponse,
  ClaimResponse,
  DecisionResponse,
  PendingResponse,
  PreferenceResults,
  QueueName,
  Stats,
  VerdictResponse,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** The item was decided or leased away while we held it on screen. */
  get leaseLost(): boolean {
    return this.status === 409;
  }
}

export interface Permutation {
  left: "A" | "B";
  right: "A" | "B";
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ReviewClient {
  constructor(
    private readonly token: string,
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "X-Reviewer-Token": this.token };
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.baseUrl + path, init);
    const text = await res.text();
    const data = text ? JSON.parse(text) : {};
    if (!res.ok) {
      const kind = typeof data.error === "string" ? data.error : "HttpError";
      const message =
        typeof data.message === "string"
          ? data.message
          : typeof data.detail === "string"
            ? data.detail
            : res.statusText;
      throw new ApiError(res.status, kind, message);
    }
    return data as T;
  }

  pending<P>(queue: QueueName): Promise<PendingResponse<P>> {
    return this.request("GET", `/api/${queue}/pending`);
  }

  claim(queue: QueueName, itemId: string): Promise<ClaimResponse> {
    return this.request("POST", `/api/${queue}/${itemId}/claim`);
  }

  decideVerification(
    itemId: string,
    criteria: [boolean, boolean, boolean],
    note?: string,
  ): Promise<DecisionResponse> {
    return this.request("POST", `/api/verification/${itemId}/decision`, {
      criteria,
      note: note ?? null,
    });
  }

  submitJuryVerdict(
    ticketId: string,
    accept: boolean,
    revisedText?: string,
  ): Promise<VerdictResponse> {
    return this.request("POST", `/api/jury/${ticketId}/verdict`, {
      accept,
      revised_text: revisedText ?? null,
    });
  }

  submitPreferenceChoice(
    itemId: string,
    choice: "A" | "B",
    permutation: Permutation,
  ): Promise<ChoiceResponse> {
    return this.request("POST", `/api/preference/${itemId}/choice`, {
      choice,
      permutation,
    });
  }

  closePreference(): Promise<{ closed: boolean; results: PreferenceResults }> {
    return this.request("POST", "/api/preference/close");
  }

  preferenceResults(): Promise<PreferenceResults> {
    return this.request("GET", "/api/preference/results");
  }

  stats(): Promise<Stats> {
    return this.request("GET", "/api/stats");
  }

  enqueue(kind: QueueName, payload: Record<string, unknown>): Promise<{ item_id: string }> {
    return this.request("POST", "/api/enqueue", { kind, payload });
  }
}
