/** Typed client for the evaluation endpoints. */

import { parseContext, parseErrorBody, parseNextItem, parseProgress, parseSession } from "./schema.js";
import type { ContextPayload, NextItem, PairwiseBody, Progress, SessionDescriptor, SingleBody } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message || code);
  }
}

export class SessionComplete extends Error {}

export class EvalApi {
  constructor(
    private baseUrl: string,
    private token: string | null = null,
    private fetchImpl: typeof fetch = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const err = parseErrorBody(payload);
      throw new ApiError(response.status, err.code, err.message);
    }
    return payload;
  }

  async createSession(
    runId: string,
    evaluatorId: string,
    pairing: [string, string],
    seed: number,
  ): Promise<SessionDescriptor> {
    const payload = await this.request("POST", "/v1/sessions", {
      run_id: runId,
      evaluator_id: evaluatorId,
      pairing,
      seed,
    });
    return parseSession(payload);
  }

  /** Resolves to the next unjudged item, or throws SessionComplete. */
  async next(sessionId: string): Promise<NextItem> {
    try {
      const payload = await this.request("GET", `/v1/sessions/${sessionId}/next`);
      return parseNextItem(payload);
    } catch (error) {
      if (error instanceof ApiError && error.code === "SESSION_COMPLETE") {
        throw new SessionComplete();
      }
      throw error;
    }
  }

  async progress(sessionId: string): Promise<Progress> {
    return parseProgress(await this.request("GET", `/v1/sessions/${sessionId}/progress`));
  }

  async context(sessionId: string, qid: string): Promise<ContextPayload> {
    return parseContext(await this.request("GET", `/v1/sessions/${sessionId}/context/${qid}`));
  }

  /** Stores one judgment; a 409 duplicate resolves as already-stored. */
  async submitJudgment(
    sessionId: string,
    body: PairwiseBody | SingleBody,
  ): Promise<"stored" | "duplicate"> {
    try {
      await this.request("POST", `/v1/sessions/${sessionId}/judgments`, body);
      return "stored";
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        return "duplicate";
      }
      throw error;
    }
  }
}
