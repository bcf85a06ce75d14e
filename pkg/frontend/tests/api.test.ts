import { describe, expect, it } from "vitest";

import { ApiError, EvalApi, SessionComplete } from "../src/api.js";

type Route = (init: RequestInit | undefined) => { status: number; body: unknown };

function fakeFetch(routes: Record<string, Route>, log: { url: string; init?: RequestInit }[]) {
  return (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    log.push({ url, init });
    const route = routes[url];
    if (!route) throw new TypeError("network unreachable");
    const { status, body } = route(init);
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => body,
    } as Response;
  }) as typeof fetch;
}

const ITEM = {
  qid: "q1",
  question: "Q?",
  answer_1: "a",
  answer_2: "b",
  context_available: false,
};

describe("EvalApi", () => {
  it("parses next items and sends the bearer token", async () => {
    const log: { url: string; init?: RequestInit }[] = [];
    const api = new EvalApi(
      "http://svc",
      "tok",
      fakeFetch({ "http://svc/v1/sessions/s/next": () => ({ status: 200, body: ITEM }) }, log),
    );
    expect(await api.next("s")).toEqual(ITEM);
    const headers = log[0]!.init!.headers as Record<string, string>;
    expect(headers["Authorization"]).toBe("Bearer tok");
  });

  it("maps SESSION_COMPLETE to its own signal", async () => {
    const api = new EvalApi(
      "http://svc",
      null,
      fakeFetch(
        {
          "http://svc/v1/sessions/s/next": () => ({
            status: 404,
            body: { code: "SESSION_COMPLETE", message: "all items are judged" },
          }),
        },
        [],
      ),
    );
    await expect(api.next("s")).rejects.toBeInstanceOf(SessionComplete);
  });

  it("treats 409 duplicates as already stored", async () => {
    const api = new EvalApi(
      "http://svc",
      null,
      fakeFetch(
        {
          "http://svc/v1/sessions/s/judgments": () => ({
            status: 409,
            body: { code: "DUPLICATE_JUDGMENT", message: "" },
          }),
        },
        [],
      ),
    );
    const result = await api.submitJudgment("s", {
      kind: "pairwise",
      qid: "q1",
      better: 1,
      more_accurate: 1,
      more_factual: 1,
      more_relevant: 1,
      context_opened: false,
    });
    expect(result).toBe("duplicate");
  });

  it("surfaces other HTTP errors as ApiError with the server code", async () => {
    const api = new EvalApi(
      "http://svc",
      null,
      fakeFetch(
        {
          "http://svc/v1/sessions/s/progress": () => ({
            status: 401,
            body: { code: "BAD_TOKEN", message: "missing or invalid bearer token" },
          }),
        },
        [],
      ),
    );
    const error = await api.progress("s").catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(401);
    expect(error.code).toBe("BAD_TOKEN");
  });

  it("propagates network failures", async () => {
    const api = new EvalApi("http://svc", null, fakeFetch({}, []));
    await expect(api.progress("s")).rejects.toBeInstanceOf(TypeError);
  });
});
