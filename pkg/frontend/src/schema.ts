/** Strict payload parsers.
 *
 * Every server payload is validated against a closed field list; unknown
 * fields are rejected outright. That is the client-side guarantee that no
 * configuration identity can ride along in a blinded payload.
 */

import type {
  ContextPassage,
  ContextPayload,
  NextItem,
  Progress,
  SessionDescriptor,
} from "./types.js";

export class SchemaError extends Error {}

type FieldSpec = Record<string, "string" | "number" | "boolean">;

function parseStrict(value: unknown, fields: FieldSpec, where: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new SchemaError(`${where}: expected an object`);
  }
  const record = value as Record<string, unknown>;
  const allowed = new Set(Object.keys(fields));
  for (const key of Object.keys(record)) {
    if (!allowed.has(key)) {
      throw new SchemaError(`${where}: unexpected field "${key}"`);
    }
  }
  for (const [key, kind] of Object.entries(fields)) {
    if (!(key in record)) {
      throw new SchemaError(`${where}: missing field "${key}"`);
    }
    if (typeof record[key] !== kind) {
      throw new SchemaError(`${where}: field "${key}" should be ${kind}`);
    }
  }
  return record;
}

export function parseSession(value: unknown): SessionDescriptor {
  const rec = parseStrict(
    value,
    {
      session_id: "string",
      run_id: "string",
      evaluator_id: "string",
      qid_count: "number",
      status: "string",
    },
    "session",
  );
  const status = rec.status as string;
  if (status !== "open" && status !== "complete") {
    throw new SchemaError(`session: unknown status "${status}"`);
  }
  return rec as unknown as SessionDescriptor;
}

export function parseNextItem(value: unknown): NextItem {
  return parseStrict(
    value,
    {
      qid: "string",
      question: "string",
      answer_1: "string",
      answer_2: "string",
      context_available: "boolean",
    },
    "next item",
  ) as unknown as NextItem;
}

export function parseProgress(value: unknown): Progress {
  return parseStrict(value, { done: "number", total: "number" }, "progress") as unknown as Progress;
}

export function parseContext(value: unknown): ContextPayload {
  if (typeof value !== "object" || value === null) {
    throw new SchemaError("context: expected an object");
  }
  const record = value as Record<string, unknown>;
  for (const key of Object.keys(record)) {
    if (key !== "qid" && key !== "passages") {
      throw new SchemaError(`context: unexpected field "${key}"`);
    }
  }
  if (typeof record.qid !== "string" || !Array.isArray(record.passages)) {
    throw new SchemaError("context: malformed payload");
  }
  const passages: ContextPassage[] = record.passages.map((p, i) =>
    parseStrict(
      p,
      { chunk_id: "string", title: "string", text: "string" },
      `context passage ${i}`,
    ) as unknown as ContextPassage,
  );
  return { qid: record.qid, passages };
}

export function parseErrorBody(value: unknown): { code: string; message: string } {
  if (typeof value === "object" && value !== null) {
    const rec = value as Record<string, unknown>;
    if (typeof rec.code === "string") {
      return { code: rec.code, message: typeof rec.message === "string" ? rec.message : "" };
    }
  }
  return { code: "UNKNOWN", message: "" };
}
