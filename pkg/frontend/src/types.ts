/** Wire and form types for the evaluation station. */

export type Side = 1 | 2;

export interface SessionDescriptor {
  session_id: string;
  run_id: string;
  evaluator_id: string;
  qid_count: number;
  status: "open" | "complete";
}

export interface NextItem {
  qid: string;
  question: string;
  answer_1: string;
  answer_2: string;
  context_available: boolean;
}

export interface Progress {
  done: number;
  total: number;
}

export interface ContextPassage {
  chunk_id: string;
  title: string;
  text: string;
}

export interface ContextPayload {
  qid: string;
  passages: ContextPassage[];
}

export const PAIRWISE_CRITERIA = [
  "better",
  "more_accurate",
  "more_factual",
  "more_relevant",
] as const;
export type PairwiseCriterion = (typeof PAIRWISE_CRITERIA)[number];

export const QUALITY_DIMENSIONS = [
  "non_harmful",
  "contextually_correct",
  "understandable",
  "real_world_applicable",
] as const;
export type QualityDimension = (typeof QUALITY_DIMENSIONS)[number];

/** Everything the evaluator has entered for the current item. */
export interface JudgmentFormState {
  qid: string;
  question: string;
  answer1: string;
  answer2: string;
  selections: Record<PairwiseCriterion, Side | null>;
  quality: Record<QualityDimension, [boolean | null, boolean | null]>;
  contextOpened: boolean;
}

export interface PairwiseBody {
  kind: "pairwise";
  qid: string;
  better: Side;
  more_accurate: Side;
  more_factual: Side;
  more_relevant: Side;
  context_opened: boolean;
}

export interface SingleBody {
  kind: "single";
  qid: string;
  answer: Side;
  non_harmful: boolean;
  contextually_correct: boolean;
  understandable: boolean;
  real_world_applicable: boolean;
}
