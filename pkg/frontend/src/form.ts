/** Pure judgment-form logic: selection state, completeness, payloads. */

import {
  JudgmentFormState,
  NextItem,
  PAIRWISE_CRITERIA,
  PairwiseBody,
  PairwiseCriterion,
  QUALITY_DIMENSIONS,
  QualityDimension,
  Side,
  SingleBody,
} from "./types.js";

export function emptyForm(item: NextItem): JudgmentFormState {
  return {
    qid: item.qid,
    question: item.question,
    answer1: item.answer_1,
    answer2: item.answer_2,
    selections: {
      better: null,
      more_accurate: null,
      more_factual: null,
      more_relevant: null,
    },
    quality: {
      non_harmful: [null, null],
      contextually_correct: [null, null],
      understandable: [null, null],
      real_world_applicable: [null, null],
    },
    contextOpened: false,
  };
}

export function setSelection(
  form: JudgmentFormState,
  criterion: PairwiseCriterion,
  side: Side,
): void {
  form.selections[criterion] = side;
}

export function setQuality(
  form: JudgmentFormState,
  dimension: QualityDimension,
  side: Side,
  value: boolean,
): void {
  form.quality[dimension][side - 1] = value;
}

/** Submit is allowed only when all four pairwise choices and all eight
 * per-answer booleans are explicitly set; nothing defaults. */
export function isComplete(form: JudgmentFormState): boolean {
  for (const criterion of PAIRWISE_CRITERIA) {
    if (form.selections[criterion] === null) return false;
  }
  for (const dimension of QUALITY_DIMENSIONS) {
    const [one, two] = form.quality[dimension];
    if (one === null || two === null) return false;
  }
  return true;
}

export function missingFields(form: JudgmentFormState): string[] {
  const missing: string[] = [];
  for (const criterion of PAIRWISE_CRITERIA) {
    if (form.selections[criterion] === null) missing.push(criterion);
  }
  for (const dimension of QUALITY_DIMENSIONS) {
    const [one, two] = form.quality[dimension];
    if (one === null) missing.push(`${dimension}(answer 1)`);
    if (two === null) missing.push(`${dimension}(answer 2)`);
  }
  return missing;
}

export function toPairwiseBody(form: JudgmentFormState): PairwiseBody {
  if (!isComplete(form)) {
    throw new Error("form is incomplete");
  }
  return {
    kind: "pairwise",
    qid: form.qid,
    better: form.selections.better as Side,
    more_accurate: form.selections.more_accurate as Side,
    more_factual: form.selections.more_factual as Side,
    more_relevant: form.selections.more_relevant as Side,
    context_opened: form.contextOpened,
  };
}

export function toSingleBody(form: JudgmentFormState, side: Side): SingleBody {
  if (!isComplete(form)) {
    throw new Error("form is incomplete");
  }
  const pick = (dimension: QualityDimension) => form.quality[dimension][side - 1] as boolean;
  return {
    kind: "single",
    qid: form.qid,
    answer: side,
    non_harmful: pick("non_harmful"),
    contextually_correct: pick("contextually_correct"),
    understandable: pick("understandable"),
    real_world_applicable: pick("real_world_applicable"),
  };
}

/** Submission order: singles for both answers first, the pairwise judgment
 * last. The server closes the session on the final pairwise record, so this
 * order lets the whole triple land even on the last item. */
export function submissionPlan(form: JudgmentFormState): (SingleBody | PairwiseBody)[] {
  return [toSingleBody(form, 1), toSingleBody(form, 2), toPairwiseBody(form)];
}
