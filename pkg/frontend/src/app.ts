/** Evaluation station: blind side-by-side comparison with forced choices.
 *
 * All server text is rendered via textContent, controls are native inputs
 * (keyboard operable by construction), and digit shortcuts cover the four
 * pairwise criteria. Submission sends the two per-answer judgments then the
 * pairwise judgment; duplicates returned by the server count as stored, so
 * an interrupted submission can be retried safely.
 */

import { ApiError, EvalApi, SessionComplete } from "./api.js";
import {
  emptyForm,
  isComplete,
  setQuality,
  setSelection,
  submissionPlan,
} from "./form.js";
import {
  JudgmentFormState,
  NextItem,
  PAIRWISE_CRITERIA,
  PairwiseCriterion,
  QUALITY_DIMENSIONS,
  QualityDimension,
  Side,
} from "./types.js";

const CRITERION_LABELS: Record<PairwiseCriterion, string> = {
  better: "Better answer",
  more_accurate: "More accurate",
  more_factual: "More factual",
  more_relevant: "More relevant",
};

const DIMENSION_LABELS: Record<QualityDimension, string> = {
  non_harmful: "Non-harmful",
  contextually_correct: "Contextually correct",
  understandable: "Understandable",
  real_world_applicable: "Applicable in practice",
};

// digit shortcuts: 1/2 better, 3/4 accuracy, 5/6 factuality, 7/8 relevance
const SHORTCUTS: Record<string, [PairwiseCriterion, Side]> = {
  "1": ["better", 1],
  "2": ["better", 2],
  "3": ["more_accurate", 1],
  "4": ["more_accurate", 2],
  "5": ["more_factual", 1],
  "6": ["more_factual", 2],
  "7": ["more_relevant", 1],
  "8": ["more_relevant", 2],
};

type Phase = "loading" | "judging" | "submitting" | "complete" | "error";

export class EvalStation {
  form: JudgmentFormState | null = null;
  phase: Phase = "loading";
  private planIndex = 0;
  private lastError = "";
  private retryAction: (() => Promise<void>) | null = null;
  private keyHandler: (event: KeyboardEvent) => void;

  constructor(
    private api: EvalApi,
    private sessionId: string,
    private root: HTMLElement,
  ) {
    this.keyHandler = (event) => this.onKey(event);
    this.root.ownerDocument.addEventListener("keydown", this.keyHandler);
  }

  dispose(): void {
    this.root.ownerDocument.removeEventListener("keydown", this.keyHandler);
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.phase = "loading";
    try {
      const item = await this.api.next(this.sessionId);
      const progress = await this.api.progress(this.sessionId);
      this.form = emptyForm(item);
      this.planIndex = 0;
      this.phase = "judging";
      this.renderItem(item, progress.done, progress.total);
    } catch (error) {
      if (error instanceof SessionComplete) {
        this.phase = "complete";
        await this.renderComplete();
        return;
      }
      this.showError(error, () => this.loadNext());
    }
  }

  async submit(): Promise<void> {
    if (this.phase !== "judging" || !this.form || !isComplete(this.form)) {
      return;
    }
    this.phase = "submitting";
    this.setSubmitEnabled(false);
    const plan = submissionPlan(this.form);
    try {
      while (this.planIndex < plan.length) {
        await this.api.submitJudgment(this.sessionId, plan[this.planIndex]!);
        this.planIndex += 1;
      }
      await this.loadNext();
    } catch (error) {
      this.phase = "judging";
      const stored = this.planIndex;
      this.showError(
        error,
        () => this.submit(),
        `Stored ${stored} of ${plan.length} records for this item; ` +
          "retry to finish the submission (already-stored records are kept once).",
      );
    }
  }

  // --- rendering ---------------------------------------------------------

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.root.ownerDocument.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private renderItem(item: NextItem, done: number, total: number): void {
    this.root.textContent = "";
    this.lastError = "";

    const header = this.el("header");
    const counter = this.el("p", "progress-label", `Item ${done + 1} of ${total}`);
    counter.id = "progress-label";
    const bar = this.el("div", "progress-track");
    const fill = this.el("div", "progress-fill");
    fill.style.width = total ? `${(done / total) * 100}%` : "0%";
    bar.appendChild(fill);
    header.append(counter, bar);
    this.root.appendChild(header);

    const question = this.el("section", "question");
    question.appendChild(this.el("h1", undefined, item.question));
    this.root.appendChild(question);

    const columns = this.el("div", "columns");
    columns.appendChild(this.answerColumn(1, item.answer_1));
    columns.appendChild(this.answerColumn(2, item.answer_2));
    this.root.appendChild(columns);

    if (item.context_available) {
      this.root.appendChild(this.contextPanel(item.qid));
    }

    this.root.appendChild(this.criteriaForm());

    const submit = this.el("button", "submit", "Submit judgment");
    submit.id = "submit";
    submit.disabled = true;
    submit.addEventListener("click", () => void this.submit());
    this.root.appendChild(submit);

    const banner = this.el("div", "banner");
    banner.id = "banner";
    this.root.appendChild(banner);
  }

  private answerColumn(side: Side, text: string): HTMLElement {
    const column = this.el("article", "answer");
    column.appendChild(this.el("h2", undefined, `Answer ${side}`));
    const body = this.el("div", "answer-text", text);
    body.id = `answer-${side}`;
    column.appendChild(body);

    const quality = this.el("fieldset", "quality");
    quality.appendChild(this.el("legend", undefined, `Answer ${side} quality`));
    for (const dimension of QUALITY_DIMENSIONS) {
      const row = this.el("div", "quality-row");
      row.appendChild(this.el("span", "quality-label", DIMENSION_LABELS[dimension]));
      for (const value of [true, false]) {
        const label = this.el("label", "choice");
        const input = this.el("input");
        input.type = "radio";
        input.name = `quality-${dimension}-${side}`;
        input.value = value ? "yes" : "no";
        input.id = `quality-${dimension}-${side}-${value ? "yes" : "no"}`;
        input.addEventListener("change", () => {
          if (this.form) {
            setQuality(this.form, dimension, side, value);
            this.refreshSubmit();
          }
        });
        label.append(input, this.el("span", undefined, value ? "yes" : "no"));
        row.appendChild(label);
      }
      quality.appendChild(row);
    }
    column.appendChild(quality);
    return column;
  }

  private criteriaForm(): HTMLElement {
    const fieldset = this.el("fieldset", "criteria");
    fieldset.appendChild(this.el("legend", undefined, "Which answer wins each criterion?"));
    for (const criterion of PAIRWISE_CRITERIA) {
      const row = this.el("div", "criterion-row");
      row.appendChild(this.el("span", "criterion-label", CRITERION_LABELS[criterion]));
      for (const side of [1, 2] as const) {
        const label = this.el("label", "choice");
        const input = this.el("input");
        input.type = "radio";
        input.name = `criterion-${criterion}`;
        input.value = String(side);
        input.id = `criterion-${criterion}-${side}`;
        input.addEventListener("change", () => {
          if (this.form) {
            setSelection(this.form, criterion, side);
            this.refreshSubmit();
          }
        });
        label.append(input, this.el("span", undefined, `Answer ${side}`));
        row.appendChild(label);
      }
      fieldset.appendChild(row);
    }
    return fieldset;
  }

  private contextPanel(qid: string): HTMLElement {
    const details = this.el("details", "context");
    details.id = "context-panel";
    details.appendChild(this.el("summary", undefined, "Retrieved reference passages (press c)"));
    const body = this.el("div", "context-body", "…");
    details.appendChild(body);
    let loaded = false;
    details.addEventListener("toggle", () => {
      if (!details.open || !this.form) return;
      this.form.contextOpened = true;
      if (loaded) return;
      loaded = true;
      void this.api
        .context(this.sessionId, qid)
        .then((payload) => {
          body.textContent = "";
          for (const passage of payload.passages) {
            const block = this.el("blockquote", "passage");
            block.appendChild(this.el("cite", undefined, passage.title));
            block.appendChild(this.el("p", undefined, passage.text));
            body.appendChild(block);
          }
          if (!payload.passages.length) {
            body.textContent = "No passages were retrieved for this question.";
          }
        })
        .catch(() => {
          body.textContent = "Could not load the passages.";
          loaded = false;
        });
    });
    return details;
  }

  private async renderComplete(): Promise<void> {
    this.root.textContent = "";
    const panel = this.el("section", "complete");
    panel.id = "complete";
    panel.appendChild(this.el("h1", undefined, "Session complete"));
    try {
      const progress = await this.api.progress(this.sessionId);
      panel.appendChild(
        this.el(
          "p",
          undefined,
          `All ${progress.total} items are judged. Thank you — answer identities stay blinded.`,
        ),
      );
    } catch {
      panel.appendChild(this.el("p", undefined, "All items are judged."));
    }
    this.root.appendChild(panel);
  }

  private showError(error: unknown, retry: () => Promise<void>, note?: string): void {
    this.lastError =
      error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    this.retryAction = retry;
    let banner = this.root.querySelector<HTMLElement>("#banner");
    if (!banner) {
      banner = this.el("div", "banner");
      banner.id = "banner";
      this.root.appendChild(banner);
    }
    banner.textContent = "";
    banner.appendChild(this.el("p", "error-text", note ?? "The request failed."));
    banner.appendChild(this.el("p", "error-detail", this.lastError));
    const button = this.el("button", "retry", "Retry");
    button.id = "retry";
    button.addEventListener("click", () => {
      const action = this.retryAction;
      if (action) void action();
    });
    banner.appendChild(button);
    this.refreshSubmit();
  }

  private refreshSubmit(): void {
    this.setSubmitEnabled(
      this.phase === "judging" && this.form !== null && isComplete(this.form),
    );
  }

  private setSubmitEnabled(enabled: boolean): void {
    const submit = this.root.querySelector<HTMLButtonElement>("#submit");
    if (submit) submit.disabled = !enabled;
  }

  // --- keyboard ------------------------------------------------------------

  private onKey(event: KeyboardEvent): void {
    if (this.phase !== "judging" || !this.form) return;
    const shortcut = SHORTCUTS[event.key];
    if (shortcut) {
      const [criterion, side] = shortcut;
      setSelection(this.form, criterion, side);
      const radio = this.root.querySelector<HTMLInputElement>(
        `#criterion-${criterion}-${side}`,
      );
      if (radio) radio.checked = true;
      this.refreshSubmit();
      return;
    }
    if (event.key === "c") {
      const panel = this.root.querySelector<HTMLDetailsElement>("#context-panel");
      if (panel) {
        panel.open = !panel.open;
      }
      return;
    }
    if (event.key === "Enter" && !(event.target instanceof HTMLButtonElement)) {
      void this.submit();
    }
  }
}
