"""Blinded expert judgment sessions and metric aggregation.

Evaluators see answers only as "Answer 1"/"Answer 2"; the left/right
assignment is a pure function of (blinding seed, qid). Judgments accumulate
in an append-only ledger; aggregation resolves them to configuration names
via the session assignments and produces pooled percentage tables, a
per-question majority view, and Fleiss' kappa agreement.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .benchmark import RunLedger, RunManifest
from .errors import (
    ConfigError,
    DuplicateJudgment,
    InsufficientOverlap,
    MissingResponses,
    NoJudgments,
    SessionClosed,
    SessionStillOpen,
    UnknownConfig,
    UnknownQid,
    UnknownRun,
)
from .hashing import stable_hash64

PAIRWISE_CRITERIA = ("better", "more_accurate", "more_factual", "more_relevant")
CRITERION_LABELS = {
    "better": "better answer",
    "more_accurate": "accuracy",
    "more_factual": "factuality",
    "more_relevant": "relevance",
}
SINGLE_DIMENSIONS = (
    "non_harmful",
    "contextually_correct",
    "understandable",
    "real_world_applicable",
)
_SIDES = ("left", "right")


# --- blinding ---------------------------------------------------------------


def assign_side(blinding_seed: int, qid: str) -> bool:
    """True when config A presents on the left; pure in (seed, qid)."""
    return stable_hash64(qid, seed=blinding_seed) & 1 == 0


@dataclass(frozen=True)
class PairAssignment:
    qid: str
    left_config: str
    right_config: str


@dataclass
class EvalSession:
    session_id: str
    run_id: str
    evaluator_id: str
    config_a: str
    config_b: str
    qids: list[str]
    blinding_seed: int
    status: str = "open"  # open | complete
    created_at: str = ""

    def assignment(self, qid: str) -> PairAssignment:
        if assign_side(self.blinding_seed, qid):
            return PairAssignment(qid, self.config_a, self.config_b)
        return PairAssignment(qid, self.config_b, self.config_a)

    def public_view(self) -> dict:
        """Presentation-facing descriptor: never contains config names."""
        return {
            "session_id": self.session_id,
            "run_id": self.run_id,
            "evaluator_id": self.evaluator_id,
            "qid_count": len(self.qids),
            "status": self.status,
        }

    def to_json(self) -> dict:
        return {
            "kind": "session",
            "session_id": self.session_id,
            "run_id": self.run_id,
            "evaluator_id": self.evaluator_id,
            "config_a": self.config_a,
            "config_b": self.config_b,
            "qids": self.qids,
            "blinding_seed": self.blinding_seed,
            "created_at": self.created_at,
        }


# --- judgments ----------------------------------------------------------------


@dataclass(frozen=True)
class PairwiseJudgment:
    session_id: str
    qid: str
    better: str
    more_accurate: str
    more_factual: str
    more_relevant: str
    submitted_at: str = ""
    context_opened: bool = False

    def __post_init__(self):
        for criterion in PAIRWISE_CRITERIA:
            value = getattr(self, criterion)
            if value not in _SIDES:
                raise ConfigError(f"{criterion} must be 'left' or 'right', got {value!r}")

    def to_json(self) -> dict:
        return {
            "kind": "pairwise",
            "session_id": self.session_id,
            "qid": self.qid,
            "better": self.better,
            "more_accurate": self.more_accurate,
            "more_factual": self.more_factual,
            "more_relevant": self.more_relevant,
            "submitted_at": self.submitted_at,
            "context_opened": self.context_opened,
        }


@dataclass(frozen=True)
class SingleJudgment:
    session_id: str
    qid: str
    config: str
    non_harmful: bool
    contextually_correct: bool
    understandable: bool
    real_world_applicable: bool
    submitted_at: str = ""

    def to_json(self) -> dict:
        return {
            "kind": "single",
            "session_id": self.session_id,
            "qid": self.qid,
            "config": self.config,
            "non_harmful": self.non_harmful,
            "contextually_correct": self.contextually_correct,
            "understandable": self.understandable,
            "real_world_applicable": self.real_world_applicable,
            "submitted_at": self.submitted_at,
        }


# --- store --------------------------------------------------------------------


class EvaluationStore:
    """Sessions plus the append-only judgment ledger, with atomic uniqueness.

    The ledger file interleaves session descriptors and judgments (one JSON
    record per line), so a report can be produced from the ledger alone.
    """

    def __init__(self, ledger_path: str | Path, runs_dir: str | Path | None = None):
        self.ledger_path = Path(ledger_path)
        self.runs_dir = Path(runs_dir) if runs_dir else None
        self._lock = threading.Lock()
        self.sessions: dict[str, EvalSession] = {}
        self.pairwise: dict[tuple[str, str], PairwiseJudgment] = {}
        self.singles: dict[tuple[str, str, str], SingleJudgment] = {}
        if self.ledger_path.exists():
            self._replay()

    def _replay(self) -> None:
        for line in self.ledger_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "session":
                session = EvalSession(
                    session_id=rec["session_id"],
                    run_id=rec["run_id"],
                    evaluator_id=rec["evaluator_id"],
                    config_a=rec["config_a"],
                    config_b=rec["config_b"],
                    qids=list(rec["qids"]),
                    blinding_seed=rec["blinding_seed"],
                    created_at=rec.get("created_at", ""),
                )
                self.sessions[session.session_id] = session
            elif kind == "pairwise":
                judgment = PairwiseJudgment(
                    session_id=rec["session_id"],
                    qid=rec["qid"],
                    better=rec["better"],
                    more_accurate=rec["more_accurate"],
                    more_factual=rec["more_factual"],
                    more_relevant=rec["more_relevant"],
                    submitted_at=rec.get("submitted_at", ""),
                    context_opened=rec.get("context_opened", False),
                )
                key = (judgment.session_id, judgment.qid)
                if key in self.pairwise:
                    raise DuplicateJudgment(f"replayed pairwise judgment for {key}")
                self.pairwise[key] = judgment
            elif kind == "single":
                judgment = SingleJudgment(
                    session_id=rec["session_id"],
                    qid=rec["qid"],
                    config=rec["config"],
                    non_harmful=rec["non_harmful"],
                    contextually_correct=rec["contextually_correct"],
                    understandable=rec["understandable"],
                    real_world_applicable=rec["real_world_applicable"],
                    submitted_at=rec.get("submitted_at", ""),
                )
                key3 = (judgment.session_id, judgment.qid, judgment.config)
                if key3 in self.singles:
                    raise DuplicateJudgment(f"replayed single judgment for {key3}")
                self.singles[key3] = judgment
        for session in self.sessions.values():
            self._refresh_status(session)

    def _append(self, record: dict) -> None:
        self.ledger_path.parent.mkdir(parents=True, exist_ok=True)
        with self.ledger_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def _refresh_status(self, session: EvalSession) -> None:
        done = sum(1 for qid in session.qids if (session.session_id, qid) in self.pairwise)
        session.status = "complete" if done == len(session.qids) else "open"

    # --- session lifecycle -------------------------------------------------

    def create_session(
        self,
        run_id: str,
        evaluator_id: str,
        pairing: tuple[str, str],
        qids: list[str] | None,
        seed: int,
        session_id: str | None = None,
    ) -> EvalSession:
        config_a, config_b = pairing
        if config_a == config_b:
            raise ConfigError("pairing must name two distinct configurations")
        if self.runs_dir is None:
            raise UnknownRun("evaluation store has no runs directory configured")
        ledger = RunLedger(self.runs_dir / run_id)
        if not ledger.exists():
            raise UnknownRun(run_id)
        records = ledger.effective_records()
        available = {
            qid
            for config in pairing
            for (cname, qid), rec in records.items()
            if cname == config and rec.status == "success"
        }
        ok_for_both = {
            qid
            for qid in available
            if all(
                records.get((config, qid)) is not None
                and records[(config, qid)].status == "success"
                for config in pairing
            )
        }
        if qids is None:
            qids = sorted(ok_for_both)
            if not qids:
                raise MissingResponses(["<no qid has successful responses for both configs>"])
        else:
            missing = [qid for qid in qids if qid not in ok_for_both]
            if missing:
                raise MissingResponses(missing)
        session = EvalSession(
            session_id=session_id or uuid.uuid4().hex,
            run_id=run_id,
            evaluator_id=evaluator_id,
            config_a=config_a,
            config_b=config_b,
            qids=list(qids),
            blinding_seed=seed,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        with self._lock:
            if session.session_id in self.sessions:
                raise DuplicateJudgment(f"session {session.session_id} already exists")
            self.sessions[session.session_id] = session
            self._append(session.to_json())
        return session

    def session(self, session_id: str) -> EvalSession:
        if session_id not in self.sessions:
            raise UnknownRun(f"session {session_id}")
        return self.sessions[session_id]

    def record_pairwise(self, judgment: PairwiseJudgment) -> None:
        with self._lock:
            session = self.session(judgment.session_id)
            if session.status != "open":
                raise SessionClosed(session.session_id)
            if judgment.qid not in session.qids:
                raise UnknownQid(judgment.qid)
            key = (judgment.session_id, judgment.qid)
            if key in self.pairwise:
                raise DuplicateJudgment(f"pairwise judgment already stored for {key}")
            self.pairwise[key] = judgment
            self._append(judgment.to_json())
            self._refresh_status(session)

    def record_single(self, judgment: SingleJudgment) -> None:
        with self._lock:
            session = self.session(judgment.session_id)
            if session.status != "open":
                raise SessionClosed(session.session_id)
            if judgment.qid not in session.qids:
                raise UnknownQid(judgment.qid)
            if judgment.config not in (session.config_a, session.config_b):
                raise UnknownConfig(judgment.config)
            key = (judgment.session_id, judgment.qid, judgment.config)
            if key in self.singles:
                raise DuplicateJudgment(f"single judgment already stored for {key}")
            self.singles[key] = judgment
            self._append(judgment.to_json())

    def next_unjudged(self, session_id: str) -> str | None:
        session = self.session(session_id)
        for qid in session.qids:
            if (session_id, qid) not in self.pairwise:
                return qid
        return None

    def progress(self, session_id: str) -> tuple[int, int]:
        session = self.session(session_id)
        done = sum(1 for qid in session.qids if (session_id, qid) in self.pairwise)
        return done, len(session.qids)

    def unblind(self, session_id: str) -> dict[str, tuple[str, str]]:
        session = self.session(session_id)
        if session.status != "complete":
            raise SessionStillOpen(session_id)
        return {
            qid: (session.assignment(qid).left_config, session.assignment(qid).right_config)
            for qid in session.qids
        }


# --- resolution & metrics -------------------------------------------------------


@dataclass(frozen=True)
class ResolvedPairwise:
    session_id: str
    evaluator_id: str
    qid: str
    pairing: tuple[str, str]
    winners: dict[str, str]  # criterion -> config name

    def __hash__(self):  # winners dict excluded
        return hash((self.session_id, self.qid))


@dataclass(frozen=True)
class ResolvedSingle:
    session_id: str
    evaluator_id: str
    qid: str
    config: str
    answers: dict[str, bool]

    def __hash__(self):
        return hash((self.session_id, self.qid, self.config))


def resolve_pairwise(
    sessions: dict[str, EvalSession],
    judgments: list[PairwiseJudgment],
    completed_only: bool = True,
) -> list[ResolvedPairwise]:
    """Map left/right choices to config names via each session's assignments."""
    resolved = []
    for judgment in judgments:
        session = sessions.get(judgment.session_id)
        if session is None:
            continue
        if completed_only and session.status != "complete":
            continue
        assignment = session.assignment(judgment.qid)
        side_to_config = {"left": assignment.left_config, "right": assignment.right_config}
        resolved.append(
            ResolvedPairwise(
                session_id=judgment.session_id,
                evaluator_id=session.evaluator_id,
                qid=judgment.qid,
                pairing=(session.config_a, session.config_b),
                winners={
                    criterion: side_to_config[getattr(judgment, criterion)]
                    for criterion in PAIRWISE_CRITERIA
                },
            )
        )
    return resolved


def resolve_singles(
    sessions: dict[str, EvalSession],
    judgments: list[SingleJudgment],
    completed_only: bool = True,
) -> list[ResolvedSingle]:
    resolved = []
    for judgment in judgments:
        session = sessions.get(judgment.session_id)
        if session is None:
            continue
        if completed_only and session.status != "complete":
            continue
        resolved.append(
            ResolvedSingle(
                session_id=judgment.session_id,
                evaluator_id=session.evaluator_id,
                qid=judgment.qid,
                config=judgment.config,
                answers={dim: getattr(judgment, dim) for dim in SINGLE_DIMENSIONS},
            )
        )
    return resolved


def percent(count: int, total: int) -> float:
    """100*count/total rounded half-up to one decimal place."""
    value = Decimal(count * 100) / Decimal(total)
    return float(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def preference_rate(
    resolved: list[ResolvedPairwise], criterion: str, pairing: tuple[str, str]
) -> tuple[float, float]:
    """Pooled percentages (pct_A, pct_B) for one criterion of one pairing."""
    config_a, config_b = pairing
    relevant = [r for r in resolved if set(r.pairing) == {config_a, config_b}]
    if not relevant:
        raise NoJudgments(f"no judgments for pairing {pairing}")
    wins_a = sum(1 for r in relevant if r.winners[criterion] == config_a)
    wins_b = len(relevant) - wins_a
    return percent(wins_a, len(relevant)), percent(wins_b, len(relevant))


def single_rate(resolved: list[ResolvedSingle], config: str, dimension: str) -> float:
    relevant = [r for r in resolved if r.config == config]
    if not relevant:
        raise NoJudgments(f"no single judgments for config {config!r}")
    yes = sum(1 for r in relevant if r.answers[dimension])
    return percent(yes, len(relevant))


def agreement(resolved: list[ResolvedPairwise]) -> float:
    """Fleiss' kappa over the "better" field, two categories (the pairing).

    Items are questions; raters are evaluators; items judged by fewer than
    two evaluators are excluded.
    """
    by_qid: dict[str, list[str]] = {}
    evaluators: dict[str, set[str]] = {}
    for r in resolved:
        by_qid.setdefault(r.qid, []).append(r.winners["better"])
        evaluators.setdefault(r.qid, set()).add(r.evaluator_id)
    items = [
        choices
        for qid, choices in by_qid.items()
        if len(choices) >= 2 and len(evaluators[qid]) >= 2
    ]
    if not items:
        raise InsufficientOverlap("need >= 2 evaluators judging >= 1 common question")
    categories = sorted({c for choices in items for c in choices})
    total_by_cat = {c: 0 for c in categories}
    total_ratings = 0
    p_bar_sum = 0.0
    for choices in items:
        n_i = len(choices)
        total_ratings += n_i
        agree_pairs = 0
        for category in categories:
            n_ij = choices.count(category)
            total_by_cat[category] += n_ij
            agree_pairs += n_ij * (n_ij - 1)
        p_bar_sum += agree_pairs / (n_i * (n_i - 1))
    p_bar = p_bar_sum / len(items)
    p_e = sum((total_by_cat[c] / total_ratings) ** 2 for c in categories)
    if p_e >= 1.0:
        return 1.0  # every rating identical: perfect agreement by convention
    return (p_bar - p_e) / (1.0 - p_e)


# --- report ------------------------------------------------------------------


@dataclass
class PairwiseRow:
    criterion: str
    config_a: str
    config_b: str
    count_a: int
    count_b: int
    pct_a: float
    pct_b: float


@dataclass
class MetricsReport:
    run_id: str
    pairings: dict[tuple[str, str], list[PairwiseRow]]
    majority: dict[tuple[str, str], list[PairwiseRow]]
    singles: dict[str, dict[str, tuple[float, int, int]]]  # config -> dim -> (pct, yes, total)
    kappa: dict[tuple[str, str], float | None]
    judgment_counts: dict[tuple[str, str], int]
    evaluator_counts: dict[tuple[str, str], int]
    config_params: dict
    index_metadata: dict


def _pairwise_rows(
    resolved: list[ResolvedPairwise], pairing: tuple[str, str]
) -> list[PairwiseRow]:
    config_a, config_b = pairing
    rows = []
    for criterion in PAIRWISE_CRITERIA:
        wins_a = sum(1 for r in resolved if r.winners[criterion] == config_a)
        wins_b = len(resolved) - wins_a
        rows.append(
            PairwiseRow(
                criterion=criterion,
                config_a=config_a,
                config_b=config_b,
                count_a=wins_a,
                count_b=wins_b,
                pct_a=percent(wins_a, len(resolved)),
                pct_b=percent(wins_b, len(resolved)),
            )
        )
    return rows


def _majority_rows(
    resolved: list[ResolvedPairwise], pairing: tuple[str, str]
) -> list[PairwiseRow]:
    """Per-question majority across evaluators; exact ties count to neither."""
    config_a, config_b = pairing
    rows = []
    for criterion in PAIRWISE_CRITERIA:
        by_qid: dict[str, list[str]] = {}
        for r in resolved:
            by_qid.setdefault(r.qid, []).append(r.winners[criterion])
        wins_a = wins_b = 0
        decided = 0
        for choices in by_qid.values():
            a = sum(1 for c in choices if c == config_a)
            b = len(choices) - a
            if a > b:
                wins_a += 1
                decided += 1
            elif b > a:
                wins_b += 1
                decided += 1
        if decided:
            rows.append(
                PairwiseRow(
                    criterion=criterion,
                    config_a=config_a,
                    config_b=config_b,
                    count_a=wins_a,
                    count_b=wins_b,
                    pct_a=percent(wins_a, decided),
                    pct_b=percent(wins_b, decided),
                )
            )
    return rows


def build_report(
    run_manifest: RunManifest | None,
    sessions: dict[str, EvalSession],
    pairwise: list[PairwiseJudgment],
    singles: list[SingleJudgment],
) -> MetricsReport:
    resolved = resolve_pairwise(sessions, pairwise)
    resolved_singles = resolve_singles(sessions, singles)
    if not resolved and not resolved_singles:
        raise NoJudgments("no resolvable judgments (are the sessions complete?)")

    pairings = sorted({tuple(sorted(r.pairing)) for r in resolved})
    report_pairings: dict[tuple[str, str], list[PairwiseRow]] = {}
    majority: dict[tuple[str, str], list[PairwiseRow]] = {}
    kappa: dict[tuple[str, str], float | None] = {}
    counts: dict[tuple[str, str], int] = {}
    evaluator_counts: dict[tuple[str, str], int] = {}
    for pairing in pairings:
        subset = [r for r in resolved if tuple(sorted(r.pairing)) == pairing]
        report_pairings[pairing] = _pairwise_rows(subset, pairing)
        majority[pairing] = _majority_rows(subset, pairing)
        counts[pairing] = len(subset)
        evaluator_counts[pairing] = len({r.evaluator_id for r in subset})
        try:
            kappa[pairing] = agreement(subset)
        except InsufficientOverlap:
            kappa[pairing] = None

    singles_table: dict[str, dict[str, tuple[float, int, int]]] = {}
    for config in sorted({r.config for r in resolved_singles}):
        relevant = [r for r in resolved_singles if r.config == config]
        singles_table[config] = {}
        for dim in SINGLE_DIMENSIONS:
            yes = sum(1 for r in relevant if r.answers[dim])
            singles_table[config][dim] = (percent(yes, len(relevant)), yes, len(relevant))

    return MetricsReport(
        run_id=run_manifest.run_id if run_manifest else "",
        pairings=report_pairings,
        majority=majority,
        singles=singles_table,
        kappa=kappa,
        judgment_counts=counts,
        evaluator_counts=evaluator_counts,
        config_params=run_manifest.config_params if run_manifest else {},
        index_metadata=run_manifest.index_metadata if run_manifest else {},
    )


def render_text(report: MetricsReport) -> str:
    """Canonical text rendering; identical ledgers produce identical bytes."""
    lines: list[str] = []
    lines.append(f"run: {report.run_id}")
    if report.index_metadata:
        meta = ", ".join(f"{k}={report.index_metadata[k]}" for k in sorted(report.index_metadata))
        lines.append(f"index: {meta}")
    for name in sorted(report.config_params):
        params = report.config_params[name]
        rendered = ", ".join(f"{k}={params[k]}" for k in sorted(params) if params[k] is not None)
        lines.append(f"config {name}: {rendered}")
    lines.append("")
    for pairing in sorted(report.pairings):
        a, b = pairing
        lines.append(f"== pairwise: {a} vs {b} ==")
        lines.append(
            f"judgments: {report.judgment_counts[pairing]}"
            f" (evaluators: {report.evaluator_counts[pairing]})"
        )
        kappa = report.kappa.get(pairing)
        lines.append(f"fleiss kappa (better): {kappa:.4f}" if kappa is not None else "fleiss kappa (better): n/a")
        lines.append(f"{'criterion':<16} {a:>20} {b:>20}")
        for row in report.pairings[pairing]:
            label = CRITERION_LABELS[row.criterion]
            lines.append(
                f"{label:<16} {row.pct_a:>13.1f}% ({row.count_a:>3}) {row.pct_b:>13.1f}% ({row.count_b:>3})"
            )
        if report.majority[pairing]:
            lines.append("per-question majority view:")
            for row in report.majority[pairing]:
                label = CRITERION_LABELS[row.criterion]
                lines.append(
                    f"{label:<16} {row.pct_a:>13.1f}% ({row.count_a:>3}) {row.pct_b:>13.1f}% ({row.count_b:>3})"
                )
        lines.append("")
    if report.singles:
        lines.append("== per-answer quality ==")
        for config in sorted(report.singles):
            lines.append(f"config: {config}")
            for dim in SINGLE_DIMENSIONS:
                pct, yes, total = report.singles[config][dim]
                lines.append(f"  {dim:<24} {pct:>6.1f}% ({yes}/{total})")
        lines.append("")
    return "\n".join(lines) + "\n"


def render_csv(report: MetricsReport) -> str:
    rows = ["section,pairing_or_config,criterion,config_a,pct_a,count_a,config_b,pct_b,count_b,total"]
    for pairing in sorted(report.pairings):
        a, b = pairing
        for row in report.pairings[pairing]:
            rows.append(
                f"pairwise,{a}|{b},{row.criterion},{a},{row.pct_a},{row.count_a},"
                f"{b},{row.pct_b},{row.count_b},{report.judgment_counts[pairing]}"
            )
    for config in sorted(report.singles):
        for dim in SINGLE_DIMENSIONS:
            pct, yes, total = report.singles[config][dim]
            rows.append(f"single,{config},{dim},{config},{pct},{yes},,,,{total}")
    return "\n".join(rows) + "\n"
