"""Benchmark harness: load the question set, run every configuration over it,
persist response records in a resumable append-only run ledger."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    ConfigError,
    DuplicateQid,
    EmptyBenchmark,
    IoFailure,
    MalformedRecord,
    MissingFile,
    RagforgeError,
    UnknownRun,
)
from .hashing import stable_hash64
from .pipeline import (
    DEFAULT_TIMEOUT_S,
    ModelConfiguration,
    PipelineResources,
    answer,
)

logger = logging.getLogger(__name__)

CATEGORIES = (
    "materials_selection",
    "process_parameters",
    "defect_diagnosis",
    "design_guidelines",
    "other",
)
DIFFICULTIES = ("fundamental", "advanced")

# Size of the canonical expert-designed benchmark; other sizes are accepted
# with an informational note.
CANONICAL_BENCHMARK_SIZE = 200

DEFAULT_FANOUT = 4


@dataclass(frozen=True)
class BenchQuestion:
    qid: str
    question: str
    category: str
    difficulty: str
    reference_answer: str | None = None


@dataclass
class ResponseRecord:
    config_name: str
    qid: str
    status: str  # success | error
    question_text: str
    answer_text: str = ""
    retrieved_chunk_ids: list[str] = field(default_factory=list)
    prompt_hash: int = 0
    latency_ms: float = 0.0
    created_at: str = ""
    error: str = ""

    def to_json(self) -> dict:
        return {
            "config_name": self.config_name,
            "qid": self.qid,
            "status": self.status,
            "question_text": self.question_text,
            "answer_text": self.answer_text,
            "retrieved_chunk_ids": self.retrieved_chunk_ids,
            "prompt_hash": self.prompt_hash,
            "latency_ms": self.latency_ms,
            "created_at": self.created_at,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "ResponseRecord":
        return cls(
            config_name=rec["config_name"],
            qid=rec["qid"],
            status=rec["status"],
            question_text=rec.get("question_text", ""),
            answer_text=rec.get("answer_text", ""),
            retrieved_chunk_ids=list(rec.get("retrieved_chunk_ids", [])),
            prompt_hash=rec.get("prompt_hash", 0),
            latency_ms=rec.get("latency_ms", 0.0),
            created_at=rec.get("created_at", ""),
            error=rec.get("error", ""),
        )


@dataclass
class RunManifest:
    run_id: str
    config_names: list[str]
    benchmark_path: str
    benchmark_hash: int
    index_metadata: dict
    started_at: str
    completed: dict[str, int] = field(default_factory=dict)
    config_params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_names": self.config_names,
            "benchmark_path": self.benchmark_path,
            "benchmark_hash": self.benchmark_hash,
            "index_metadata": self.index_metadata,
            "started_at": self.started_at,
            "completed": self.completed,
            "config_params": self.config_params,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "RunManifest":
        return cls(
            run_id=rec["run_id"],
            config_names=list(rec["config_names"]),
            benchmark_path=rec.get("benchmark_path", ""),
            benchmark_hash=rec.get("benchmark_hash", 0),
            index_metadata=rec.get("index_metadata", {}),
            started_at=rec.get("started_at", ""),
            completed=dict(rec.get("completed", {})),
            config_params=dict(rec.get("config_params", {})),
        )


def load_benchmark(path: str | Path) -> list[BenchQuestion]:
    """Parse the tab-separated question file, in file order.

    Fields: qid, category, difficulty, question, reference_answer (optional).
    ``#`` lines are comments.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    questions: list[BenchQuestion] = []
    seen: set[str] = set()
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (4, 5):
            raise MalformedRecord(line_no, line[:200], "expected 4 or 5 tab-separated fields")
        qid, category, difficulty, question = (p.strip() for p in parts[:4])
        reference = parts[4].strip() if len(parts) == 5 and parts[4].strip() else None
        if not qid or not question:
            raise MalformedRecord(line_no, line[:200], "empty qid or question")
        if category not in CATEGORIES:
            raise MalformedRecord(line_no, line[:200], f"unknown category {category!r}")
        if difficulty not in DIFFICULTIES:
            raise MalformedRecord(line_no, line[:200], f"unknown difficulty {difficulty!r}")
        if qid in seen:
            raise DuplicateQid(qid)
        seen.add(qid)
        questions.append(BenchQuestion(qid, question, category, difficulty, reference))
    if not questions:
        raise EmptyBenchmark(str(path))
    if len(questions) != CANONICAL_BENCHMARK_SIZE:
        logger.info(
            "benchmark %s has %d questions (canonical set has %d)",
            path,
            len(questions),
            CANONICAL_BENCHMARK_SIZE,
        )
    return questions


class RunLedger:
    """One directory per run: a JSON ``manifest`` plus append-only ``records``."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self._lock = threading.Lock()

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest"

    @property
    def records_path(self) -> Path:
        return self.run_dir / "records"

    def exists(self) -> bool:
        return self.manifest_path.exists()

    def read_manifest(self) -> RunManifest:
        if not self.exists():
            raise UnknownRun(str(self.run_dir))
        return RunManifest.from_json(json.loads(self.manifest_path.read_text(encoding="utf-8")))

    def write_manifest(self, manifest: RunManifest) -> None:
        try:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            self.manifest_path.write_text(
                json.dumps(manifest.to_json(), indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
        except OSError as exc:
            raise IoFailure(f"{self.manifest_path}: {exc}") from exc

    def append_record(self, record: ResponseRecord) -> None:
        with self._lock:
            try:
                with self.records_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
            except OSError as exc:
                raise IoFailure(f"{self.records_path}: {exc}") from exc

    def read_records(self) -> list[ResponseRecord]:
        """All appended records in append order (replays included)."""
        if not self.records_path.exists():
            return []
        records = []
        for line in self.records_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(ResponseRecord.from_json(json.loads(line)))
        return records

    def effective_records(self) -> dict[tuple[str, str], ResponseRecord]:
        """Latest record per (config, qid); retries supersede earlier errors."""
        latest: dict[tuple[str, str], ResponseRecord] = {}
        for record in self.read_records():
            latest[(record.config_name, record.qid)] = record
        return latest


def run_benchmark(
    configs: list[ModelConfiguration],
    questions: list[BenchQuestion],
    resources: PipelineResources | None,
    run_dir: str | Path,
    run_id: str,
    benchmark_path: str = "",
    index_metadata: dict | None = None,
    fanout: int = DEFAULT_FANOUT,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> tuple[list[ResponseRecord], RunManifest]:
    """Run every (config, question) pair that lacks a successful record.

    Failures become error records and the run continues; rerunning with the
    same run_id completes only the missing pairs.
    """
    if not configs:
        raise ConfigError("at least one configuration is required")
    if not questions:
        raise EmptyBenchmark("no questions to run")

    ledger = RunLedger(run_dir)
    bench_hash = stable_hash64(
        "\n".join(f"{q.qid}\t{q.question}" for q in questions)
    )
    if ledger.exists():
        manifest = ledger.read_manifest()
        if manifest.benchmark_hash != bench_hash:
            raise ConfigError(
                f"run {run_id!r} was started against a different benchmark (hash mismatch)"
            )
        if manifest.config_names != [c.name for c in configs]:
            raise ConfigError(f"run {run_id!r} was started with different configurations")
    else:
        manifest = RunManifest(
            run_id=run_id,
            config_names=[c.name for c in configs],
            benchmark_path=str(benchmark_path),
            benchmark_hash=bench_hash,
            index_metadata=dict(index_metadata or {}),
            started_at=datetime.now(timezone.utc).isoformat(),
            config_params={
                c.name: {
                    "mode": c.mode,
                    "backend": c.backend.name,
                    "model_id": c.backend.model_id,
                    "temperature": c.backend.temperature,
                    "k": c.retrieval.k if c.retrieval else None,
                    "context_budget": c.retrieval.context_budget if c.retrieval else None,
                    "template_id": c.retrieval.prompt_template_id if c.retrieval else None,
                }
                for c in configs
            },
        )
        ledger.write_manifest(manifest)

    existing = ledger.effective_records()
    pending = [
        (config, question)
        for config in configs
        for question in questions
        if existing.get((config.name, question.qid), ResponseRecord("", "", "error", "")).status
        != "success"
    ]
    logger.info("run %s: %d pending of %d pairs", run_id, len(pending), len(configs) * len(questions))

    def run_pair(config: ModelConfiguration, question: BenchQuestion) -> ResponseRecord:
        try:
            rec = answer(config, question.question, resources, timeout_s=timeout_s)
            return ResponseRecord(
                config_name=config.name,
                qid=question.qid,
                status="success",
                question_text=question.question,
                answer_text=rec.answer_text,
                retrieved_chunk_ids=rec.retrieved_chunk_ids,
                prompt_hash=rec.prompt_hash,
                latency_ms=rec.latency_ms,
                created_at=rec.created_at,
            )
        except RagforgeError as exc:
            logger.warning("pair (%s, %s) failed: %s", config.name, question.qid, exc)
            return ResponseRecord(
                config_name=config.name,
                qid=question.qid,
                status="error",
                question_text=question.question,
                error=f"{type(exc).__name__}: {exc}",
                created_at=datetime.now(timezone.utc).isoformat(),
            )

    if fanout <= 1:
        for config, question in pending:
            ledger.append_record(run_pair(config, question))
    else:
        with ThreadPoolExecutor(max_workers=fanout) as pool:
            for record in pool.map(lambda pair: run_pair(*pair), pending):
                ledger.append_record(record)

    final = ledger.effective_records()
    ordered = [
        final[(config.name, question.qid)]
        for config in configs
        for question in questions
        if (config.name, question.qid) in final
    ]
    manifest.completed = {
        config.name: sum(
            1 for q in questions
            if final.get((config.name, q.qid)) is not None
            and final[(config.name, q.qid)].status == "success"
        )
        for config in configs
    }
    ledger.write_manifest(manifest)
    return ordered, manifest


def export_run(run_dir: str | Path, out_path: str | Path) -> None:
    """Write the manifest plus effective records as one lossless JSONL file."""
    ledger = RunLedger(run_dir)
    if not ledger.exists():
        raise UnknownRun(str(run_dir))
    manifest = ledger.read_manifest()
    final = ledger.effective_records()
    out_path = Path(out_path)
    try:
        with out_path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "manifest", **manifest.to_json()}, ensure_ascii=False) + "\n")
            for key in sorted(final):
                fh.write(
                    json.dumps({"kind": "record", **final[key].to_json()}, ensure_ascii=False) + "\n"
                )
    except OSError as exc:
        raise IoFailure(f"{out_path}: {exc}") from exc


def import_run(path: str | Path) -> tuple[RunManifest, list[ResponseRecord]]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    manifest: RunManifest | None = None
    records: list[ResponseRecord] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.pop("kind", None)
        if kind == "manifest":
            manifest = RunManifest.from_json(rec)
        elif kind == "record":
            records.append(ResponseRecord.from_json(rec))
        else:
            raise MalformedRecord(line_no, line[:200], f"unknown record kind {kind!r}")
    if manifest is None:
        raise MalformedRecord(0, "", "export file lacks a manifest line")
    return manifest, records
