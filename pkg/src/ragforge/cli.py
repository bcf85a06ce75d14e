"""Operator CLI for the full pipeline: ingest, chunk, index, bench, eval, report."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .benchmark import RunLedger, export_run, load_benchmark, run_benchmark
from .chunking import ChunkingConfig, chunk_document, load_chunks, save_chunks
from .config import ServiceConfig, load_resources, parse_embedder_spec, parse_service_config
from .embedding import Embedder
from .errors import ConfigError, MissingFile, RagforgeError
from .evaluation import EvaluationStore, build_report, render_csv, render_text
from .ingest import ingest_documents, load_documents, save_documents
from .vector_index import IndexEntry, IndexProvenance, build_flat, build_hnsw, load_index, save_index

logger = logging.getLogger(__name__)


def _cmd_ingest(args) -> int:
    docs, removed, flagged = ingest_documents(args.manifest, args.extractor)
    save_documents(docs, args.out)
    print(f"wrote {len(docs)} documents to {args.out} ({removed} duplicates removed)")
    for doc_id in flagged:
        print(f"note: {doc_id} is under the low-quality length threshold", file=sys.stderr)
    return 0


def _cmd_chunk(args) -> int:
    docs = load_documents(getattr(args, "in"))
    cfg = ChunkingConfig(chunk_size=args.size, overlap=args.overlap)
    chunks = []
    for doc in docs:
        if not doc.text.strip():
            print(f"note: skipping empty document {doc.doc_id}", file=sys.stderr)
            continue
        chunks.extend(chunk_document(doc, cfg))
    save_chunks(chunks, args.out)
    print(f"wrote {len(chunks)} chunks from {len(docs)} documents to {args.out}")
    return 0


def _cmd_index_build(args) -> int:
    chunks = load_chunks(args.chunks)
    descriptor = parse_embedder_spec(args.embedder)
    embedder = Embedder(descriptor)
    vectors = embedder.embed_many([c.text for c in chunks])
    entries = [IndexEntry(c.chunk_id, v) for c, v in zip(chunks, vectors)]
    provenance = IndexProvenance(
        embedder_name=descriptor.name, chunk_size=args.size, overlap=args.overlap
    )
    if args.hnsw:
        index = build_hnsw(
            entries,
            m=args.m,
            ef_construction=args.ef_construction,
            seed=args.seed,
            provenance=provenance,
        )
    else:
        index = build_flat(entries, provenance)
    save_index(index, args.out)
    print(f"wrote {index.kind} index with {len(entries)} entries (dim {index.dim}) to {args.out}")
    return 0


def _cmd_index_query(args) -> int:
    index = load_index(args.index)
    embedder = Embedder(parse_embedder_spec(args.embedder))
    vector = embedder.embed(args.text)
    hits = index.search(vector, args.k)
    chunk_texts = {}
    if args.chunks:
        chunk_texts = {c.chunk_id: c.text for c in load_chunks(args.chunks)}
    for hit in hits:
        snippet = chunk_texts.get(hit.chunk_id, "")[:80]
        print(f"{hit.score:.5f}\t{hit.chunk_id}\t{snippet}")
    return 0


def _cmd_bench_run(args) -> int:
    cfg = parse_service_config(args.config)
    if not cfg.configurations:
        raise ConfigError(f"{args.config} declares no configurations")
    questions = load_benchmark(args.questions)
    resources = load_resources(cfg)
    run_dir = cfg.data_dir / "runs" / args.run
    ledger = RunLedger(run_dir)
    pending_before = None
    if ledger.exists():
        existing = ledger.effective_records()
        pending_before = sum(
            1
            for config in cfg.configurations
            for question in questions
            if existing.get((config.name, question.qid)) is None
            or existing[(config.name, question.qid)].status != "success"
        )
        print(f"{pending_before} pending")
    else:
        print(f"{len(cfg.configurations) * len(questions)} pending")
    records, manifest = run_benchmark(
        cfg.configurations,
        questions,
        resources,
        run_dir,
        args.run,
        benchmark_path=str(args.questions),
        index_metadata=_index_metadata(cfg),
        fanout=args.fanout,
        timeout_s=args.timeout,
    )
    ok = sum(1 for r in records if r.status == "success")
    errors = len(records) - ok
    print(f"run {args.run}: {ok} success, {errors} error records in {run_dir}")
    return 0


def _index_metadata(cfg: ServiceConfig) -> dict:
    if cfg.index_path is None or not Path(cfg.index_path).exists():
        return {}
    index = load_index(cfg.index_path)
    return {
        "kind": index.kind,
        "dim": index.dim,
        "entries": len(index.ids),
        "embedder_name": index.provenance.embedder_name,
        "chunk_size": index.provenance.chunk_size,
        "overlap": index.provenance.overlap,
    }


def _cmd_bench_export(args) -> int:
    export_run(args.run, args.out)
    print(f"exported {args.run} to {args.out}")
    return 0


def _cmd_eval_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = parse_service_config(args.config)
    app = create_app(cfg, static_dir=args.static)
    uvicorn.run(app, host=cfg.listen_host, port=cfg.listen_port, log_level="info")
    return 0


def _resolve_run_dir(run: str, config_path: str | None) -> Path:
    candidate = Path(run)
    if candidate.is_dir():
        return candidate
    if config_path:
        cfg = parse_service_config(config_path)
        run_dir = cfg.data_dir / "runs" / run
        if run_dir.is_dir():
            return run_dir
    raise MissingFile(f"run directory {run!r} not found")


def _cmd_report(args) -> int:
    run_dir = _resolve_run_dir(args.run, args.config)
    ledger = RunLedger(run_dir)
    manifest = ledger.read_manifest()
    store = EvaluationStore(args.judgments)
    sessions = {
        sid: session
        for sid, session in store.sessions.items()
        if session.run_id == manifest.run_id
    }
    pairwise = [j for j in store.pairwise.values() if j.session_id in sessions]
    singles = [j for j in store.singles.values() if j.session_id in sessions]
    metrics = build_report(manifest, sessions, pairwise, singles)
    sys.stdout.write(render_text(metrics))
    if args.csv:
        Path(args.csv).write_text(render_csv(metrics), encoding="utf-8")
        print(f"csv written to {args.csv}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ragforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ragforge {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="manifest -> clean document store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--extractor", default=None, help="pdf extractor command with {path}")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("chunk", help="clean documents -> chunk store")
    p.add_argument("--in", required=True, dest="in", help="clean document JSONL")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--overlap", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_chunk)

    p_index = sub.add_parser("index", help="vector index operations")
    index_sub = p_index.add_subparsers(dest="index_command", required=True)

    p = index_sub.add_parser("build", help="embed chunks and build an index")
    p.add_argument("--chunks", required=True)
    p.add_argument("--embedder", required=True, help="e.g. kind=hashed_local,dim=256,seed=42,name=demo")
    p.add_argument("--out", required=True)
    p.add_argument("--hnsw", action="store_true", help="build the approximate index")
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--ef-construction", type=int, default=200, dest="ef_construction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=512, help="chunk size recorded as provenance")
    p.add_argument("--overlap", type=int, default=64, help="chunk overlap recorded as provenance")
    p.set_defaults(func=_cmd_index_build)

    p = index_sub.add_parser("query", help="embed a query and print top hits")
    p.add_argument("--index", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--embedder", required=True)
    p.add_argument("--chunks", default=None, help="chunk store for snippets")
    p.set_defaults(func=_cmd_index_query)

    p_bench = sub.add_parser("bench", help="benchmark runs")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)

    p = bench_sub.add_parser("run", help="run all configurations over the questions")
    p.add_argument("--config", required=True, help="service config file")
    p.add_argument("--questions", required=True)
    p.add_argument("--run", required=True, help="run id")
    p.add_argument("--fanout", type=int, default=4)
    p.add_argument("--timeout", type=float, default=120.0)
    p.set_defaults(func=_cmd_bench_run)

    p = bench_sub.add_parser("export", help="export a run ledger to one JSONL file")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench_export)

    p_eval = sub.add_parser("eval", help="evaluation service")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p = eval_sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--config", required=True)
    p.add_argument("--static", default=None, help="static asset directory for the UI")
    p.set_defaults(func=_cmd_eval_serve)

    p = sub.add_parser("report", help="aggregate judgments into metric tables")
    p.add_argument("--run", required=True, help="run directory or run id (with --config)")
    p.add_argument("--judgments", required=True, help="judgment ledger path")
    p.add_argument("--csv", default=None, help="also write CSV here")
    p.add_argument("--config", default=None, help="config file for resolving run ids")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except RagforgeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - unexpected crash path
        logger.exception("unexpected failure")
        print(f"InternalError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
