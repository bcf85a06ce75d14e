"""Service/CLI configuration: key=value files with dotted-key grouping."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .chunking import ChunkStore
from .embedding import Embedder, EmbedderDescriptor
from .errors import ConfigError, MissingFile
from .ingest import load_manifest
from .pipeline import (
    DEFAULT_CONTEXT_BUDGET,
    DEFAULT_K,
    DEFAULT_TEMPLATE_ID,
    QLORA_FINETUNE_METADATA,
    BackendDescriptor,
    ModelConfiguration,
    PipelineResources,
    RetrievalSettings,
)
from .vector_index import load_index


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    data_dir: Path = Path("ragforge-data")
    auth_token: str | None = None
    embedder: EmbedderDescriptor | None = None
    index_path: Path | None = None
    chunks_path: Path | None = None
    manifest_path: Path | None = None
    backends: dict[str, BackendDescriptor] = field(default_factory=dict)
    configurations: list[ModelConfiguration] = field(default_factory=list)

    def configuration(self, name: str) -> ModelConfiguration:
        for config in self.configurations:
            if config.name == name:
                return config
        raise ConfigError(f"unknown configuration {name!r}")


def read_kv_file(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blanks are skipped."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    out: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_embedder_spec(spec: str, name: str = "embedder") -> EmbedderDescriptor:
    """Parse an inline ``k=v,k=v`` embedder spec (CLI form)."""
    fields: dict[str, str] = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError(f"embedder spec part {part!r} is not k=v")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    return _embedder_from_fields(fields, name)


def _embedder_from_fields(fields: dict[str, str], default_name: str) -> EmbedderDescriptor:
    kind = fields.get("kind", "hashed_local")
    if kind not in ("hashed_local", "remote"):
        raise ConfigError(f"unknown embedder kind {kind!r}")
    try:
        dim = int(fields.get("dim", "256"))
        seed = int(fields.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError(f"embedder dim/seed must be integers: {exc}") from exc
    endpoint = fields.get("endpoint")
    if kind == "remote" and not endpoint:
        raise ConfigError("remote embedder requires endpoint=")
    return EmbedderDescriptor(
        name=fields.get("name", default_name),
        dim=dim,
        kind=kind,
        endpoint=endpoint,
        seed=seed,
    )


def parse_service_config(path: str | Path) -> ServiceConfig:
    pairs = read_kv_file(path)
    base = Path(path).parent
    cfg = ServiceConfig()

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    if "listen" in pairs:
        host, _, port = pairs["listen"].partition(":")
        cfg.listen_host = host or "127.0.0.1"
        try:
            cfg.listen_port = int(port or "8080")
        except ValueError as exc:
            raise ConfigError(f"bad listen address {pairs['listen']!r}") from exc
    if "data_dir" in pairs:
        cfg.data_dir = resolve(pairs["data_dir"])
    if "auth_token" in pairs and pairs["auth_token"]:
        cfg.auth_token = pairs["auth_token"]
    if "index.path" in pairs:
        cfg.index_path = resolve(pairs["index.path"])
    if "chunks.path" in pairs:
        cfg.chunks_path = resolve(pairs["chunks.path"])
    if "manifest.path" in pairs:
        cfg.manifest_path = resolve(pairs["manifest.path"])

    embedder_fields = {
        key.split(".", 1)[1]: value for key, value in pairs.items() if key.startswith("embedder.")
    }
    if embedder_fields:
        cfg.embedder = _embedder_from_fields(embedder_fields, "embedder")

    backend_fields: dict[str, dict[str, str]] = {}
    config_fields: dict[str, dict[str, str]] = {}
    for key, value in pairs.items():
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "backend":
            backend_fields.setdefault(parts[1], {})[parts[2]] = value
        elif len(parts) == 3 and parts[0] == "config":
            config_fields.setdefault(parts[1], {})[parts[2]] = value

    for name, fields in sorted(backend_fields.items()):
        if "endpoint" not in fields:
            raise ConfigError(f"backend {name!r} lacks endpoint=")
        try:
            cfg.backends[name] = BackendDescriptor(
                name=name,
                endpoint=fields["endpoint"],
                model_id=fields.get("model_id", name),
                temperature=float(fields.get("temperature", "0.0")),
                max_output_tokens=int(fields.get("max_output_tokens", "512")),
                training_metadata=(
                    QLORA_FINETUNE_METADATA
                    if fields.get("finetuned", "").lower() in ("1", "true", "yes")
                    else None
                ),
            )
        except ValueError as exc:
            raise ConfigError(f"backend {name!r}: {exc}") from exc

    for name, fields in sorted(config_fields.items()):
        mode = fields.get("mode", "baseline")
        backend_name = fields.get("backend")
        if backend_name not in cfg.backends:
            raise ConfigError(f"configuration {name!r} references unknown backend {backend_name!r}")
        retrieval = None
        if mode == "rag":
            try:
                retrieval = RetrievalSettings(
                    k=int(fields.get("k", str(DEFAULT_K))),
                    context_budget=int(fields.get("context_budget", str(DEFAULT_CONTEXT_BUDGET))),
                    prompt_template_id=fields.get("template_id", DEFAULT_TEMPLATE_ID),
                )
            except ValueError as exc:
                raise ConfigError(f"configuration {name!r}: {exc}") from exc
        try:
            cfg.configurations.append(
                ModelConfiguration(
                    name=name, mode=mode, backend=cfg.backends[backend_name], retrieval=retrieval
                )
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    return cfg


def load_resources(cfg: ServiceConfig) -> PipelineResources:
    """Open the index, chunk store and title map referenced by the config."""
    resources = PipelineResources()
    if cfg.embedder is not None:
        resources.embedder = Embedder(cfg.embedder)
    if cfg.index_path is not None:
        resources.index = load_index(cfg.index_path)
    if cfg.chunks_path is not None:
        resources.chunk_store = ChunkStore.open(cfg.chunks_path)
    if cfg.manifest_path is not None:
        resources.doc_titles = {
            doc.doc_id: doc.title for doc in load_manifest(cfg.manifest_path)
        }
    return resources
