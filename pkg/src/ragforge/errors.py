"""Exception taxonomy shared by all ragforge modules.

Every operational failure maps to one class here so CLI/service layers can
report a stable, machine-parseable error name (``type(err).__name__``).
"""

from __future__ import annotations


class RagforgeError(Exception):
    """Base class for all ragforge failures."""


# --- corpus ingestion ---------------------------------------------------


class MissingFile(RagforgeError):
    pass


class MalformedRecord(RagforgeError):
    def __init__(self, line_no: int, line: str, reason: str = ""):
        self.line_no = line_no
        self.line = line
        self.reason = reason
        detail = f"line {line_no}: {line!r}"
        if reason:
            detail += f" ({reason})"
        super().__init__(detail)


class DuplicateDocId(RagforgeError):
    pass


class ExtractorFailed(RagforgeError):
    def __init__(self, exit_status: int, stderr_excerpt: str):
        self.exit_status = exit_status
        self.stderr_excerpt = stderr_excerpt
        super().__init__(f"exit status {exit_status}: {stderr_excerpt}")


class UnsupportedMedia(RagforgeError):
    pass


class InvalidUtf8(RagforgeError):
    pass


# --- chunking -----------------------------------------------------------


class EmptyDocument(RagforgeError):
    pass


# --- embedding ----------------------------------------------------------


class EmptyText(RagforgeError):
    pass


class RemoteUnavailable(RagforgeError):
    def __init__(self, status: int | str, detail: str = ""):
        self.status = status
        super().__init__(f"status {status}" + (f": {detail}" if detail else ""))


class DimensionMismatch(RagforgeError):
    pass


# --- vector index -------------------------------------------------------


class DuplicateChunkId(RagforgeError):
    pass


class EmptyIndex(RagforgeError):
    pass


class InvalidK(RagforgeError):
    pass


class IoFailure(RagforgeError):
    pass


class BadMagic(RagforgeError):
    pass


class UnsupportedVersion(RagforgeError):
    pass


class TruncatedFile(RagforgeError):
    pass


class EmptyExact(RagforgeError):
    pass


# --- rag pipeline -------------------------------------------------------


class UnresolvedChunkId(RagforgeError):
    pass


class BudgetTooSmall(RagforgeError):
    pass


class BackendUnavailable(RagforgeError):
    def __init__(self, status: int | str, detail: str = ""):
        self.status = status
        super().__init__(f"status {status}" + (f": {detail}" if detail else ""))


class MalformedResponse(RagforgeError):
    pass


class Timeout(RagforgeError):
    pass


# --- benchmark ----------------------------------------------------------


class DuplicateQid(RagforgeError):
    pass


class EmptyBenchmark(RagforgeError):
    pass


class UnknownRun(RagforgeError):
    pass


# --- evaluation ---------------------------------------------------------


class MissingResponses(RagforgeError):
    def __init__(self, qids: list[str]):
        self.qids = list(qids)
        super().__init__(f"no successful responses for qids: {', '.join(self.qids)}")


class DuplicateJudgment(RagforgeError):
    pass


class UnknownQid(RagforgeError):
    pass


class UnknownConfig(RagforgeError):
    pass


class SessionClosed(RagforgeError):
    pass


class SessionStillOpen(RagforgeError):
    pass


class NoJudgments(RagforgeError):
    pass


class InsufficientOverlap(RagforgeError):
    pass


# --- service / config ---------------------------------------------------


class ConfigError(RagforgeError):
    pass
