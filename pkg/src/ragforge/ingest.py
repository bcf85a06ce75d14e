"""Corpus ingestion: manifests, text extraction, cleaning and deduplication.

Turns heterogeneous source documents (plain text, Markdown, LaTeX, PDF via an
external extractor command) into cleaned, deduplicated machine-readable text.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import subprocess
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import (
    DuplicateDocId,
    ExtractorFailed,
    InvalidUtf8,
    MalformedRecord,
    MissingFile,
    UnsupportedMedia,
)
from .hashing import stable_hash64

logger = logging.getLogger(__name__)

MEDIA_KINDS = ("plain", "markdown", "latex", "pdf")
SOURCE_TYPES = (
    "research_article",
    "book_chapter",
    "process_guideline",
    "standard",
    "datasheet",
    "other",
)

# Documents shorter than this after cleaning are flagged for review, never dropped.
LOW_QUALITY_CHAR_THRESHOLD = 200

# A line must recur verbatim this many times to be treated as a running header/footer.
HEADER_REPEAT_THRESHOLD = 3


@dataclass
class SourceDocument:
    doc_id: str
    location: str
    media_kind: str
    source_type: str
    title: str
    extra_metadata: dict[str, str] = field(default_factory=dict)


@dataclass
class CleanDocument:
    doc_id: str
    text: str
    char_count: int
    content_hash: int
    provenance: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_text(cls, doc_id: str, text: str, provenance: dict[str, str] | None = None) -> "CleanDocument":
        return cls(
            doc_id=doc_id,
            text=text,
            char_count=len(text),
            content_hash=stable_hash64(text),
            provenance=dict(provenance or {}),
        )


def is_low_quality(doc: CleanDocument) -> bool:
    return doc.char_count < LOW_QUALITY_CHAR_THRESHOLD


# --- manifest -------------------------------------------------------------

_MANIFEST_FIELDS = 5


def load_manifest(path: str | Path) -> list[SourceDocument]:
    """Parse a tab-separated manifest into SourceDocuments, one per non-blank line.

    Fields in order: doc_id, media_kind, source_type, title, location.
    Lines starting with ``#`` are comments.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    try:
        raw = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"{path}: {exc}") from exc

    docs: list[SourceDocument] = []
    seen: set[str] = set()
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != _MANIFEST_FIELDS:
            raise MalformedRecord(line_no, line, f"expected {_MANIFEST_FIELDS} tab-separated fields")
        doc_id, media_kind, source_type, title, location = (p.strip() for p in parts)
        if not doc_id:
            raise MalformedRecord(line_no, line, "empty doc_id")
        if media_kind not in MEDIA_KINDS:
            raise MalformedRecord(line_no, line, f"unknown media_kind {media_kind!r}")
        if source_type not in SOURCE_TYPES:
            raise MalformedRecord(line_no, line, f"unknown source_type {source_type!r}")
        if doc_id in seen:
            raise DuplicateDocId(doc_id)
        seen.add(doc_id)
        docs.append(SourceDocument(doc_id, location, media_kind, source_type, title))
    return docs


# --- extraction -----------------------------------------------------------


def extract_text(doc: SourceDocument, extractor_cmd: str | None = None) -> str:
    """Return raw UTF-8 text for ``doc`` according to its media kind.

    plain is returned verbatim, markdown has its markup characters stripped,
    latex is routed through :func:`detex`, and pdf runs ``extractor_cmd`` with
    ``{path}`` substituted and captures stdout.
    """
    if doc.media_kind == "pdf":
        if not extractor_cmd:
            raise UnsupportedMedia(f"{doc.doc_id}: pdf extraction requires an extractor command")
        return _run_extractor(extractor_cmd, doc.location)

    path = Path(doc.location)
    if not path.exists():
        raise MissingFile(str(path))
    try:
        raw = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"{path}: {exc}") from exc

    if doc.media_kind == "plain":
        return raw
    if doc.media_kind == "markdown":
        return strip_markdown(raw)
    if doc.media_kind == "latex":
        result = detex(raw)
        if result.unbalanced:
            logger.warning("unbalanced braces in %s; passing LaTeX through unchanged", doc.doc_id)
        return result.text
    raise UnsupportedMedia(doc.media_kind)


def _run_extractor(template: str, location: str) -> str:
    if "{path}" not in template:
        raise ExtractorFailed(-1, "extractor command template lacks {path} placeholder")
    argv = [part.replace("{path}", location) for part in shlex.split(template)]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=300)
    except FileNotFoundError as exc:
        raise ExtractorFailed(-1, str(exc)) from exc
    except subprocess.TimeoutExpired as exc:
        raise ExtractorFailed(-1, f"extractor timed out: {exc}") from exc
    if proc.returncode != 0:
        excerpt = proc.stderr.decode("utf-8", errors="replace")[:500]
        raise ExtractorFailed(proc.returncode, excerpt)
    try:
        return proc.stdout.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"extractor output for {location}: {exc}") from exc


# --- markdown -------------------------------------------------------------

_MD_HEADING = re.compile(r"^\s{0,3}#{1,6}\s+")
_MD_BULLET = re.compile(r"^(\s*)[-*+]\s+")
_MD_NUMBERED = re.compile(r"^(\s*)\d+[.)]\s+")
_MD_BLOCKQUOTE = re.compile(r"^\s{0,3}>\s?")
_MD_RULE = re.compile(r"^\s{0,3}([-*_])\s*(?:\1\s*){2,}$")
_MD_FENCE = re.compile(r"^\s{0,3}(```|~~~)")
_MD_IMAGE = re.compile(r"!\[([^\]]*)\]\([^)]*\)")
_MD_LINK = re.compile(r"\[([^\]]*)\]\([^)]*\)")
_MD_EMPHASIS = re.compile(r"(\*{1,3}|_{1,3}|`{1,3})(?=\S)(.+?)(?<=\S)\1")


def strip_markdown(text: str) -> str:
    """Drop Markdown markup characters while keeping heading and list text."""
    out_lines: list[str] = []
    for line in text.splitlines():
        if _MD_RULE.match(line) or _MD_FENCE.match(line):
            continue
        line = _MD_HEADING.sub("", line)
        line = _MD_BULLET.sub(r"\1", line)
        line = _MD_NUMBERED.sub(r"\1", line)
        line = _MD_BLOCKQUOTE.sub("", line)
        line = _MD_IMAGE.sub(r"\1", line)
        line = _MD_LINK.sub(r"\1", line)
        # repeat to unwrap nested emphasis like **_x_**
        prev = None
        while prev != line:
            prev = line
            line = _MD_EMPHASIS.sub(r"\2", line)
        out_lines.append(line)
    return "\n".join(out_lines)


# --- latex ----------------------------------------------------------------


class DetexResult(NamedTuple):
    text: str
    unbalanced: bool


_TEX_ENV = re.compile(r"\\(?:begin|end)\s*\{[^{}]*\}")
_TEX_CMD_ARG = re.compile(r"\\[A-Za-z]+\*?\s*\{([^{}]*)\}")
_TEX_CMD_BARE = re.compile(r"\\[A-Za-z]+\*?")
_TEX_ESCAPES = {"\\%": "%", "\\$": "$", "\\&": "&", "\\#": "#", "\\_": "_", "\\{": "{", "\\}": "}"}


def detex(latex_text: str) -> DetexResult:
    """Best-effort LaTeX-to-plain-text transform.

    Comments are removed, ``\\name{arg}`` collapses to ``arg``, argument-less
    commands vanish, ``$...$`` keeps its interior verbatim, and environment
    markers are dropped while their bodies are kept. Input with unbalanced
    unescaped braces is returned unchanged with ``unbalanced`` set.
    """
    if not latex_text:
        return DetexResult("", False)
    if not _braces_balanced(latex_text):
        return DetexResult(latex_text, True)

    text = _strip_tex_comments(latex_text)
    text, math_segments = _shelve_math(text)
    text = _TEX_ENV.sub("", text)
    prev = None
    while prev != text:
        prev = text
        text = _TEX_CMD_ARG.sub(r"\1", text)
    text = _TEX_CMD_BARE.sub("", text)
    for escape, char in _TEX_ESCAPES.items():
        text = text.replace(escape, char)
    text = _unshelve_math(text, math_segments)
    return DetexResult(text, False)


def _braces_balanced(text: str) -> bool:
    depth = 0
    escaped = False
    for ch in text:
        if escaped:
            escaped = False
            continue
        if ch == "\\":
            escaped = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def _strip_tex_comments(text: str) -> str:
    lines = []
    for line in text.split("\n"):
        out = []
        escaped = False
        for ch in line:
            if escaped:
                out.append(ch)
                escaped = False
                continue
            if ch == "\\":
                out.append(ch)
                escaped = True
                continue
            if ch == "%":
                break
            out.append(ch)
        lines.append("".join(out).rstrip())
    return "\n".join(lines)


def _shelve_math(text: str) -> tuple[str, list[str]]:
    """Replace ``$...$`` spans with placeholders so their interiors stay verbatim."""
    segments: list[str] = []
    out: list[str] = []
    i = 0
    open_pos = None
    escaped = False
    while i < len(text):
        ch = text[i]
        if escaped:
            out.append(ch)
            escaped = False
            i += 1
            continue
        if ch == "\\":
            out.append(ch)
            escaped = True
            i += 1
            continue
        if ch == "$":
            if open_pos is None:
                open_pos = len(out)
            else:
                interior = "".join(out[open_pos:])
                del out[open_pos:]
                out.append(f"\x02{len(segments)}\x03")
                segments.append(interior)
                open_pos = None
            i += 1
            continue
        out.append(ch)
        i += 1
    # odd number of $: the dangling one is literal text
    if open_pos is not None:
        out.insert(open_pos, "$")
    return "".join(out), segments


def _unshelve_math(text: str, segments: list[str]) -> str:
    for idx, segment in enumerate(segments):
        text = text.replace(f"\x02{idx}\x03", segment)
    return text


# --- cleaning ---------------------------------------------------------------

_CLEAN_FIXPOINT_LIMIT = 8
_WS_RUN = re.compile(r"[^\S\n]+")


def clean_text(raw: str) -> str:
    """Normalize raw extracted text into the CleanDocument shape.

    Control characters become spaces, line-break hyphenation is rejoined,
    running headers/footers (lines recurring verbatim >= 3 times) are dropped,
    whitespace runs collapse to single spaces, and at most two consecutive
    newlines survive. Idempotent by construction (applied to a fixed point).
    """
    _require_encodable(raw)
    text = raw
    for _ in range(_CLEAN_FIXPOINT_LIMIT):
        cleaned = _clean_once(text)
        if cleaned == text:
            return cleaned
        text = cleaned
    return text


def _require_encodable(text: str) -> None:
    try:
        text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise InvalidUtf8(str(exc)) from exc


def _clean_once(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = "".join(
        ch if ch == "\n" or unicodedata.category(ch) != "Cc" else " " for ch in text
    )
    lines = [_WS_RUN.sub(" ", line).strip() for line in text.split("\n")]
    lines = _drop_repeated_lines(lines)
    lines = _rejoin_hyphenation(lines)
    text = "\n".join(lines)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text.strip()


def _drop_repeated_lines(lines: list[str]) -> list[str]:
    counts = Counter(line for line in lines if line)
    return [line for line in lines if not (line and counts[line] >= HEADER_REPEAT_THRESHOLD)]


def _rejoin_hyphenation(lines: list[str]) -> list[str]:
    """Join ``poly-`` / ``mer`` line pairs when the next line starts lowercase."""
    out: list[str] = []
    i = 0
    while i < len(lines):
        current = lines[i]
        while (
            current.endswith("-")
            and len(current) > 1
            and i + 1 < len(lines)
            and lines[i + 1][:1].islower()
        ):
            nxt = lines[i + 1]
            current = current[:-1] + nxt
            i += 1
        out.append(current)
        i += 1
    return out


# --- dedup ------------------------------------------------------------------


def deduplicate(docs: list[CleanDocument]) -> tuple[list[CleanDocument], int]:
    """Keep the first document per content_hash; returns (kept, removed count)."""
    seen: set[int] = set()
    kept: list[CleanDocument] = []
    removed = 0
    for doc in docs:
        if doc.content_hash in seen:
            removed += 1
            continue
        seen.add(doc.content_hash)
        kept.append(doc)
    return kept, removed


# --- pipeline + store -------------------------------------------------------


def ingest_documents(
    manifest_path: str | Path, extractor_cmd: str | None = None
) -> tuple[list[CleanDocument], int, list[str]]:
    """Run the full manifest -> CleanDocument pipeline.

    Returns (documents, duplicates removed, doc_ids flagged as low quality).
    """
    sources = load_manifest(manifest_path)
    cleaned = []
    for source in sources:
        raw = extract_text(source, extractor_cmd)
        body = clean_text(raw)
        provenance = {
            "location": source.location,
            "media_kind": source.media_kind,
            "source_type": source.source_type,
            "title": source.title,
        }
        cleaned.append(CleanDocument.from_text(source.doc_id, body, provenance))
    docs, removed = deduplicate(cleaned)
    flagged = [doc.doc_id for doc in docs if is_low_quality(doc)]
    return docs, removed, flagged


def save_documents(docs: list[CleanDocument], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {
                        "doc_id": doc.doc_id,
                        "text": doc.text,
                        "char_count": doc.char_count,
                        "content_hash": doc.content_hash,
                        "provenance": doc.provenance,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_documents(path: str | Path) -> list[CleanDocument]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    docs = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            docs.append(
                CleanDocument(
                    doc_id=rec["doc_id"],
                    text=rec["text"],
                    char_count=rec["char_count"],
                    content_hash=rec["content_hash"],
                    provenance=rec.get("provenance", {}),
                )
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise MalformedRecord(line_no, line[:200], str(exc)) from exc
    return docs
