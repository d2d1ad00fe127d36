"""Dataset, dependency-parse, and embedding ingestion.

Produces encoded instances whose aspect tokens are pooled (summed) into a
single row, so downstream graphs see one node per aspect.
"""
from __future__ import annotations

import hashlib
import json
import string
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DataError

POLARITIES = ("positive", "neutral", "negative")
LABEL_TO_INDEX = {name: i for i, name in enumerate(POLARITIES)}


def tokenize(text: str) -> tuple[str, ...]:
    """Whitespace split, lowercase, strip surrounding ASCII punctuation.

    Tokens that are pure punctuation are dropped.
    """
    out = []
    for raw in text.split():
        tok = raw.lower().strip(string.punctuation)
        if tok:
            out.append(tok)
    return tuple(out)


@dataclass(frozen=True)
class LabeledInstance:
    """One sentence with an aspect span and a gold polarity label."""

    text: str
    tokens: tuple[str, ...]
    aspect_span: tuple[int, int]  # half-open token range
    label: str
    parse_edges: tuple[tuple[int, int, str], ...] = ()

    def __post_init__(self):
        n = len(self.tokens)
        i, j = self.aspect_span
        if not (0 <= i < j <= n):
            raise DataError(
                f"aspect span [{i}, {j}) outside a {n}-token sentence: {self.text!r}"
            )
        if self.label not in POLARITIES:
            raise DataError(f"unknown label {self.label!r}")
        for h, d, _rel in self.parse_edges:
            if not (0 <= h < n and 0 <= d < n):
                raise DataError(
                    f"parse edge ({h}, {d}) outside a {n}-token sentence: {self.text!r}"
                )
            if h == d:
                raise DataError(f"self-edge at token {h} in {self.text!r}")

    @property
    def aspect(self) -> str:
        i, j = self.aspect_span
        return " ".join(self.tokens[i:j])

    @property
    def label_index(self) -> int:
        return LABEL_TO_INDEX[self.label]


def instance_to_json(inst: LabeledInstance) -> str:
    rec = {
        "text": inst.text,
        "aspect": inst.aspect,
        "from": inst.aspect_span[0],
        "to": inst.aspect_span[1],
        "label": inst.label,
    }
    if inst.parse_edges:
        rec["parse_edges"] = [list(e) for e in inst.parse_edges]
    return json.dumps(rec)


def _instance_from_record(rec: dict, where: str) -> LabeledInstance:
    for key in ("text", "from", "to", "label"):
        if key not in rec:
            raise DataError(f"{where}: missing field {key!r}")
    tokens = tokenize(rec["text"])
    try:
        span = (int(rec["from"]), int(rec["to"]))
    except (TypeError, ValueError):
        raise DataError(f"{where}: non-integer aspect span") from None
    edges = tuple(
        (int(h), int(d), str(rel)) for h, d, rel in rec.get("parse_edges", [])
    )
    try:
        return LabeledInstance(
            text=rec["text"],
            tokens=tokens,
            aspect_span=span,
            label=rec["label"],
            parse_edges=edges,
        )
    except DataError as e:
        raise DataError(f"{where}: {e}") from None


def load_dataset(path, format: str = "jsonl") -> list[LabeledInstance]:
    """Load a dataset file; one instance per (sentence, aspect) pair."""
    path = Path(path)
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "semeval_xml":
        return _load_semeval_xml(path)
    raise DataError(f"unknown dataset format {format!r}")


def _load_jsonl(path: Path) -> list[LabeledInstance]:
    instances = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            instances.append(_instance_from_record(rec, f"{path}:{lineno}"))
    return instances


def _load_semeval_xml(path: Path) -> list[LabeledInstance]:
    """SemEval-style XML: <sentence><text/><aspectTerms><aspectTerm/>...

    Aspect location comes from character offsets, mapped to the smallest
    covering token range. Terms with polarity outside the three-way scheme
    (e.g. "conflict") are skipped.
    """
    try:
        root = ET.parse(str(path)).getroot()
    except ET.ParseError as e:
        raise DataError(f"{path}: XML parse error ({e})") from None
    instances = []
    for si, sent in enumerate(root.iter("sentence")):
        text_el = sent.find("text")
        if text_el is None or not (text_el.text or "").strip():
            continue
        text = text_el.text
        spans = _token_char_spans(text)
        for term in sent.iter("aspectTerm"):
            polarity = term.get("polarity", "")
            if polarity not in POLARITIES:
                continue
            try:
                start = int(term.get("from"))
                end = int(term.get("to"))
            except (TypeError, ValueError):
                raise DataError(
                    f"{path}: sentence {si}: non-integer character offsets"
                ) from None
            covering = [
                k for k, (a, b) in enumerate(spans) if a < end and b > start
            ]
            if not covering:
                raise DataError(
                    f"{path}: sentence {si}: aspect offsets [{start}, {end}) "
                    f"match no token in {text!r}"
                )
            instances.append(
                LabeledInstance(
                    text=text,
                    tokens=tokenize(text),
                    aspect_span=(covering[0], covering[-1] + 1),
                    label=polarity,
                )
            )
    return instances


def _token_char_spans(text: str) -> list[tuple[int, int]]:
    """Character span of each surviving token, aligned with tokenize()."""
    spans = []
    pos = 0
    for raw in text.split():
        start = text.index(raw, pos)
        pos = start + len(raw)
        if raw.lower().strip(string.punctuation):
            spans.append((start, pos))
    return spans


# ---------------------------------------------------------------------------
# CoNLL-U parses


def load_conllu(path) -> dict[str, tuple[tuple[int, int, str], ...]]:
    """Map sent_id -> dependency edges (head_index, dependent_index, deprel).

    Root rows (HEAD=0) emit no edge; multiword ranges and empty nodes are
    skipped. Indices are 0-based.
    """
    path = Path(path)
    parses: dict[str, tuple] = {}
    edges: list[tuple[int, int, str]] = []
    sent_id: str | None = None
    auto_index = 0

    def flush():
        nonlocal edges, sent_id, auto_index
        if sent_id is None and not edges:
            return
        key = sent_id if sent_id is not None else str(auto_index)
        parses[key] = tuple(edges)
        auto_index += 1
        edges = []
        sent_id = None

    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("sent_id"):
                    _, _, value = body.partition("=")
                    sent_id = value.strip()
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise DataError(f"{path}:{lineno}: expected 10 columns, got {len(cols)}")
            tok_id, head = cols[0], cols[6]
            if "-" in tok_id or "." in tok_id:
                continue  # multiword range / empty node
            try:
                tid = int(tok_id)
                hid = int(head)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: non-integer ID/HEAD ({tok_id!r}, {head!r})"
                ) from None
            if hid != 0:
                edges.append((hid - 1, tid - 1, cols[7]))
    flush()
    return parses


# ---------------------------------------------------------------------------
# Embeddings


@dataclass
class EmbeddingTable:
    """Word -> vector store with a declared out-of-vocabulary policy."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    oov_policy: str = "hashed_uniform"  # or "zeros"
    oov_seed: int = 0
    oov_scale: float = 0.1

    def lookup(self, word: str) -> np.ndarray:
        vec = self.entries.get(word)
        if vec is not None:
            return vec
        if self.oov_policy == "zeros":
            return np.zeros(self.dim)
        # pure function of (word, seed): key the generator from a digest
        digest = hashlib.sha256(f"{self.oov_seed}:{word}".encode("utf-8")).digest()
        key = np.frombuffer(digest[:16], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        return rng.uniform(-self.oov_scale, self.oov_scale, self.dim)


def load_embeddings(path, dim: int, **oov_options) -> EmbeddingTable:
    """Plain-text `word v1 ... vdim` embedding file."""
    path = Path(path)
    table = EmbeddingTable(dim=dim, **oov_options)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, comps = parts[0], parts[1:]
            if len(comps) != dim:
                raise DataError(
                    f"{path}:{lineno}: expected {dim} components, got {len(comps)}"
                )
            try:
                table.entries[word] = np.array(comps, dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric component") from None
    return table


# ---------------------------------------------------------------------------
# Encoding


@dataclass
class EncodedInstance:
    """Per-row embeddings with the aspect pooled into a single row.

    ``row_tokens`` carries each row's surface form; the aspect row holds the
    space-joined aspect words.
    """

    features: np.ndarray  # [(n - m + 1) x dim]
    aspect_index: int
    source: LabeledInstance
    row_tokens: tuple[str, ...]


def encode_instance(inst: LabeledInstance, table: EmbeddingTable) -> EncodedInstance:
    i, j = inst.aspect_span
    rows = []
    row_tokens = []
    for k, tok in enumerate(inst.tokens):
        if i <= k < j:
            if k == i:  # aspect row: componentwise sum of its token embeddings
                rows.append(sum(table.lookup(t) for t in inst.tokens[i:j]))
                row_tokens.append(" ".join(inst.tokens[i:j]))
            continue
        rows.append(table.lookup(tok))
        row_tokens.append(tok)
    return EncodedInstance(
        features=np.stack(rows),
        aspect_index=i,
        source=inst,
        row_tokens=tuple(row_tokens),
    )


class CorpusStats(NamedTuple):
    positive: int
    neutral: int
    negative: int


def corpus_stats(instances: Iterable[LabeledInstance]) -> CorpusStats:
    counts = {name: 0 for name in POLARITIES}
    for inst in instances:
        counts[inst.label] += 1
    return CorpusStats(counts["positive"], counts["neutral"], counts["negative"])
