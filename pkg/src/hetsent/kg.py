"""Offline knowledge-graph snapshots, lexicon tagging, enhancement weights.

Snapshots are TSV files standing in for ConceptNet-style and SenticNet-style
graphs; retrieval is one hop only. A token counts as "related to" an entity
when it matches the entity string exactly (multi-word entities must match a
contiguous token run) or when some snapshot triple links the two directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import EncodedInstance, LabeledInstance
from .errors import DataError

Neighbor = tuple[str, str, float]  # (relation, entity, weight)


@dataclass(frozen=True)
class KgTriple:
    head: str
    relation: str
    tail: str
    weight: float

    def __post_init__(self):
        if not self.head or not self.tail:
            raise DataError("triple with empty head or tail")
        if self.weight < 0:
            raise DataError(f"negative triple weight {self.weight}")


@dataclass
class KgSnapshot:
    """Immutable weighted triple store with head and tail indices."""

    kind: str  # "conceptnet" | "senticnet"
    triples: tuple[KgTriple, ...]
    index_by_head: dict[str, tuple[KgTriple, ...]] = field(default_factory=dict)
    index_by_tail: dict[str, tuple[KgTriple, ...]] = field(default_factory=dict)

    @classmethod
    def from_triples(cls, triples: Iterable[KgTriple], kind: str) -> "KgSnapshot":
        # duplicate (head, relation, tail) keeps the max weight
        best: dict[tuple[str, str, str], KgTriple] = {}
        for t in triples:
            key = (t.head, t.relation, t.tail)
            if key not in best or t.weight > best[key].weight:
                best[key] = t
        kept = tuple(best.values())
        by_head: dict[str, list[KgTriple]] = {}
        by_tail: dict[str, list[KgTriple]] = {}
        for t in kept:
            by_head.setdefault(t.head, []).append(t)
            by_tail.setdefault(t.tail, []).append(t)
        return cls(
            kind=kind,
            triples=kept,
            index_by_head={k: tuple(v) for k, v in by_head.items()},
            index_by_tail={k: tuple(v) for k, v in by_tail.items()},
        )


def load_kg_snapshot(path, kind: str) -> KgSnapshot:
    """TSV lines `head<TAB>relation<TAB>tail<TAB>weight`, lowercased."""
    path = Path(path)
    triples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns, got {len(cols)}")
            try:
                weight = float(cols[3])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric weight {cols[3]!r}") from None
            try:
                triples.append(KgTriple(cols[0], cols[1], cols[2], weight))
            except DataError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
    return KgSnapshot.from_triples(triples, kind)


def _neighbors(snapshot: KgSnapshot, node: str) -> set[Neighbor]:
    out: set[Neighbor] = set()
    for t in snapshot.index_by_head.get(node, ()):
        out.add((t.relation, t.tail, t.weight))
    for t in snapshot.index_by_tail.get(node, ()):
        out.add((t.relation, t.head, t.weight))
    return out


def retrieve_aspect_neighbors(snapshot: KgSnapshot, aspect: str) -> set[Neighbor]:
    """Entities one hop from the aspect in the common-sense snapshot."""
    if snapshot.kind != "conceptnet":
        raise DataError(f"aspect retrieval needs a conceptnet snapshot, got {snapshot.kind}")
    return _neighbors(snapshot, aspect)


def retrieve_sentiment_entities(snapshot: KgSnapshot, sentiment_word: str) -> set[Neighbor]:
    """Entities one hop from a sentiment word in the emotional snapshot."""
    if snapshot.kind != "senticnet":
        raise DataError(f"sentiment retrieval needs a senticnet snapshot, got {snapshot.kind}")
    return _neighbors(snapshot, sentiment_word)


# ---------------------------------------------------------------------------
# Polarity lexicon


@dataclass(frozen=True)
class PolarityLexicon:
    positive: frozenset[str]
    negative: frozenset[str]

    def __post_init__(self):
        both = self.positive & self.negative
        if both:
            raise DataError(f"words in both polarity classes: {sorted(both)[:5]}")


def load_lexicon(path) -> PolarityLexicon:
    """TSV `word<TAB>POSITIV|NEGATIV` mirroring the General Inquirer columns."""
    path = Path(path)
    pos, neg = set(), set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns, got {len(cols)}")
            word, cat = cols[0].lower(), cols[1].strip().upper()
            if cat == "POSITIV":
                pos.add(word)
            elif cat == "NEGATIV":
                neg.add(word)
            else:
                raise DataError(f"{path}:{lineno}: unknown category {cols[1]!r}")
    return PolarityLexicon(frozenset(pos), frozenset(neg))


def detect_sentiment_words(
    inst: LabeledInstance, lex: PolarityLexicon
) -> list[tuple[int, str]]:
    """(token_index, polarity) for every lexicon hit, indices increasing."""
    hits = []
    for i, tok in enumerate(inst.tokens):
        w = tok.lower()
        if w in lex.positive:
            hits.append((i, "positive"))
        elif w in lex.negative:
            hits.append((i, "negative"))
    return hits


# ---------------------------------------------------------------------------
# Context matching and enhancement


@dataclass
class EnhancementWeights:
    alpha_cn: np.ndarray  # one entry per encoded row, >= 0
    alpha_sn: np.ndarray
    matched_entities: frozenset[str]


def _flatten_rows(row_tokens: tuple[str, ...]) -> tuple[list[str], list[int]]:
    """Flatten multi-word row surfaces into words with a word -> row map."""
    words, owner = [], []
    for ri, surface in enumerate(row_tokens):
        for w in surface.split():
            words.append(w)
            owner.append(ri)
    return words, owner


def _string_match_rows(row_tokens: tuple[str, ...], entity: str) -> set[int]:
    """Rows covered by an exact (contiguous, all-words) match of the entity."""
    ewords = entity.split()
    words, owner = _flatten_rows(row_tokens)
    hit: set[int] = set()
    for start in range(len(words) - len(ewords) + 1):
        if words[start : start + len(ewords)] == ewords:
            hit.update(owner[start : start + len(ewords)])
    return hit


def _link_weight(snapshot: KgSnapshot, a: str, b: str) -> float | None:
    """Max weight of a snapshot triple linking a and b in either direction."""
    best = None
    for t in snapshot.index_by_head.get(a, ()):
        if t.tail == b and (best is None or t.weight > best):
            best = t.weight
    for t in snapshot.index_by_head.get(b, ()):
        if t.tail == a and (best is None or t.weight > best):
            best = t.weight
    return best


def _match_alpha(
    enc: EncodedInstance,
    entities: Iterable[tuple[str, float]],
    snapshot: KgSnapshot,
) -> np.ndarray:
    """Per-row max weight over all entity matches (0 where nothing matches).

    A direct string match scores the retrieval weight of the entity; a
    one-hop link scores the weight of the linking triple.
    """
    alpha = np.zeros(len(enc.row_tokens))
    for entity, retrieval_weight in entities:
        for ri in _string_match_rows(enc.row_tokens, entity):
            alpha[ri] = max(alpha[ri], retrieval_weight)
        for ri, surface in enumerate(enc.row_tokens):
            if surface == entity:
                continue
            lw = _link_weight(snapshot, surface, entity)
            if lw is not None:
                alpha[ri] = max(alpha[ri], lw)
    return alpha


def match_context_conceptnet(
    enc: EncodedInstance, neighbors: set[Neighbor], snapshot: KgSnapshot
) -> tuple[np.ndarray, frozenset[str]]:
    """Aspect-relatedness weights per row, plus the matched entity set."""
    alpha = _match_alpha(enc, [(e, w) for (_r, e, w) in neighbors], snapshot)
    matched = frozenset(e for (_r, e, _w) in neighbors)
    return alpha, matched


def match_context_senticnet(
    enc: EncodedInstance,
    entity_sets: dict[str, set[Neighbor]],
    snapshot: KgSnapshot,
) -> np.ndarray:
    """Emotional-contribution weights per row over all sentiment words."""
    alpha = np.zeros(len(enc.row_tokens))
    for neighbors in entity_sets.values():
        alpha = np.maximum(
            alpha, _match_alpha(enc, [(e, w) for (_r, e, w) in neighbors], snapshot)
        )
    return alpha


def apply_enhancement(enc: EncodedInstance, w: EnhancementWeights) -> EncodedInstance:
    """Scale row i by (1 + alpha_cn[i] + alpha_sn[i]); aspect row included."""
    rows = len(enc.row_tokens)
    if len(w.alpha_cn) != rows or len(w.alpha_sn) != rows:
        raise DataError(
            f"enhancement weight length mismatch: {len(w.alpha_cn)}/{len(w.alpha_sn)} "
            f"vs {rows} rows"
        )
    scale = 1.0 + w.alpha_cn + w.alpha_sn
    return replace(enc, features=enc.features * scale[:, None])


def enhancement_weights(
    enc: EncodedInstance,
    cn: KgSnapshot | None,
    sn: KgSnapshot | None,
    lex: PolarityLexicon,
    use_cn: bool = True,
    use_sn: bool = True,
) -> EnhancementWeights:
    """Full per-instance enhancement pipeline; disabled sources yield zeros."""
    rows = len(enc.row_tokens)
    aspect = enc.source.aspect
    if use_cn and cn is not None:
        neighbors = retrieve_aspect_neighbors(cn, aspect)
        alpha_cn, matched = match_context_conceptnet(enc, neighbors, cn)
    else:
        alpha_cn, matched = np.zeros(rows), frozenset()
    if use_sn and sn is not None:
        hits = detect_sentiment_words(enc.source, lex)
        entity_sets = {
            word: retrieve_sentiment_entities(sn, word)
            for word in {enc.source.tokens[i] for i, _pol in hits}
        }
        alpha_sn = match_context_senticnet(enc, entity_sets, sn)
    else:
        alpha_sn = np.zeros(rows)
    return EnhancementWeights(alpha_cn=alpha_cn, alpha_sn=alpha_sn, matched_entities=matched)
