"""Typed heterogeneous graphs over words/sentiments and entities/sentence.

Two graph kinds:
  "ws" — word nodes (one per encoded row, aspect pooled) plus one sentiment
         node per lexicon hit; edges are dependency links and tagging links.
  "et" — entity nodes from KG matching plus a single sentence node; edges
         are weighted entity-entity KG links and unit entity-sentence links.

Adjacency is stored as dense per-type-pair blocks; normalization runs over
the full stacked matrix with self-loops and is re-split into blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .corpus import EmbeddingTable, EncodedInstance
from .errors import DataError
from .kg import KgSnapshot


class NodeType(str, Enum):
    WORD = "word"
    SENTIMENT = "sentiment"
    ENTITY = "entity"
    SENTENCE = "sentence"


# canonical node ordering: words by position, sentiments by tagged position,
# entities lexicographic, sentence last
TYPE_ORDER = (NodeType.WORD, NodeType.SENTIMENT, NodeType.ENTITY, NodeType.SENTENCE)


@dataclass
class HeteroGraph:
    kind: str  # "ws" | "et"
    nodes: tuple[tuple[int, NodeType, str], ...]  # (node_id, type, surface)
    adjacency: dict[tuple[NodeType, NodeType], np.ndarray]  # (src, dst) -> [dst x src]
    features: dict[NodeType, np.ndarray] = field(default_factory=dict)
    aspect_node: int | None = None  # readout node for ws graphs

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def types_present(self) -> tuple[NodeType, ...]:
        present = {t for _, t, _ in self.nodes}
        return tuple(t for t in TYPE_ORDER if t in present)

    def nodes_of_type(self, tau: NodeType) -> list[int]:
        return [i for i, (_, t, _) in enumerate(self.nodes) if t == tau]

    def stacked_adjacency(self) -> np.ndarray:
        """Full symmetric adjacency over the canonical node order."""
        n = self.node_count
        full = np.zeros((n, n))
        idx = {t: self.nodes_of_type(t) for t in self.types_present()}
        for (src, dst), block in self.adjacency.items():
            full[np.ix_(idx[dst], idx[src])] = block
        return full

    def stacked_features(self) -> np.ndarray:
        if not self.features:
            raise DataError("graph features not initialized")
        parts = [self.features[t] for t in self.types_present()]
        return np.concatenate(parts, axis=0)

    def node_type_list(self) -> list[NodeType]:
        return [t for _, t, _ in self.nodes]


def _blocks_from_full(
    full: np.ndarray, g: HeteroGraph
) -> dict[tuple[NodeType, NodeType], np.ndarray]:
    idx = {t: g.nodes_of_type(t) for t in g.types_present()}
    blocks = {}
    for src in idx:
        for dst in idx:
            blocks[(src, dst)] = full[np.ix_(idx[dst], idx[src])].copy()
    return blocks


def _graph(kind, node_specs, full, aspect_node=None) -> HeteroGraph:
    nodes = tuple((i, t, s) for i, (t, s) in enumerate(node_specs))
    g = HeteroGraph(kind=kind, nodes=nodes, adjacency={}, aspect_node=aspect_node)
    g.adjacency = _blocks_from_full(full, g)
    return g


def remap_token_index(k: int, aspect_span: tuple[int, int]) -> int:
    """Original token index -> encoded row index after aspect pooling."""
    i, j = aspect_span
    if k < i:
        return k
    if k < j:
        return i
    return k - (j - i - 1)


def build_hdg_ws(
    enc: EncodedInstance, sentiment_hits: list[tuple[int, str]]
) -> HeteroGraph:
    """Context-sentiment graph: word nodes per encoded row, sentiment nodes
    per lexicon hit, dependency edges remapped across the pooled aspect."""
    inst = enc.source
    span = inst.aspect_span
    n_words = len(enc.row_tokens)
    specs = [(NodeType.WORD, tok) for tok in enc.row_tokens]
    for tok_idx, _pol in sentiment_hits:
        specs.append((NodeType.SENTIMENT, inst.tokens[tok_idx]))
    n = len(specs)
    full = np.zeros((n, n))
    for h, d, _rel in inst.parse_edges:
        rh, rd = remap_token_index(h, span), remap_token_index(d, span)
        if rh == rd:
            continue  # edge internal to the aspect span
        full[rh, rd] = full[rd, rh] = 1.0
    for s_off, (tok_idx, _pol) in enumerate(sentiment_hits):
        si = n_words + s_off
        wi = remap_token_index(tok_idx, span)
        full[si, wi] = full[wi, si] = 1.0
    return _graph("ws", specs, full, aspect_node=enc.aspect_index)


def build_hdg_et(
    matched_entities: frozenset[str] | set[str],
    snapshot: KgSnapshot,
    sentence_feature: np.ndarray | None = None,
) -> HeteroGraph:
    """Entity-text graph: matched entities plus one sentence node."""
    if snapshot.kind != "conceptnet":
        raise DataError(f"entity graph needs a conceptnet snapshot, got {snapshot.kind}")
    entities = sorted(matched_entities)
    specs = [(NodeType.ENTITY, e) for e in entities]
    specs.append((NodeType.SENTENCE, "<sentence>"))
    n = len(specs)
    full = np.zeros((n, n))
    for a in range(len(entities)):
        for b in range(a + 1, len(entities)):
            w = _entity_link_weight(snapshot, entities[a], entities[b])
            if w is not None:
                full[a, b] = full[b, a] = w
    for a in range(len(entities)):
        full[a, n - 1] = full[n - 1, a] = 1.0
    g = _graph("et", specs, full)
    if sentence_feature is not None:
        g.features[NodeType.SENTENCE] = np.asarray(sentence_feature, dtype=np.float64)[None, :]
    return g


def _entity_link_weight(snapshot: KgSnapshot, a: str, b: str) -> float | None:
    best = None
    for t in snapshot.index_by_head.get(a, ()):
        if t.tail == b and (best is None or t.weight > best):
            best = t.weight
    for t in snapshot.index_by_head.get(b, ()):
        if t.tail == a and (best is None or t.weight > best):
            best = t.weight
    return best


@dataclass
class NormalizedAdjacency:
    """D^{-1/2}(A + I)D^{-1/2} over the full stacked matrix, re-split."""

    blocks: dict[tuple[NodeType, NodeType], np.ndarray]
    stacked: np.ndarray
    node_types: list[NodeType]


def normalize_adjacency(g: HeteroGraph) -> NormalizedAdjacency:
    full = g.stacked_adjacency()
    if not np.allclose(full, full.T):
        raise DataError("adjacency is not symmetric")
    a_hat = full + np.eye(g.node_count)
    deg = a_hat.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    norm = a_hat * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    idx = {t: g.nodes_of_type(t) for t in g.types_present()}
    blocks = {
        (src, dst): norm[np.ix_(idx[dst], idx[src])].copy()
        for src in idx
        for dst in idx
    }
    return NormalizedAdjacency(blocks=blocks, stacked=norm, node_types=g.node_type_list())


def init_node_features(
    g: HeteroGraph, table: EmbeddingTable, enhanced: EncodedInstance
) -> HeteroGraph:
    """Word nodes get enhanced rows; sentiment nodes the tagged word's
    embedding; entity nodes the mean of their constituent word embeddings;
    the sentence node the mean of all enhanced rows."""
    feats: dict[NodeType, np.ndarray] = {}
    for tau in g.types_present():
        rows = []
        for i in g.nodes_of_type(tau):
            _, _, surface = g.nodes[i]
            if tau is NodeType.WORD:
                pos = i  # word nodes come first, in row order
                rows.append(enhanced.features[pos])
            elif tau is NodeType.SENTIMENT:
                rows.append(table.lookup(surface))
            elif tau is NodeType.ENTITY:
                words = surface.split()
                rows.append(np.mean([table.lookup(w) for w in words], axis=0))
            else:
                rows.append(enhanced.features.mean(axis=0))
        feats[tau] = np.stack(rows)
    return replace(g, features=feats)


def graph_to_dict(g: HeteroGraph, include_features: bool = False) -> dict:
    """JSON-friendly dump for the build-graphs CLI and golden files."""
    out = {
        "kind": g.kind,
        "nodes": [
            {"id": i, "type": t.value, "surface": s} for i, t, s in g.nodes
        ],
        "edges": [],
    }
    full = g.stacked_adjacency()
    n = g.node_count
    for a in range(n):
        for b in range(a + 1, n):
            if full[a, b] != 0.0:
                out["edges"].append({"src": a, "dst": b, "weight": full[a, b]})
    if include_features and g.features:
        out["features"] = {
            t.value: arr.tolist() for t, arr in g.features.items()
        }
    return out
