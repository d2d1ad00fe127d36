"""Shared fixtures: static data files and random-graph builders."""
from pathlib import Path

import numpy as np
import pytest

from hetsent.corpus import load_dataset, load_embeddings
from hetsent.hetgraph import HeteroGraph, NodeType, normalize_adjacency
from hetsent.kg import PolarityLexicon, load_kg_snapshot, load_lexicon
from hetsent.model import GraphTensors, graph_tensors
from hetsent.train import Resources

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def mini_instances():
    return load_dataset(FIXTURES / "mini.jsonl")


@pytest.fixture(scope="session")
def fixture_resources():
    return Resources(
        table=load_embeddings(FIXTURES / "embeddings.txt", 4),
        cn=load_kg_snapshot(FIXTURES / "cn.tsv", "conceptnet"),
        sn=load_kg_snapshot(FIXTURES / "sn.tsv", "senticnet"),
        lex=load_lexicon(FIXTURES / "lexicon.tsv"),
    )


def random_graph(rng: np.random.Generator, n: int, dim: int):
    """A random two-type connected-ish graph plus its GraphTensors.

    Word nodes come first, then sentiment nodes, matching the builder's
    layout; every node gets at least one edge so no row of A + I is a bare
    self-loop by accident of sampling.
    """
    n_words = int(rng.integers(1, n))
    specs = [(NodeType.WORD, f"w{i}") for i in range(n_words)]
    specs += [(NodeType.SENTIMENT, f"s{i}") for i in range(n - n_words)]
    full = np.zeros((n, n))
    for i in range(n):
        j = int(rng.integers(n))
        if j != i:
            full[i, j] = full[j, i] = 1.0
    extra = rng.random((n, n)) < 0.3
    for i in range(n):
        for j in range(i + 1, n):
            if extra[i, j]:
                full[i, j] = full[j, i] = 1.0
    nodes = tuple((i, t, s) for i, (t, s) in enumerate(specs))
    g = HeteroGraph(kind="ws", nodes=nodes, adjacency={}, aspect_node=0)
    idx = {t: g.nodes_of_type(t) for t in g.types_present()}
    g.adjacency = {
        (src, dst): full[np.ix_(idx[dst], idx[src])].copy()
        for src in idx
        for dst in idx
    }
    for tau in g.types_present():
        g.features[tau] = rng.standard_normal((len(idx[tau]), dim))
    norm = normalize_adjacency(g)
    return g, norm, graph_tensors(g, norm)
