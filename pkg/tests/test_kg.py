"""Snapshot loading, retrieval, lexicon tagging, and enhancement weights."""
import numpy as np
import pytest

from hetsent.corpus import LabeledInstance, encode_instance, load_embeddings
from hetsent.errors import DataError
from hetsent.kg import (
    KgSnapshot,
    KgTriple,
    PolarityLexicon,
    apply_enhancement,
    detect_sentiment_words,
    enhancement_weights,
    load_kg_snapshot,
    load_lexicon,
    match_context_conceptnet,
    retrieve_aspect_neighbors,
    retrieve_sentiment_entities,
)

from conftest import FIXTURES


@pytest.fixture(scope="module")
def cn():
    return load_kg_snapshot(FIXTURES / "cn.tsv", "conceptnet")


@pytest.fixture(scope="module")
def sn():
    return load_kg_snapshot(FIXTURES / "sn.tsv", "senticnet")


@pytest.fixture(scope="module")
def lex():
    return load_lexicon(FIXTURES / "lexicon.tsv")


@pytest.fixture(scope="module")
def table():
    return load_embeddings(FIXTURES / "embeddings.txt", 4)


# ---------------------------------------------------------------------------
# Triples and snapshots


def test_triple_validation():
    with pytest.raises(DataError):
        KgTriple("", "isa", "thing", 0.5)
    with pytest.raises(DataError):
        KgTriple("a", "isa", "b", -0.1)


def test_from_triples_dedup_keeps_max_weight():
    snap = KgSnapshot.from_triples(
        [KgTriple("a", "isa", "b", 0.2), KgTriple("a", "isa", "b", 0.9)], "conceptnet"
    )
    assert len(snap.triples) == 1
    assert snap.triples[0].weight == 0.9


def test_fixture_snapshot_indices(cn):
    assert len(cn.index_by_head["battery"]) == 2
    tails = {t.tail for t in cn.index_by_head["battery"]}
    assert tails == {"laptop", "power"}
    assert {t.head for t in cn.index_by_tail["restaurant"]} == {"food", "service"}


def test_load_snapshot_column_error(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tisa\tb\n")
    with pytest.raises(DataError, match="4 columns"):
        load_kg_snapshot(path, "conceptnet")


def test_load_snapshot_weight_error(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tisa\tb\theavy\n")
    with pytest.raises(DataError, match="non-numeric weight"):
        load_kg_snapshot(path, "conceptnet")


# ---------------------------------------------------------------------------
# Retrieval


def test_retrieve_aspect_neighbors_both_directions(cn):
    got = retrieve_aspect_neighbors(cn, "food")
    assert got == {("relatedto", "restaurant", 0.8), ("isa", "pizza", 0.9)}


def test_retrieve_wrong_kind_raises(cn, sn):
    with pytest.raises(DataError):
        retrieve_aspect_neighbors(sn, "food")
    with pytest.raises(DataError):
        retrieve_sentiment_entities(cn, "great")


def test_retrieval_matches_brute_force_scan(cn, sn):
    """One-hop retrieval must agree with a raw scan over the TSV lines."""

    def brute(path, word):
        out = set()
        for line in (FIXTURES / path).read_text().splitlines():
            h, r, t, w = line.split("\t")
            if h == word:
                out.add((r, t, float(w)))
            if t == word:
                out.add((r, h, float(w)))
        return out

    cn_words = {t.head for t in cn.triples} | {t.tail for t in cn.triples}
    for word in sorted(cn_words):
        assert retrieve_aspect_neighbors(cn, word) == brute("cn.tsv", word)
    sn_words = {t.head for t in sn.triples} | {t.tail for t in sn.triples}
    for word in sorted(sn_words):
        assert retrieve_sentiment_entities(sn, word) == brute("sn.tsv", word)
    absent = ("camera", "dessert", "waiter", "happy")
    for word in absent:
        assert retrieve_aspect_neighbors(cn, word) == set() == brute("cn.tsv", word)
    assert len(cn_words) + len(sn_words) + len(absent) >= 20


# ---------------------------------------------------------------------------
# Lexicon


def test_lexicon_load(lex):
    assert "excellent" in lex.positive
    assert "terrible" in lex.negative
    assert "excellent" not in lex.negative


def test_lexicon_disjointness_enforced():
    with pytest.raises(DataError):
        PolarityLexicon(frozenset({"fine"}), frozenset({"fine"}))


def test_lexicon_unknown_category(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("word\tMEH\n")
    with pytest.raises(DataError, match="unknown category"):
        load_lexicon(path)


def test_detect_sentiment_words(lex):
    inst = LabeledInstance(
        text="terrible food but excellent service",
        tokens=("terrible", "food", "but", "excellent", "service"),
        aspect_span=(1, 2),
        label="neutral",
    )
    assert detect_sentiment_words(inst, lex) == [(0, "negative"), (3, "positive")]


# ---------------------------------------------------------------------------
# Enhancement weights (hand-computed oracles)


def _encode(text, span, table, label="positive"):
    tokens = tuple(text.split())
    inst = LabeledInstance(text=text, tokens=tokens, aspect_span=span, label=label)
    return encode_instance(inst, table)


def test_conceptnet_match_direct_and_linked(cn, table):
    # aspect "pizza": its only neighbor is food (0.9, via isa). The row
    # "food" direct-matches that entity -> alpha = retrieval weight 0.9;
    # the row "pizza" is one-hop linked to food by the same triple.
    enc = _encode("pizza is food", (0, 1), table)
    neighbors = retrieve_aspect_neighbors(cn, "pizza")
    alpha, matched = match_context_conceptnet(enc, neighbors, cn)
    assert matched == {"food"}
    assert alpha[2] == 0.9  # direct string match on "food"
    assert alpha[0] == 0.9  # link pizza-isa-food
    assert alpha[1] == 0.0  # "is" matches nothing


def test_conceptnet_one_hop_link_weight(cn, table):
    # aspect "battery": neighbors laptop (0.8) and power (0.6); the row
    # "screen" is linked to laptop by the triple screen-partof-laptop (0.7),
    # so its alpha is the linking triple's weight, not the retrieval weight.
    enc = _encode("battery and screen", (0, 1), table)
    neighbors = retrieve_aspect_neighbors(cn, "battery")
    alpha, _ = match_context_conceptnet(enc, neighbors, cn)
    assert alpha[2] == 0.7


def test_multiword_entity_requires_contiguous_match(table):
    snap = KgSnapshot.from_triples(
        [KgTriple("spring roll", "isa", "food", 0.9)], "conceptnet"
    )
    enc = _encode("the spring roll arrived", (3, 4), table)
    alpha, _ = match_context_conceptnet(
        enc, {("isa", "spring roll", 0.5)}, snap
    )
    assert alpha[1] == 0.5 and alpha[2] == 0.5  # both covered rows
    enc2 = _encode("the spring red roll", (0, 1), table)
    alpha2, _ = match_context_conceptnet(
        enc2, {("isa", "spring roll", 0.5)}, snap
    )
    assert np.array_equal(alpha2, np.zeros(4))  # interrupted -> no match


def test_enhancement_weights_full_pipeline(cn, sn, lex, table):
    enc = _encode("the food was excellent", (1, 2), table)
    w = enhancement_weights(enc, cn, sn, lex)
    # cn: aspect food -> neighbors pizza (0.9), restaurant (0.8); the aspect
    # row "food" is one-hop linked to pizza (weight 0.9); no other row matches.
    assert np.array_equal(w.alpha_cn, [0.0, 0.9, 0.0, 0.0])
    assert w.matched_entities == {"pizza", "restaurant"}
    # sn: sentiment word "excellent" -> neighbor joy (0.8); row "excellent"
    # itself links to joy via the excellent-haspolarity-joy triple (0.8).
    assert w.alpha_sn[3] == 0.8
    assert np.array_equal(w.alpha_sn[:3], np.zeros(3))


def test_enhancement_flags_disable_sources(cn, sn, lex, table):
    enc = _encode("the food was excellent", (1, 2), table)
    w = enhancement_weights(enc, cn, sn, lex, use_cn=False, use_sn=False)
    assert np.array_equal(w.alpha_cn, np.zeros(4))
    assert np.array_equal(w.alpha_sn, np.zeros(4))
    assert w.matched_entities == frozenset()


def test_apply_enhancement_scales_rows(cn, sn, lex, table):
    enc = _encode("the food was excellent", (1, 2), table)
    w = enhancement_weights(enc, cn, sn, lex)
    out = apply_enhancement(enc, w)
    scale = 1.0 + w.alpha_cn + w.alpha_sn
    assert np.allclose(out.features, enc.features * scale[:, None], atol=1e-15)
    assert np.array_equal(out.features[0], enc.features[0])  # scale 1 row


def test_apply_enhancement_length_mismatch(cn, sn, lex, table):
    enc = _encode("the food was excellent", (1, 2), table)
    w = enhancement_weights(enc, cn, sn, lex)
    w.alpha_cn = np.zeros(7)
    with pytest.raises(DataError):
        apply_enhancement(enc, w)
