"""Config loading, the training loop, evaluation, and the synthetic corpus."""
import json

import numpy as np
import pytest

from hetsent.autograd import make_rng
from hetsent.errors import ConfigError, DataError
from hetsent.metrics import accuracy, confusion_matrix, macro_f1, precision_recall_f1
from hetsent.model import ModelConfig
from hetsent.train import (
    TrainConfig,
    _split,
    attach_parses,
    evaluate,
    gradcheck_fixture,
    load_train_config,
    make_synthetic_corpus,
    prepare_dataset,
    run_gradcheck,
    synthetic_resources,
    train,
    write_synthetic_files,
)

from conftest import FIXTURES


def _tiny_cfg(tmp_path, **overrides):
    paths = write_synthetic_files(tmp_path, n=9, seed=0)
    base = dict(
        model=ModelConfig(hidden=8, heads=2, embed_dim=8, dropout=0.0, rounds=1),
        epochs=2,
        batch_size=4,
        seed=0,
        **paths,
    )
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# Metrics


def test_macro_f1_hand_value_seven_ninths():
    """4 instances: gold [pos, pos, neg, neu], pred [pos, neg, neg, neu].
    Per-class F1: pos 2/3 (P=1, R=1/2), neu 1, neg 2/3 (P=1/2, R=1);
    macro-F1 = (2/3 + 1 + 2/3)/3 = 7/9."""
    cm = confusion_matrix([0, 0, 2, 1], [0, 2, 2, 1])
    assert abs(macro_f1(cm) - 7.0 / 9.0) < 1e-12
    assert accuracy(cm) == 0.75


def test_accuracy_is_trace_over_total():
    rng = make_rng(0, "acc")
    for _ in range(20):
        gold = rng.integers(0, 3, 30)
        pred = rng.integers(0, 3, 30)
        cm = confusion_matrix(gold, pred)
        assert accuracy(cm) == np.trace(cm) / 30


def test_per_class_zero_denominators():
    cm = confusion_matrix([0, 0], [1, 1])
    stats = precision_recall_f1(cm)
    assert stats[0] == {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    assert stats[2] == {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    assert macro_f1(cm) == 0.0


def test_empty_confusion_accuracy_zero():
    assert accuracy(confusion_matrix([], [])) == 0.0


# ---------------------------------------------------------------------------
# Config loading


def test_load_config_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "lr": 0.01, "epochs": 3,
        "model": {"hidden": 16, "heads": 2, "embed_dim": 16},
    }))
    cfg = load_train_config(path)
    assert cfg.lr == 0.01 and cfg.epochs == 3
    assert cfg.model.hidden == 16


def test_load_config_toml(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text('lr = 0.05\n[model]\nhidden = 8\nheads = 2\nembed_dim = 8\n')
    cfg = load_train_config(path)
    assert cfg.lr == 0.05 and cfg.model.hidden == 8


def test_config_overrides_win(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"lr": 0.01, "seed": 1}))
    cfg = load_train_config(path, {"lr": 0.5, "hidden": 64, "heads": 2})
    assert cfg.lr == 0.5
    assert cfg.seed == 1
    assert cfg.model.hidden == 64  # model-field override routed through


def test_config_unknown_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"learning_rate": 0.01}))
    with pytest.raises(ConfigError, match="unknown config keys"):
        load_train_config(path)


def test_config_missing_file():
    with pytest.raises(DataError):
        load_train_config("/nonexistent/cfg.json")


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=-1)


# ---------------------------------------------------------------------------
# Synthetic corpus


def test_synthetic_corpus_shape_and_labels():
    corpus = make_synthetic_corpus(20, seed=0)
    assert len(corpus) == 20
    labels = [i.label for i in corpus]
    assert labels[:6] == ["positive", "neutral", "negative"] * 2
    for inst in corpus:
        assert inst.aspect_span == (1, 2)
        assert len(inst.tokens) == 4
        assert inst.parse_edges


def test_synthetic_corpus_seeded():
    a = make_synthetic_corpus(10, seed=1)
    b = make_synthetic_corpus(10, seed=1)
    c = make_synthetic_corpus(10, seed=2)
    assert [i.text for i in a] == [i.text for i in b]
    assert [i.text for i in a] != [i.text for i in c]


def test_write_synthetic_files_roundtrip(tmp_path):
    from hetsent.corpus import load_dataset

    paths = write_synthetic_files(tmp_path, n=6, seed=3)
    instances = load_dataset(paths["dataset"])
    assert [i.text for i in instances] == [i.text for i in make_synthetic_corpus(6, 3)]


def test_split_is_deterministic_permutation():
    corpus = make_synthetic_corpus(10, seed=0)
    tr1, te1 = _split(corpus, seed=4)
    tr2, te2 = _split(corpus, seed=4)
    tr3, _ = _split(corpus, seed=5)
    assert [i.text for i in tr1] == [i.text for i in tr2]
    assert [i.text for i in te1] == [i.text for i in te2]
    assert len(tr1) == 8 and len(te1) == 2
    assert sorted(i.text for i in tr1 + te1) == sorted(i.text for i in corpus)
    assert [i.text for i in tr1] != [i.text for i in tr3]


# ---------------------------------------------------------------------------
# Pipeline and evaluation


def test_prepare_dataset_bundles():
    corpus = make_synthetic_corpus(3, seed=0)
    mcfg = ModelConfig(hidden=8, heads=2, embed_dim=8)
    bundles = prepare_dataset(corpus, synthetic_resources(8), mcfg)
    assert [b.uid for b in bundles] == [0, 1, 2]
    for b, inst in zip(bundles, corpus):
        assert b.flat.shape == (4, 8)
        assert b.aspect_row == 1
        assert b.label == inst.label_index
        assert b.ws is not None and b.et is not None


def test_attach_parses(mini_instances):
    from hetsent.corpus import load_conllu

    parses = load_conllu(FIXTURES / "food.conllu")
    bare = [i.__class__(**{**i.__dict__, "parse_edges": ()}) for i in mini_instances]
    out = attach_parses(bare, parses)
    assert out[0].parse_edges == parses["0"]
    assert out[1].parse_edges == ()  # no parse with that key


def test_evaluate_is_pure():
    model, bundles = gradcheck_fixture(seed=0)
    r1 = evaluate(model, bundles, {"k": "v"}, seed=9)
    r2 = evaluate(model, bundles, {"k": "v"}, seed=9)
    assert r1.to_dict() == r2.to_dict()
    assert r1.config == {"k": "v"} and r1.seed == 9 and r1.count == len(bundles)


# ---------------------------------------------------------------------------
# Training loop


def test_train_zero_epochs(tmp_path):
    result = train(_tiny_cfg(tmp_path, epochs=0))
    assert result.loss_history == []
    assert 0.0 <= result.report.accuracy <= 1.0


def test_train_deterministic(tmp_path):
    r1 = train(_tiny_cfg(tmp_path))
    r2 = train(_tiny_cfg(tmp_path))
    assert r1.loss_history == r2.loss_history
    for k in r1.params:
        assert np.array_equal(r1.params[k], r2.params[k])


def test_train_seed_changes_history(tmp_path):
    r1 = train(_tiny_cfg(tmp_path))
    r2 = train(_tiny_cfg(tmp_path, seed=1))
    assert r1.loss_history != r2.loss_history


def test_train_decreases_loss(tmp_path):
    result = train(_tiny_cfg(tmp_path, epochs=8))
    assert np.mean(result.loss_history[-3:]) < np.mean(result.loss_history[:3])


def test_train_empty_dataset_raises(tmp_path):
    cfg = _tiny_cfg(tmp_path)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    cfg = TrainConfig(**{**cfg.__dict__, "dataset": str(empty)})
    with pytest.raises(DataError, match="empty"):
        train(cfg)


def test_train_requires_dataset():
    with pytest.raises(ConfigError, match="no dataset"):
        train(TrainConfig(epochs=1))


def test_patience_stops_early(tmp_path):
    full = train(_tiny_cfg(tmp_path, epochs=30, lr=1e-9))
    stopped = train(_tiny_cfg(tmp_path, epochs=30, lr=1e-9, patience=2))
    assert len(stopped.loss_history) < len(full.loss_history)


# ---------------------------------------------------------------------------
# Gradient-check harness


def test_run_gradcheck_passes_default_seed():
    assert run_gradcheck(7) < 1e-4
