"""CLI behavior: subcommands, exit codes, artifact files."""
import json

import pytest

from hetsent.autograd import load_params
from hetsent.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from hetsent.train import write_synthetic_files

from conftest import FIXTURES


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("synth")
    write_synthetic_files(directory, n=9, seed=0)
    return directory


def _train_args(synth_dir, tmp_path, *extra):
    cfg = {
        "dataset": str(synth_dir / "synthetic.jsonl"),
        "cn_snapshot": str(synth_dir / "cn.tsv"),
        "sn_snapshot": str(synth_dir / "sn.tsv"),
        "lexicon": str(synth_dir / "lexicon.tsv"),
        "epochs": 1,
        "batch_size": 4,
        "model": {"hidden": 8, "heads": 2, "embed_dim": 8, "dropout": 0.0, "rounds": 1},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    return ["--config", str(cfg_path), *extra]


def test_no_arguments_is_usage_error(capsys):
    code, _, err = _run(capsys)
    assert code == EXIT_USAGE
    assert "usage" in err


def test_unknown_subcommand_is_usage_error(capsys):
    code, _, err = _run(capsys, "frobnicate")
    assert code == EXIT_USAGE


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0


def test_stats_fixture_counts(capsys):
    code, out, _ = _run(
        capsys, "stats", "--dataset", str(FIXTURES / "mini.jsonl"), "--seed", "3"
    )
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload == {"seed": 3, "positive": 2, "neutral": 1, "negative": 1}


def test_stats_missing_file_is_data_error(capsys):
    code, _, err = _run(capsys, "stats", "--dataset", "/nonexistent.jsonl")
    assert code == EXIT_DATA


def test_enhance_emits_weights(capsys, synth_dir, tmp_path):
    code, out, _ = _run(capsys, "enhance", *_train_args(synth_dir, tmp_path))
    assert code == EXIT_OK
    lines = [json.loads(line) for line in out.strip().splitlines()]
    assert len(lines) == 9
    rec = lines[0]
    assert set(rec) == {"index", "seed", "tokens", "alpha_cn", "alpha_sn", "matched_entities"}
    assert len(rec["alpha_cn"]) == len(rec["tokens"])


def test_build_graphs_emits_both_graphs(capsys, synth_dir, tmp_path):
    code, out, _ = _run(capsys, "build-graphs", *_train_args(synth_dir, tmp_path))
    assert code == EXIT_OK
    rec = json.loads(out.strip().splitlines()[0])
    assert rec["ws"]["kind"] == "ws"
    assert rec["et"]["kind"] == "et"


def test_gradcheck_passes(capsys):
    code, out, _ = _run(capsys, "gradcheck", "--seed", "7")
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["seed"] == 7
    assert payload["max_relative_error"] < payload["tolerance"] == 1e-4


def test_train_then_eval_roundtrip(capsys, synth_dir, tmp_path):
    out_dir = tmp_path / "run"
    code, out, _ = _run(
        capsys, "train", *_train_args(synth_dir, tmp_path), "--out", str(out_dir)
    )
    assert code == EXIT_OK
    summary = json.loads(out)
    assert summary["steps"] > 0
    assert (out_dir / "report.json").exists()
    assert (out_dir / "loss.csv").exists()
    ckpt = out_dir / "checkpoint.json"
    assert sorted(load_params(ckpt))  # parseable checkpoint
    report = json.loads((out_dir / "report.json").read_text())
    assert report["count"] > 0 and "config" in report

    code, out, _ = _run(
        capsys, "eval", *_train_args(synth_dir, tmp_path),
        "--checkpoint", str(ckpt),
    )
    assert code == EXIT_OK
    evald = json.loads(out)
    assert 0.0 <= evald["accuracy"] <= 1.0


def test_bad_config_is_data_error(capsys, tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"nonsense_key": 1}))
    code, _, err = _run(capsys, "stats", "--config", str(cfg_path))
    assert code == EXIT_DATA
