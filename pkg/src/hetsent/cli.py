"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .autograd import load_params, save_params
from .corpus import corpus_stats, load_conllu, load_dataset
from .errors import ConfigError, DataError, HetsentError, NumericError
from .hetgraph import graph_to_dict
from .kg import apply_enhancement, enhancement_weights
from .model import SentimentGraphModel, VARIANTS
from .train import (
    attach_parses,
    config_to_dict,
    evaluate,
    load_resources,
    load_train_config,
    prepare_dataset,
    run_ablations,
    run_gradcheck,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; we want 1
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hetsent", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--seed", type=int, help="random seed (echoed in outputs)")
        return p

    p = add("train", "train a model and write report, loss curve, checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", help="output directory")

    p = add("eval", "evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")

    p = add("build-graphs", "emit both heterogeneous graphs as JSON")
    p.add_argument("--dataset")
    p.add_argument("--features", action="store_true", help="include node features")

    p = add("enhance", "dump per-token enhancement weights as jsonl")
    p.add_argument("--dataset")

    p = add("gradcheck", "finite-difference check of the full model")
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = add("stats", "print polarity counts for a dataset")
    p.add_argument("--dataset")
    p.add_argument("--format", dest="dataset_format", choices=["jsonl", "semeval_xml"])

    p = add("ablate", "train and evaluate all seven ablation variants")
    p.add_argument("--dataset")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="output directory")

    return parser


def _config_from_args(args) -> "TrainConfig":
    overrides = {}
    for key in ("seed", "dataset", "epochs", "lr", "dataset_format"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    return load_train_config(args.config, overrides)


def _write_report(report, out_dir: Path, name: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / f"{name}.json").open("w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    result = train(cfg)
    out_dir = Path(cfg.out_dir or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(result.report, out_dir, "report")
    with (out_dir / "loss.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, value in enumerate(result.loss_history):
            writer.writerow([i, value])
    save_params(result.model.params, out_dir / "checkpoint.json")
    print(json.dumps({
        "seed": cfg.seed,
        "steps": len(result.loss_history),
        "final_loss": result.loss_history[-1] if result.loss_history else None,
        "train_accuracy": result.train_accuracy,
        "test_accuracy": result.report.accuracy,
        "macro_f1": result.report.macro_f1,
        "out_dir": str(out_dir),
    }, indent=2))
    return EXIT_OK


def _load_instances(cfg):
    instances = load_dataset(cfg.dataset, cfg.dataset_format)
    if cfg.parses:
        instances = attach_parses(instances, load_conllu(cfg.parses))
    return instances


def _cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    res = load_resources(cfg)
    mcfg = dataclasses.replace(cfg.model, seed=cfg.seed)
    bundles = prepare_dataset(_load_instances(cfg), res, mcfg)
    model = SentimentGraphModel(mcfg)
    model.load_state(load_params(args.checkpoint))
    report = evaluate(model, bundles, config_to_dict(cfg), cfg.seed)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _cmd_build_graphs(args) -> int:
    from .hetgraph import build_hdg_et, build_hdg_ws, init_node_features
    from .corpus import encode_instance
    from .kg import detect_sentiment_words

    cfg = _config_from_args(args)
    res = load_resources(cfg)
    for i, inst in enumerate(_load_instances(cfg)):
        enc = encode_instance(inst, res.table)
        weights = enhancement_weights(enc, res.cn, res.sn, res.lex)
        enhanced = apply_enhancement(enc, weights)
        hits = detect_sentiment_words(inst, res.lex)
        ws = init_node_features(build_hdg_ws(enhanced, hits), res.table, enhanced)
        record = {
            "index": i,
            "seed": cfg.seed,
            "ws": graph_to_dict(ws, include_features=args.features),
        }
        if res.cn is not None:
            et = build_hdg_et(
                weights.matched_entities, res.cn, enhanced.features.mean(axis=0)
            )
            et = init_node_features(et, res.table, enhanced)
            record["et"] = graph_to_dict(et, include_features=args.features)
        print(json.dumps(record))
    return EXIT_OK


def _cmd_enhance(args) -> int:
    from .corpus import encode_instance

    cfg = _config_from_args(args)
    res = load_resources(cfg)
    for i, inst in enumerate(_load_instances(cfg)):
        enc = encode_instance(inst, res.table)
        weights = enhancement_weights(enc, res.cn, res.sn, res.lex)
        print(json.dumps({
            "index": i,
            "seed": cfg.seed,
            "tokens": list(enc.row_tokens),
            "alpha_cn": weights.alpha_cn.tolist(),
            "alpha_sn": weights.alpha_sn.tolist(),
            "matched_entities": sorted(weights.matched_entities),
        }))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 7
    error = run_gradcheck(seed)
    print(json.dumps({"seed": seed, "max_relative_error": error,
                      "tolerance": args.tolerance}))
    return EXIT_OK if error < args.tolerance else EXIT_NUMERIC


def _cmd_stats(args) -> int:
    cfg = _config_from_args(args)
    counts = corpus_stats(load_dataset(cfg.dataset, cfg.dataset_format))
    print(json.dumps({
        "seed": cfg.seed,
        "positive": counts.positive,
        "neutral": counts.neutral,
        "negative": counts.negative,
    }))
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    rows = run_ablations(cfg)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    header = f"{'variant':<10} {'accuracy':>9} {'macro_f1':>9}  note"
    print(header)
    failed = False
    for variant, report, error in rows:
        if report is not None:
            note = f"classifier width {report.config['model']['hidden'] * _width_factor(variant)}"
            print(f"{variant:<10} {report.accuracy:>9.4f} {report.macro_f1:>9.4f}  {note}")
            if out_dir:
                _write_report(report, out_dir, f"report_{variant}")
        else:
            failed = True
            print(f"{variant:<10} {'-':>9} {'-':>9}  FAILED: {error}")
    return EXIT_OK if not failed else EXIT_NUMERIC


def _width_factor(variant: str) -> int:
    if variant == "wo_hete":
        return 1
    if variant in ("wo_ws", "wo_et"):
        return 2
    return 3


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "build-graphs": _cmd_build_graphs,
    "enhance": _cmd_enhance,
    "gradcheck": _cmd_gradcheck,
    "stats": _cmd_stats,
    "ablate": _cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ConfigError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except HetsentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
