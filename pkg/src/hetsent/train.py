"""Training loop, evaluation, ablation sweep, and the data pipeline glue.

Also provides a small synthetic, linearly separable corpus used by the smoke
tests and the ablation harness, plus the gradient-check fixture the CLI runs.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np

from .autograd import Adam, Tensor, grad_check, make_rng
from .corpus import (
    EmbeddingTable,
    LabeledInstance,
    encode_instance,
    instance_to_json,
    load_conllu,
    load_dataset,
    load_embeddings,
)
from .errors import ConfigError, DataError, HetsentError, NumericError
from .hetgraph import (
    build_hdg_et,
    build_hdg_ws,
    init_node_features,
    normalize_adjacency,
)
from .kg import (
    KgSnapshot,
    KgTriple,
    PolarityLexicon,
    apply_enhancement,
    detect_sentiment_words,
    enhancement_weights,
    load_kg_snapshot,
    load_lexicon,
)
from .metrics import accuracy, confusion_matrix, macro_f1, precision_recall_f1
from .model import (
    VARIANTS,
    InstanceBundle,
    ModelConfig,
    SentimentGraphModel,
    ablation_variant,
    graph_tensors,
)


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    dataset: str = ""
    dataset_format: str = "jsonl"
    test_dataset: str | None = None
    parses: str | None = None
    embeddings: str | None = None
    cn_snapshot: str | None = None
    sn_snapshot: str | None = None
    lexicon: str | None = None
    out_dir: str | None = None
    patience: int | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


def config_to_dict(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    return d


def load_train_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Read a JSON or TOML config file; flat overrides win over file values."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        if path.suffix == ".toml":
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
        else:
            with path.open(encoding="utf-8") as fh:
                raw = json.load(fh)
    model_kwargs = dict(raw.pop("model", {}))
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if key in TrainConfig.__dataclass_fields__:
                raw[key] = value
            elif key in ModelConfig.__dataclass_fields__:
                model_kwargs[key] = value
            else:
                raw[key] = value
    unknown = set(raw) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        model = ModelConfig(**model_kwargs)
    except TypeError as e:
        raise ConfigError(f"bad model config: {e}") from None
    try:
        return TrainConfig(model=model, **raw)
    except TypeError as e:
        raise ConfigError(f"bad train config: {e}") from None


# ---------------------------------------------------------------------------
# Data pipeline


@dataclass
class Resources:
    table: EmbeddingTable
    cn: KgSnapshot | None
    sn: KgSnapshot | None
    lex: PolarityLexicon


def load_resources(cfg: TrainConfig) -> Resources:
    if cfg.embeddings:
        table = load_embeddings(cfg.embeddings, cfg.model.embed_dim, oov_seed=cfg.seed)
    else:
        # hashed-uniform-only table: every word gets a stable random vector
        table = EmbeddingTable(dim=cfg.model.embed_dim, oov_seed=cfg.seed)
    cn = load_kg_snapshot(cfg.cn_snapshot, "conceptnet") if cfg.cn_snapshot else None
    sn = load_kg_snapshot(cfg.sn_snapshot, "senticnet") if cfg.sn_snapshot else None
    lex = (
        load_lexicon(cfg.lexicon)
        if cfg.lexicon
        else PolarityLexicon(frozenset(), frozenset())
    )
    return Resources(table=table, cn=cn, sn=sn, lex=lex)


def attach_parses(
    instances: list[LabeledInstance], parses: dict[str, tuple]
) -> list[LabeledInstance]:
    """Attach CoNLL-U edges keyed by the instance's 0-based record index."""
    out = []
    for i, inst in enumerate(instances):
        edges = parses.get(str(i))
        if edges is not None and not inst.parse_edges:
            inst = dataclasses.replace(inst, parse_edges=tuple(edges))
        out.append(inst)
    return out


def prepare_instance(
    inst: LabeledInstance, uid: int, res: Resources, mcfg: ModelConfig
) -> InstanceBundle:
    enc = encode_instance(inst, res.table)
    weights = enhancement_weights(
        enc, res.cn, res.sn, res.lex, use_cn=mcfg.use_cn, use_sn=mcfg.use_sn
    )
    enhanced = apply_enhancement(enc, weights)
    hits = detect_sentiment_words(inst, res.lex)
    ws_g = init_node_features(build_hdg_ws(enhanced, hits), res.table, enhanced)
    ws_gt = graph_tensors(ws_g, normalize_adjacency(ws_g))
    et_gt = None
    if res.cn is not None:
        et_g = build_hdg_et(
            weights.matched_entities, res.cn, enhanced.features.mean(axis=0)
        )
        et_g = init_node_features(et_g, res.table, enhanced)
        et_gt = graph_tensors(et_g, normalize_adjacency(et_g))
    return InstanceBundle(
        uid=uid,
        flat=enhanced.features,
        aspect_row=enhanced.aspect_index,
        label=inst.label_index,
        ws=ws_gt,
        et=et_gt,
    )


def prepare_dataset(
    instances: list[LabeledInstance], res: Resources, mcfg: ModelConfig
) -> list[InstanceBundle]:
    return [prepare_instance(inst, i, res, mcfg) for i, inst in enumerate(instances)]


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    per_class: list[dict]
    confusion: list[list[int]]
    count: int
    config: dict
    seed: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def evaluate(
    model: SentimentGraphModel,
    bundles: list[InstanceBundle],
    config_echo: dict | None = None,
    seed: int = 0,
) -> EvalReport:
    gold = [b.label for b in bundles]
    pred = [model.predict(b) for b in bundles]
    cm = confusion_matrix(gold, pred, classes=model.cfg.classes)
    return EvalReport(
        accuracy=accuracy(cm),
        macro_f1=macro_f1(cm),
        per_class=precision_recall_f1(cm),
        confusion=cm.tolist(),
        count=len(bundles),
        config=config_echo or {},
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    loss_history: list[float]
    report: EvalReport
    train_accuracy: float
    model: SentimentGraphModel


def _split(instances, seed):
    """Fixed 80/20 split by seeded shuffle."""
    order = make_rng(seed, "split").permutation(len(instances))
    cut = max(1, int(round(len(instances) * 0.8)))
    train = [instances[i] for i in order[:cut]]
    test = [instances[i] for i in order[cut:]]
    return train, test or train


def train(cfg: TrainConfig, instances: list[LabeledInstance] | None = None) -> TrainResult:
    """Run the full pipeline: prepare, optimize, evaluate on the held-out split."""
    res = load_resources(cfg)
    if instances is None:
        if not cfg.dataset:
            raise ConfigError("no dataset path configured")
        instances = load_dataset(cfg.dataset, cfg.dataset_format)
        if cfg.parses:
            instances = attach_parses(instances, load_conllu(cfg.parses))
    if not instances:
        raise DataError("dataset is empty")
    mcfg = dataclasses.replace(cfg.model, seed=cfg.seed)
    if cfg.test_dataset:
        train_insts = instances
        test_insts = load_dataset(cfg.test_dataset, cfg.dataset_format)
    else:
        train_insts, test_insts = _split(instances, cfg.seed)
    train_bundles = prepare_dataset(train_insts, res, mcfg)
    test_bundles = prepare_dataset(test_insts, res, mcfg)
    model = SentimentGraphModel(mcfg)
    opt = Adam(model.params, lr=cfg.lr)
    history: list[float] = []
    step = 0
    best_loss, stall = np.inf, 0
    for epoch in range(cfg.epochs):
        order = make_rng(cfg.seed, "shuffle", epoch).permutation(len(train_bundles))
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_bundles[i] for i in order[start : start + cfg.batch_size]]
            opt.zero_grad()
            loss, _ = model.batch_loss(batch, train=True, step=step)
            value = loss.item()
            if np.isnan(value):
                ids = [b.uid for b in batch]
                raise NumericError(f"NaN loss on batch with instance ids {ids}")
            loss.backward()
            opt.step()
            history.append(value)
            step += 1
        if cfg.patience is not None:
            epoch_loss = float(np.mean(history[-max(1, len(order) // cfg.batch_size + 1) :]))
            if epoch_loss < best_loss - 1e-12:
                best_loss, stall = epoch_loss, 0
            else:
                stall += 1
                if stall >= cfg.patience:
                    break
    echo = config_to_dict(cfg)
    train_report = evaluate(model, train_bundles, echo, cfg.seed)
    report = evaluate(model, test_bundles, echo, cfg.seed)
    return TrainResult(
        params={k: p.data.copy() for k, p in model.params.items()},
        loss_history=history,
        report=report,
        train_accuracy=train_report.accuracy,
        model=model,
    )


def run_ablations(
    cfg: TrainConfig, instances: list[LabeledInstance] | None = None
) -> list[tuple[str, EvalReport | None, str | None]]:
    """Train and evaluate all seven variants with identical seeds."""
    rows = []
    for variant in VARIANTS:
        vcfg = dataclasses.replace(cfg, model=ablation_variant(cfg.model, variant))
        try:
            result = train(vcfg, instances)
            rows.append((variant, result.report, None))
        except HetsentError as e:
            rows.append((variant, None, str(e)))
    return rows


# ---------------------------------------------------------------------------
# Synthetic corpus

_SYNTH_ASPECTS = ("food", "service", "battery", "screen", "pizza")
_SYNTH_WORDS = {
    "positive": ("great", "excellent"),
    "neutral": ("okay", "average"),
    "negative": ("terrible", "awful"),
}
_SYNTH_PARSE = ((1, 0, "det"), (3, 1, "nsubj"), (3, 2, "cop"))


def make_synthetic_corpus(n: int = 20, seed: int = 0) -> list[LabeledInstance]:
    """Linearly separable toy corpus: the sentiment word decides the label."""
    rng = make_rng(seed, "synth")
    labels = ("positive", "neutral", "negative")
    out = []
    for i in range(n):
        label = labels[i % 3]
        aspect = _SYNTH_ASPECTS[rng.integers(len(_SYNTH_ASPECTS))]
        word = _SYNTH_WORDS[label][rng.integers(2)]
        text = f"the {aspect} was {word}"
        out.append(
            LabeledInstance(
                text=text,
                tokens=tuple(text.split()),
                aspect_span=(1, 2),
                label=label,
                parse_edges=_SYNTH_PARSE,
            )
        )
    return out


_SYNTH_CN = [
    ("food", "relatedto", "restaurant", 0.8),
    ("pizza", "isa", "food", 0.9),
    ("pizza", "atlocation", "restaurant", 0.6),
    ("service", "relatedto", "restaurant", 0.7),
    ("battery", "partof", "laptop", 0.8),
    ("screen", "partof", "laptop", 0.7),
    ("laptop", "relatedto", "computer", 0.5),
]

_SYNTH_SN = [
    ("great", "haspolarity", "joy", 0.9),
    ("excellent", "haspolarity", "joy", 0.8),
    ("terrible", "haspolarity", "disgust", 0.9),
    ("awful", "haspolarity", "disgust", 0.8),
    ("okay", "haspolarity", "neutrality", 0.5),
    ("average", "haspolarity", "neutrality", 0.4),
]

_SYNTH_LEX = [
    ("great", "POSITIV"),
    ("excellent", "POSITIV"),
    ("terrible", "NEGATIV"),
    ("awful", "NEGATIV"),
]


def synthetic_resources(dim: int, seed: int = 0) -> Resources:
    """In-memory resources matching the synthetic corpus."""
    return Resources(
        table=EmbeddingTable(dim=dim, oov_seed=seed),
        cn=KgSnapshot.from_triples([KgTriple(*t) for t in _SYNTH_CN], "conceptnet"),
        sn=KgSnapshot.from_triples([KgTriple(*t) for t in _SYNTH_SN], "senticnet"),
        lex=PolarityLexicon(
            frozenset(w for w, c in _SYNTH_LEX if c == "POSITIV"),
            frozenset(w for w, c in _SYNTH_LEX if c == "NEGATIV"),
        ),
    )


def write_synthetic_files(directory, n: int = 20, seed: int = 0) -> dict[str, str]:
    """Write the synthetic corpus and its side files; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "dataset": str(directory / "synthetic.jsonl"),
        "cn_snapshot": str(directory / "cn.tsv"),
        "sn_snapshot": str(directory / "sn.tsv"),
        "lexicon": str(directory / "lexicon.tsv"),
    }
    with open(paths["dataset"], "w", encoding="utf-8") as fh:
        for inst in make_synthetic_corpus(n, seed):
            fh.write(instance_to_json(inst) + "\n")
    with open(paths["cn_snapshot"], "w", encoding="utf-8") as fh:
        for h, r, t, w in _SYNTH_CN:
            fh.write(f"{h}\t{r}\t{t}\t{w}\n")
    with open(paths["sn_snapshot"], "w", encoding="utf-8") as fh:
        for h, r, t, w in _SYNTH_SN:
            fh.write(f"{h}\t{r}\t{t}\t{w}\n")
    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        for w, c in _SYNTH_LEX:
            fh.write(f"{w}\t{c}\n")
    return paths


# ---------------------------------------------------------------------------
# Gradient-check harness


def gradcheck_fixture(
    seed: int = 7, hidden: int = 8, heads: int = 2, rounds: int = 1, layers: int = 2
) -> tuple[SentimentGraphModel, list[InstanceBundle]]:
    """A 2-instance full-model fixture small enough for finite differences."""
    # l2=0: with the regularizer on, parameters whose data gradient is dead
    # have analytic gradient 2*lambda*theta ~ 1e-8, right at the finite
    # difference noise floor; the L2 gradient is checked analytically in the
    # loss-anchor tests instead.
    mcfg = ModelConfig(
        hidden=hidden,
        heads=heads,
        rounds=rounds,
        layers=layers,
        embed_dim=hidden,
        dropout=0.0,
        l2=0.0,
        seed=seed,
    )
    res = synthetic_resources(dim=mcfg.embed_dim, seed=seed)
    # O(1) input features keep every live gradient component well above the
    # cancellation noise of central differences at eps=1e-5.
    res.table.oov_scale = 1.0
    instances = make_synthetic_corpus(2, seed)
    bundles = prepare_dataset(instances, res, mcfg)
    return SentimentGraphModel(mcfg), bundles


def run_gradcheck(seed: int = 7, eps: float = 1e-5) -> float:
    """Max relative error of analytic vs central-difference gradients for
    the full model loss on the 2-instance fixture (dropout off)."""
    model, bundles = gradcheck_fixture(seed)

    def f() -> Tensor:
        loss, _ = model.batch_loss(bundles, train=False, step=0)
        return loss

    return grad_check(f, model.params, eps=eps)
