"""Dual-channel heterogeneous graph attention model with a transformer core.

The network runs per-type graph convolutions over the normalized adjacency,
then attention-enabled layers that weight neighbor types (type channel) and
individual neighbors gated by their type weight (node channel). A pre-norm
transformer block over the flat token sequence exchanges information with the
word-sentiment graph each interaction round; the entity-text graph supplies a
sentence-level readout. The three representations are concatenated and
classified into three polarities.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, make_rng
from .errors import ConfigError, ShapeError
from .hetgraph import TYPE_ORDER, HeteroGraph, NodeType, NormalizedAdjacency

VARIANTS = ("full", "wo_ws", "wo_et", "wo_hete", "wo_cn", "wo_sn", "wo_kgs")

WS_TYPES = (NodeType.WORD, NodeType.SENTIMENT)
ET_TYPES = (NodeType.ENTITY, NodeType.SENTENCE)


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 512
    dropout: float = 0.3
    l2: float = 1e-4
    rounds: int = 2
    heads: int = 4
    layers: int = 2
    classes: int = 3
    seed: int = 0
    embed_dim: int = 300
    leaky_slope: float = 0.2
    variant: str = "full"

    def __post_init__(self):
        if self.hidden <= 0 or self.heads <= 0 or self.layers <= 0:
            raise ConfigError("hidden, heads and layers must be positive")
        if self.hidden % self.heads != 0:
            raise ConfigError(f"heads ({self.heads}) must divide hidden ({self.hidden})")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown ablation variant {self.variant!r}")

    @property
    def use_ws(self) -> bool:
        return self.variant not in ("wo_ws", "wo_hete")

    @property
    def use_et(self) -> bool:
        return self.variant not in ("wo_et", "wo_hete")

    @property
    def use_cn(self) -> bool:
        return self.variant not in ("wo_cn", "wo_kgs")

    @property
    def use_sn(self) -> bool:
        return self.variant not in ("wo_sn", "wo_kgs")

    @property
    def classifier_width(self) -> int:
        return self.hidden * (1 + int(self.use_ws) + int(self.use_et))


def ablation_variant(cfg: ModelConfig, variant: str) -> ModelConfig:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    return dataclasses.replace(cfg, variant=variant)


# ---------------------------------------------------------------------------
# Precomputed per-graph constants


@dataclass
class GraphTensors:
    """Constant arrays derived from one graph, shared by all forward passes."""

    types_present: tuple[NodeType, ...]
    adj_norm: np.ndarray  # [N x N] symmetric-normalized, self-loops included
    neigh_mask: np.ndarray  # bool [N x N], (A + I) > 0
    col_mask: dict[NodeType, np.ndarray]  # bool [N] per present type
    presence: np.ndarray  # bool [N x T]: node i has a neighbor of type t
    feats: np.ndarray  # [N x embed_dim] initial node features
    word_count: int
    readout: int  # node index whose output is this graph's representation

    @property
    def node_count(self) -> int:
        return self.adj_norm.shape[0]


def graph_tensors(g: HeteroGraph, norm: NormalizedAdjacency) -> GraphTensors:
    full = g.stacked_adjacency()
    n = g.node_count
    neigh = (full + np.eye(n)) > 0
    present = g.types_present()
    types = g.node_type_list()
    col_mask = {t: np.array([tt == t for tt in types]) for t in present}
    presence = np.stack([neigh @ col_mask[t] > 0 for t in present], axis=1)
    if g.kind == "ws":
        readout = g.aspect_node
    else:
        readout = g.nodes_of_type(NodeType.SENTENCE)[0]
    return GraphTensors(
        types_present=present,
        adj_norm=norm.stacked,
        neigh_mask=neigh,
        col_mask=col_mask,
        presence=presence,
        feats=g.stacked_features(),
        word_count=len(g.nodes_of_type(NodeType.WORD)),
        readout=readout,
    )


@dataclass
class InstanceBundle:
    """Everything the model needs for one instance."""

    uid: int
    flat: np.ndarray  # enhanced encoded rows [rows x embed_dim]
    aspect_row: int
    label: int
    ws: GraphTensors | None = None
    et: GraphTensors | None = None


# ---------------------------------------------------------------------------
# Layers


def hetero_conv(
    norm: NormalizedAdjacency,
    feats: dict[NodeType, Tensor],
    weights: dict[NodeType, Tensor],
) -> dict[NodeType, Tensor]:
    """Typed graph convolution: per destination type, sum over source types
    of (normalized block) @ features @ per-type projection, then ReLU."""
    present = [t for t in TYPE_ORDER if t in feats]
    for t in present:
        if t not in weights:
            raise ConfigError(f"no projection matrix for node type {t.value!r}")
    out = {}
    for dst in present:
        z = None
        for src in present:
            term = Tensor(norm.blocks[(src, dst)]) @ feats[src] @ weights[src]
            z = term if z is None else z + term
        out[dst] = ag.relu(z)
    return out


def _conv_stacked(H: Tensor, gt: GraphTensors, weights: dict[NodeType, Tensor]) -> Tensor:
    z = None
    for tau in gt.types_present:
        masked_adj = gt.adj_norm * gt.col_mask[tau][None, :]
        term = Tensor(masked_adj) @ H @ weights[tau]
        z = term if z is None else z + term
    return ag.relu(z)


def type_attention(
    H: Tensor, gt: GraphTensors, mus: dict[NodeType, Tensor], slope: float
) -> Tensor:
    """Per-node weights over neighbor types, softmax over types present.

    The type feature is the sum of same-type neighbor features; its score is
    leaky_relu(mu_t . [h_i || h_t]).
    """
    n, d = H.shape
    cols = []
    for tau in gt.types_present:
        mask = (gt.neigh_mask * gt.col_mask[tau][None, :]).astype(np.float64)
        summed = Tensor(mask) @ H  # [n x d]
        mu = mus[tau]
        score = ag.leaky_relu(
            H @ ag.narrow(mu, 0, 0, d) + summed @ ag.narrow(mu, 0, d, d), slope
        )
        cols.append(ag.reshape(score, (n, 1)))
    scores = ag.concat(cols, axis=1)
    return ag.softmax(scores, axis=1, mask=gt.presence)


def node_attention(
    H: Tensor, alpha: Tensor, gt: GraphTensors, nu: Tensor, slope: float
) -> Tensor:
    """Per-node weights over individual neighbors; the pre-softmax score
    leaky_relu(nu . [h_i || h_j]) is gated by the type weight of j."""
    n, d = H.shape
    p = ag.reshape(H @ ag.narrow(nu, 0, 0, d), (n, 1))
    q = ag.reshape(H @ ag.narrow(nu, 0, d, d), (1, n))
    raw = ag.leaky_relu(p + q, slope)
    gate = None
    for t_i, tau in enumerate(gt.types_present):
        a_col = ag.narrow(alpha, 1, t_i, 1)  # [n x 1]
        term = a_col * gt.col_mask[tau][None, :].astype(np.float64)
        gate = term if gate is None else gate + term
    scored = raw * gate
    return ag.softmax(scored, axis=1, mask=gt.neigh_mask)


def _attention_conv(
    H: Tensor, beta: Tensor, gt: GraphTensors, weights: dict[NodeType, Tensor]
) -> Tensor:
    z = None
    for tau in gt.types_present:
        masked = beta * gt.col_mask[tau][None, :].astype(np.float64)
        term = masked @ H @ weights[tau]
        z = term if z is None else z + term
    return ag.relu(z)


def transformer_block(
    x: Tensor,
    params: dict[str, Tensor],
    heads: int,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng_factory=None,
) -> Tensor:
    """Pre-norm residual block: x + MHA(LN(x)), then + FFN(LN(.))."""
    n, d = x.shape
    if d % heads != 0:
        raise ConfigError(f"heads ({heads}) must divide model dim ({d})")
    dh = d // heads
    scale = 1.0 / np.sqrt(dh)
    h1 = ag.layer_norm(x, params["ln1_g"], params["ln1_b"])
    q = h1 @ params["wq"] + params["bq"]
    k = h1 @ params["wk"]
    v = h1 @ params["wv"] + params["bv"]
    head_outs = []
    for h in range(heads):
        qh = ag.narrow(q, 1, h * dh, dh)
        kh = ag.narrow(k, 1, h * dh, dh)
        vh = ag.narrow(v, 1, h * dh, dh)
        attn = ag.softmax((qh @ kh.T) * scale, axis=1)
        if train and dropout_rate > 0:
            attn = ag.dropout(attn, dropout_rate, rng_factory(f"attn{h}"), train)
        head_outs.append(attn @ vh)
    mha = ag.concat(head_outs, axis=1) @ params["wo"] + params["bo"]
    y = x + mha
    h2 = ag.layer_norm(y, params["ln2_g"], params["ln2_b"])
    ff = ag.relu(h2 @ params["w1"] + params["b1"]) @ params["w2"] + params["b2"]
    if train and dropout_rate > 0:
        ff = ag.dropout(ff, dropout_rate, rng_factory("ffn"), train)
    return y + ff


def fuse_and_classify(parts: list[Tensor], w: Tensor, b: Tensor) -> Tensor:
    """Concatenate the d-dim representations and map linearly to logits."""
    fused = ag.concat(parts, axis=1)
    if fused.shape[1] != w.shape[0]:
        raise ShapeError(
            f"classifier expects width {w.shape[0]}, got {fused.shape[1]}"
        )
    return fused @ w + b


def model_loss(logits: Tensor, labels, params: dict[str, Tensor], lam: float) -> Tensor:
    """Mean cross-entropy plus lam * sum of squared parameters."""
    loss = ag.cross_entropy(logits, labels)
    if lam > 0:
        reg = None
        for p in params.values():
            term = ag.tsum(p * p)
            reg = term if reg is None else reg + term
        loss = loss + lam * reg
    return loss


# ---------------------------------------------------------------------------
# The full model


class SentimentGraphModel:
    """Owns the parameter dict and the per-instance forward pass."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        d = cfg.hidden
        self._matrix("input_w", (cfg.embed_dim, d))
        self._zeros("input_b", (d,))
        if cfg.use_ws:
            self._branch_params("ws", WS_TYPES)
        if cfg.use_et:
            self._branch_params("et", ET_TYPES)
        for name in ("wq", "wk", "wv", "wo"):
            self._matrix(f"tr.{name}", (d, d))
        # no key bias: softmax is invariant to a per-row score shift, so a
        # key bias would be a zero-gradient no-op parameter
        for name in ("bq", "bv", "bo"):
            self._zeros(f"tr.{name}", (d,))
        self._matrix("tr.w1", (d, 4 * d))
        self._zeros("tr.b1", (4 * d,))
        self._matrix("tr.w2", (4 * d, d))
        self._zeros("tr.b2", (d,))
        for ln in ("ln1", "ln2"):
            self.params[f"tr.{ln}_g"] = Tensor(np.ones(d), requires_grad=True)
            self._zeros(f"tr.{ln}_b", (d,))
        if cfg.use_ws:
            self._matrix("fold_w", (d, d))
        self._matrix("cls_w", (cfg.classifier_width, cfg.classes))
        self._zeros("cls_b", (cfg.classes,))

    # parameter construction -----------------------------------------------
    def _matrix(self, name, shape):
        fan_in, fan_out = shape
        a = np.sqrt(6.0 / (fan_in + fan_out))
        rng = make_rng(self.cfg.seed, "init", name)
        self.params[name] = Tensor(rng.uniform(-a, a, shape), requires_grad=True)

    def _vector(self, name, size):
        a = np.sqrt(6.0 / (size + 1))
        rng = make_rng(self.cfg.seed, "init", name)
        self.params[name] = Tensor(rng.uniform(-a, a, size), requires_grad=True)

    def _zeros(self, name, shape):
        self.params[name] = Tensor(np.zeros(shape), requires_grad=True)

    def _branch_params(self, branch, types):
        d = self.cfg.hidden
        for layer in range(self.cfg.layers):
            for tau in types:
                self._matrix(f"{branch}.l{layer}.w_{tau.value}", (d, d))
            if layer > 0:
                for tau in types:
                    self._vector(f"{branch}.l{layer}.mu_{tau.value}", 2 * d)
                self._vector(f"{branch}.l{layer}.nu", 2 * d)

    # forward ----------------------------------------------------------------
    def _project(self, feats: np.ndarray) -> Tensor:
        return Tensor(feats) @ self.params["input_w"] + self.params["input_b"]

    def _tr_params(self):
        return {k[3:]: v for k, v in self.params.items() if k.startswith("tr.")}

    def _dha_stack(self, branch: str, H: Tensor, gt: GraphTensors) -> Tensor:
        cfg = self.cfg
        for layer in range(cfg.layers):
            weights = {
                tau: self.params[f"{branch}.l{layer}.w_{tau.value}"]
                for tau in gt.types_present
            }
            if layer == 0:
                H = _conv_stacked(H, gt, weights)
            else:
                mus = {
                    tau: self.params[f"{branch}.l{layer}.mu_{tau.value}"]
                    for tau in gt.types_present
                }
                nu = self.params[f"{branch}.l{layer}.nu"]
                alpha = type_attention(H, gt, mus, cfg.leaky_slope)
                beta = node_attention(H, alpha, gt, nu, cfg.leaky_slope)
                H = _attention_conv(H, beta, gt, weights)
        return H

    def iterative_interaction(
        self,
        flat: Tensor,
        ws: GraphTensors | None,
        et: GraphTensors | None,
        train: bool = False,
        step: int = 0,
        uid: int = 0,
    ) -> tuple[Tensor, Tensor | None, Tensor | None]:
        """Alternate transformer passes over the flat sequence with graph
        attention passes, folding word-node outputs back into the sequence."""
        cfg = self.cfg
        tr = self._tr_params()
        ws_H0 = self._project(ws.feats) if (cfg.use_ws and ws is not None) else None
        et_H0 = self._project(et.feats) if (cfg.use_et and et is not None) else None
        ws_out, et_out = ws_H0, et_H0
        n_rows = flat.shape[0]
        for r in range(cfg.rounds):
            def rng_factory(tag, _r=r):
                return make_rng(cfg.seed, "dropout", f"tr.{tag}", step, uid, _r)

            flat = transformer_block(
                flat, tr, cfg.heads, cfg.dropout, train, rng_factory
            )
            if ws_H0 is not None:
                if ws.word_count != n_rows:
                    raise ShapeError(
                        f"ws graph has {ws.word_count} word nodes but the flat "
                        f"sequence has {n_rows} rows"
                    )
                extra = ws.node_count - ws.word_count
                if extra > 0:
                    other = ag.narrow(ws_H0, 0, ws.word_count, extra)
                    H_in = ag.concat([flat, other], axis=0)
                else:
                    H_in = flat
                ws_out = self._dha_stack("ws", H_in, ws)
                word_out = ag.narrow(ws_out, 0, 0, ws.word_count)
                flat = flat + word_out @ self.params["fold_w"]
            if et_H0 is not None:
                et_out = self._dha_stack("et", et_H0, et)
        ws_repr = (
            ag.narrow(ws_out, 0, ws.readout, 1) if ws_out is not None else None
        )
        et_repr = (
            ag.narrow(et_out, 0, et.readout, 1) if et_out is not None else None
        )
        return flat, ws_repr, et_repr

    def forward(self, bundle: InstanceBundle, train: bool = False, step: int = 0) -> Tensor:
        """Logits [1 x classes] for one instance."""
        cfg = self.cfg
        flat = self._project(bundle.flat)
        if train and cfg.dropout > 0:
            flat = ag.dropout(
                flat,
                cfg.dropout,
                make_rng(cfg.seed, "dropout", "embed", step, bundle.uid),
                train,
            )
        flat, ws_repr, et_repr = self.iterative_interaction(
            flat, bundle.ws, bundle.et, train, step, bundle.uid
        )
        parts = [ag.narrow(flat, 0, bundle.aspect_row, 1)]
        if cfg.use_ws:
            parts.append(ws_repr)
        if cfg.use_et:
            parts.append(et_repr)
        return fuse_and_classify(parts, self.params["cls_w"], self.params["cls_b"])

    def batch_loss(
        self, bundles: list[InstanceBundle], train: bool = False, step: int = 0
    ) -> tuple[Tensor, Tensor]:
        logits = ag.concat(
            [self.forward(b, train, step) for b in bundles], axis=0
        )
        labels = [b.label for b in bundles]
        return model_loss(logits, labels, self.params, self.cfg.l2), logits

    def predict(self, bundle: InstanceBundle) -> int:
        logits = self.forward(bundle, train=False).data[0]
        return int(np.argmax(logits))  # ties break toward the lowest index

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in state.items():
            if name not in self.params:
                raise ConfigError(f"unknown parameter {name!r} in checkpoint")
            if self.params[name].data.shape != arr.shape:
                raise ConfigError(
                    f"parameter {name!r}: checkpoint shape {arr.shape} != "
                    f"model shape {self.params[name].data.shape}"
                )
            self.params[name].data = arr.copy()
        missing = set(self.params) - set(state)
        if missing:
            raise ConfigError(f"checkpoint missing parameters: {sorted(missing)[:5]}")
