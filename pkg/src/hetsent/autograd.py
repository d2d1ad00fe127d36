"""Reverse-mode autodiff on dense float64 arrays, plus Adam and checkpoints.

Deliberately small: dense tensors, a flat tape, and the dozen ops the model
needs. Double precision throughout so finite-difference gradient checks at
1e-4 relative error are meaningful.
"""
from __future__ import annotations

import base64
import hashlib
import json
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


# ---------------------------------------------------------------------------
# RNG


def _stream_token(x) -> int:
    if isinstance(x, str):
        return int.from_bytes(hashlib.sha256(x.encode("utf-8")).digest()[:4], "little")
    return int(x) & 0xFFFFFFFF


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Counter-based generator for a named stream.

    Identical (seed, stream) always yields an identical sequence, independent
    of call order elsewhere in the program.
    """
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(_stream_token(s) for s in stream)
    )
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Tensor and tape


class Tensor:
    """A dense float64 array with an optional backpointer into the tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # backward pass --------------------------------------------------------
    def backward(self) -> None:
        """Populate ``grad`` on every reachable leaf that requires grad."""
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        # iterative post-order topological sort
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Forward ops


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    return _op(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None
    return _op(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.data.ndim == 2 and b.data.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.data.ndim == 2 and b.data.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        if a.data.ndim == 1 and b.data.ndim == 2:
            return b.data @ g, np.outer(a.data, g)
        return g * b.data, g * a.data

    return _op(data, (a, b), backward)


def transpose(t) -> Tensor:
    t = _coerce(t)
    if t.data.ndim != 2:
        raise ShapeError(f"transpose: need 2-D tensor, got {t.shape}")
    return _op(t.data.T, (t,), lambda g: (g.T,))


def reshape(t, shape) -> Tensor:
    t = _coerce(t)
    old = t.data.shape
    return _op(t.data.reshape(shape), (t,), lambda g: (g.reshape(old),))


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = np.cumsum([t.data.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _op(data, ts, backward)


def narrow(t, axis: int, start: int, length: int) -> Tensor:
    t = _coerce(t)
    idx = [slice(None)] * t.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        z = np.zeros_like(t.data)
        z[idx] = g
        return (z,)

    return _op(t.data[idx], (t,), backward)


def mean_pool(t, axis: int = 0) -> Tensor:
    t = _coerce(t)
    n = t.data.shape[axis]

    def backward(g):
        ge = np.expand_dims(g, axis)
        return (np.broadcast_to(ge, t.data.shape) / n,)

    return _op(t.data.mean(axis=axis), (t,), backward)


def tsum(t) -> Tensor:
    """Sum over all elements, yielding a scalar tensor."""
    t = _coerce(t)
    return _op(t.data.sum(), (t,), lambda g: (np.broadcast_to(g, t.data.shape).copy(),))


def relu(t) -> Tensor:
    t = _coerce(t)
    mask = t.data > 0
    return _op(np.where(mask, t.data, 0.0), (t,), lambda g: (g * mask,))


def leaky_relu(t, slope: float = 0.01) -> Tensor:
    t = _coerce(t)
    mask = t.data > 0
    return _op(
        np.where(mask, t.data, slope * t.data),
        (t,),
        lambda g: (g * np.where(mask, 1.0, slope),),
    )


def softmax(t, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Shift-stabilized softmax; with ``mask`` the weights of masked-out
    positions are exactly zero and excluded from the normalization."""
    t = _coerce(t)
    x = t.data
    if mask is None:
        m = x.max(axis=axis, keepdims=True)
        e = np.exp(x - m)
        y = e / e.sum(axis=axis, keepdims=True)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"softmax: mask shape {mask.shape} != input shape {x.shape}")
        masked = np.where(mask, x, -np.inf)
        m = masked.max(axis=axis, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        e = np.where(mask, np.exp(x - m), 0.0)
        s = e.sum(axis=axis, keepdims=True)
        y = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _op(y, (t,), backward)


def layer_norm(t, gamma, beta, axis: int = -1, eps: float = 1e-12) -> Tensor:
    t, gamma, beta = _coerce(t), _coerce(gamma), _coerce(beta)
    x = t.data
    axis = axis % x.ndim
    mu = x.mean(axis=axis, keepdims=True)
    var = x.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    gshape = [1] * x.ndim
    gshape[axis] = x.shape[axis]
    gam = gamma.data.reshape(gshape)
    bet = beta.data.reshape(gshape)
    data = xhat * gam + bet
    other_axes = tuple(i for i in range(x.ndim) if i != axis)

    def backward(g):
        dgamma = (g * xhat).sum(axis=other_axes).reshape(gamma.data.shape)
        dbeta = g.sum(axis=other_axes).reshape(beta.data.shape)
        dxhat = g * gam
        dx = inv * (
            dxhat
            - dxhat.mean(axis=axis, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True)
        )
        return dx, dgamma, dbeta

    return _op(data, (t, gamma, beta), backward)


def dropout(t, rate: float, rng: np.random.Generator | None = None, train: bool = True) -> Tensor:
    """Inverted dropout; exact identity when ``train`` is false or rate is 0."""
    t = _coerce(t)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return t
    if rng is None:
        raise ConfigError("dropout in training mode requires an rng")
    keep = rng.random(t.data.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return _op(t.data * keep * scale, (t,), lambda g: (g * keep * scale,))


def embedding_select(t, indices) -> Tensor:
    t = _coerce(t)
    ind = np.asarray(indices, dtype=np.intp)

    def backward(g):
        z = np.zeros_like(t.data)
        np.add.at(z, ind, g)
        return (z,)

    return _op(t.data[ind], (t,), backward)


def cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of integer labels against raw logits."""
    logits = _coerce(logits)
    x = logits.data
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    lab = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if lab.shape[0] != x.shape[0]:
        raise ShapeError(
            f"cross_entropy: {x.shape[0]} logit rows vs {lab.shape[0]} labels"
        )
    n, c = x.shape
    if lab.min() < 0 or lab.max() >= c:
        raise ShapeError(f"cross_entropy: label out of range for {c} classes")
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True)) + m
    logp = x - lse
    data = -logp[np.arange(n), lab].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), lab] -= 1.0
        gx = p * (float(g) / n)
        return (gx[0] if squeeze else gx,)

    return _op(data, (logits,), backward)


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``f`` must be a deterministic scalar function of the current parameter
    values (dropout off, fixed seeds); non-determinism is detected and raised.
    """
    if isinstance(params, Mapping):
        items = list(params.items())
    else:
        items = [(f"p{i}", p) for i, p in enumerate(params)]
    base1 = f().item()
    base2 = f().item()
    if base1 != base2:
        raise NumericError("grad_check: function is not deterministic")
    for _, p in items:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in items
    }
    worst = 0.0
    for name, p in items:
        flat = p.data.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f().item()
            flat[i] = orig - eps
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * eps)
            denom = max(abs(num), abs(aflat[i]), 1e-8)
            worst = max(worst, abs(num - aflat[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# Adam


class Adam:
    """Standard Adam with bias correction over a named parameter dict."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if np.isnan(g).any():
                raise NumericError(f"NaN gradient in parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            mhat = m / (1.0 - self.beta1 ** self.t)
            vhat = v / (1.0 - self.beta2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# Parameter checkpoints (bit-exact round trip)

_CKPT_FORMAT = "hetsent-params"
_CKPT_VERSION = 1


def save_params(params: Mapping[str, Tensor], path) -> None:
    blob = {"format": _CKPT_FORMAT, "version": _CKPT_VERSION, "params": {}}
    for name, p in params.items():
        arr = np.ascontiguousarray(p.data if isinstance(p, Tensor) else p, dtype="<f8")
        blob["params"][name] = {
            "shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii"),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh)


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("format") != _CKPT_FORMAT:
        raise ConfigError(f"not a parameter checkpoint: {path}")
    if blob.get("version") != _CKPT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {blob.get('version')}")
    out = {}
    for name, rec in blob["params"].items():
        arr = np.frombuffer(base64.b64decode(rec["data"]), dtype="<f8")
        out[name] = arr.reshape(rec["shape"]).astype(np.float64)
    return out
