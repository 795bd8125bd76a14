"""Residual MLP over survey features with a two-logit softmax head.

Architecture: affine input projection to the hidden width, a stack of
residual blocks (affine, relu, affine, add the block input, relu), then an
affine -> relu -> affine head producing two logits. Softmax turns the logits
into (no-disease, disease) scores; the risk score is the second entry. All
training math runs in float64; gradients are derived by hand (reverse
accumulation layer by layer), no autograd.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LengthMismatch
from .ingest import NormStats

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    input_dim: int = 38
    hidden_dim: int = 64
    n_blocks: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.hidden_dim < 2:
            raise ValueError("hidden_dim must be at least 2")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be at least 1")


@dataclass(frozen=True)
class ClassWeights:
    w0: float
    w1: float

    def __post_init__(self) -> None:
        if self.w0 <= 0 or self.w1 <= 0:
            raise ValueError("class weights must be positive")


@dataclass(frozen=True)
class Prediction:
    p: np.ndarray

    @property
    def risk(self) -> float:
        return float(self.p[1])


@dataclass
class RiskModel:
    """Parameters plus the normalization context they were trained under.

    weights[i] has shape (out, in) and biases[i] shape (out,), in declaration
    order: input projection, two layers per residual block, then the two head
    layers. Safe to share across threads once training is done.
    """

    disease: str
    input_dim: int
    hidden_dim: int
    n_blocks: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    norm: NormStats | None = None
    schema_version: int | None = None
    schema_hash: int = 0

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy_params(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def set_params(self, weights: list[np.ndarray], biases: list[np.ndarray]) -> None:
        self.weights = [w.copy() for w in weights]
        self.biases = [b.copy() for b in biases]


def _layer_dims(config: ModelConfig) -> list[tuple[int, int]]:
    h, d = config.hidden_dim, config.input_dim
    dims = [(h, d)]
    dims += [(h, h)] * (2 * config.n_blocks)
    dims += [(h, h), (2, h)]
    return dims


def init_model(config: ModelConfig, disease: str = "") -> RiskModel:
    """Uniform fan-scaled init (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for out_dim, in_dim in _layer_dims(config):
        bound = math.sqrt(6.0 / (in_dim + out_dim))
        weights.append(rng.uniform(-bound, bound, size=(out_dim, in_dim)))
        biases.append(np.zeros(out_dim, dtype=np.float64))
    return RiskModel(
        disease=disease,
        input_dim=config.input_dim,
        hidden_dim=config.hidden_dim,
        n_blocks=config.n_blocks,
        weights=weights,
        biases=biases,
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(model: RiskModel, X: np.ndarray):
    """Batch forward pass keeping the intermediates backward() needs."""
    W, B = model.weights, model.biases
    h = X @ W[0].T + B[0]
    blocks = []
    for i in range(model.n_blocks):
        w1, b1 = W[1 + 2 * i], B[1 + 2 * i]
        w2, b2 = W[2 + 2 * i], B[2 + 2 * i]
        u = h @ w1.T + b1
        r = np.maximum(u, 0.0)
        pre = h + r @ w2.T + b2
        blocks.append((h, u, pre))
        h = np.maximum(pre, 0.0)
    wa, ba = W[1 + 2 * model.n_blocks], B[1 + 2 * model.n_blocks]
    wb, bb = W[2 + 2 * model.n_blocks], B[2 + 2 * model.n_blocks]
    g = h @ wa.T + ba
    a = np.maximum(g, 0.0)
    logits = a @ wb.T + bb
    p = _softmax(logits)
    return p, (X, blocks, h, g, a)


def forward_batch(model: RiskModel, X: np.ndarray) -> np.ndarray:
    """Softmax outputs, shape (n, 2). Deterministic and pure."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"expected (n, {model.input_dim}) inputs, got {X.shape}"
        )
    p, _ = _forward_cached(model, X)
    return p


def forward(model: RiskModel, x: np.ndarray) -> Prediction:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise DimensionMismatch(f"expected a {model.input_dim}-vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DimensionMismatch("input contains non-finite values")
    return Prediction(p=forward_batch(model, x[None, :])[0])


def risk_batch(model: RiskModel, X: np.ndarray) -> np.ndarray:
    return forward_batch(model, X)[:, 1]


def loss_weighted_ce(
    p: np.ndarray,
    y: np.ndarray | int,
    weights: ClassWeights,
) -> float:
    """Class-weighted cross-entropy, averaged over the batch.

    Per sample: w_y * (-log p[y]), with p[y] clamped at 1e-12 before the log.
    """
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    py = np.clip(p[np.arange(len(y)), y], 1e-12, None)
    w = np.where(y == 1, weights.w1, weights.w0)
    return float(np.mean(w * -np.log(py)))


def backward(
    model: RiskModel,
    X: np.ndarray,
    y: np.ndarray,
    weights: ClassWeights,
) -> tuple[list[np.ndarray], float]:
    """Exact gradients of the mean weighted-CE batch loss.

    Returns (grads, loss) where grads matches model.params() order
    (W0, b0, W1, b1, ...).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")

    p, (X0, blocks, h_final, g, a) = _forward_cached(model, X)
    w_vec = np.where(y == 1, weights.w1, weights.w0)
    py = np.clip(p[np.arange(n), y], 1e-12, None)
    loss = float(np.mean(w_vec * -np.log(py)))

    W = model.weights
    nb = model.n_blocks

    # softmax + CE collapse to p - onehot(y), scaled by the class weight
    dlogits = p.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits *= (w_vec / n)[:, None]

    grads_w = [None] * len(W)
    grads_b = [None] * len(W)

    ai, bi = 1 + 2 * nb, 2 + 2 * nb
    grads_w[bi] = dlogits.T @ a
    grads_b[bi] = dlogits.sum(axis=0)
    da = dlogits @ W[bi]
    dg = da * (g > 0.0)
    grads_w[ai] = dg.T @ h_final
    grads_b[ai] = dg.sum(axis=0)
    dh = dg @ W[ai]

    for i in reversed(range(nb)):
        h_in, u, pre = blocks[i]
        i1, i2 = 1 + 2 * i, 2 + 2 * i
        dpre = dh * (pre > 0.0)
        r = np.maximum(u, 0.0)
        grads_w[i2] = dpre.T @ r
        grads_b[i2] = dpre.sum(axis=0)
        dr = dpre @ W[i2]
        du = dr * (u > 0.0)
        grads_w[i1] = du.T @ h_in
        grads_b[i1] = du.sum(axis=0)
        dh = dpre + du @ W[i1]

    grads_w[0] = dh.T @ X0
    grads_b[0] = dh.sum(axis=0)

    grads: list[np.ndarray] = []
    for gw, gb in zip(grads_w, grads_b):
        grads.append(gw)
        grads.append(gb)
    return grads, loss


def classify(p: np.ndarray) -> int:
    """Class with the higher score; ties go to the disease class."""
    return int(p[1] >= p[0])


def classify_batch(p: np.ndarray) -> np.ndarray:
    return (p[:, 1] >= p[:, 0]).astype(np.int64)


def metrics(preds: np.ndarray, labels: np.ndarray) -> dict[str, float]:
    """Accuracy and disease-class recall; recall is NaN when no positives exist."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.size == 0:
        raise LengthMismatch(f"preds {preds.shape} vs labels {labels.shape}")
    accuracy = float(np.mean(preds == labels))
    pos = labels == 1
    recall = float(np.mean(preds[pos] == 1)) if pos.any() else float("nan")
    return {"accuracy": accuracy, "recall": recall}
