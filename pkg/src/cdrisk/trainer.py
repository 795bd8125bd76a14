"""Training loop: class weights, Adam, plateau LR halving, best-epoch selection.

One model is trained per disease. Every epoch shuffles the training rows with
a seeded generator, walks batches of 32 (the last partial batch is kept),
and Adam-updates on exact gradients. Train and test losses are re-evaluated
on the full splits after each epoch; the parameter snapshot with the lowest
test loss is what gets returned and saved.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    IoError,
    NonFiniteLoss,
    SchemaHashMismatch,
    ShapeMismatch,
    SingleClass,
    VersionMismatch,
)
from .ingest import (
    CleanRecord,
    FeatureSchema,
    NormStats,
    apply_normalizer,
    fit_normalizer,
    records_to_arrays,
    schema_hash,
    split_dataset,
)
from .model import (
    CHECKPOINT_FORMAT_VERSION,
    ClassWeights,
    ModelConfig,
    RiskModel,
    backward,
    classify_batch,
    forward_batch,
    init_model,
    loss_weighted_ce,
    metrics,
)

_MAGIC = b"CDRP"


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    lr0: float = 0.001
    plateau_patience: int = 3
    lr_factor: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    test_fraction: float = 0.2
    use_class_weights: bool = True

    def __post_init__(self) -> None:
        if min(self.batch_size, self.epochs, self.plateau_patience) < 1:
            raise ValueError("batch_size, epochs, plateau_patience must be positive")
        if self.lr0 <= 0 or not (0.0 < self.lr_factor < 1.0):
            raise ValueError("lr0 must be positive and lr_factor in (0,1)")


@dataclass
class TrainReport:
    disease: str
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = 0
    accuracy: float = 0.0
    recall: float = 0.0
    n_train: int = 0
    n_test: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "disease": self.disease,
            "train_loss": self.train_loss,
            "test_loss": self.test_loss,
            "lr": self.lr,
            "best_epoch": self.best_epoch,
            "accuracy": self.accuracy,
            "recall": self.recall,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seed": self.seed,
        }


def class_weights(labels: np.ndarray) -> ClassWeights:
    """w_c = N / (2 * n_c), so both classes contribute equal total mass."""
    labels = np.asarray(labels)
    n1 = int(np.sum(labels == 1))
    n0 = int(labels.size - n1)
    if n0 == 0 or n1 == 0:
        raise SingleClass(f"need both classes, got n0={n0}, n1={n1}")
    n = labels.size
    return ClassWeights(w0=n / (2.0 * n0), w1=n / (2.0 * n1))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def init_adam(params: list[np.ndarray]) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """Standard bias-corrected Adam update, applied in place."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("parameter and gradient shapes do not match")
    if any(p.shape != m.shape for p, m in zip(params, state.m)):
        raise ShapeMismatch("optimizer state does not match the parameters")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def lr_schedule(train_losses: list[float], current_lr: float, config: TrainConfig) -> float:
    """Halve the rate when the best train loss stalls for plateau_patience epochs.

    Replays the loss history with a best-so-far tracker; the stall counter
    resets after each halving, so a long plateau halves repeatedly at
    patience-sized intervals. Only a stall ending at the newest epoch
    changes the returned rate.
    """
    best = math.inf
    stagnant = 0
    fired_now = False
    for i, loss in enumerate(train_losses):
        if loss < best:
            best = loss
            stagnant = 0
        else:
            stagnant += 1
            if stagnant == config.plateau_patience:
                stagnant = 0
                fired_now = i == len(train_losses) - 1
    return current_lr * config.lr_factor if fired_now else current_lr


def _eval_loss(model: RiskModel, X: np.ndarray, y: np.ndarray, w: ClassWeights) -> float:
    return loss_weighted_ce(forward_batch(model, X), y, w)


def train(
    records: list[CleanRecord],
    schema: FeatureSchema,
    disease: str,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
) -> tuple[RiskModel, TrainReport]:
    """Train one per-disease risk model; returns the lowest-test-loss snapshot."""
    mc = model_config or ModelConfig()
    tc = train_config or TrainConfig()

    X, Y = records_to_arrays(records)
    d = schema.label_index(disease)
    y = Y[:, d]

    split = split_dataset(len(records), y, tc.seed, tc.test_fraction)
    norm = fit_normalizer(records, split)
    Xn = apply_normalizer(X, norm)
    Xtr, ytr = Xn[split.train], y[split.train]
    Xte, yte = Xn[split.test], y[split.test]

    if len(np.unique(ytr)) < 2:
        raise SingleClass(f"{disease}: training split contains a single class")
    w = class_weights(ytr) if tc.use_class_weights else ClassWeights(1.0, 1.0)

    model = init_model(mc, disease)
    model.norm = norm
    model.schema_version = schema.version
    model.schema_hash = schema_hash(schema)

    params = model.params()
    state = init_adam(params)
    rng = np.random.default_rng(tc.seed)
    lr = tc.lr0

    report = TrainReport(disease=disease, n_train=len(Xtr), n_test=len(Xte), seed=tc.seed)
    best_loss = math.inf
    best_snapshot = model.copy_params()

    for epoch in range(tc.epochs):
        order = rng.permutation(len(Xtr))
        for start in range(0, len(order), tc.batch_size):
            batch = order[start : start + tc.batch_size]
            grads, _ = backward(model, Xtr[batch], ytr[batch], w)
            adam_step(params, grads, state, lr, tc.beta1, tc.beta2, tc.eps)

        train_loss = _eval_loss(model, Xtr, ytr, w)
        test_loss = _eval_loss(model, Xte, yte, w)
        if not (math.isfinite(train_loss) and math.isfinite(test_loss)):
            raise NonFiniteLoss(
                f"{disease}: non-finite loss at epoch {epoch} "
                f"(train={train_loss}, test={test_loss}, lr={lr})"
            )
        report.train_loss.append(train_loss)
        report.test_loss.append(test_loss)
        report.lr.append(lr)

        if test_loss < best_loss:
            best_loss = test_loss
            report.best_epoch = epoch
            best_snapshot = model.copy_params()

        lr = lr_schedule(report.train_loss, lr, tc)

    model.set_params(*best_snapshot)
    preds = classify_batch(forward_batch(model, Xte))
    m = metrics(preds, yte)
    report.accuracy = m["accuracy"]
    report.recall = m["recall"]
    return model, report


# ---------------------------------------------------------------------------
# checkpoint format
#
# magic "CDRP" | format version u32 LE | schema hash u64 LE (FNV-1a of the
# canonical codebook JSON) | disease id (u32 LE length + UTF-8 bytes) |
# input_dim, hidden_dim, n_blocks as u32 LE | NormStats as f64 LE (38 means
# then 38 stds) | parameters layer by layer in declaration order, each layer
# as f32 LE row-major weights then f32 LE biases.


def save_checkpoint(model: RiskModel, path: str | Path) -> None:
    """Write the model atomically (temp file + rename)."""
    if model.norm is None:
        raise ValueError("model has no normalization stats; train before saving")
    disease = model.disease.encode("utf-8")
    parts = [
        _MAGIC,
        struct.pack("<I", CHECKPOINT_FORMAT_VERSION),
        struct.pack("<Q", model.schema_hash),
        struct.pack("<I", len(disease)),
        disease,
        struct.pack("<III", model.input_dim, model.hidden_dim, model.n_blocks),
        np.asarray(model.norm.mean, dtype="<f8").tobytes(),
        np.asarray(model.norm.std, dtype="<f8").tobytes(),
    ]
    for w, b in zip(model.weights, model.biases):
        parts.append(w.astype("<f4").tobytes())
        parts.append(b.astype("<f4").tobytes())
    blob = b"".join(parts)

    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint: {exc}") from exc


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise IoError("checkpoint is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out


def load_checkpoint(path: str | Path, schema: FeatureSchema | None = None) -> RiskModel:
    """Read a checkpoint; verifies the codebook hash when a schema is given."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint: {exc}") from exc

    cur = _Cursor(blob)
    if cur.take(4) != _MAGIC:
        raise BadMagic(f"{path} is not a model checkpoint")
    (version,) = struct.unpack("<I", cur.take(4))
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format v{version}, expected v{CHECKPOINT_FORMAT_VERSION}")
    (stored_hash,) = struct.unpack("<Q", cur.take(8))
    if schema is not None and stored_hash != schema_hash(schema):
        raise SchemaHashMismatch(
            f"checkpoint codebook hash {stored_hash:#018x} does not match the loaded codebook"
        )
    (name_len,) = struct.unpack("<I", cur.take(4))
    disease = cur.take(name_len).decode("utf-8")
    input_dim, hidden_dim, n_blocks = struct.unpack("<III", cur.take(12))

    mean = np.frombuffer(cur.take(8 * input_dim), dtype="<f8").astype(np.float64)
    std = np.frombuffer(cur.take(8 * input_dim), dtype="<f8").astype(np.float64)

    dims = _layer_dims_for(input_dim, hidden_dim, n_blocks)
    weights, biases = [], []
    for out_dim, in_dim in dims:
        w = np.frombuffer(cur.take(4 * out_dim * in_dim), dtype="<f4")
        b = np.frombuffer(cur.take(4 * out_dim), dtype="<f4")
        weights.append(w.astype(np.float64).reshape(out_dim, in_dim))
        biases.append(b.astype(np.float64))
    if cur.pos != len(blob):
        raise IoError(f"checkpoint has {len(blob) - cur.pos} trailing bytes")

    return RiskModel(
        disease=disease,
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        n_blocks=n_blocks,
        weights=weights,
        biases=biases,
        norm=NormStats(mean=mean, std=std),
        schema_version=schema.version if schema is not None else None,
        schema_hash=stored_hash,
    )


def _layer_dims_for(input_dim: int, hidden_dim: int, n_blocks: int) -> list[tuple[int, int]]:
    dims = [(hidden_dim, input_dim)]
    dims += [(hidden_dim, hidden_dim)] * (2 * n_blocks)
    dims += [(hidden_dim, hidden_dim), (2, hidden_dim)]
    return dims
