"""Deep multilayer perceptron activity detector, written directly on numpy.

``Z`` ReLU hidden layers of width ``V`` map the 2NL received-signal features to
``K`` sigmoid outputs, one activity probability per device. Training minimises
binary cross-entropy with Adam and early stopping on a validation split.

Weights follow the ``out x in`` convention (``U_1`` is V x 2NL); batches are
row-stacked, so a layer computes ``x @ U.T + b``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureScaler
from .numerics import SeededRng

__all__ = [
    "MlpArchitecture",
    "MlpModel",
    "TrainConfig",
    "AdamState",
    "TrainResult",
    "DivergenceError",
    "ModelFormatError",
    "CLIP",
    "parameter_count",
    "init_model",
    "forward",
    "forward_cache",
    "predict",
    "bce_loss",
    "backward",
    "adam_step",
    "train",
    "save_model",
    "load_model",
]

CLIP = 1e-7


class DivergenceError(FloatingPointError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_layers: int
    hidden_width: int
    output_dim: int

    def __post_init__(self):
        if min(self.input_dim, self.hidden_layers, self.hidden_width, self.output_dim) < 1:
            raise ValueError(f"all architecture dimensions must be >= 1: {self}")

    @classmethod
    def for_system(cls, K: int, L: int, N: int, Z: int, V: int) -> "MlpArchitecture":
        return cls(input_dim=2 * N * L, hidden_layers=Z, hidden_width=V, output_dim=K)

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return [(dims[t + 1], dims[t]) for t in range(len(dims) - 1)]


def parameter_count(arch: MlpArchitecture) -> int:
    """(Z-1)V^2 + (D + K + Z)V + K, with D the input width (2NL)."""
    Z, V, K, D = arch.hidden_layers, arch.hidden_width, arch.output_dim, arch.input_dim
    return (Z - 1) * V * V + (D + K + Z) * V + K


@dataclass
class MlpModel:
    arch: MlpArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    scaler: FeatureScaler

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return MlpModel(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.scaler)

    def size(self) -> int:
        return sum(p.size for p in self.params())


def _snap32(a: np.ndarray) -> np.ndarray:
    # Parameters are persisted in single precision; keep in-memory values representable.
    return a.astype(np.float32).astype(np.float64)


def init_model(arch: MlpArchitecture, scaler: FeatureScaler | None, rng: SeededRng) -> MlpModel:
    """Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases."""
    weights, biases = [], []
    for out_dim, in_dim in arch.layer_shapes():
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        weights.append(_snap32(rng.uniform(-bound, bound, size=(out_dim, in_dim))))
        biases.append(np.zeros(out_dim))
    if scaler is None:
        scaler = FeatureScaler.identity(arch.input_dim)
    return MlpModel(arch, weights, biases, scaler)


def _sigmoid(z):
    # exp of a non-positive argument only
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def forward_cache(model: MlpModel, x: np.ndarray):
    """Forward pass on pre-scaled features; returns probabilities and the layer activations."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.arch.input_dim:
        raise ValueError(f"feature width {x.shape[1]} != model input {model.arch.input_dim}")
    acts = [x]
    h = x
    for U, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ U.T + b, 0.0)
        acts.append(h)
    z = h @ model.weights[-1].T + model.biases[-1]
    return _sigmoid(z), acts


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    single = np.ndim(x) == 1
    p, _ = forward_cache(model, x)
    return p[0] if single else p


def predict(model: MlpModel, raw_features: np.ndarray, batch: int = 8192) -> np.ndarray:
    """Scale raw features with the model's scaler, then run :func:`forward`."""
    raw = np.atleast_2d(raw_features)
    out = np.empty((raw.shape[0], model.arch.output_dim))
    for s in range(0, raw.shape[0], batch):
        out[s:s + batch] = forward(model, model.scaler(raw[s:s + batch]))
    return out


def bce_loss(pred, labels, reduction: str = "mean") -> float:
    """Binary cross-entropy summed over outputs; ``sum`` or ``mean`` over samples."""
    p = np.clip(np.atleast_2d(pred), CLIP, 1.0 - CLIP)
    a = np.atleast_2d(labels).astype(np.float64)
    total = -np.sum(a * np.log(p) + (1.0 - a) * np.log1p(-p))
    if reduction == "sum":
        return float(total)
    if reduction == "mean":
        return float(total / p.shape[0])
    raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")


def backward(model: MlpModel, probs: np.ndarray, acts: list[np.ndarray], labels, reduction: str = "mean"):
    """Gradients of the clipped BCE with respect to every weight and bias.

    Returns ``(weight_grads, bias_grads)`` matching the model's lists.
    """
    a = np.atleast_2d(labels).astype(np.float64)
    n = probs.shape[0]
    inside = (probs > CLIP) & (probs < 1.0 - CLIP)
    delta = (probs - a) * inside
    if reduction == "mean":
        delta = delta / n
    n_layers = len(model.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for t in range(n_layers - 1, -1, -1):
        h_in = acts[t]
        gw[t] = delta.T @ h_in
        gb[t] = delta.sum(axis=0)
        if t > 0:
            delta = (delta @ model.weights[t]) * (h_in > 0)
    return gw, gb


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    init_seed: int = 7
    loss_reduction: str = "mean"
    min_delta: float = 1e-5
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, batch_size and max_epochs must be >= 1")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, t: int, cfg: TrainConfig) -> None:
    """In-place bias-corrected Adam update of ``params`` at step ``t`` (1-based)."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps_adam)
    state.t = t


@dataclass
class TrainResult:
    model: MlpModel
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")

    def trace_csv(self) -> str:
        lines = ["# units: epoch=count, train_loss=nats/sample, val_loss=nats/sample",
                 "epoch,train_loss,val_loss"]
        lines += [f"{e},{tr!r},{va!r}" for e, tr, va in self.trace]
        return "\n".join(lines) + "\n"


def _mean_loss(model, x, y, batch=8192):
    total = 0.0
    for s in range(0, x.shape[0], batch):
        p, _ = forward_cache(model, x[s:s + batch])
        total += bce_loss(p, y[s:s + batch], "sum")
    return total / x.shape[0]


def train(
    model: MlpModel,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    log=None,
) -> TrainResult:
    """Mini-batch Adam with early stopping; returns the best-validation snapshot.

    Inputs are raw features; the model's scaler is applied here. Training stops
    once the validation loss has failed to improve by ``min_delta`` for
    ``patience`` consecutive epochs, or after ``max_epochs``.
    """
    xs = model.scaler(x_train)
    ys = np.asarray(y_train, dtype=np.float64)
    xv = model.scaler(x_val)
    yv = np.asarray(y_val, dtype=np.float64)
    work = model.copy()
    params = work.params()
    state = AdamState.zeros_like(params)
    shuffle_rng = SeededRng(cfg.init_seed).split("shuffle")
    n_w = len(work.weights)
    n = xs.shape[0]
    result = TrainResult(model=model.copy())
    stale = 0
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        running = 0.0
        for bi, s in enumerate(range(0, n, cfg.batch_size)):
            idx = order[s:s + cfg.batch_size]
            probs, acts = forward_cache(work, xs[idx])
            batch_loss = bce_loss(probs, ys[idx], "sum")
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {bi}")
            running += batch_loss
            gw, gb = backward(work, probs, acts, ys[idx], cfg.loss_reduction)
            step += 1
            adam_step(params, gw + gb, state, step, cfg)
        train_loss = running / n
        val_loss = _mean_loss(work, xv, yv)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        result.trace.append((epoch, train_loss, val_loss))
        if log is not None:
            log(f"epoch {epoch:3d}  train {train_loss:.5f}  val {val_loss:.5f}")
        if val_loss < result.best_val_loss - cfg.min_delta:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            result.model = MlpModel(work.arch, [_snap32(w) for w in params[:n_w]],
                                    [_snap32(b) for b in params[n_w:]], work.scaler)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return result


# -- GFRM model format -------------------------------------------------------
# magic "GFRM" | u16 version | u32 input_dim | u32 Z | u32 V | u32 K
# | f64 scaler mean (D) | f64 scaler std (D) | per layer: f32 U_t (row-major), f32 b_t

_MODEL_MAGIC = b"GFRM"
_MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sHIIII")


def model_bytes(model: MlpModel) -> bytes:
    a = model.arch
    parts = [_MODEL_HEADER.pack(_MODEL_MAGIC, _MODEL_VERSION, a.input_dim, a.hidden_layers, a.hidden_width, a.output_dim),
             np.asarray(model.scaler.mean, dtype="<f8").tobytes(),
             np.asarray(model.scaler.std, dtype="<f8").tobytes()]
    for U, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(U, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(path, model: MlpModel) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(model_bytes(model))
    os.replace(tmp, path)


def parse_model(blob: bytes) -> MlpModel:
    if len(blob) < _MODEL_HEADER.size:
        raise ModelFormatError("truncated model header")
    magic, version, D, Z, V, K = _MODEL_HEADER.unpack_from(blob, 0)
    if magic != _MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {_MODEL_MAGIC!r}")
    if version != _MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    arch = MlpArchitecture(D, Z, V, K)
    expected = _MODEL_HEADER.size + 16 * D + 4 * sum(o * i + o for o, i in arch.layer_shapes())
    if len(blob) != expected:
        raise ModelFormatError(f"model file is {len(blob)} bytes, expected {expected}")
    off = _MODEL_HEADER.size
    mean = np.frombuffer(blob, "<f8", D, off).astype(np.float64)
    off += 8 * D
    std = np.frombuffer(blob, "<f8", D, off).astype(np.float64)
    off += 8 * D
    weights, biases = [], []
    for o, i in arch.layer_shapes():
        weights.append(np.frombuffer(blob, "<f4", o * i, off).astype(np.float64).reshape(o, i))
        off += 4 * o * i
        biases.append(np.frombuffer(blob, "<f4", o, off).astype(np.float64))
        off += 4 * o
    return MlpModel(arch, weights, biases, FeatureScaler(mean=mean, std=std))


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())
