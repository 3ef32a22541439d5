"""Fully-connected evidence network trained by mini-batch SGD.

The network maps a feature vector through ReLU hidden layers to two
non-negative outputs, the per-class evidence (e_pos, e_neg). Inverted
dropout is applied after the last hidden layer in train mode only, so eval
mode is deterministic and needs no rescaling. The evidence head uses ReLU
by default; a softplus variant is available for dead-unit pathologies.

Gradients are exact (hand-derived backprop through the evidential loss,
the head activation, ReLU and the active dropout mask). Training is
single-threaded and bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .datasets import Dataset
from .errors import ConfigError, ShapeMismatchError, TrainingDivergedError
from .evidence import LambdaSchedule, lambda_at, loss_grad, total_loss

__all__ = [
    "NetworkParams",
    "TrainConfig",
    "EpochStats",
    "TrainedModel",
    "init_params",
    "forward",
    "dropout_mask",
    "loss_and_grad",
    "gradient_check",
    "train",
    "save_model",
    "load_model",
]

MODEL_MAGIC = b"EVDL"
MODEL_FORMAT_VERSION = 1


@dataclass
class NetworkParams:
    """Dense layer weights/biases plus the head configuration.

    ``weights[i]`` has shape (fan_in, fan_out); the final layer always has
    fan_out = 2 (the two evidence outputs).
    """

    weights: list
    biases: list
    dropout: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must be parallel non-empty lists")
        if self.weights[-1].shape[1] != 2:
            raise ValueError("output layer width must be exactly 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.dropout}")
        if self.activation not in ("relu", "softplus"):
            raise ConfigError(f"unknown evidence activation {self.activation!r}")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ValueError("bias width must match weight fan-out")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.dropout,
            self.activation,
        )


def init_params(
    input_dim: int,
    hidden_sizes,
    rng: np.random.Generator,
    dropout: float = 0.0,
    activation: str = "relu",
) -> NetworkParams:
    """He-style uniform init scaled by fan-in; biases start at zero."""
    sizes = [int(input_dim), *(int(h) for h in hidden_sizes), 2]
    if any(s < 1 for s in sizes):
        raise ConfigError("layer sizes must be positive")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases, dropout=dropout, activation=activation)


def dropout_mask(params: NetworkParams, n: int, rng: np.random.Generator):
    """Inverted-dropout mask for the last hidden activation, or None if rate 0."""
    if params.dropout == 0.0:
        return None
    width = params.weights[-1].shape[0]
    keep = rng.random((n, width)) >= params.dropout
    return keep / (1.0 - params.dropout)


def _head(params: NetworkParams, z_out: np.ndarray):
    # Returns (evidence, d evidence / d preactivation).
    if params.activation == "relu":
        return np.maximum(z_out, 0.0), (z_out > 0.0).astype(float)
    ev = np.logaddexp(0.0, z_out)
    return ev, expit(z_out)


def _forward_full(params: NetworkParams, X: np.ndarray, mask):
    acts = [X]
    pre = []
    a = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ w + b
        a = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(a)
    if mask is not None:
        a = a * mask
    z_out = a @ params.weights[-1] + params.biases[-1]
    evidence, d_ev = _head(params, z_out)
    return pre, acts, a, evidence, d_ev


def _as_batch(params: NetworkParams, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ShapeMismatchError(
            f"expected {params.input_dim} features, got input of shape {np.shape(x)}"
        )
    return X, single


def forward(params: NetworkParams, x, train: bool = False, rng=None):
    """Per-sample evidence (e_pos, e_neg) >= 0.

    Eval mode (default) is a pure function of (params, x). Train mode
    applies a fresh dropout mask drawn from ``rng``.
    """
    X, single = _as_batch(params, x)
    mask = None
    if train and params.dropout > 0.0:
        if rng is None:
            raise ValueError("train-mode forward with dropout requires an rng")
        mask = dropout_mask(params, len(X), rng)
    evidence = _forward_full(params, X, mask)[3]
    return evidence[0] if single else evidence


def loss_and_grad(params: NetworkParams, X, y, lam: float, mask=None):
    """Mean total loss over the batch and its exact parameter gradients.

    ``mask`` is an inverted-dropout mask for the last hidden activation (as
    produced by ``dropout_mask``) or None; passing it explicitly keeps the
    gradient checkable against finite differences of the same masked loss.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(X)
    if n == 0:
        raise ConfigError("batch must be non-empty")
    pre, acts, a_drop, evidence, d_ev = _forward_full(params, X, mask)
    alpha = evidence[:, 0] + 1.0
    beta = evidence[:, 1] + 1.0
    if not np.isfinite(alpha).all() or not np.isfinite(beta).all():
        # Loss diverged; report NaN instead of tripping special-function
        # domain checks, so training can raise a diverged error.
        zeros = (
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )
        return float("nan"), zeros
    loss = float(np.mean(total_loss(y, alpha, beta, lam)))
    d_alpha, d_beta = loss_grad(y, alpha, beta, lam)
    dz_out = np.column_stack([d_alpha, d_beta]) * d_ev / n

    g_w = [None] * len(params.weights)
    g_b = [None] * len(params.biases)
    g_w[-1] = a_drop.T @ dz_out
    g_b[-1] = dz_out.sum(axis=0)
    da = dz_out @ params.weights[-1].T
    if mask is not None:
        da = da * mask
    for i in range(len(params.weights) - 2, -1, -1):
        dz = da * (pre[i] > 0.0)
        g_w[i] = acts[i].T @ dz
        g_b[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ params.weights[i].T
    return loss, (g_w, g_b)


def _flatten(params: NetworkParams) -> np.ndarray:
    return np.concatenate(
        [w.ravel() for w in params.weights] + [b.ravel() for b in params.biases]
    )


def _write_flat(params: NetworkParams, vec: np.ndarray) -> None:
    offset = 0
    for w in params.weights:
        w[...] = vec[offset : offset + w.size].reshape(w.shape)
        offset += w.size
    for b in params.biases:
        b[...] = vec[offset : offset + b.size]
        offset += b.size


def gradient_check(
    params: NetworkParams,
    X,
    y,
    lam: float,
    mask=None,
    step: float = 1e-5,
    abs_floor: float = 1e-6,
) -> float:
    """Max relative error of analytic gradients vs central finite differences."""
    _, (g_w, g_b) = loss_and_grad(params, X, y, lam, mask)
    analytic = np.concatenate([g.ravel() for g in g_w] + [g.ravel() for g in g_b])
    work = params.copy()
    theta = _flatten(work)
    numeric = np.empty_like(theta)
    for i in range(len(theta)):
        orig = theta[i]
        theta[i] = orig + step
        _write_flat(work, theta)
        up = loss_and_grad(work, X, y, lam, mask)[0]
        theta[i] = orig - step
        _write_flat(work, theta)
        down = loss_and_grad(work, X, y, lam, mask)[0]
        theta[i] = orig
        numeric[i] = (up - down) / (2.0 * step)
    _write_flat(work, theta)
    denom = np.maximum(np.abs(numeric), abs_floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 12
    patience: int = 3
    lambda_schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    dropout: float = 0.5
    hidden_sizes: tuple = (64, 64)
    activation: str = "relu"
    momentum: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if not self.hidden_sizes or any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be positive")
        if self.activation not in ("relu", "softplus"):
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None
    lam: float


@dataclass
class TrainedModel:
    params: NetworkParams
    config: TrainConfig
    history: list
    best_epoch: int


def train(train_ds: Dataset, val_ds: Dataset | None, cfg: TrainConfig) -> TrainedModel:
    """Mini-batch SGD on the evidential loss.

    Epoch shuffles and dropout masks flow from a single generator seeded by
    ``cfg.seed``, so the result is bit-identical across reruns. When a
    non-empty validation set is given, training stops once validation loss
    fails to improve for ``patience`` consecutive epochs (immediately at
    patience 0) and the best-epoch parameters are returned; without
    validation the final parameters are returned.
    """
    cfg.validate()
    if train_ds is None or len(train_ds) == 0:
        raise ConfigError("training data must be non-empty")
    use_val = val_ds is not None and len(val_ds) > 0
    rng = np.random.default_rng(cfg.seed)
    params = init_params(
        train_ds.dim, cfg.hidden_sizes, rng, dropout=cfg.dropout, activation=cfg.activation
    )
    X = train_ds.features
    y = train_ds.labels.astype(float)
    velocity = None
    if cfg.momentum > 0.0:
        velocity = [np.zeros_like(v) for v in params.weights + params.biases]

    history: list[EpochStats] = []
    best_val = np.inf
    best_params = None
    best_epoch = -1
    bad_streak = 0
    n = len(X)
    for epoch in range(cfg.max_epochs):
        lam = lambda_at(cfg.lambda_schedule, epoch, cfg.max_epochs)
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            mask = (
                dropout_mask(params, len(idx), rng) if params.dropout > 0.0 else None
            )
            loss, (g_w, g_b) = loss_and_grad(params, X[idx], y[idx], lam, mask)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            if velocity is None:
                for w, g in zip(params.weights, g_w):
                    w -= cfg.learning_rate * g
                for b, g in zip(params.biases, g_b):
                    b -= cfg.learning_rate * g
            else:
                grads = g_w + g_b
                for v, p, g in zip(velocity, params.weights + params.biases, grads):
                    v *= cfg.momentum
                    v += g
                    p -= cfg.learning_rate * v
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))

        val_loss = None
        if use_val:
            ev = forward(params, val_ds.features)
            if not np.isfinite(ev).all():
                raise TrainingDivergedError(epoch)
            val_loss = float(
                np.mean(
                    total_loss(
                        val_ds.labels.astype(float), ev[:, 0] + 1.0, ev[:, 1] + 1.0, lam
                    )
                )
            )
        history.append(EpochStats(epoch, train_loss, val_loss, lam))

        if use_val:
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
                best_epoch = epoch
                bad_streak = 0
            else:
                bad_streak += 1
                if bad_streak >= max(1, cfg.patience):
                    break
    if best_params is None:
        best_params = params
        best_epoch = len(history) - 1
    return TrainedModel(best_params, copy.deepcopy(cfg), history, best_epoch)


def _meta_lines(model: TrainedModel) -> str:
    cfg = model.config
    sched = cfg.lambda_schedule
    pairs = [
        ("dropout", cfg.dropout),
        ("activation", cfg.activation),
        ("seed", cfg.seed),
        ("epochs_trained", len(model.history)),
        ("best_epoch", model.best_epoch),
        ("learning_rate", cfg.learning_rate),
        ("batch_size", cfg.batch_size),
        ("max_epochs", cfg.max_epochs),
        ("patience", cfg.patience),
        ("momentum", cfg.momentum),
        ("hidden_sizes", ",".join(str(h) for h in cfg.hidden_sizes)),
        ("lambda_initial", sched.initial),
        ("lambda_decay_points", ",".join(repr(p) for p in sched.decay_points)),
        ("lambda_decayed_values", ",".join(repr(v) for v in sched.decayed_values)),
    ]
    return "".join(f"{k}={v}\n" for k, v in pairs)


def save_model(model: TrainedModel, path) -> None:
    """Write the flat binary parameter container plus a plain-text sidecar.

    Layout: magic "EVDL", u32 format version, u32 layer count, per-layer
    (u32 rows, u32 cols), then for each layer the weight matrix (row-major)
    followed by its bias vector, all little-endian float64. The sidecar
    ``<path>.meta`` echoes the training configuration.
    """
    path = Path(path)
    params = model.params
    blob = bytearray()
    blob += MODEL_MAGIC
    blob += struct.pack("<II", MODEL_FORMAT_VERSION, len(params.weights))
    for w in params.weights:
        blob += struct.pack("<II", w.shape[0], w.shape[1])
    for w, b in zip(params.weights, params.biases):
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    path.write_bytes(bytes(blob))
    Path(str(path) + ".meta").write_text(_meta_lines(model), encoding="utf-8")


def _parse_meta(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_model(path) -> TrainedModel:
    """Read a model container written by ``save_model``."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise ConfigError(f"{path}: not a model file (bad magic)")
    version, n_layers = struct.unpack("<II", data[4:12])
    if version != MODEL_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format version {version}")
    offset = 12
    dims = []
    for _ in range(n_layers):
        dims.append(struct.unpack("<II", data[offset : offset + 8]))
        offset += 8
    weights, biases = [], []
    for rows, cols in dims:
        w_bytes = rows * cols * 8
        weights.append(
            np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
            .reshape(rows, cols)
            .copy()
        )
        offset += w_bytes
        biases.append(np.frombuffer(data, dtype="<f8", count=cols, offset=offset).copy())
        offset += cols * 8
    if offset != len(data):
        raise ConfigError(f"{path}: trailing bytes in model file")

    meta_path = Path(str(path) + ".meta")
    cfg = TrainConfig()
    best_epoch = -1
    dropout = 0.0
    activation = "relu"
    if meta_path.exists():
        meta = _parse_meta(meta_path.read_text(encoding="utf-8"))
        dropout = float(meta.get("dropout", 0.0))
        activation = meta.get("activation", "relu")
        points = tuple(float(x) for x in meta.get("lambda_decay_points", "").split(",") if x) or (
            1.0 / 3.0,
            2.0 / 3.0,
        )
        values = tuple(
            float(x) for x in meta.get("lambda_decayed_values", "").split(",") if x
        ) or (0.1, 0.001)
        cfg = TrainConfig(
            learning_rate=float(meta.get("learning_rate", cfg.learning_rate)),
            batch_size=int(meta.get("batch_size", cfg.batch_size)),
            max_epochs=int(meta.get("max_epochs", cfg.max_epochs)),
            patience=int(meta.get("patience", cfg.patience)),
            lambda_schedule=LambdaSchedule(
                float(meta.get("lambda_initial", 1.0)), points, values
            ),
            dropout=dropout,
            hidden_sizes=tuple(
                int(h) for h in meta.get("hidden_sizes", "").split(",") if h
            )
            or cfg.hidden_sizes,
            activation=activation,
            momentum=float(meta.get("momentum", cfg.momentum)),
            seed=int(meta.get("seed", cfg.seed)),
        )
        best_epoch = int(meta.get("best_epoch", -1))
    params = NetworkParams(weights, biases, dropout=dropout, activation=activation)
    return TrainedModel(params, cfg, [], best_epoch)
