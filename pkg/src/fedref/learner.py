"""Client-side models, softmax cross-entropy with analytic gradients, and local SGD."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionError, UsageError
from .params import ParameterVector, as_params


class ModelKind(str, Enum):
    LOGISTIC = "logistic_regression"
    MLP = "mlp_one_hidden"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    input_dim: int
    num_classes: int
    hidden_dim: int = 16
    init_scale: float = 0.1
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.input_dim < 1:
            raise UsageError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise UsageError("num_classes must be >= 2")
        if self.kind is ModelKind.MLP and self.hidden_dim < 1:
            raise UsageError("hidden_dim must be >= 1")
        if self.init_scale < 0:
            raise UsageError("init_scale must be >= 0")

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        d, c = self.input_dim, self.num_classes
        if self.kind is ModelKind.LOGISTIC:
            return [(d, c), (c,)]
        h = self.hidden_dim
        return [(d, h), (h,), (h, c), (c,)]

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise UsageError(f"batch features must be a non-empty matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise UsageError(f"{x.shape[0]} feature rows but {y.shape} labels")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)


@dataclass(frozen=True)
class LocalTrainConfig:
    epochs: int = 3
    batch_size: int = 32
    learning_rate: float = 0.05
    proximal_mu: float = 0.0
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be > 0")
        if self.proximal_mu < 0:
            raise UsageError("proximal_mu must be >= 0")


@dataclass(frozen=True)
class ClientReport:
    """What a client sends back after a round of local training.

    ``mean_loss`` is the per-step average of training losses (the value the
    server weights); ``loss_sum`` is the raw sum over steps, kept for telemetry.
    """

    params: ParameterVector
    mean_loss: float
    sample_count: int
    loss_sum: float = 0.0
    steps: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise UsageError("sample_count must be >= 1")
        if not np.isfinite(self.mean_loss):
            raise ValueError("mean_loss must be finite")


def init_model(spec: ModelSpec) -> ParameterVector:
    rng = np.random.default_rng(spec.init_seed)
    return as_params(spec.init_scale * rng.standard_normal(spec.num_params))


def unpack(spec: ModelSpec, params: ParameterVector) -> list[np.ndarray]:
    params = np.asarray(params)
    if params.shape != (spec.num_params,):
        raise DimensionError(f"model expects {spec.num_params} parameters, got {params.shape}")
    out, start = [], 0
    for shape in spec.shapes:
        size = int(np.prod(shape))
        out.append(params[start:start + size].reshape(shape))
        start += size
    return out


def logits(spec: ModelSpec, params: ParameterVector, features: np.ndarray) -> np.ndarray:
    parts = unpack(spec, params)
    if spec.kind is ModelKind.LOGISTIC:
        w, b = parts
        return features @ w + b
    w1, b1, w2, b2 = parts
    return np.tanh(features @ w1 + b1) @ w2 + b2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(spec: ModelSpec, params: ParameterVector, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over ``batch`` and its exact gradient."""
    x, y = batch.features, batch.labels
    if x.shape[1] != spec.input_dim:
        raise DimensionError(f"batch has {x.shape[1]} features, model expects {spec.input_dim}")
    n = x.shape[0]
    parts = unpack(spec, params)
    rows = np.arange(n)

    if spec.kind is ModelKind.LOGISTIC:
        w, b = parts
        logp = _log_softmax(x @ w + b)
        dz = np.exp(logp)
        dz[rows, y] -= 1.0
        dz /= n
        grads = [x.T @ dz, dz.sum(axis=0)]
    else:
        w1, b1, w2, b2 = parts
        hid = np.tanh(x @ w1 + b1)
        logp = _log_softmax(hid @ w2 + b2)
        dz = np.exp(logp)
        dz[rows, y] -= 1.0
        dz /= n
        dpre = (dz @ w2.T) * (1.0 - hid ** 2)
        grads = [x.T @ dpre, dpre.sum(axis=0), hid.T @ dz, dz.sum(axis=0)]

    loss = float(-logp[rows, y].mean())
    return loss, np.concatenate([g.ravel() for g in grads])


def predict(spec: ModelSpec, params: ParameterVector, features: np.ndarray) -> np.ndarray:
    return np.argmax(logits(spec, params, np.asarray(features, dtype=np.float64)), axis=1)


def local_train(spec: ModelSpec, global_params: ParameterVector, data: Batch,
                cfg: LocalTrainConfig) -> ClientReport:
    """Run ``cfg.epochs`` passes of mini-batch SGD on ``data`` starting at ``global_params``.

    With ``proximal_mu > 0`` each step also descends ``(mu/2)||theta - global||^2``.
    The final partial batch of every epoch is kept.
    """
    theta_g = np.asarray(global_params, dtype=np.float64)
    if theta_g.shape != (spec.num_params,):
        raise DimensionError(f"model expects {spec.num_params} parameters, got {theta_g.shape}")
    n = data.features.shape[0]
    if n == 0:
        raise UsageError("client has no data")

    if cfg.epochs == 0:
        loss, _ = loss_and_grad(spec, theta_g, data)
        return ClientReport(as_params(theta_g), loss, n, loss_sum=loss, steps=0)

    rng = np.random.default_rng(cfg.shuffle_seed)
    theta = theta_g.copy()
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grad = loss_and_grad(spec, theta, Batch(data.features[idx], data.labels[idx]))
            if cfg.proximal_mu > 0:
                grad = grad + cfg.proximal_mu * (theta - theta_g)
            theta = theta - cfg.learning_rate * grad
            losses.append(loss)

    total = float(np.sum(losses))
    return ClientReport(as_params(theta), total / len(losses), n, loss_sum=total, steps=len(losses))
