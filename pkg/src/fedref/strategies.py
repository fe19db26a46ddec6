"""Server-side aggregation: FedAvg, FedOpt (Adam/Yogi/Adagrad) and FedRef.

FedProx needs no server logic of its own; it is the FedAvg server paired
with proximal clients.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import UsageError
from .learner import ClientReport
from .params import ParameterVector, as_params, weighted_sum, _check_dims


def _client_weights(reports: Sequence[ClientReport]) -> np.ndarray:
    if not reports:
        raise UsageError("no client reports")
    n = np.array([r.sample_count for r in reports], dtype=np.float64)
    total = n.sum()
    if total <= 0:
        raise UsageError("total sample count is zero")
    return n / total


def fedavg_aggregate(reports: Sequence[ClientReport]) -> ParameterVector:
    return weighted_sum([r.params for r in reports], _client_weights(reports))


def aggregate_loss(reports: Sequence[ClientReport]) -> float:
    """Sample-weighted mean of the clients' reported losses."""
    w = _client_weights(reports)
    return float(sum(wi * r.mean_loss for wi, r in zip(w, reports)))


# ---------------------------------------------------------------------------
# FedOpt


class FedOptVariant(str, Enum):
    ADAM = "adam"
    YOGI = "yogi"
    ADAGRAD = "adagrad"


@dataclass(frozen=True)
class FedOptState:
    variant: FedOptVariant
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    eta_s: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "variant", FedOptVariant(self.variant))
        if not self.eta_s > 0:
            raise UsageError("eta_s must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise UsageError("beta1 and beta2 must lie in [0, 1)")
        if self.tau < 0:
            raise UsageError("tau must be >= 0")

    @classmethod
    def zeros(cls, variant, dim: int, **hyper) -> "FedOptState":
        return cls(variant, np.zeros(dim), np.zeros(dim), **hyper)


def fedopt_step(state: FedOptState, theta_prev: ParameterVector,
                theta_agg: ParameterVector) -> tuple[ParameterVector, FedOptState]:
    """One adaptive server step on the pseudo-gradient ``theta_prev - theta_agg``."""
    prev = np.asarray(theta_prev, dtype=np.float64)
    agg = np.asarray(theta_agg, dtype=np.float64)
    _check_dims(prev, agg, state.m)
    g = prev - agg
    g2 = g * g
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2

    if state.variant is FedOptVariant.ADAGRAD:
        m = state.m
        v = state.v + g2
        theta = prev - state.eta_s * g / (np.sqrt(v) + state.tau)
    else:
        m = b1 * state.m + (1 - b1) * g
        if state.variant is FedOptVariant.ADAM:
            v = b2 * state.v + (1 - b2) * g2
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            theta = prev - state.eta_s * m_hat / (np.sqrt(v_hat) + state.tau)
        else:
            v = state.v - (1 - b2) * np.sign(state.v - g2) * g2
            theta = prev - state.eta_s * m / (np.sqrt(v) + state.tau)

    return as_params(theta), replace(state, m=m, v=v, step_count=t)


# ---------------------------------------------------------------------------
# FedRef


class ReferenceBuffer:
    """Ring buffer of the last ``capacity`` global models, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise UsageError("reference buffer capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[ParameterVector] = deque(maxlen=capacity)

    def push(self, params: ParameterVector) -> None:
        params = as_params(params)
        if self._entries and self._entries[0].shape != params.shape:
            raise UsageError("all buffer entries must share one dimension")
        self._entries.append(params)

    @property
    def entries(self) -> list[ParameterVector]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def is_full(self) -> bool:
        return len(self._entries) == self.capacity


def reference_weights(rho: int) -> np.ndarray:
    """Weights for the reference model, newest first: ``(rho - i + 1) / sum(1..rho)``."""
    if rho < 1:
        raise UsageError("rho must be >= 1")
    phi = rho * (rho + 1) // 2
    return np.array([(rho - i + 1) / phi for i in range(1, rho + 1)])


def ref_estimate(buffer: ReferenceBuffer) -> ParameterVector:
    if not buffer.is_full():
        raise UsageError(f"reference buffer holds {len(buffer)} of {buffer.capacity} models")
    newest_first = buffer.entries[::-1]
    return weighted_sum(newest_first, reference_weights(buffer.capacity))


@dataclass(frozen=True)
class LambdaSchedule:
    """Step schedule for the reference penalty, multiplied every ``sigma_r`` rounds."""

    lambda_ref_0: float = 1e-6
    lambda_ref_top: float = 5e-3
    sigma_r: int = 10
    sigma_w: float = 10.0
    current: float | None = None

    def __post_init__(self):
        if self.lambda_ref_0 < 0 or self.lambda_ref_top < 0:
            raise UsageError("lambda_ref_0 and lambda_ref_top must be >= 0")
        if self.sigma_r < 1:
            raise UsageError("sigma_r must be >= 1")
        if not self.sigma_w > 1:
            raise UsageError("sigma_w must be > 1")
        if self.current is None:
            object.__setattr__(self, "current", min(self.lambda_ref_0, self.lambda_ref_top))


def lambda_tick(schedule: LambdaSchedule, r: int) -> LambdaSchedule:
    if r < 1:
        raise UsageError("round must be >= 1")
    if r % schedule.sigma_r != 0:
        return schedule
    # Multiply the shortest decimal forms so 1e-6 * 10 lands on 1e-5 rather than
    # accumulating binary rounding across ticks.
    lam = float(Decimal(repr(schedule.current)) * Decimal(repr(schedule.sigma_w)))
    if schedule.lambda_ref_top <= lam:
        lam = schedule.lambda_ref_top
    return replace(schedule, current=lam)


@dataclass(frozen=True)
class FedRefConfig:
    lambda_g: float = 0.01
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    rho: int = 3
    server_eta: float = 1.0
    # Drop the reference anchor, leaving only the previous-global penalty.
    literal_l2: bool = False

    def __post_init__(self):
        if self.lambda_g < 0:
            raise UsageError("lambda_g must be >= 0")
        if self.rho < 1:
            raise UsageError("rho must be >= 1")
        if self.server_eta < 0:
            raise UsageError("server_eta must be >= 0")


def fedref_gradient(theta_agg, theta_prev_global, theta_ref, lambda_g: float,
                    lambda_ref: float) -> np.ndarray:
    """Gradient of the two L2 anchors at ``theta_agg``.

    The client-loss term is a constant at the server (it holds no data) and
    contributes nothing.
    """
    agg = np.asarray(theta_agg, dtype=np.float64)
    prev = np.asarray(theta_prev_global, dtype=np.float64)
    ref = np.asarray(theta_ref, dtype=np.float64)
    _check_dims(agg, prev, ref)
    return 2.0 * lambda_g * (agg - prev) + 2.0 * lambda_ref * (agg - ref)


def fedref_finetune(theta_agg: ParameterVector, theta_prev_global: ParameterVector,
                    theta_ref: ParameterVector, F_g: float, cfg: FedRefConfig,
                    lambda_ref: float | None = None) -> ParameterVector:
    """Single gradient step on the anchored server objective.

    ``F_g`` is accepted for telemetry symmetry only; it does not move the step.
    ``lambda_ref`` defaults to the schedule's current value.
    """
    lam_ref = cfg.schedule.current if lambda_ref is None else lambda_ref
    if lam_ref < 0:
        raise UsageError("lambda_ref must be >= 0")
    if cfg.literal_l2:
        lam_ref = 0.0
    g = fedref_gradient(theta_agg, theta_prev_global, theta_ref, cfg.lambda_g, lam_ref)
    return as_params(np.asarray(theta_agg, dtype=np.float64) - cfg.server_eta * g)


@dataclass
class FedRefState:
    """Mutable server state for FedRef, owned by the round loop."""

    cfg: FedRefConfig
    global_params: ParameterVector
    schedule: LambdaSchedule = None
    buffer: ReferenceBuffer = None
    last_F_g: float = float("nan")
    # Penalty actually used in the most recent round (0 during warm-up).
    applied_lambda_ref: float = 0.0

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = self.cfg.schedule
        if self.buffer is None:
            self.buffer = ReferenceBuffer(self.cfg.rho)



def fedref_round(state: FedRefState, reports: Sequence[ClientReport],
                 r: int) -> tuple[ParameterVector, FedRefState]:
    """Advance FedRef by one round; the returned model is what gets broadcast.

    Rounds ``r <= rho`` are plain FedAvg while the buffer fills. The buffer
    always receives the broadcast (post fine-tune) model.
    """
    state.last_F_g = aggregate_loss(reports)
    agg = fedavg_aggregate(reports)
    if r <= state.cfg.rho:
        new = agg
        state.applied_lambda_ref = 0.0
    else:
        state.schedule = lambda_tick(state.schedule, r)
        ref = ref_estimate(state.buffer)
        new = fedref_finetune(agg, state.global_params, ref, state.last_F_g, state.cfg,
                              lambda_ref=state.schedule.current)
        state.applied_lambda_ref = 0.0 if state.cfg.literal_l2 else state.schedule.current
    state.buffer.push(new)
    state.global_params = new
    return new, state
