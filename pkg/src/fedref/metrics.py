"""Forgetting measures, drift telemetry, empirical drift probability, rounds-to-target."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import UsageError
from .params import l2_dist_sq


class Orientation(str, Enum):
    LOWER_IS_BETTER = "lower_is_better"
    HIGHER_IS_BETTER = "higher_is_better"


@dataclass(frozen=True)
class EvalSeries:
    values: tuple[float, ...]
    orientation: Orientation = Orientation.LOWER_IS_BETTER
    metric_name: str = "metric"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise UsageError("series must have at least one value")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("series values must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    def __len__(self) -> int:
        return len(self.values)

    def as_lower_is_better(self) -> np.ndarray:
        v = np.array(self.values)
        return -v if self.orientation is Orientation.HIGHER_IS_BETTER else v


@dataclass
class RoundRecord:
    round: int
    global_loss: float
    eval: dict[str, float] = field(default_factory=dict)
    drift: float = 0.0
    lambda_ref: float = 0.0
    psi: float = 0.0
    global_loss_sum: float = 0.0


def forgetting_psi(series: EvalSeries, r: int, inclusive: bool = False) -> float:
    """Gap between the round-``r`` value and the best value seen so far (1-based ``r``).

    By default the best is taken over rounds strictly before ``r``, so the gap
    is negative when round ``r`` sets a new best. ``inclusive=True`` includes
    round ``r`` itself and is therefore never negative. Round 1 gives 0.
    """
    if not 1 <= r <= len(series):
        raise UsageError(f"round {r} outside 1..{len(series)}")
    if r == 1:
        return 0.0
    v = series.as_lower_is_better()
    best = v[:r].min() if inclusive else v[:r - 1].min()
    return float(v[r - 1] - best)


def psi_series(series: EvalSeries, inclusive: bool = False) -> list[float]:
    return [forgetting_psi(series, r, inclusive) for r in range(1, len(series) + 1)]


def split_psi(psi: float) -> tuple[float, float]:
    """Split into (degradation, improvement) parts; at most one is non-zero."""
    if not math.isfinite(psi):
        raise ValueError("psi must be finite")
    return (psi, 0.0) if psi > 0 else (0.0, -psi + 0.0)


def zeta(psis: Sequence[float]) -> tuple[float, float]:
    """Return ``(sum of |psi|, sum of psi)`` over all rounds."""
    if len(psis) == 0:
        raise UsageError("zeta needs at least one psi value")
    zeta_abs = 0.0
    zeta_signed = 0.0
    for p in psis:
        pos, neg = split_psi(p)
        zeta_abs += pos + neg
        zeta_signed += p
    return zeta_abs, zeta_signed


def drift_magnitude(theta_next, theta) -> float:
    return math.sqrt(l2_dist_sq(theta_next, theta))


class NeverExceeded:
    """Log-probability stand-in when no round crossed the drift threshold."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NEVER_EXCEEDED"

    def to_json(self) -> str:
        return "never_exceeded"


NEVER_EXCEEDED = NeverExceeded()


def empirical_udp(drifts: Sequence[float], delta: float) -> tuple[float, float | NeverExceeded]:
    """Fraction of rounds whose drift exceeds ``delta``, and its natural log."""
    if not delta > 0:
        raise UsageError("delta must be > 0")
    if len(drifts) == 0:
        raise UsageError("need at least one drift value")
    over = sum(1 for d in drifts if d > delta)
    p = over / len(drifts)
    return p, (math.log(p) if over else NEVER_EXCEEDED)


def rounds_to_target(series: EvalSeries, target: float) -> int | None:
    """First 1-based round at which the series meets or beats ``target``."""
    if not math.isfinite(target):
        raise UsageError("target must be finite")
    higher = series.orientation is Orientation.HIGHER_IS_BETTER
    for i, v in enumerate(series.values, start=1):
        if (v >= target) if higher else (v <= target):
            return i
    return None
