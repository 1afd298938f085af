"""Learning-curve metrics: transfer rate, jumpstart and convergence iteration."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoBaselineError


@dataclass(frozen=True, eq=False)
class LearningCurve:
    iterations: np.ndarray
    success: np.ndarray

    def __post_init__(self) -> None:
        it = np.asarray(self.iterations)
        su = np.asarray(self.success, dtype=float)
        object.__setattr__(self, "iterations", it)
        object.__setattr__(self, "success", su)
        if it.shape != su.shape or it.ndim != 1:
            raise DomainError("iterations and success must be 1-D arrays of equal length")
        if len(it) > 1 and not np.all(np.diff(it) > 0):
            raise DomainError("iterations must be strictly increasing")
        if len(su) and (su.min() < 0 or su.max() > 100):
            raise DomainError("success values must lie in [0, 100]")

    def __len__(self) -> int:
        return len(self.iterations)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LearningCurve):
            return NotImplemented
        return np.array_equal(self.iterations, other.iterations) and np.array_equal(self.success, other.success)

    def to_csv(self) -> str:
        rows = ["# herdtransfer learning curve v1", "iteration,success"]
        rows += [f"{int(i)},{float(s)!r}" for i, s in zip(self.iterations, self.success)]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> LearningCurve:
        its, vals = [], []
        for ln in text.splitlines():
            if not ln.strip() or ln.startswith("#") or ln.startswith("iteration"):
                continue
            i, s = ln.split(",")
            its.append(int(i))
            vals.append(float(s))
        return cls(np.array(its, dtype=np.int64), np.array(vals))


def area_under(curve: LearningCurve) -> float:
    return float(np.trapezoid(curve.success, curve.iterations))


def transfer_rate(with_transfer: LearningCurve, without_transfer: LearningCurve) -> float:
    """Relative gain in area under the curve; both curves must share one sampling grid."""
    if not np.array_equal(with_transfer.iterations, without_transfer.iterations):
        raise DomainError("curves are sampled on different iteration grids")
    base = area_under(without_transfer)
    if base == 0:
        raise NoBaselineError("the baseline curve has zero area")
    return (area_under(with_transfer) - base) / base


def jumpstart(curve: LearningCurve, window_fraction: float = 0.05) -> float:
    """Mean success over the first ``window_fraction`` of the samples."""
    if not 0 < window_fraction <= 1:
        raise DomainError(f"window fraction must be in (0, 1], got {window_fraction}")
    n = math.ceil(window_fraction * len(curve) - 1e-9)
    if n < 2:
        raise DomainError(f"jumpstart window holds {n} sample(s); need at least 2")
    return math.fsum(curve.success[:n]) / n


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what is available."""
    if window < 1:
        raise DomainError("window must be positive")
    c = np.cumsum(np.concatenate([[0.0], np.asarray(values, dtype=float)]))
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def convergence_iteration(curve: LearningCurve, tolerance: float = 2.0, window: int = 20) -> int:
    """First sampled iteration from which the smoothed curve stays within ``tolerance`` of its final value."""
    if len(curve) == 0:
        raise DomainError("empty curve")
    smooth = moving_average(curve.success, window)
    off = np.abs(smooth - smooth[-1]) > tolerance
    if not off.any():
        return int(curve.iterations[0])
    last_off = int(np.nonzero(off)[0][-1])
    return int(curve.iterations[min(last_off + 1, len(curve) - 1)])
