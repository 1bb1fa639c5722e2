"""Leave-one-out screening of flow frames and temporal repair of flagged ones."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fields import FlowField, flow_magnitude

STATISTICS = ("max", "mean")
DEVIATIONS = ("sqrt_mad", "std")


@dataclass(frozen=True)
class OutlierParams:
    """``deviation='sqrt_mad'`` is the square root of the mean absolute
    deviation (N-1 normalized); ``'std'`` is the sample standard deviation."""

    kappa: float = 5.0
    statistic: str = "max"
    deviation: str = "sqrt_mad"

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.statistic not in STATISTICS:
            raise ValueError(f"statistic must be one of {STATISTICS}")
        if self.deviation not in DEVIATIONS:
            raise ValueError(f"deviation must be one of {DEVIATIONS}")


def frame_statistic(flow: FlowField, statistic: str = "max") -> np.ndarray:
    mag = flow_magnitude(flow).reshape(flow.frames, -1)
    return mag.max(axis=1) if statistic == "max" else mag.mean(axis=1)


def loo_outliers(stats: np.ndarray, kappa: float, deviation: str = "sqrt_mad") -> list[int]:
    """Indices whose leave-one-out mean lies more than ``kappa`` spreads from
    the mean of all leave-one-out means.

    With ``S`` the total and ``w_i = S - n*s_i``, the deviation of the i-th
    leave-one-out mean is ``w_i / (n (n-1))``.  The inequality is squared and
    evaluated on ``w`` in exact rational arithmetic, so ties (constant input)
    and extreme magnitudes are decided exactly.
    """
    stats = np.asarray(stats, dtype=np.float64)
    n = stats.size
    if n < 3:
        raise ValueError("outlier screening needs at least 3 frames")
    if not np.all(np.isfinite(stats)):
        raise ValueError("frame statistics must be finite")
    exact = [Fraction(float(x)) for x in stats]
    total = sum(exact)
    w = [total - n * x for x in exact]
    k2 = Fraction(float(kappa)) ** 2
    if deviation == "sqrt_mad":
        bound = k2 * n * sum(abs(x) for x in w)
    else:
        bound = k2 * sum(x * x for x in w) / (n - 1)
    return [i for i, x in enumerate(w) if x * x > bound]


def detect_outlier_frames(flow: FlowField, params: OutlierParams | None = None) -> list[int]:
    """Indices of frames whose leave-one-out mean deviates by more than
    ``kappa`` spreads from the mean of all leave-one-out means."""
    params = params or OutlierParams()
    if flow.frames < 3:
        raise ValueError("outlier screening needs at least 3 frames")
    return loo_outliers(frame_statistic(flow, params.statistic), params.kappa, params.deviation)


def repair_frames(flow: FlowField, bad) -> FlowField:
    """Replace ``bad`` frames by linear interpolation between the nearest
    clean frames; leading/trailing runs copy the nearest clean frame."""
    bad_set = {int(b) for b in bad}
    if not bad_set:
        return flow
    if any(b < 0 or b >= flow.frames for b in bad_set):
        raise IndexError("bad frame index out of range")
    clean = [t for t in range(flow.frames) if t not in bad_set]
    if not clean:
        raise ValueError("every frame is flagged; nothing to interpolate from")

    vx = flow.vx.copy()
    vy = flow.vy.copy()
    clean_arr = np.array(clean)
    for i in sorted(bad_set):
        k = np.searchsorted(clean_arr, i)
        if k == 0:
            vx[i], vy[i] = flow.vx[clean[0]], flow.vy[clean[0]]
        elif k == len(clean):
            vx[i], vy[i] = flow.vx[clean[-1]], flow.vy[clean[-1]]
        else:
            a, b = clean[k - 1], clean[k]
            w = (i - a) / (b - a)
            vx[i] = flow.vx[a] + w * (flow.vx[b] - flow.vx[a])
            vy[i] = flow.vy[a] + w * (flow.vy[b] - flow.vy[a])
    return FlowField(vx, vy)
