"""Multi-object tracking: constant-acceleration Kalman filter per track,
optimal gated assignment of detections to predicted positions."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detection import Region
from .errors import KalmanError

# state: (row, col, v_row, v_col, a_row, a_col), unit time step
TRANSITION = np.array(
    [
        [1, 0, 1, 0, 0.5, 0],
        [0, 1, 0, 1, 0, 0.5],
        [0, 0, 1, 0, 1, 0],
        [0, 0, 0, 1, 0, 1],
        [0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 1],
    ],
    dtype=np.float64,
)
OBSERVATION = np.array([[1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0]], dtype=np.float64)

# per-axis noise gain of a piecewise-constant acceleration increment
_G = np.array([0.5, 1.0, 1.0])
_AXIS_Q = np.outer(_G, _G)


def _process_noise(q: float) -> np.ndarray:
    Q = np.zeros((6, 6))
    for axis in (0, 1):
        idx = [axis, axis + 2, axis + 4]
        Q[np.ix_(idx, idx)] = q * _AXIS_Q
    return Q


@dataclass(frozen=True, eq=False)
class KalmanCA:
    state: np.ndarray
    covariance: np.ndarray
    q: float = 1e-2
    r: float = 1.0

    @property
    def position(self) -> tuple[float, float]:
        return float(self.state[0]), float(self.state[1])

    @classmethod
    def initiate(cls, row: float, col: float, q: float = 1e-2, r: float = 1.0,
                 velocity_var: float = 100.0, acceleration_var: float = 10.0) -> "KalmanCA":
        state = np.array([row, col, 0.0, 0.0, 0.0, 0.0])
        cov = np.diag([r, r, velocity_var, velocity_var, acceleration_var, acceleration_var])
        return cls(state, cov, q, r)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def kalman_predict(k: KalmanCA) -> KalmanCA:
    x = TRANSITION @ k.state
    P = TRANSITION @ k.covariance @ TRANSITION.T + _process_noise(k.q)
    return replace(k, state=x, covariance=_symmetrize(P))


def kalman_update(k: KalmanCA, measurement) -> KalmanCA:
    """Position-only correction (Joseph form)."""
    z = np.asarray(measurement, dtype=np.float64)
    R = k.r * np.eye(2)
    S = OBSERVATION @ k.covariance @ OBSERVATION.T + R
    try:
        if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned")
        S_inv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise KalmanError(f"singular innovation covariance (r={k.r})") from exc
    K = k.covariance @ OBSERVATION.T @ S_inv
    x = k.state + K @ (z - OBSERVATION @ k.state)
    I_KH = np.eye(6) - K @ OBSERVATION
    P = I_KH @ k.covariance @ I_KH.T + K @ R @ K.T
    return replace(k, state=x, covariance=_symmetrize(P))


# --------------------------------------------------------------------------
# Assignment


@dataclass(frozen=True)
class Matching:
    pairs: list[tuple[int, int]]
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def assign(cost, gate: float = np.inf) -> Matching:
    """Optimal one-to-one matching restricted to pairs with ``cost <= gate``.

    Among gated matchings the one with the most pairs wins, then the
    smallest total cost.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n_t, n_d = cost.shape
    if n_t == 0 or n_d == 0:
        return Matching([], list(range(n_t)), list(range(n_d)))
    allowed = cost <= gate
    finite = cost[allowed]
    # a forbidden pair costs more than any complete set of allowed pairs
    big = (finite.sum() + 1.0) * (min(n_t, n_d) + 1) if finite.size else 1.0
    work = np.where(allowed, cost, big)
    rows, cols = linear_sum_assignment(work)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c]]
    mt = {p[0] for p in pairs}
    md = {p[1] for p in pairs}
    return Matching(
        pairs,
        [i for i in range(n_t) if i not in mt],
        [j for j in range(n_d) if j not in md],
    )


# --------------------------------------------------------------------------
# Track lifecycle


@dataclass(frozen=True)
class TrackerParams:
    gate_distance: float = 30.0
    max_misses: int = 5
    min_hits: int = 3
    q: float = 1e-2
    r: float = 1.0

    def __post_init__(self):
        for name in ("gate_distance", "max_misses", "min_hits", "q", "r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TrackRecord:
    frame: int
    row: float
    col: float
    bbox: tuple[int, int, int, int] | None
    matched: bool


@dataclass(frozen=True, eq=False)
class Track:
    id: int
    kalman: KalmanCA
    age: int = 0
    hits: int = 1
    misses: int = 0
    history: tuple[TrackRecord, ...] = ()

    def confirmed(self, min_hits: int) -> bool:
        return self.hits >= min_hits


@dataclass(frozen=True, eq=False)
class TrackSet:
    active: tuple[Track, ...] = ()
    retired: tuple[Track, ...] = ()
    next_id: int = 0
    frame: int = 0

    def all_tracks(self) -> list[Track]:
        return sorted(self.active + self.retired, key=lambda t: t.id)

    def to_dict(self, min_hits: int = 1) -> dict:
        return {
            "tracks": [
                {
                    "id": t.id,
                    "confirmed": t.confirmed(min_hits),
                    "frames": [
                        {
                            "frame": h.frame,
                            "row": h.row,
                            "col": h.col,
                            "bbox": list(h.bbox) if h.bbox is not None else None,
                            "matched": h.matched,
                        }
                        for h in t.history
                    ],
                }
                for t in self.all_tracks()
            ]
        }


def _shift_bbox(bbox, row: float, col: float):
    if bbox is None:
        return None
    top, left, h, w = bbox
    return (int(round(row - (h - 1) / 2)), int(round(col - (w - 1) / 2)), h, w)


def step_tracks(tracks: TrackSet, detections: list[Region], params: TrackerParams | None = None) -> TrackSet:
    """Advance every track by one frame and absorb this frame's detections."""
    params = params or TrackerParams()
    frame = tracks.frame
    predicted = [replace(t, kalman=kalman_predict(t.kalman)) for t in tracks.active]

    cost = np.zeros((len(predicted), len(detections)))
    for i, t in enumerate(predicted):
        pr, pc = t.kalman.position
        for j, d in enumerate(detections):
            cost[i, j] = np.hypot(d.centroid[0] - pr, d.centroid[1] - pc)
    matching = assign(cost, params.gate_distance)

    survivors: list[Track] = []
    retired = list(tracks.retired)
    for i, j in matching.pairs:
        t = predicted[i]
        d = detections[j]
        k = kalman_update(t.kalman, d.centroid)
        rec = TrackRecord(frame, *k.position, tuple(d.bbox), True)
        survivors.append(replace(t, kalman=k, age=t.age + 1, hits=t.hits + 1, misses=0,
                                 history=t.history + (rec,)))
    for i in matching.unmatched_tracks:
        t = predicted[i]
        row, col = t.kalman.position
        last_bbox = t.history[-1].bbox if t.history else None
        rec = TrackRecord(frame, row, col, _shift_bbox(last_bbox, row, col), False)
        t = replace(t, age=t.age + 1, misses=t.misses + 1, history=t.history + (rec,))
        if t.misses > params.max_misses:
            retired.append(t)
        else:
            survivors.append(t)

    next_id = tracks.next_id
    for j in matching.unmatched_detections:
        d = detections[j]
        k = KalmanCA.initiate(d.centroid[0], d.centroid[1], params.q, params.r)
        rec = TrackRecord(frame, d.centroid[0], d.centroid[1], tuple(d.bbox), True)
        survivors.append(Track(next_id, k, history=(rec,)))
        next_id += 1

    survivors.sort(key=lambda t: t.id)
    return TrackSet(tuple(survivors), tuple(retired), next_id, frame + 1)


def track_sequence(regions_per_frame: list[list[Region]], params: TrackerParams | None = None) -> TrackSet:
    ts = TrackSet()
    for regs in regions_per_frame:
        ts = step_tracks(ts, regs, params)
    return ts
