"""Tests for the constant-acceleration Kalman filter, gated assignment and
the track lifecycle."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbtrack.detection import Region
from turbtrack.errors import KalmanError
from turbtrack.tracking import (
    KalmanCA,
    TrackerParams,
    TrackSet,
    assign,
    kalman_predict,
    kalman_update,
    step_tracks,
    track_sequence,
)


def brute_force_min(cost):
    """Minimum total cost over every injective map of the smaller side."""
    n_t, n_d = cost.shape
    if n_t <= n_d:
        return min(sum(cost[i, p[i]] for i in range(n_t)) for p in itertools.permutations(range(n_d), n_t))
    return min(sum(cost[p[j], j] for j in range(n_d)) for p in itertools.permutations(range(n_t), n_d))


def _region(row, col, half=2):
    return Region((float(row), float(col)), (int(round(row)) - half, int(round(col)) - half, 2 * half + 1, 2 * half + 1),
                  (2 * half + 1) ** 2)


def _is_spd(P):
    if not np.allclose(P, P.T, atol=1e-9, rtol=0):
        return False
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True


# ---------------------------------------------------------------------------
# Kalman filter
# ---------------------------------------------------------------------------


def test_predict_constant_velocity():
    k = KalmanCA(np.array([0, 0, 1, 0, 0, 0.0]), np.eye(6))
    p = kalman_predict(k)
    assert p.position == (1.0, 0.0)
    assert np.array_equal(p.state[2:], [1, 0, 0, 0])


def test_predict_constant_acceleration():
    k = KalmanCA(np.array([0, 0, 0, 0, 1.0, 2.0]), np.eye(6))
    for _ in range(3):
        k = kalman_predict(k)
    # p = a t^2 / 2, v = a t
    assert np.allclose(k.state, [4.5, 9.0, 3.0, 6.0, 1.0, 2.0])


def test_zero_innovation_keeps_position():
    k = kalman_predict(KalmanCA.initiate(3.0, 4.0))
    u = kalman_update(k, k.position)
    assert abs(u.position[0] - k.position[0]) < 1e-12 and abs(u.position[1] - k.position[1]) < 1e-12


def test_tracks_unit_acceleration():
    k = KalmanCA.initiate(0.0, 0.0)
    for t in range(1, 21):
        k = kalman_update(kalman_predict(k), (0.5 * t * t, 0.0))
    assert abs(k.position[0] - 0.5 * 20 * 20) < 0.5


def test_degenerate_measurement_noise_raises():
    k = KalmanCA(np.zeros(6), np.zeros((6, 6)), r=0.0)
    with pytest.raises(KalmanError):
        kalman_update(k, (0.0, 0.0))


def test_covariance_spd_through_many_cycles():
    rng = np.random.default_rng(0)
    k = KalmanCA.initiate(0.0, 0.0, q=rng.uniform(1e-4, 1.0), r=rng.uniform(0.01, 10.0))
    for _ in range(1000):
        k = kalman_predict(k)
        assert _is_spd(k.covariance)
        k = kalman_update(k, rng.normal(scale=50, size=2))
        assert _is_spd(k.covariance)


def test_noisy_trajectory_rmse():
    rng = np.random.default_rng(1)
    t = np.arange(100.0)
    truth = np.stack([5 + 0.3 * t + 0.01 * t ** 2, 10 - 0.2 * t + 0.005 * t ** 2], axis=1)
    meas = truth + rng.normal(scale=0.5, size=truth.shape)
    k = KalmanCA.initiate(*meas[0])
    est = [k.position]
    for z in meas[1:]:
        k = kalman_update(kalman_predict(k), z)
        est.append(k.position)
    err = np.asarray(est)[20:] - truth[20:]
    assert np.sqrt(np.mean(np.sum(err ** 2, axis=1))) < 1.0


# ---------------------------------------------------------------------------
# Assignment
# ---------------------------------------------------------------------------


def test_assign_diagonal():
    m = assign([[1, 2], [2, 1]], gate=10)
    assert sorted(m.pairs) == [(0, 0), (1, 1)]
    assert m.unmatched_tracks == [] and m.unmatched_detections == []


def test_assign_gate_rejects():
    m = assign([[5.0]], gate=3)
    assert m.pairs == [] and m.unmatched_tracks == [0] and m.unmatched_detections == [0]


def test_assign_empty():
    m = assign(np.zeros((0, 3)))
    assert m.pairs == [] and m.unmatched_detections == [0, 1, 2]
    m = assign(np.zeros((2, 0)))
    assert m.unmatched_tracks == [0, 1]


def test_assign_rejects_non_matrix():
    with pytest.raises(ValueError):
        assign([1.0, 2.0])


def test_gate_prefers_more_pairs():
    # the cheapest full matching uses a forbidden pair; the gated optimum keeps two allowed pairs
    cost = np.array([[1.0, 2.0], [9.0, 100.0]])
    m = assign(cost, gate=10)
    assert sorted(m.pairs) == [(0, 1), (1, 0)]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_assign_optimal_vs_brute_force(seed, n_t, n_d):
    rng = np.random.default_rng(seed)
    cost = rng.uniform(0, 100, size=(n_t, n_d))
    m = assign(cost)
    assert len(m.pairs) == min(n_t, n_d)
    assert len({i for i, _ in m.pairs}) == len(m.pairs) == len({j for _, j in m.pairs})
    total = sum(cost[i, j] for i, j in m.pairs)
    assert np.isclose(total, brute_force_min(cost), rtol=0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5), st.floats(5, 95))
def test_gated_assignment_valid(seed, n_t, n_d, gate):
    rng = np.random.default_rng(seed)
    cost = rng.uniform(0, 100, size=(n_t, n_d))
    m = assign(cost, gate)
    assert all(cost[i, j] <= gate for i, j in m.pairs)
    assert sorted([i for i, _ in m.pairs] + m.unmatched_tracks) == list(range(n_t))
    assert sorted([j for _, j in m.pairs] + m.unmatched_detections) == list(range(n_d))


# ---------------------------------------------------------------------------
# Track lifecycle
# ---------------------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        TrackerParams(gate_distance=0)
    with pytest.raises(ValueError):
        TrackerParams(r=-1)


def test_new_tracks_get_distinct_ids():
    ts = step_tracks(TrackSet(), [_region(5, 5), _region(20, 20)])
    assert [t.id for t in ts.active] == [0, 1]
    assert ts.frame == 1 and ts.next_id == 2


def test_matched_track_pulled_toward_detection():
    ts = step_tracks(TrackSet(), [_region(10, 10)])
    ts = step_tracks(ts, [_region(11, 10)])
    (t,) = ts.active
    assert t.hits == 2 and t.misses == 0
    assert 10.0 < t.kalman.position[0] <= 11.0


def test_misses_and_retirement():
    params = TrackerParams(max_misses=2)
    ts = step_tracks(TrackSet(), [_region(10, 10)], params)
    for _ in range(2):
        ts = step_tracks(ts, [], params)
        assert len(ts.active) == 1
    assert ts.active[0].misses == 2
    ts = step_tracks(ts, [], params)
    assert ts.active == () and len(ts.retired) == 1
    rec = ts.retired[0].history
    assert [r.matched for r in rec] == [True, False, False, False]


def test_miss_then_match_resets_misses():
    ts = step_tracks(TrackSet(), [_region(10, 10)])
    ts = step_tracks(ts, [])
    ts = step_tracks(ts, [_region(10, 10)])
    assert ts.active[0].misses == 0 and ts.active[0].hits == 2


def test_far_detection_spawns_new_track():
    ts = step_tracks(TrackSet(), [_region(10, 10)], TrackerParams(gate_distance=5))
    ts = step_tracks(ts, [_region(40, 40)], TrackerParams(gate_distance=5))
    assert [t.id for t in ts.active] == [0, 1]


def test_ids_never_reused():
    rng = np.random.default_rng(2)
    ts = TrackSet()
    params = TrackerParams(max_misses=1, gate_distance=3)
    for _ in range(40):
        regs = [_region(*rng.uniform(5, 95, size=2)) for _ in range(rng.integers(0, 4))]
        ts = step_tracks(ts, regs, params)
    ids = [t.id for t in ts.all_tracks()]
    assert len(ids) == len(set(ids)) == ts.next_id


def test_single_object_one_confirmed_track():
    rng = np.random.default_rng(3)
    regions = [[_region(50 + rng.normal(0, 0.5), 5 + 2 * t + rng.normal(0, 0.5))] for t in range(30)]
    params = TrackerParams()
    ts = track_sequence(regions, params)
    confirmed = [t for t in ts.all_tracks() if t.confirmed(params.min_hits)]
    assert len(confirmed) == 1
    assert sum(r.matched for r in confirmed[0].history) >= 27


def test_deterministic_and_serializable():
    rng = np.random.default_rng(4)
    regions = [[_region(*rng.uniform(10, 90, size=2)) for _ in range(2)] for _ in range(10)]
    a = track_sequence(regions).to_dict(3)
    b = track_sequence(regions).to_dict(3)
    assert a == b
    assert set(a["tracks"][0]) == {"id", "confirmed", "frames"}
    assert set(a["tracks"][0]["frames"][0]) == {"frame", "row", "col", "bbox", "matched"}
