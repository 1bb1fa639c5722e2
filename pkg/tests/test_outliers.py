"""Tests for leave-one-out frame screening and temporal repair."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbtrack.fields import FlowField
from turbtrack.outliers import (
    OutlierParams,
    detect_outlier_frames,
    frame_statistic,
    loo_outliers,
    repair_frames,
)


def oracle_outliers(stats, kappa, deviation="sqrt_mad"):
    """Loop-by-loop evaluation of the screening inequality in exact rational
    arithmetic; ``|d| > kappa * s`` is compared as ``d**2 > kappa**2 * s**2``."""
    n = len(stats)
    stats = [Fraction(x) for x in stats]
    loo = []
    for i in range(n):
        total = Fraction(0)
        for j in range(n):
            if j != i:
                total += stats[j]
        loo.append(total / (n - 1))
    center = sum(loo) / n
    if deviation == "sqrt_mad":
        s2 = sum(abs(center - m) for m in loo) / (n - 1)
    else:
        s2 = sum((center - m) ** 2 for m in loo) / (n - 1)
    k2 = Fraction(kappa) ** 2
    return [i for i in range(n) if (loo[i] - center) ** 2 > k2 * s2]


def _flow_with_peaks(peaks, size=8):
    """Flow whose per-frame maximum magnitude equals ``peaks``."""
    n = len(peaks)
    vx = np.zeros((n, size, size))
    for t, p in enumerate(peaks):
        vx[t] = 0.1 * p
        vx[t, size // 2, size // 2] = p
    return FlowField(vx, np.zeros_like(vx))


def _constant_frames(values, size=4):
    vx = np.stack([np.full((size, size), float(v)) for v in values])
    return FlowField(vx, -0.5 * vx)


# ---------------------------------------------------------------------------
# Screening
# ---------------------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        OutlierParams(kappa=0)
    with pytest.raises(ValueError):
        OutlierParams(statistic="median")
    with pytest.raises(ValueError):
        OutlierParams(deviation="mad")


def test_frame_statistic_max_and_mean():
    vx = np.zeros((2, 2, 2))
    vx[0, 0, 0] = 3.0
    vy = np.zeros_like(vx)
    vy[0, 0, 0] = 4.0
    f = FlowField(vx, vy)
    assert np.array_equal(frame_statistic(f, "max"), [5.0, 0.0])
    assert np.array_equal(frame_statistic(f, "mean"), [1.25, 0.0])


def test_identical_frames_not_flagged():
    assert detect_outlier_frames(_flow_with_peaks([2.0] * 10)) == []


def test_single_spike():
    peaks = [1.0] * 10
    peaks[4] = 1000.0
    assert detect_outlier_frames(_flow_with_peaks(peaks)) == [4]


def test_two_spikes_among_noise():
    rng = np.random.default_rng(0)
    peaks = list(1.0 + 0.01 * rng.standard_normal(20))
    peaks[3] = 500.0
    peaks[17] = 800.0
    assert detect_outlier_frames(_flow_with_peaks(peaks)) == [3, 17]


@pytest.mark.parametrize("deviation", ["sqrt_mad", "std"])
def test_exact_ties(deviation):
    # constant input has zero deviation everywhere, so nothing can exceed the bound
    assert loo_outliers(np.full(3, 0.1), 0.5, deviation) == []
    # a subnormal sample still stands out exactly as it would at any scale
    assert loo_outliers(np.array([5e-324, 0.0, 0.0]), 1.0, deviation) == oracle_outliers([5e-324, 0.0, 0.0], 1.0, deviation)


def test_non_finite_statistics_rejected():
    with pytest.raises(ValueError):
        loo_outliers(np.array([1.0, np.inf, 2.0]), 5.0)


def test_too_few_frames():
    with pytest.raises(ValueError):
        detect_outlier_frames(_flow_with_peaks([1.0, 2.0]))
    with pytest.raises(ValueError):
        loo_outliers(np.array([1.0, 2.0]), 5.0)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0, 100), min_size=3, max_size=40),
    st.floats(0.1, 10),
    st.sampled_from(["sqrt_mad", "std"]),
)
def test_matches_loop_oracle(stats, kappa, deviation):
    assert loo_outliers(np.array(stats), kappa, deviation) == oracle_outliers(stats, kappa, deviation)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 30))
def test_permutation_covariant(seed, n):
    rng = np.random.default_rng(seed)
    stats = rng.exponential(size=n)
    stats[rng.integers(n)] *= rng.uniform(1, 500)
    perm = rng.permutation(n)
    flagged = set(loo_outliers(stats, 2.0))
    flagged_perm = set(loo_outliers(stats[perm], 2.0))
    assert flagged_perm == {int(k) for k in np.flatnonzero(np.isin(perm, list(flagged)))}


@pytest.mark.parametrize("spikes", [[4], [3, 17]])
def test_repaired_frames_not_reflagged(spikes):
    rng = np.random.default_rng(1)
    peaks = list(1.0 + 0.01 * rng.standard_normal(20))
    for s in spikes:
        peaks[s] = 1000.0
    flow = _flow_with_peaks(peaks)
    bad = detect_outlier_frames(flow)
    assert bad == spikes
    again = detect_outlier_frames(repair_frames(flow, bad))
    assert not set(again) & set(bad)


# ---------------------------------------------------------------------------
# Repair
# ---------------------------------------------------------------------------


def test_repair_nothing_is_identity():
    f = _constant_frames([1, 2, 3])
    assert repair_frames(f, []) == f


def test_repair_midpoint():
    out = repair_frames(_constant_frames([0, 7, 2]), [1])
    assert np.all(out.vx[1] == 1.0) and np.all(out.vy[1] == -0.5)


def test_repair_interior_run():
    out = repair_frames(_constant_frames([0, 9, 9, 3]), [1, 2])
    assert np.allclose(out.vx[1], 1.0) and np.allclose(out.vx[2], 2.0)


def test_repair_prefix_and_suffix_copy():
    out = repair_frames(_constant_frames([5, 6, 2, 8, 9]), [0, 1, 4])
    assert np.all(out.vx[0] == 2) and np.all(out.vx[1] == 2)
    assert np.all(out.vx[4] == 8)


def test_repair_errors():
    with pytest.raises(ValueError):
        repair_frames(_constant_frames([1, 2]), [0, 1])
    with pytest.raises(IndexError):
        repair_frames(_constant_frames([1, 2]), [2])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_repair_keeps_clean_frames_and_is_idempotent(seed, n):
    rng = np.random.default_rng(seed)
    f = FlowField(rng.normal(size=(n, 3, 3)), rng.normal(size=(n, 3, 3)))
    bad = sorted(set(rng.integers(0, n, size=rng.integers(0, n)).tolist()))
    if len(bad) == n:
        bad = bad[:-1]
    once = repair_frames(f, bad)
    for t in set(range(n)) - set(bad):
        assert np.array_equal(once.vx[t], f.vx[t]) and np.array_equal(once.vy[t], f.vy[t])
    assert repair_frames(once, bad) == once
