"""Tests for complex soft shrinkage and the geometric/oscillatory split."""

from __future__ import annotations

import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbtrack.decomposition import ShrinkageParams, cshrink, decompose
from turbtrack.fields import FlowField, from_complex, to_complex
from turbtrack.wavelets import WaveletSpec, inverse_wavelet3d, wavelet3d

complexes = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)


def _oracle_decompose(V, lam, mu, n_max, tol, spec):
    """Straight-line transcription of the alternating shrinkage loop."""

    def shrink_op(x, t):
        c = wavelet3d(x, spec)
        d = c.data
        mag = np.abs(d)
        out = np.zeros_like(d)
        keep = mag > t
        out[keep] = (mag[keep] - t) * d[keep] / mag[keep]
        return inverse_wavelet3d(c.with_data(out))

    u = np.zeros_like(V)
    v = np.zeros_like(V)
    for n in range(1, n_max + 1):
        v_new = V - u - shrink_op(V - u, 2 * mu)
        u_new = shrink_op(V - v, 2 * lam)
        change = max(np.sqrt(np.sum(np.abs(u_new - u) ** 2)), np.sqrt(np.sum(np.abs(v_new - v) ** 2)))
        u, v = u_new, v_new
        if change < tol:
            break
    return u, v, n


def _small_coefficient_field(rng, shape, bound, spec):
    c = wavelet3d(np.zeros(shape, dtype=complex), spec)
    mag = rng.uniform(0, bound, size=c.data.shape)
    phase = rng.uniform(0, 2 * np.pi, size=c.data.shape)
    return inverse_wavelet3d(c.with_data(mag * np.exp(1j * phase)))


# ---------------------------------------------------------------------------
# CShrink
# ---------------------------------------------------------------------------


def test_cshrink_examples():
    z = 3 * cmath.exp(1j * cmath.pi / 4)
    assert abs(cshrink(z, 1.0) - 2 * cmath.exp(1j * cmath.pi / 4)) < 1e-15
    assert cshrink(0.5, 1.0) == 0
    assert cshrink(-2.0, 0.0) == -2.0
    assert cshrink(0.0, 3.0) == 0


def test_cshrink_rejects_negative_threshold():
    with pytest.raises(ValueError):
        cshrink(1.0, -0.1)


@given(complexes, st.floats(0, 1e3))
def test_cshrink_magnitude_and_phase(z, t):
    out = cshrink(z, t)
    assert abs(abs(out) - max(abs(z) - t, 0.0)) <= 1e-9 * max(1.0, abs(z))
    if abs(out) > 1e-9 * max(1.0, abs(z)):
        assert abs(cmath.phase(out / z)) < 1e-9


@given(complexes, complexes, st.floats(0, 1e3))
def test_cshrink_contraction(z, w, t):
    assert abs(cshrink(z, t) - cshrink(w, t)) <= abs(z - w) * (1 + 1e-12) + 1e-9


@given(st.lists(complexes, min_size=1, max_size=20))
def test_cshrink_zero_threshold_identity(zs):
    z = np.array(zs)
    assert np.array_equal(cshrink(z, 0.0), z)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [{"lam": 0.0}, {"mu": -1.0}, {"max_iterations": 0}, {"convergence_tol": 0.0}],
)
def test_shrinkage_params_validation(kwargs):
    with pytest.raises(ValueError):
        ShrinkageParams(**kwargs)


def test_shrinkage_defaults():
    p = ShrinkageParams()
    assert (p.lam, p.mu, p.max_iterations, p.convergence_tol) == (1.0, 1.0, 5, 1e-4)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------


def test_zero_input():
    d = decompose(FlowField.zeros(8, 16, 16))
    assert d.iterations == 1 and d.final_change == 0.0
    assert np.all(d.u.vx == 0) and np.all(d.v.vy == 0)


@pytest.mark.parametrize("lam,mu", [(1.0, 1.0), (0.5, 2.0), (3.0, 0.75)])
def test_sub_threshold_input_is_all_oscillation(lam, mu):
    rng = np.random.default_rng(0)
    spec = WaveletSpec()
    V = _small_coefficient_field(rng, (8, 16, 16), 2 * min(lam, mu), spec)
    d = decompose(from_complex(V), ShrinkageParams(lam=lam, mu=mu), spec)
    assert d.iterations <= 2
    assert np.abs(to_complex(d.u)).max() < 1e-9
    assert np.abs(to_complex(d.v) - V).max() < 1e-9


def test_matches_straight_line_oracle():
    rng = np.random.default_rng(1)
    V = 3 * (rng.normal(size=(8, 16, 16)) + 1j * rng.normal(size=(8, 16, 16)))
    spec = WaveletSpec(family="db3")
    params = ShrinkageParams(lam=0.7, mu=1.3, max_iterations=4)
    d = decompose(from_complex(V), params, spec)
    u, v, n = _oracle_decompose(V, 0.7, 1.3, 4, 1e-4, spec)
    assert d.iterations == n
    assert np.abs(to_complex(d.u) - u).max() < 1e-12
    assert np.abs(to_complex(d.v) - v).max() < 1e-12


def test_moving_region_in_u_oscillation_in_v():
    rng = np.random.default_rng(2)
    obj = np.zeros((16, 32, 32))
    obj[:, 8:24, 8:24] = 20.0
    osc = 0.3 * rng.normal(size=obj.shape)
    d = decompose(FlowField(obj + osc, np.zeros_like(obj)))
    # share of each component recovered, measured by projection
    assert np.sum(d.u.vx * obj) / np.sum(obj ** 2) >= 0.9
    assert np.sum(d.v.vx * osc) / np.sum(osc ** 2) >= 0.9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi), st.floats(0.1, 10))
def test_phase_rotation_equivariance(seed, phi, scale):
    rng = np.random.default_rng(seed)
    V = scale * (rng.normal(size=(8, 16, 16)) + 1j * rng.normal(size=(8, 16, 16)))
    rot = np.exp(1j * phi)
    d0 = decompose(from_complex(V))
    d1 = decompose(from_complex(rot * V))
    assert np.abs(to_complex(d1.u) - rot * to_complex(d0.u)).max() < 1e-6
    assert np.abs(to_complex(d1.v) - rot * to_complex(d0.v)).max() < 1e-6


@settings(max_examples=15, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.floats(0.01, 20),
    st.integers(1, 6),
    st.sampled_from([1e-4, 1e-2, 1.0]),
)
def test_stop_rule_and_residual_bound(seed, scale, n_max, tol):
    rng = np.random.default_rng(seed)
    V = scale * (rng.normal(size=(8, 8, 16)) + 1j * rng.normal(size=(8, 8, 16)))
    d = decompose(from_complex(V), ShrinkageParams(max_iterations=n_max, convergence_tol=tol))
    assert 1 <= d.iterations <= n_max
    assert len(d.changes) == d.iterations and d.final_change == d.changes[-1]
    if d.iterations < n_max:
        assert d.final_change < tol
    # every earlier iteration failed the test
    assert all(c >= tol for c in d.changes[:-1])
    resid = V - to_complex(d.u) - to_complex(d.v)
    assert np.linalg.norm(resid) <= np.linalg.norm(V) + 1e-12


def test_non_admissible_shape():
    rng = np.random.default_rng(4)
    V = rng.normal(size=(7, 13, 19)) + 1j * rng.normal(size=(7, 13, 19))
    d = decompose(from_complex(V))
    assert d.u.shape == (7, 13, 19)


# ---------------------------------------------------------------------------
# Temporal extension
# ---------------------------------------------------------------------------


def test_symmetric_extension_matches_mirrored_oracle():
    rng = np.random.default_rng(5)
    V = 3 * (rng.normal(size=(8, 16, 16)) + 1j * rng.normal(size=(8, 16, 16)))
    spec = WaveletSpec()
    d = decompose(from_complex(V), ShrinkageParams(max_iterations=3), spec, temporal_extension="symmetric")
    u, v, n = _oracle_decompose(np.concatenate([V, V[::-1]]), 1.0, 1.0, 3, 1e-4, spec)
    assert d.u.shape == (8, 16, 16) and d.iterations == n
    assert np.abs(to_complex(d.u) - u[:8]).max() < 1e-12
    assert np.abs(to_complex(d.v) - v[:8]).max() < 1e-12


def test_unknown_temporal_extension():
    with pytest.raises(ValueError):
        decompose(FlowField.zeros(4, 8, 8), temporal_extension="zero")


def test_symmetric_extension_removes_wraparound_ghost():
    # a region present only in the last frames leaks into the first ones under periodic extension
    obj = np.zeros((16, 32, 32))
    obj[12:, 8:24, 8:24] = 20.0
    flow = FlowField(obj, np.zeros_like(obj))
    periodic = decompose(flow)
    mirrored = decompose(flow, temporal_extension="symmetric")
    lead = np.abs(periodic.u.vx[:2]).max()
    assert lead > 1.0
    assert np.abs(mirrored.u.vx[:2]).max() < 0.1 * lead
