"""Separable multilevel orthogonal wavelet transform of 3-D complex volumes.

Coefficients are kept in the Mallat layout: after each level the low-pass
octant occupies the leading corner of the array and is transformed again.
Signals are extended periodically, which keeps the transform orthogonal
for any even length; volumes whose sides are not multiples of
``2**levels`` are padded by periodic wrap-around and cropped on inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _daubechies_filters() -> dict[str, np.ndarray]:
    s2, s3 = math.sqrt(2.0), math.sqrt(3.0)
    haar = np.array([1.0, 1.0]) / s2
    db2 = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * s2)
    s10 = math.sqrt(10.0)
    q = math.sqrt(5 + 2 * s10)
    db3 = np.array(
        [
            1 + s10 + q,
            5 + s10 + 3 * q,
            10 - 2 * s10 + 2 * q,
            10 - 2 * s10 - 2 * q,
            5 + s10 - 3 * q,
            1 + s10 - q,
        ]
    ) / (16 * s2)
    return {"haar": haar, "db1": haar, "db2": db2, "db3": db3}


LOWPASS = _daubechies_filters()


def quadrature_mirror(h: np.ndarray) -> np.ndarray:
    n = np.arange(len(h))
    return ((-1.0) ** n) * h[::-1]


@dataclass(frozen=True)
class WaveletSpec:
    family: str = "db2"
    levels: int | None = None
    extension: str = "periodic"

    def __post_init__(self):
        if self.family not in LOWPASS:
            raise ValueError(f"unknown wavelet family '{self.family}', choose from {sorted(LOWPASS)}")
        if self.extension != "periodic":
            raise ValueError("only periodic extension is supported")
        if self.levels is not None and self.levels < 1:
            raise ValueError("levels must be >= 1")

    def resolve_levels(self, shape: tuple[int, ...]) -> int:
        """Requested (or default) depth, reduced until every side is at least ``2**levels``."""
        smallest = min(shape)
        if smallest < 2:
            raise ValueError(f"every dimension must be >= 2 for a wavelet transform, got {shape}")
        if self.levels is None:
            levels = max(1, int(math.floor(math.log2(smallest))) - 1)
        else:
            levels = self.levels
        while levels > 1 and smallest < 2 ** levels:
            levels -= 1
        return levels


@dataclass(frozen=True, eq=False)
class WaveletCoefficients:
    data: np.ndarray
    levels: int
    family: str
    shape: tuple[int, ...]

    @property
    def padded_shape(self) -> tuple[int, ...]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "WaveletCoefficients":
        return WaveletCoefficients(data, self.levels, self.family, self.shape)


def _analysis(x: np.ndarray, h: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(h))[None, :]) % n
    gathered = x[..., idx]
    lo = gathered @ h
    hi = gathered @ g
    return np.moveaxis(np.concatenate([lo, hi], axis=-1), -1, axis)


def _synthesis(c: np.ndarray, h: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    c = np.moveaxis(c, axis, -1)
    n = c.shape[-1]
    half = n // 2
    lo, hi = c[..., :half], c[..., half:]
    out = np.zeros(c.shape, dtype=np.result_type(c, h))
    base = 2 * np.arange(half)
    for k in range(len(h)):
        # indices (2j + k) mod n are distinct over j for fixed k
        out[..., (base + k) % n] += h[k] * lo + g[k] * hi
    return np.moveaxis(out, -1, axis)


def admissible_shape(shape: tuple[int, ...], levels: int) -> tuple[int, ...]:
    step = 2 ** levels
    return tuple(int(math.ceil(s / step)) * step for s in shape)


def wavelet3d(field: np.ndarray, spec: WaveletSpec | None = None) -> WaveletCoefficients:
    """Forward transform of a 3-D (complex or real) array."""
    spec = spec or WaveletSpec()
    field = np.asarray(field)
    if field.ndim != 3:
        raise ValueError("wavelet3d expects a 3-D array")
    levels = spec.resolve_levels(field.shape)
    target = admissible_shape(field.shape, levels)
    data = np.pad(field, [(0, t - s) for s, t in zip(field.shape, target)], mode="wrap")
    data = data.astype(np.complex128 if np.iscomplexobj(data) else np.float64, copy=True)

    h = LOWPASS[spec.family]
    g = quadrature_mirror(h)
    for level in range(levels):
        box = tuple(slice(0, t >> level) for t in target)
        block = data[box]
        for axis in range(3):
            block = _analysis(block, h, g, axis)
        data[box] = block
    return WaveletCoefficients(data, levels, spec.family, tuple(field.shape))


def inverse_wavelet3d(coeffs: WaveletCoefficients) -> np.ndarray:
    h = LOWPASS[coeffs.family]
    g = quadrature_mirror(h)
    data = coeffs.data.copy()
    target = data.shape
    for level in reversed(range(coeffs.levels)):
        box = tuple(slice(0, t >> level) for t in target)
        block = data[box]
        for axis in reversed(range(3)):
            block = _synthesis(block, h, g, axis)
        data[box] = block
    return data[tuple(slice(0, s) for s in coeffs.shape)]
