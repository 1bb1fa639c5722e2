"""Coarse-to-fine Horn-Schunck optical flow.

Each pyramid level warps the second frame by the current estimate and runs
a fixed number of Jacobi sweeps on the linearized Euler-Lagrange equations.
Intensities are rescaled to the 0-255 range internally so that ``alpha``
has its customary magnitude.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PyramidTooSmallError
from .fields import FlowField, ImageSequence

MIN_LEVEL_SIZE = 4
INTENSITY_SCALE = 255.0

_AVERAGE = np.array([[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]])


@dataclass(frozen=True)
class HornSchunckParams:
    alpha: float = 15.0
    iterations: int = 200
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    warps: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if not 0 < self.pyramid_scale < 1:
            raise ValueError("pyramid_scale must lie in (0, 1)")
        if self.warps < 1:
            raise ValueError("warps must be >= 1")


def _level_shape(shape: tuple[int, int], scale: float, level: int) -> tuple[int, int]:
    f = scale ** level
    return max(1, int(round(shape[0] * f))), max(1, int(round(shape[1] * f)))


def usable_levels(shape: tuple[int, int], params: HornSchunckParams) -> int:
    """Largest level count not exceeding the request whose coarsest level is at least 4x4."""
    if min(shape) < MIN_LEVEL_SIZE:
        raise PyramidTooSmallError(f"image {shape} is smaller than {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}")
    levels = params.pyramid_levels
    while levels > 1 and min(_level_shape(shape, params.pyramid_scale, levels - 1)) < MIN_LEVEL_SIZE:
        levels -= 1
    return levels


def _resample(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with pixel-center alignment."""
    sr = img.shape[0] / shape[0]
    sc = img.shape[1] / shape[1]
    rows = (np.arange(shape[0]) + 0.5) * sr - 0.5
    cols = (np.arange(shape[1]) + 0.5) * sc - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(img, [rr, cc], order=1, mode="nearest")


def _downsample(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    sigma = 0.5 * img.shape[0] / shape[0], 0.5 * img.shape[1] / shape[1]
    return _resample(ndimage.gaussian_filter(img, sigma, mode="nearest"), shape)


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    rr, cc = np.indices(img.shape, dtype=np.float64)
    return ndimage.map_coordinates(img, [rr + v, cc + u], order=1, mode="nearest")


def _central_x(img: np.ndarray) -> np.ndarray:
    p = np.pad(img, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (p[:, 2:] - p[:, :-2])


def _central_y(img: np.ndarray) -> np.ndarray:
    p = np.pad(img, ((1, 1), (0, 0)), mode="edge")
    return 0.5 * (p[2:, :] - p[:-2, :])


def _refine(i1, i2, u, v, alpha, iterations):
    """Jacobi sweeps around the current estimate ``(u, v)``."""
    i2w = _warp(i2, u, v)
    ix = 0.5 * (_central_x(i1) + _central_x(i2w))
    iy = 0.5 * (_central_y(i1) + _central_y(i2w))
    it0 = (i2w - i1) - ix * u - iy * v
    # samples warped from outside the frame carry no brightness information
    rr, cc = np.indices(i1.shape)
    outside = (rr + v < 0) | (rr + v > i1.shape[0] - 1) | (cc + u < 0) | (cc + u > i1.shape[1] - 1)
    ix[outside] = iy[outside] = it0[outside] = 0.0
    denom = alpha * alpha + ix * ix + iy * iy
    for _ in range(iterations):
        ub = ndimage.correlate(u, _AVERAGE, mode="nearest")
        vb = ndimage.correlate(v, _AVERAGE, mode="nearest")
        common = (ix * ub + iy * vb + it0) / denom
        u = ub - ix * common
        v = vb - iy * common
    return u, v


def flow_pair(i1: np.ndarray, i2: np.ndarray, params: HornSchunckParams | None = None):
    """Flow ``(vx, vy)`` carrying ``i1`` onto ``i2``: ``i2(p + V(p)) ~ i1(p)``."""
    params = params or HornSchunckParams()
    i1 = np.asarray(i1, dtype=np.float64) * INTENSITY_SCALE
    i2 = np.asarray(i2, dtype=np.float64) * INTENSITY_SCALE
    levels = usable_levels(i1.shape, params)

    pyr1, pyr2 = [i1], [i2]
    for lev in range(1, levels):
        shape = _level_shape(i1.shape, params.pyramid_scale, lev)
        pyr1.append(_downsample(i1, shape))
        pyr2.append(_downsample(i2, shape))

    u = np.zeros(pyr1[-1].shape)
    v = np.zeros(pyr1[-1].shape)
    for lev in reversed(range(levels)):
        a, b = pyr1[lev], pyr2[lev]
        if u.shape != a.shape:
            su = a.shape[1] / u.shape[1]
            sv = a.shape[0] / u.shape[0]
            u = _resample(u, a.shape) * su
            v = _resample(v, a.shape) * sv
        for _ in range(params.warps):
            u, v = _refine(a, b, u, v, params.alpha, params.iterations)
    return u, v


def compute_flow(seq: ImageSequence, params: HornSchunckParams | None = None, threads: int = 1) -> FlowField:
    """Flow between every consecutive frame pair; ``frames - 1`` flow frames."""
    params = params or HornSchunckParams()
    if seq.frames < 2:
        raise ValueError("need at least two frames")
    usable_levels((seq.height, seq.width), params)
    data = seq.data
    pairs = range(seq.frames - 1)

    def one(t):
        return flow_pair(data[t], data[t + 1], params)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(t) for t in pairs]
    vx = np.stack([r[0] for r in results])
    vy = np.stack([r[1] for r in results])
    return FlowField(vx, vy)
