"""Egomotion flow: the rigid-camera forward model, its closed-form inverse
under constant depth, and the Gaussian low-pass empirical model.

All parameters are grouped the way the flow equation uses them, so depth
never appears on its own: rotation rates about the image axes divided by
the focal length, roll rate, image-plane translation times focal/depth, and
the forward translation over depth.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage

from .fields import FlowField, PixelGrid

GAUSSIAN_TRUNCATE = 3.0


@dataclass(frozen=True)
class MotionParams:
    omega_x_over_f: float = 0.0
    omega_y_over_f: float = 0.0
    omega_z: float = 0.0
    tx_f_over_z: float = 0.0
    ty_f_over_z: float = 0.0
    tz_over_z: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])

    @classmethod
    def from_array(cls, a) -> "MotionParams":
        return cls(*(float(x) for x in a))

    def __add__(self, other: "MotionParams") -> "MotionParams":
        return MotionParams.from_array(self.as_array() + other.as_array())


@dataclass(frozen=True)
class SmoothingSpec:
    """Gaussian widths in pixels.  Unset sigmas follow ``dimension / divisor``,
    each axis using its own length."""

    sigma_rows: float | None = None
    sigma_cols: float | None = None
    divisor: float = 7.0

    def __post_init__(self):
        if self.divisor <= 0:
            raise ValueError("divisor must be positive")
        for name in ("sigma_rows", "sigma_cols"):
            s = getattr(self, name)
            if s is not None and not s > 0:
                raise ValueError(f"{name} must be positive")

    def resolve(self, height: int, width: int) -> tuple[float, float]:
        sr = self.sigma_rows if self.sigma_rows is not None else height / self.divisor
        sc = self.sigma_cols if self.sigma_cols is not None else width / self.divisor
        return float(sr), float(sc)


@dataclass(frozen=True, eq=False)
class AnalyticEstimate:
    params: list[MotionParams]
    model: FlowField
    compensated: FlowField


@dataclass(frozen=True, eq=False)
class EmpiricalEstimate:
    model: FlowField
    compensated: FlowField


def eval_motion_model(params: MotionParams, grid: PixelGrid) -> FlowField:
    """Evaluate the rigid-motion flow of one frame on ``grid``."""
    x, y = grid.coordinates()
    f2 = grid.focal * grid.focal
    p = params
    vx = (
        p.tz_over_z * x
        - p.tx_f_over_z
        + p.omega_x_over_f * (x * y)
        - p.omega_y_over_f * (f2 + x * x)
        + p.omega_z * y
    )
    vy = (
        p.tz_over_z * y
        - p.ty_f_over_z
        + p.omega_x_over_f * (f2 + y * y)
        - p.omega_y_over_f * (x * y)
        - p.omega_z * x
    )
    return FlowField(vx, vy)


def motion_flow(params: list[MotionParams], grid: PixelGrid) -> FlowField:
    return FlowField.stack([eval_motion_model(p, grid) for p in params])


# --------------------------------------------------------------------------
# Smoothing


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(GAUSSIAN_TRUNCATE * sigma + 0.5)
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    return k / k.sum()


def _smooth_axis_odd(a: np.ndarray, sigma: float, axis: int) -> np.ndarray:
    # point-symmetric extension about each edge sample keeps affine data affine
    k = _gaussian_kernel(sigma)
    r = len(k) // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    ext = np.pad(a, pad, mode="reflect", reflect_type="odd")
    out = ndimage.correlate1d(ext, k, axis=axis, mode="constant")
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(r, r + a.shape[axis])
    return out[tuple(sl)]


def smooth_preserving_affine(frame: np.ndarray, sigmas: tuple[float, float]) -> np.ndarray:
    """Separable truncated Gaussian with point-symmetric boundary extension."""
    out = _smooth_axis_odd(frame, sigmas[0], 0)
    return _smooth_axis_odd(out, sigmas[1], 1)


def smooth_preserving_mean(field: np.ndarray, sigmas: tuple[float, float]) -> np.ndarray:
    """Per-frame separable truncated Gaussian with half-sample symmetric
    extension; the spatial mean of every frame is preserved."""
    return ndimage.gaussian_filter(
        field, sigma=(0.0, sigmas[0], sigmas[1]), mode="reflect", truncate=GAUSSIAN_TRUNCATE
    )


# --------------------------------------------------------------------------
# Estimators


def _ddx(a: np.ndarray) -> np.ndarray:
    return (a[1:-1, 2:] - a[1:-1, :-2]) / 2.0


def _ddy(a: np.ndarray) -> np.ndarray:
    return (a[2:, 1:-1] - a[:-2, 1:-1]) / 2.0


def _estimate_frame(vx: np.ndarray, vy: np.ndarray, grid: PixelGrid, sigmas) -> MotionParams:
    sx = smooth_preserving_affine(vx, sigmas)
    sy = smooth_preserving_affine(vy, sigmas)

    # curl and divergence on the one-pixel interior
    curl = _ddx(sy) - _ddy(sx)
    div = _ddx(sx) + _ddy(sy)
    omega_z = -0.5 * curl.mean()
    wxf = -_ddx(curl).mean()
    wyf = -_ddy(curl).mean()
    tz = 0.5 * div.mean()

    x, y = grid.coordinates()
    inner = (slice(1, -1), slice(1, -1))
    f2 = grid.focal * grid.focal
    txf = np.mean(-wyf * (f2 + x[inner] ** 2)) - vx[inner].mean()
    tyf = np.mean(wxf * (f2 + y[inner] ** 2)) - vy[inner].mean()
    return MotionParams(
        omega_x_over_f=float(wxf),
        omega_y_over_f=float(wyf),
        omega_z=float(omega_z),
        tx_f_over_z=float(txf),
        ty_f_over_z=float(tyf),
        tz_over_z=float(tz),
    )


def estimate_analytic(
    flow: FlowField,
    grid: PixelGrid | None = None,
    smoothing: SmoothingSpec | None = None,
) -> AnalyticEstimate:
    """Fit the constant-depth rigid-motion model to every frame of ``flow``.

    Each frame is smoothed, the roll rate comes from the mean curl, the
    pitch/yaw rates from the mean gradient of the curl, the forward
    translation from the mean divergence, and the in-plane translations
    from the mean flow corrected by the rotation terms.  Spatial means run
    over the interior that excludes the outer pixel ring (two rings for the
    second derivatives of the curl).  The mean flow in the translation step
    is taken from the unsmoothed input; smoothing only feeds derivatives.
    """
    if flow.height < 8 or flow.width < 8:
        raise ValueError("analytic estimation needs frames of at least 8x8")
    if grid is None:
        grid = PixelGrid(flow.width, flow.height)
    if (grid.width, grid.height) != (flow.width, flow.height):
        raise ValueError("grid does not match flow dimensions")
    sigmas = (smoothing or SmoothingSpec()).resolve(flow.height, flow.width)

    params = [_estimate_frame(flow.vx[t], flow.vy[t], grid, sigmas) for t in range(flow.frames)]
    model = motion_flow(params, grid)
    return AnalyticEstimate(params, model, flow - model)


def estimate_empirical(flow: FlowField, smoothing: SmoothingSpec | None = None) -> EmpiricalEstimate:
    """Low-pass each component of each frame; the residual is the compensated flow."""
    sigmas = (smoothing or SmoothingSpec()).resolve(flow.height, flow.width)
    model = FlowField(smooth_preserving_mean(flow.vx, sigmas), smooth_preserving_mean(flow.vy, sigmas))
    return EmpiricalEstimate(model, flow - model)


def params_report(params: list[MotionParams]) -> str:
    """JSON text with one record per frame."""
    return json.dumps(
        [{"frame": t, **asdict(p)} for t, p in enumerate(params)], indent=2
    )
