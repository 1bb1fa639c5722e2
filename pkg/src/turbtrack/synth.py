"""Procedural scenes with exactly known camera motion, turbulence and objects.

A scene is a textured background seen by a moving camera through a
turbulent medium, plus textured blobs moving along polynomial
trajectories.  Images are produced by backward warping with bilinear
sampling, so the flow used for synthesis is an exact oracle for any flow
estimate made from the images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .camera_motion import MotionParams, eval_motion_model
from .evaluation import GroundTruth
from .fields import FlowField, ImageSequence, PixelGrid


@dataclass(frozen=True)
class TurbulenceSpec:
    amplitude: float = 0.0  # px/frame; RMS of the field is amplitude / sqrt(2)
    correlation_length: float = 1.0  # px
    temporal_frequency: float = 0.47  # cycles/frame
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("turbulence amplitude must be >= 0")
        if not self.correlation_length > 0:
            raise ValueError("correlation_length must be positive")
        if not self.temporal_frequency > 0:
            raise ValueError("temporal_frequency must be positive")


@dataclass(frozen=True)
class ObjectSpec:
    start: tuple[float, float]  # (row, col) of the centre in frame 0
    velocity: tuple[float, float] = (0.0, 1.0)  # px/frame
    acceleration: tuple[float, float] = (0.0, 0.0)  # px/frame^2
    radius: float = 6.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("object radius must be positive")

    def center(self, t: float) -> tuple[float, float]:
        return tuple(
            s + v * t + 0.5 * a * t * t for s, v, a in zip(self.start, self.velocity, self.acceleration)
        )


@dataclass(frozen=True)
class SceneSpec:
    width: int = 128
    height: int = 128
    frames: int = 33
    focal: float | None = None
    motion: MotionParams | tuple[MotionParams, ...] = MotionParams()
    turbulence: TurbulenceSpec = TurbulenceSpec()
    objects: tuple[ObjectSpec, ...] = ()
    texture_scale: float = 1.5  # px, correlation length of the background texture
    seed: int = 0

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("a scene needs at least 2 frames")
        if self.width < 8 or self.height < 8:
            raise ValueError("scene must be at least 8x8")
        if not isinstance(self.motion, MotionParams) and len(self.motion) != self.frames - 1:
            raise ValueError(f"need one MotionParams per flow frame ({self.frames - 1}), got {len(self.motion)}")

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.width, self.height, self.focal)

    def motion_per_frame(self) -> list[MotionParams]:
        if isinstance(self.motion, MotionParams):
            return [self.motion] * (self.frames - 1)
        return list(self.motion)


def texture(shape: tuple[int, int], correlation_length: float, rng: np.random.Generator,
            periodic: bool = False) -> np.ndarray:
    """Smoothed white noise rescaled to ``[0.1, 0.9]``."""
    t = ndimage.gaussian_filter(rng.random(shape), correlation_length, mode="wrap" if periodic else "reflect")
    lo, hi = t.min(), t.max()
    return 0.1 + 0.8 * (t - lo) / (hi - lo if hi > lo else 1.0)


def gen_camera_flow(spec: SceneSpec) -> FlowField:
    grid = spec.grid
    return FlowField.stack([eval_motion_model(p, grid) for p in spec.motion_per_frame()])


def turbulence_cycles(n: int, frequency: float) -> int:
    """Whole number of periods over ``n`` frames closest to ``frequency * n``, kept below Nyquist."""
    top = (n - 1) // 2
    return int(min(max(round(frequency * n), 1), top))


def gen_turbulence(spec: SceneSpec) -> FlowField:
    """Zero-temporal-mean oscillating displacement field, one frame per flow frame."""
    n = spec.frames - 1
    shape = (spec.height, spec.width)
    tb = spec.turbulence
    if tb.amplitude == 0:
        return FlowField.zeros(n, *shape)
    if n < 3:
        raise ValueError("turbulence needs at least 3 flow frames for a zero temporal mean")
    rng = np.random.default_rng(tb.seed)
    comps = rng.standard_normal((4,) + shape)
    comps = np.stack([ndimage.gaussian_filter(c, tb.correlation_length, mode="reflect") for c in comps])
    comps *= tb.amplitude / math.sqrt((comps ** 2).sum(axis=0).mean())
    ax, ay, bx, by = comps
    phase = 2 * np.pi * turbulence_cycles(n, tb.temporal_frequency) * np.arange(n) / n
    s = np.sin(phase)[:, None, None]
    c = np.cos(phase)[:, None, None]
    return FlowField(ax * s + bx * c, ay * s + by * c)


def _object_alpha(shape, center, radius) -> np.ndarray:
    rr, cc = np.indices(shape, dtype=np.float64)
    d = np.hypot(rr - center[0], cc - center[1])
    return np.where(d < radius, 0.5 * (1 + np.cos(np.pi * d / radius)), 0.0)


def _support_bbox(alpha: np.ndarray) -> list[int]:
    rows = np.flatnonzero(alpha.any(axis=1))
    cols = np.flatnonzero(alpha.any(axis=0))
    return [int(rows[0]), int(cols[0]), int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)]


def gen_sequence(spec: SceneSpec) -> tuple[ImageSequence, FlowField, GroundTruth]:
    """Render the scene; returns images, the true forward flow and per-frame object boxes."""
    shape = (spec.height, spec.width)
    for k, ob in enumerate(spec.objects):
        for t in range(spec.frames):
            r, c = ob.center(t)
            if r - ob.radius < 0 or c - ob.radius < 0 or r + ob.radius > shape[0] - 1 or c + ob.radius > shape[1] - 1:
                raise ValueError(f"object {k} leaves the image at frame {t} (centre {r:.1f}, {c:.1f})")

    rng = np.random.default_rng(spec.seed)
    background = gen_camera_flow(spec) + gen_turbulence(spec)

    # cumulative backward map from image pixels into the background texture
    margin = int(math.ceil(np.hypot(background.vx, background.vy).max(axis=(1, 2)).sum())) + 4
    tex = texture((shape[0] + 2 * margin, shape[1] + 2 * margin), spec.texture_scale, rng)
    obj_tex = [texture((64, 64), spec.texture_scale, rng, periodic=True) for _ in spec.objects]

    # texture coordinate of pixel p in frame t is p + margin + D_t(p), with
    # D_t(p) = D_{t-1}(p - V_{t-1}(p)) - V_{t-1}(p)
    rr, cc = np.indices(shape, dtype=np.float64)
    disp_r = np.zeros(shape)
    disp_c = np.zeros(shape)
    images = []
    vx = background.vx.copy()
    vy = background.vy.copy()
    tracks = [{"id": k, "frames": []} for k in range(len(spec.objects))]
    for t in range(spec.frames):
        if t > 0:
            dr, dc = background.vy[t - 1], background.vx[t - 1]
            src = [rr - dr, cc - dc]
            disp_r = ndimage.map_coordinates(disp_r, src, order=1, mode="nearest") - dr
            disp_c = ndimage.map_coordinates(disp_c, src, order=1, mode="nearest") - dc
        img = ndimage.map_coordinates(tex, [rr + margin + disp_r, cc + margin + disp_c], order=1, mode="nearest")
        for k, ob in enumerate(spec.objects):
            center = ob.center(t)
            alpha = _object_alpha(shape, center, ob.radius)
            patch = ndimage.map_coordinates(obj_tex[k], [rr - center[0], cc - center[1]], order=1, mode="grid-wrap")
            img = (1 - alpha) * img + alpha * patch
            tracks[k]["frames"].append({"frame": t, "bbox": _support_bbox(alpha)})
            if t < spec.frames - 1:
                nxt = ob.center(t + 1)
                on = alpha > 0
                vx[t][on] = nxt[1] - center[1]
                vy[t][on] = nxt[0] - center[0]
        images.append(img)
    gt = GroundTruth(tracks, spec.frames, shape)
    return ImageSequence(np.clip(np.stack(images), 0.0, 1.0)), FlowField(vx, vy), gt


def warp_sequence(base: np.ndarray, velocity: tuple[float, float], frames: int) -> ImageSequence:
    """Translate a periodic ``base`` image by ``velocity = (dx, dy)`` px per frame.

    Sampling wraps around, so ``base`` should tile seamlessly (see
    ``texture(..., periodic=True)``); the true flow is then ``velocity``
    everywhere.
    """
    base = np.asarray(base, dtype=np.float64)
    rr, cc = np.indices(base.shape, dtype=np.float64)
    dx, dy = velocity
    out = [
        ndimage.map_coordinates(base, [rr - dy * t, cc - dx * t], order=1, mode="grid-wrap")
        for t in range(frames)
    ]
    return ImageSequence(np.clip(np.stack(out), 0.0, 1.0))


def default_scene(seed: int = 0, frames: int = 33, size: int = 128) -> SceneSpec:
    """Panning, zooming, rolling camera; turbulence at 1.5x the object's speed; one object."""
    rng = np.random.default_rng(seed)
    speed = 1.0
    angle = rng.uniform(-0.4, 0.4)
    velocity = (speed * math.sin(angle), speed * math.cos(angle))
    start = (size / 2 + rng.uniform(-12, 12) - velocity[0] * (frames - 1) / 2,
             size / 2 - velocity[1] * (frames - 1) / 2)
    motion = MotionParams(
        tx_f_over_z=float(rng.uniform(-0.5, 0.5)),
        ty_f_over_z=float(rng.uniform(-0.3, 0.3)),
        tz_over_z=float(rng.uniform(0.001, 0.003)),
        omega_z=float(rng.uniform(-0.002, 0.002)),
    )
    return SceneSpec(
        width=size,
        height=size,
        frames=frames,
        motion=motion,
        turbulence=TurbulenceSpec(amplitude=1.5 * speed, correlation_length=0.75,
                                  temporal_frequency=0.47, seed=seed + 1000),
        objects=(ObjectSpec(start=start, velocity=velocity, radius=12.0),),
        seed=seed,
    )
