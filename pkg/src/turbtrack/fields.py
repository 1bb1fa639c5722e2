"""Shared field types, flow file I/O, image loading and flow visualization.

Storage convention
------------------
Every per-frame array is stored as ``(frames, height, width)``: frames are
contiguous, and each frame is row-major.  ``vx`` is the displacement along
columns (image x) and ``vy`` along rows (image y), both in pixels/frame.
Flow is forward: frame ``t`` of a flow field maps image ``t`` to ``t + 1``.
"""

from __future__ import annotations

import glob
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BadMagicError,
    DecodeError,
    DimensionMismatchError,
    NoFilesMatchedError,
    TruncatedPayloadError,
)

FLOW_MAGIC = b"TFL1"
_HEADER = struct.Struct("<4sIII")

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ImageSequence:
    """Grayscale intensities in [0, 1], shape ``(frames, height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3:
            raise ValueError(f"expected (frames, height, width), got shape {data.shape}")
        n, h, w = data.shape
        if w < 8 or h < 8:
            raise ValueError(f"frames must be at least 8x8, got {h}x{w}")
        if n < 2:
            raise ValueError("an image sequence needs at least 2 frames")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite intensity")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense displacement field; ``vx``/``vy`` have shape ``(frames, height, width)``."""

    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        vx, vy = _frozen(self.vx), _frozen(self.vy)
        if vx.ndim == 2:
            vx, vy = vx[None], vy[None]
        if vx.ndim != 3 or vx.shape != vy.shape:
            raise ValueError(f"vx/vy shapes must match and be 3-D, got {vx.shape} and {vy.shape}")
        if not (np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
            raise ValueError("flow contains non-finite values")
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "vy", vy)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.vx.shape

    @property
    def frames(self) -> int:
        return self.vx.shape[0]

    @property
    def height(self) -> int:
        return self.vx.shape[1]

    @property
    def width(self) -> int:
        return self.vx.shape[2]

    def frame(self, t: int) -> "FlowField":
        return FlowField(self.vx[t], self.vy[t])

    def __add__(self, other: "FlowField") -> "FlowField":
        return FlowField(self.vx + other.vx, self.vy + other.vy)

    def __sub__(self, other: "FlowField") -> "FlowField":
        return FlowField(self.vx - other.vx, self.vy - other.vy)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlowField):
            return NotImplemented
        return np.array_equal(self.vx, other.vx) and np.array_equal(self.vy, other.vy)

    @classmethod
    def zeros(cls, frames: int, height: int, width: int) -> "FlowField":
        z = np.zeros((frames, height, width))
        return cls(z, z)

    @classmethod
    def stack(cls, frames: list["FlowField"]) -> "FlowField":
        return cls(np.concatenate([f.vx for f in frames]), np.concatenate([f.vy for f in frames]))


def to_complex(flow: FlowField) -> np.ndarray:
    """Encode a flow as the complex field ``vx + i*vy``."""
    return flow.vx + 1j * flow.vy


def from_complex(z: np.ndarray) -> FlowField:
    return FlowField(np.real(z), np.imag(z))


@dataclass(frozen=True)
class PixelGrid:
    """Image-plane coordinates centred on the principal point.

    ``x`` runs along columns and ``y`` along rows, in pixels, so that the
    spatial mean of both is exactly zero for any grid size.  ``focal`` is in
    pixels and defaults to ``max(width, height)``.
    """

    width: int
    height: int
    focal: float | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be non-empty")
        if self.focal is None:
            object.__setattr__(self, "focal", float(max(self.width, self.height)))
        if not self.focal > 0:
            raise ValueError("focal length must be positive")

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x, y)`` arrays of shape ``(height, width)``."""
        x = np.arange(self.width, dtype=np.float64) - (self.width - 1) / 2.0
        y = np.arange(self.height, dtype=np.float64) - (self.height - 1) / 2.0
        return np.broadcast_to(x[None, :], (self.height, self.width)), np.broadcast_to(
            y[:, None], (self.height, self.width)
        )


def flow_magnitude(flow: FlowField) -> np.ndarray:
    return np.hypot(flow.vx, flow.vy)


# --------------------------------------------------------------------------
# Images


def _decode_gray(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L"):
                return np.asarray(im, dtype=np.float64) / 65535.0
            if mode == "I":
                # 16-bit PNGs are commonly promoted to 32-bit "I"
                return np.asarray(im, dtype=np.float64) / 65535.0
            if mode == "L":
                return np.asarray(im, dtype=np.float64) / 255.0
            if mode == "1":
                return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}", path) from exc
    r, g, b = LUMA_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def load_sequence(path: str | os.PathLike, pattern: str = "*.png") -> ImageSequence:
    """Load all images in ``path`` matching ``pattern`` in lexicographic order.

    8- and 16-bit grayscale images are scaled to [0, 1]; colour images are
    reduced to luma with the BT.601 weights 0.299/0.587/0.114.
    """
    files = sorted(glob.glob(os.path.join(os.fspath(path), pattern)))
    files = [f for f in files if os.path.isfile(f)]
    if len(files) < 2:
        raise NoFilesMatchedError(
            f"need at least 2 images matching '{pattern}' in {path}, found {len(files)}",
            os.fspath(path),
        )
    frames = []
    for f in files:
        img = _decode_gray(f)
        if frames and img.shape != frames[0].shape:
            raise DimensionMismatchError(
                f"{f} is {img.shape[1]}x{img.shape[0]}, expected "
                f"{frames[0].shape[1]}x{frames[0].shape[0]}",
                f,
            )
        frames.append(img)
    return ImageSequence(np.clip(np.stack(frames), 0.0, 1.0))


def save_png(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write a uint8 gray/RGB array, a boolean mask, or a [0,1] float image as PNG."""
    a = np.asarray(image)
    if a.dtype == bool:
        a = a.astype(np.uint8) * 255
    elif a.dtype != np.uint8:
        a = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(a).save(path, format="PNG")


def save_sequence(directory: str | os.PathLike, seq: ImageSequence, prefix: str = "frame") -> list[Path]:
    """Write each frame as a 16-bit grayscale PNG."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digits = max(4, len(str(seq.frames)))
    paths = []
    for t in range(seq.frames):
        p = directory / f"{prefix}_{t:0{digits}d}.png"
        data = np.round(seq.data[t] * 65535.0).astype(np.uint16)
        Image.fromarray(data).save(p, format="PNG")
        paths.append(p)
    return paths


# --------------------------------------------------------------------------
# Flow files


def write_flow(flow: FlowField, path: str | os.PathLike) -> None:
    """Write ``flow`` as magic ``TFL1``, little-endian u32 width/height/frames,
    then interleaved little-endian float32 ``(vx, vy)`` records, frame-major."""
    payload = np.empty(flow.shape + (2,), dtype="<f4")
    payload[..., 0] = flow.vx
    payload[..., 1] = flow.vy
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FLOW_MAGIC, flow.width, flow.height, flow.frames))
        fh.write(payload.tobytes(order="C"))


def read_flow(path: str | os.PathLike) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than the header")
    magic, width, height, frames = _HEADER.unpack_from(raw)
    if magic != FLOW_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    expected = width * height * frames * 8
    body = raw[_HEADER.size:]
    if len(body) < expected:
        raise TruncatedPayloadError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f4", count=width * height * frames * 2)
    data = data.reshape(frames, height, width, 2).astype(np.float64)
    return FlowField(data[..., 0], data[..., 1])


# --------------------------------------------------------------------------
# Visualization


def make_colorwheel() -> np.ndarray:
    """Middlebury colour wheel: 55 hues (R-Y-G-C-B-M), as floats in [0, 1]."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    ncols = ry + yg + gc + cb + bm + mr
    wheel = np.zeros((ncols, 3))
    col = 0
    wheel[col:col + ry, 0] = 1
    wheel[col:col + ry, 1] = np.arange(ry) / ry
    col += ry
    wheel[col:col + yg, 0] = 1 - np.arange(yg) / yg
    wheel[col:col + yg, 1] = 1
    col += yg
    wheel[col:col + gc, 1] = 1
    wheel[col:col + gc, 2] = np.arange(gc) / gc
    col += gc
    wheel[col:col + cb, 1] = 1 - np.arange(cb) / cb
    wheel[col:col + cb, 2] = 1
    col += cb
    wheel[col:col + bm, 2] = 1
    wheel[col:col + bm, 0] = np.arange(bm) / bm
    col += bm
    wheel[col:col + mr, 2] = 1 - np.arange(mr) / mr
    wheel[col:col + mr, 0] = 1
    return wheel


def colorize_flow(flow: FlowField, frame: int, max_magnitude: float | None = None) -> np.ndarray:
    """Render one flow frame as an RGB uint8 image.

    Hue follows the Middlebury colour wheel, and the distance from white
    encodes magnitude / ``max_magnitude``.  The default maximum is the
    frame's own largest magnitude.  Zero vectors are white.
    """
    if not 0 <= frame < flow.frames:
        raise IndexError(f"frame {frame} out of range [0, {flow.frames})")
    u, v = flow.vx[frame], flow.vy[frame]
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(mag.max())
    if max_magnitude > 0:
        rad = np.clip(mag / max_magnitude, 0.0, 1.0)
    else:
        rad = np.zeros_like(mag)

    wheel = make_colorwheel()
    ncols = wheel.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = (1 - f) * wheel[k0] + f * wheel[k1]
    col = 1 - rad[..., None] * (1 - col)
    return np.round(col * 255).astype(np.uint8)
