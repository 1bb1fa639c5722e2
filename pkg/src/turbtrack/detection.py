"""Adaptive magnitude thresholding, morphological cleanup and region extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import FlowField, flow_magnitude
from .outliers import DEVIATIONS


@dataclass(frozen=True)
class DetectionParams:
    history: int = 5
    multiplier: float = 5.0
    open_radius: int = 1
    close_radius: int = 1
    min_area: int = 4
    deviation: str = "sqrt_mad"

    def __post_init__(self):
        if self.history < 1:
            raise ValueError("history must be >= 1")
        if not self.multiplier > 0:
            raise ValueError("multiplier must be positive")
        if self.open_radius < 0 or self.close_radius < 0:
            raise ValueError("radii must be >= 0")
        if self.min_area < 1:
            raise ValueError("min_area must be >= 1")
        if self.deviation not in DEVIATIONS:
            raise ValueError(f"deviation must be one of {DEVIATIONS}")


@dataclass(frozen=True)
class Region:
    centroid: tuple[float, float]  # (row, col)
    bbox: tuple[int, int, int, int]  # (top, left, height, width)
    area: int

    def to_dict(self) -> dict:
        return {"centroid": list(self.centroid), "bbox": list(self.bbox), "area": self.area}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(tuple(float(c) for c in d["centroid"]), tuple(int(b) for b in d["bbox"]), int(d["area"]))


@dataclass(frozen=True, eq=False)
class DetectionSet:
    masks: np.ndarray  # (frames, height, width) bool
    regions: list[list[Region]]
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def frames(self) -> int:
        return len(self.regions)

    def to_dict(self) -> dict:
        return {
            "frames": [
                {
                    "frame": t,
                    "threshold": float(self.thresholds[t]) if t < len(self.thresholds) else None,
                    "regions": [r.to_dict() for r in regs],
                }
                for t, regs in enumerate(self.regions)
            ]
        }

    @classmethod
    def from_dict(cls, d: dict, shape: tuple[int, int] | None = None) -> "DetectionSet":
        frames = sorted(d["frames"], key=lambda f: f["frame"])
        regions = [[Region.from_dict(r) for r in f["regions"]] for f in frames]
        thresholds = np.array([np.nan if f.get("threshold") is None else f["threshold"] for f in frames])
        masks = np.zeros((len(frames),) + tuple(shape or (0, 0)), dtype=bool)
        return cls(masks, regions, thresholds)


def frame_stats(mag: np.ndarray, deviation: str = "sqrt_mad") -> tuple[np.ndarray, np.ndarray]:
    """Per-frame spatial mean and spread of a ``(frames, h, w)`` magnitude."""
    flat = mag.reshape(mag.shape[0], -1)
    n = flat.shape[1]
    mean = flat.mean(axis=1)
    dev = np.abs(flat - mean[:, None])
    if deviation == "sqrt_mad":
        sigma = np.sqrt(dev.sum(axis=1) / (n - 1))
    else:
        sigma = np.sqrt((dev ** 2).sum(axis=1) / (n - 1))
    return mean, sigma


def adaptive_threshold(field: FlowField | np.ndarray, params: DetectionParams | None = None):
    """Return ``(thresholds, mask)``.

    The threshold of frame ``i`` is the trailing-window average (current
    frame included, ``history`` frames at most) of the per-frame mean
    magnitude plus ``multiplier`` times the average per-frame spread.
    Pixels strictly above it are set in the mask.
    """
    params = params or DetectionParams()
    mag = flow_magnitude(field) if isinstance(field, FlowField) else np.asarray(field, dtype=np.float64)
    mean, sigma = frame_stats(mag, params.deviation)
    thresholds = np.empty_like(mean)
    for i in range(len(mean)):
        lo = max(0, i - params.history + 1)
        thresholds[i] = mean[lo:i + 1].mean() + params.multiplier * sigma[lo:i + 1].mean()
    mask = mag > thresholds[:, None, None]
    return thresholds, mask


def _square(radius: int) -> np.ndarray:
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def morph_cleanup(mask: np.ndarray, open_radius: int = 1, close_radius: int = 1) -> np.ndarray:
    """Binary opening then closing with square elements; edges are replicated."""
    mask = np.asarray(mask, dtype=bool)
    pad = 2 * max(open_radius, close_radius)
    if pad == 0:
        return mask.copy()
    work = np.pad(mask, pad, mode="edge")
    if open_radius > 0:
        work = ndimage.binary_opening(work, structure=_square(open_radius))
    if close_radius > 0:
        work = ndimage.binary_closing(work, structure=_square(close_radius))
    return work[pad:-pad, pad:-pad]


_EIGHT = np.ones((3, 3), dtype=int)


def extract_regions(mask: np.ndarray, min_area: int = 1) -> list[Region]:
    """8-connected components with at least ``min_area`` pixels, in raster order."""
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT)
    regions = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        rows, cols = np.nonzero(labels[sl] == lab)
        area = rows.size
        if area < min_area:
            continue
        top, left = sl[0].start, sl[1].start
        regions.append(
            Region(
                centroid=(float(rows.mean() + top), float(cols.mean() + left)),
                bbox=(top, left, sl[0].stop - top, sl[1].stop - left),
                area=int(area),
            )
        )
    return regions


def detect(field: FlowField | np.ndarray, params: DetectionParams | None = None) -> DetectionSet:
    params = params or DetectionParams()
    thresholds, raw = adaptive_threshold(field, params)
    masks = np.empty_like(raw)
    regions = []
    for t in range(raw.shape[0]):
        masks[t] = morph_cleanup(raw[t], params.open_radius, params.close_radius)
        regions.append(extract_regions(masks[t], params.min_area))
    return DetectionSet(masks, regions, thresholds)
