"""Scoring of detections against per-frame ground-truth boxes."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .detection import DetectionSet, Region

CRITERIA = ("centroid", "iou")


@dataclass(frozen=True)
class GroundTruth:
    """``tracks`` is a list of ``{"id": int, "frames": [{"frame": int, "bbox": [top, left, h, w]}]}``."""

    tracks: list[dict]
    frames: int | None = None
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        for tr in self.tracks:
            for f in tr["frames"]:
                top, left, h, w = f["bbox"]
                if h <= 0 or w <= 0:
                    raise ValueError(f"empty box in track {tr['id']} frame {f['frame']}")
                if f["frame"] < 0 or (self.frames is not None and f["frame"] >= self.frames):
                    raise ValueError(f"frame {f['frame']} of track {tr['id']} outside the sequence")
                if self.shape is not None and (
                    top < 0 or left < 0 or top + h > self.shape[0] or left + w > self.shape[1]
                ):
                    raise ValueError(f"box {f['bbox']} of track {tr['id']} outside the image")

    def boxes(self, frame: int) -> list[tuple[int, int, int, int]]:
        return [tuple(f["bbox"]) for tr in self.tracks for f in tr["frames"] if f["frame"] == frame]

    def frame_range(self) -> tuple[int, int] | None:
        ids = [f["frame"] for tr in self.tracks for f in tr["frames"]]
        return (min(ids), max(ids)) if ids else None

    def restricted(self, frames: int) -> "GroundTruth":
        """Keep only annotations of frames ``0 .. frames-1``."""
        tracks = []
        for tr in self.tracks:
            kept = [f for f in tr["frames"] if f["frame"] < frames]
            if kept:
                tracks.append({"id": tr["id"], "frames": kept})
        return GroundTruth(tracks, frames, self.shape)

    def to_dict(self) -> dict:
        out = {"tracks": self.tracks}
        if self.frames is not None:
            out["frames"] = self.frames
        if self.shape is not None:
            out["shape"] = list(self.shape)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        tracks = [
            {
                "id": int(tr["id"]),
                "frames": [{"frame": int(f["frame"]), "bbox": [int(b) for b in f["bbox"]]} for f in tr["frames"]],
            }
            for tr in d["tracks"]
        ]
        shape = tuple(d["shape"]) if d.get("shape") is not None else None
        return cls(tracks, d.get("frames"), shape)


def save_ground_truth(gt: GroundTruth, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(gt.to_dict(), fh, indent=2)


def load_ground_truth(path: str | os.PathLike) -> GroundTruth:
    with open(path) as fh:
        return GroundTruth.from_dict(json.load(fh))


def _centroid_inside(region: Region, box) -> bool:
    top, left, h, w = box
    r, c = region.centroid
    return top - 0.5 <= r <= top + h - 0.5 and left - 0.5 <= c <= left + w - 0.5


def box_iou(a, b) -> float:
    at, al, ah, aw = a
    bt, bl, bh, bw = b
    ih = max(0, min(at + ah, bt + bh) - max(at, bt))
    iw = max(0, min(al + aw, bl + bw) - max(al, bl))
    inter = ih * iw
    union = ah * aw + bh * bw - inter
    return inter / union if union > 0 else 0.0


def match_frame(detections: list[Region], truth: list, criterion: str = "centroid", iou_threshold: float = 0.5):
    """Greedy one-to-one matching of one frame; returns ``(tp, fp, fn)``.

    Detections are visited in order; each claims the first free truth box it
    matches (the best-overlapping one under the IoU criterion).
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}")
    free = list(range(len(truth)))
    tp = 0
    for det in detections:
        best = None
        if criterion == "centroid":
            best = next((j for j in free if _centroid_inside(det, truth[j])), None)
        else:
            scores = [(box_iou(det.bbox, truth[j]), j) for j in free]
            scores = [s for s in scores if s[0] >= iou_threshold]
            if scores:
                best = max(scores, key=lambda s: (s[0], -s[1]))[1]
        if best is not None:
            free.remove(best)
            tp += 1
    return tp, len(detections) - tp, len(truth) - tp


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be nonnegative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


def compute_metrics(counts: ConfusionCounts) -> dict:
    """F1, PPV, FDR, FNR and ACC.

    Empty denominators yield 1.0 for PPV/ACC and 0.0 for FDR/FNR/F1; the
    names of such metrics are listed under ``"undefined"``.
    """
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    undefined = []

    def ratio(name, num, den, sentinel):
        if den == 0:
            undefined.append(name)
            return sentinel
        return num / den

    out = {
        "F1": ratio("F1", 2 * tp, 2 * tp + fp + fn, 0.0),
        "FDR": ratio("FDR", fp, tp + fp, 0.0),
        "PPV": ratio("PPV", tp, tp + fp, 1.0),
        "ACC": ratio("ACC", tp + tn, tp + tn + fp + fn, 1.0),
        "FNR": ratio("FNR", fn, fn + tp, 0.0),
    }
    out["undefined"] = undefined
    return out


@dataclass
class EvaluationReport:
    counts: ConfusionCounts
    metrics: dict
    per_frame: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"counts": asdict(self.counts), "metrics": self.metrics, "per_frame": self.per_frame}

    def table(self) -> str:
        m = self.metrics
        c = self.counts
        lines = [
            f"{'F1':>8} {'FDR':>8} {'PPV':>8} {'ACC':>8} {'FNR':>8}",
            " ".join(f"{m[k]:8.4f}" for k in ("F1", "FDR", "PPV", "ACC", "FNR")),
            f"tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}",
        ]
        if m["undefined"]:
            lines.append("undefined (sentinel used): " + ", ".join(m["undefined"]))
        return "\n".join(lines)


def track_regions(tracks: dict, frames: int, confirmed_only: bool = True) -> list[list[Region]]:
    """Per-frame regions reported by serialized tracks.

    ``tracks`` uses the tracking output schema.  Records between a track's
    first and last matched frame are kept, including coasted frames in
    between; records after the last match are dropped.
    """
    out: list[list[Region]] = [[] for _ in range(frames)]
    for tr in tracks["tracks"]:
        if confirmed_only and not tr.get("confirmed", True):
            continue
        matched = [f["frame"] for f in tr["frames"] if f.get("matched", True)]
        if not matched:
            continue
        last = max(matched)
        for f in tr["frames"]:
            if f["frame"] > last or not 0 <= f["frame"] < frames or f.get("bbox") is None:
                continue
            top, left, h, w = (int(b) for b in f["bbox"])
            out[f["frame"]].append(Region((float(f["row"]), float(f["col"])), (top, left, h, w), h * w))
    return out


def evaluate_sequence(
    dets: DetectionSet | list[list[Region]],
    gt: GroundTruth,
    criterion: str = "centroid",
    iou_threshold: float = 0.5,
    frame_offset: int = 0,
) -> EvaluationReport:
    """Sum per-frame counts over the sequence and compute the metrics.

    Detection frame ``t`` is compared with ground-truth frame
    ``t + frame_offset``.  A frame with neither detections nor truth boxes
    counts as one true negative.
    """
    regions = dets.regions if isinstance(dets, DetectionSet) else dets
    n = len(regions)
    rng = gt.frame_range()
    if rng is not None and (rng[0] - frame_offset < 0 or rng[1] - frame_offset >= n):
        raise ValueError(
            f"ground truth covers frames {rng[0]}..{rng[1]} but detections cover "
            f"{frame_offset}..{frame_offset + n - 1}"
        )
    total = ConfusionCounts()
    per_frame = []
    for t, regs in enumerate(regions):
        truth = gt.boxes(t + frame_offset)
        tp, fp, fn = match_frame(regs, truth, criterion, iou_threshold)
        tn = int(not regs and not truth)
        total = total + ConfusionCounts(tp, fp, fn, tn)
        per_frame.append({"frame": t + frame_offset, "tp": tp, "fp": fp, "fn": fn, "tn": tn})
    return EvaluationReport(total, compute_metrics(total), per_frame)
