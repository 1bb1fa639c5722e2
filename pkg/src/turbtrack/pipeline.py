"""Staged end-to-end run with persisted intermediates and a run manifest.

Stage order: load or synthesize, optical flow, camera-motion compensation,
outlier screening and repair of the compensated flow, decomposition,
detection, tracking and (when ground truth is available) evaluation.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .camera_motion import estimate_analytic, estimate_empirical, params_report
from .config import PipelineConfig, to_plain
from .decomposition import Decomposition, ShrinkageParams, decompose
from .detection import DetectionSet, detect
from .errors import StageError, TurbTrackError
from .evaluation import (
    EvaluationReport,
    GroundTruth,
    evaluate_sequence,
    load_ground_truth,
    save_ground_truth,
    track_regions,
)
from .fields import FlowField, PixelGrid, colorize_flow, load_sequence, save_png, save_sequence, write_flow
from .optical_flow import compute_flow
from .outliers import detect_outlier_frames, repair_frames
from .synth import gen_sequence
from .tracking import TrackSet, track_sequence

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    output: Path
    flow: FlowField | None = None
    model: FlowField | None = None
    compensated: FlowField | None = None
    vc: FlowField | None = None
    decomposition: Decomposition | None = None
    detections: DetectionSet | None = None
    tracks: TrackSet | None = None
    report: EvaluationReport | None = None  # scored on confirmed tracks
    detection_report: EvaluationReport | None = None
    manifest: dict = field(default_factory=dict)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _stage(name: str, timings: dict, fn, *args, **kwargs):
    log.info("stage %s", name)
    t0 = time.perf_counter()
    try:
        out = fn(*args, **kwargs)
    except TurbTrackError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, IndexError, OSError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc
    timings[name] = round(time.perf_counter() - t0, 4)
    return out


def compensate(flow: FlowField, cfg: PipelineConfig):
    """Returns ``(model, compensated, motion_params or None)``."""
    if cfg.motion.model == "analytic":
        grid = PixelGrid(flow.width, flow.height, cfg.motion.focal)
        est = estimate_analytic(flow, grid, cfg.motion.smoothing)
        return est.model, est.compensated, est.params
    est = estimate_empirical(flow, cfg.motion.smoothing)
    return est.model, est.compensated, None


def screen_outliers(compensated: FlowField, cfg: PipelineConfig):
    if not cfg.outliers.enabled or compensated.frames < 3:
        return compensated, []
    bad = detect_outlier_frames(compensated, cfg.outliers.params)
    return repair_frames(compensated, bad), bad


def run_decomposition(vc: FlowField, cfg: PipelineConfig) -> Decomposition:
    d = cfg.decomposition
    params = ShrinkageParams(d.lam, d.mu, d.max_iterations, d.convergence_tol)
    return decompose(vc, params, d.wavelet, d.temporal_extension)


def evaluate_run(result: RunResult, gt: GroundTruth, cfg: PipelineConfig):
    """Score confirmed tracks and raw detections; returns ``(tracks, detections)`` reports.

    Flow frame ``t`` maps image ``t`` onto ``t + 1``, so it is scored
    against the truth of image ``t``; the last image has no flow frame.
    """
    n = result.detections.frames
    truth = gt.restricted(n)
    ev = cfg.evaluation
    tracked = track_regions(result.tracks.to_dict(cfg.tracking.min_hits), n)
    return (
        evaluate_sequence(tracked, truth, ev.criterion, ev.iou_threshold),
        evaluate_sequence(result.detections, truth, ev.criterion, ev.iou_threshold),
    )


def run_pipeline(cfg: PipelineConfig, output: str | Path | None = None) -> RunResult:
    """Execute every stage; raises :class:`StageError` naming the failed stage.

    Artifacts written so far are kept when a stage fails.  The output
    directory is only created once input loading has succeeded.
    """
    out = Path(output or cfg.output)
    timings: dict[str, float] = {}
    result = RunResult(out)
    manifest = {
        "version": __version__,
        "config": to_plain(cfg),
        "timings_s": timings,
        "status": "running",
    }
    result.manifest = manifest

    gt: GroundTruth | None = None
    if cfg.input.synth is not None:
        seq, true_flow, gt = _stage("synthesize", timings, lambda: gen_sequence(cfg.input.synth.scene()))
        out.mkdir(parents=True, exist_ok=True)
        frames_dir = out / "frames"
        save_sequence(frames_dir, seq)
        write_flow(true_flow, out / "true_flow.tfl")
        save_ground_truth(gt, out / "ground_truth.json")
    else:
        seq = _stage("load", timings, load_sequence, cfg.input.directory, cfg.input.pattern)
        out.mkdir(parents=True, exist_ok=True)
    if cfg.evaluation.ground_truth is not None:
        gt = _stage("load", timings, load_ground_truth, cfg.evaluation.ground_truth)

    def save_manifest():
        write_json(out / "manifest.json", manifest)

    try:
        result.flow = _stage("flow", timings, compute_flow, seq, cfg.flow, cfg.threads)
        write_flow(result.flow, out / "flow.tfl")

        result.model, result.compensated, params = _stage("compensate", timings, compensate, result.flow, cfg)
        write_flow(result.model, out / "model.tfl")
        write_flow(result.compensated, out / "compensated.tfl")
        if params is not None:
            (out / "motion_params.json").write_text(params_report(params))

        result.vc, bad = _stage("outliers", timings, screen_outliers, result.compensated, cfg)
        manifest["outlier_frames"] = bad
        write_flow(result.vc, out / "vc.tfl")

        result.decomposition = _stage("decompose", timings, run_decomposition, result.vc, cfg)
        dec = result.decomposition
        manifest["decomposition"] = {"iterations": dec.iterations, "changes": dec.changes}
        write_flow(dec.u, out / "u.tfl")
        write_flow(dec.v, out / "v.tfl")

        source = dec.u if cfg.detection.source == "u" else result.vc
        result.detections = _stage("detect", timings, detect, source, cfg.detection.params)
        write_json(out / "detections.json", result.detections.to_dict())

        result.tracks = _stage("track", timings, track_sequence, result.detections.regions, cfg.tracking)
        write_json(out / "tracks.json", result.tracks.to_dict(cfg.tracking.min_hits))

        if gt is not None:
            result.report, result.detection_report = _stage("evaluate", timings, evaluate_run, result, gt, cfg)
            write_json(out / "metrics.json", {
                "tracks": result.report.to_dict(),
                "detections": result.detection_report.to_dict(),
            })
            (out / "metrics.txt").write_text(
                "confirmed tracks\n" + result.report.table()
                + "\n\nper-frame detections\n" + result.detection_report.table() + "\n"
            )

        if cfg.save_png:
            _stage("colorize", timings, save_previews, out / "previews", result)
    except StageError as exc:
        manifest["status"] = f"failed in stage {exc.stage}"
        save_manifest()
        raise
    manifest["status"] = "ok"
    save_manifest()
    return result


def save_previews(directory: Path, result: RunResult) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    fields = {"flow": result.flow, "vc": result.vc}
    if result.decomposition is not None:
        fields["u"] = result.decomposition.u
        fields["v"] = result.decomposition.v
    for name, f in fields.items():
        if f is None:
            continue
        scale = float(np.hypot(f.vx, f.vy).max()) or 1.0
        for t in range(f.frames):
            save_png(directory / f"{name}_{t:04d}.png", colorize_flow(f, t, scale))
    if result.detections is not None:
        for t in range(result.detections.masks.shape[0]):
            save_png(directory / f"mask_{t:04d}.png", result.detections.masks[t].astype(np.float64))
