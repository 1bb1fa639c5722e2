"""Command-line entry point.

Exit status: 0 on success, 1 for invalid configuration or arguments,
2 when a processing stage fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .camera_motion import params_report
from .config import PipelineConfig, SynthInput, load_config, to_plain
from .detection import DetectionSet, detect
from .errors import ConfigError, StageError, TurbTrackError
from .evaluation import evaluate_sequence, load_ground_truth, save_ground_truth
from .fields import colorize_flow, load_sequence, read_flow, save_png, save_sequence, write_flow
from .optical_flow import compute_flow
from .pipeline import compensate, run_decomposition, run_pipeline, screen_outliers, write_json
from .synth import gen_sequence
from .tracking import track_sequence

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("turbtrack")


def _config(args) -> PipelineConfig:
    overrides = {}
    if getattr(args, "output", None):
        overrides["output"] = args.output
    if getattr(args, "threads", None):
        overrides["threads"] = args.threads
    cfg = load_config(args.config, overrides)
    seed = getattr(args, "seed", None)
    if seed is not None:
        synth = cfg.input.synth or SynthInput()
        cfg = dataclasses.replace(cfg, input=dataclasses.replace(cfg.input, synth=dataclasses.replace(synth, seed=seed)))
    return cfg


def _out(cfg: PipelineConfig) -> Path:
    p = Path(cfg.output)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg)
    if result.report is not None:
        print("confirmed tracks")
        print(result.report.table())
        print("\nper-frame detections")
        print(result.detection_report.table())
    print(f"artifacts written to {result.output}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    synth = cfg.input.synth or SynthInput(seed=args.seed or 0)
    seq, true_flow, gt = gen_sequence(synth.scene())
    out = _out(cfg)
    save_sequence(out / "frames", seq)
    write_flow(true_flow, out / "true_flow.tfl")
    save_ground_truth(gt, out / "ground_truth.json")
    write_json(out / "scene.json", to_plain(synth.scene()))
    print(f"{seq.frames} frames written to {out / 'frames'}")
    return EXIT_OK


def cmd_flow(args) -> int:
    cfg = _config(args)
    seq = load_sequence(args.input, args.pattern)
    flow = compute_flow(seq, cfg.flow, cfg.threads)
    write_flow(flow, _out(cfg) / "flow.tfl")
    return EXIT_OK


def cmd_compensate(args) -> int:
    cfg = _config(args)
    flow = read_flow(args.flow)
    model, compensated, params = compensate(flow, cfg)
    vc, bad = screen_outliers(compensated, cfg)
    out = _out(cfg)
    write_flow(model, out / "model.tfl")
    write_flow(compensated, out / "compensated.tfl")
    write_flow(vc, out / "vc.tfl")
    write_json(out / "outliers.json", {"outlier_frames": bad})
    if params is not None:
        (out / "motion_params.json").write_text(params_report(params))
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg = _config(args)
    dec = run_decomposition(read_flow(args.flow), cfg)
    out = _out(cfg)
    write_flow(dec.u, out / "u.tfl")
    write_flow(dec.v, out / "v.tfl")
    write_json(out / "decomposition.json", {"iterations": dec.iterations, "changes": dec.changes})
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args)
    dets = detect(read_flow(args.flow), cfg.detection.params)
    write_json(_out(cfg) / "detections.json", dets.to_dict())
    return EXIT_OK


def _load_detections(path) -> DetectionSet:
    with open(path) as fh:
        return DetectionSet.from_dict(json.load(fh))


def cmd_track(args) -> int:
    cfg = _config(args)
    dets = _load_detections(args.detections)
    tracks = track_sequence(dets.regions, cfg.tracking)
    write_json(_out(cfg) / "tracks.json", tracks.to_dict(cfg.tracking.min_hits))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    dets = _load_detections(args.detections)
    gt = load_ground_truth(args.ground_truth)
    if args.truncate:
        gt = gt.restricted(dets.frames)
    report = evaluate_sequence(dets, gt, cfg.evaluation.criterion, cfg.evaluation.iou_threshold)
    write_json(_out(cfg) / "metrics.json", report.to_dict())
    print(report.table())
    return EXIT_OK


def cmd_colorize(args) -> int:
    cfg = _config(args)
    flow = read_flow(args.flow)
    frames = range(flow.frames) if args.frame is None else [args.frame]
    scale = args.max_magnitude or float(np.hypot(flow.vx, flow.vy).max()) or 1.0
    out = _out(cfg)
    stem = Path(args.flow).stem
    for t in frames:
        save_png(out / f"{stem}_{t:04d}.png", colorize_flow(flow, t, scale))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--output", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker cap for parallel stages")
    common.add_argument("--seed", type=int, help="seed of the synthetic scene")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="turbtrack", description="Detect moving objects in turbulent, camera-shaken video.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run every stage from a config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("synth", parents=[common], help="render a synthetic scene with ground truth")
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("flow", parents=[common], help="optical flow of an image directory")
    p.add_argument("input", help="directory of frames")
    p.add_argument("--pattern", default="*.png")
    p.set_defaults(func=cmd_flow)
    p = sub.add_parser("compensate", parents=[common], help="remove camera motion and repair outlier frames")
    p.add_argument("flow")
    p.set_defaults(func=cmd_compensate)
    p = sub.add_parser("decompose", parents=[common], help="split a flow into u and v")
    p.add_argument("flow")
    p.set_defaults(func=cmd_decompose)
    p = sub.add_parser("detect", parents=[common], help="threshold a flow into regions")
    p.add_argument("flow")
    p.set_defaults(func=cmd_detect)
    p = sub.add_parser("track", parents=[common], help="link detections into tracks")
    p.add_argument("detections")
    p.set_defaults(func=cmd_track)
    p = sub.add_parser("evaluate", parents=[common], help="score detections against ground truth")
    p.add_argument("detections")
    p.add_argument("ground_truth")
    p.add_argument("--truncate", action="store_true", help="drop truth frames beyond the detections")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("colorize", parents=[common], help="render a flow file as color-wheel PNGs")
    p.add_argument("flow")
    p.add_argument("--frame", type=int)
    p.add_argument("--max-magnitude", type=float)
    p.set_defaults(func=cmd_colorize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (TurbTrackError, ValueError, IndexError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
