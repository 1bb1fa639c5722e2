"""Pipeline configuration: YAML mapping onto nested dataclasses.

Every section is optional and falls back to its defaults.  Unknown keys,
wrong types and out-of-range values raise :class:`ConfigError` naming the
offending key, before any stage runs.
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field
from typing import Any

import yaml

from .camera_motion import MotionParams, SmoothingSpec
from .detection import DetectionParams
from .errors import ConfigError
from .optical_flow import HornSchunckParams
from .outliers import OutlierParams
from .synth import ObjectSpec, SceneSpec, TurbulenceSpec, default_scene
from .tracking import TrackerParams
from .wavelets import WaveletSpec


@dataclass(frozen=True)
class SynthInput:
    """``preset: default`` starts from the built-in demo scene for ``seed``;
    ``preset: none`` starts from an empty static scene.  Any other key
    overrides the corresponding scene field."""

    preset: str = "default"
    seed: int = 0
    width: int | None = None
    height: int | None = None
    frames: int | None = None
    focal: float | None = None
    texture_scale: float | None = None
    motion: MotionParams | list[MotionParams] | None = None
    turbulence: TurbulenceSpec | None = None
    objects: list[ObjectSpec] | None = None

    def __post_init__(self):
        if self.preset not in ("default", "none"):
            raise ValueError("preset must be 'default' or 'none'")

    def scene(self) -> SceneSpec:
        if self.preset == "default":
            base = default_scene(self.seed, frames=self.frames or 33, size=self.width or 128)
        else:
            base = SceneSpec(seed=self.seed)
        overrides: dict[str, Any] = {}
        for name in ("width", "height", "frames", "focal", "texture_scale", "turbulence"):
            value = getattr(self, name)
            if value is not None:
                overrides[name] = value
        if self.motion is not None:
            overrides["motion"] = self.motion if isinstance(self.motion, MotionParams) else tuple(self.motion)
        if self.objects is not None:
            overrides["objects"] = tuple(self.objects)
        if self.preset == "default" and self.width is not None and self.height is None:
            overrides["height"] = self.width
        return dataclasses.replace(base, **overrides)


@dataclass(frozen=True)
class InputConfig:
    directory: str | None = None
    pattern: str = "*.png"
    synth: SynthInput | None = None

    def __post_init__(self):
        if (self.directory is None) == (self.synth is None):
            raise ValueError("give exactly one of 'directory' or 'synth'")


@dataclass(frozen=True)
class MotionConfig:
    model: str = "empirical"
    smoothing: SmoothingSpec = SmoothingSpec()
    focal: float | None = None

    def __post_init__(self):
        if self.model not in ("analytic", "empirical"):
            raise ValueError("model must be 'analytic' or 'empirical'")


@dataclass(frozen=True)
class OutlierConfig:
    enabled: bool = True
    params: OutlierParams = OutlierParams()


@dataclass(frozen=True)
class DecompositionConfig:
    lam: float = 1.0
    mu: float = 1.0
    max_iterations: int = 5
    convergence_tol: float = 1e-4
    wavelet: WaveletSpec = WaveletSpec()
    temporal_extension: str = "periodic"  # or "symmetric": mirror in time before the transform

    def __post_init__(self):
        if self.temporal_extension not in ("periodic", "symmetric"):
            raise ValueError("temporal_extension must be 'periodic' or 'symmetric'")


@dataclass(frozen=True)
class DetectionConfig:
    source: str = "u"
    params: DetectionParams = DetectionParams()

    def __post_init__(self):
        if self.source not in ("u", "vc"):
            raise ValueError("source must be 'u' or 'vc'")


@dataclass(frozen=True)
class EvaluationConfig:
    ground_truth: str | None = None
    criterion: str = "centroid"
    iou_threshold: float = 0.5

    def __post_init__(self):
        if self.criterion not in ("centroid", "iou"):
            raise ValueError("criterion must be 'centroid' or 'iou'")
        if not 0 < self.iou_threshold <= 1:
            raise ValueError("iou_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    input: InputConfig = field(default_factory=lambda: InputConfig(synth=SynthInput()))
    flow: HornSchunckParams = HornSchunckParams()
    motion: MotionConfig = MotionConfig()
    outliers: OutlierConfig = OutlierConfig()
    decomposition: DecompositionConfig = DecompositionConfig()
    detection: DetectionConfig = DetectionConfig()
    tracking: TrackerParams = TrackerParams()
    evaluation: EvaluationConfig = EvaluationConfig()
    output: str = "out"
    threads: int = 1
    save_png: bool = False

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


# --------------------------------------------------------------------------
# Builder


def _fail(path: str, msg: str):
    raise ConfigError(f"{path or '<root>'}: {msg}")


def _build(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)

    if tp is Any:
        return value
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        errors = []
        for option in args:
            if option is type(None):
                continue
            try:
                return _build(option, value, path)
            except ConfigError as exc:
                errors.append(str(exc))
        _fail(path, "no matching form: " + "; ".join(errors))
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            _fail(path, f"expected a mapping, got {type(value).__name__}")
        return build_dataclass(tp, value, path)
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            _fail(path, f"expected a list, got {type(value).__name__}")
        if origin is tuple and not (len(args) == 2 and args[1] is Ellipsis):
            if len(value) != len(args):
                _fail(path, f"expected {len(args)} items, got {len(value)}")
            return tuple(_build(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
        item = args[0]
        built = [_build(item, v, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(built) if origin is tuple else built
    if tp is bool:
        if not isinstance(value, bool):
            _fail(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            _fail(path, f"expected a string, got {value!r}")
        return value
    _fail(path, f"unsupported type {tp!r}")


def build_dataclass(cls, data: dict | None, path: str = ""):
    """Instantiate ``cls`` from a mapping, recursing into nested dataclasses."""
    data = data or {}
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        _fail(path, f"unknown key(s) {', '.join(map(str, unknown))}; allowed: {', '.join(sorted(names))}")
    kwargs = {k: _build(hints[k], v, f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        _fail(path, str(exc))


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Read a YAML file (or nothing) and apply top-level ``overrides``."""
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return build_dataclass(PipelineConfig, data)


def to_plain(obj):
    """Dataclasses, tuples and numpy scalars to YAML/JSON-friendly builtins."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_plain(v) for k, v in obj.items()}
    if hasattr(obj, "item"):
        return obj.item()
    return obj
