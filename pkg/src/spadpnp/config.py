"""JSON run configuration.

Sections: ``model``, ``motion_spec``, ``noise_spec``, ``solver``,
``flow_params``, ``sr``, ``seed``, ``paths``, ``scene`` and ``sweep``.  Every
section is optional and defaults to the 16x / 100-bin operating point;
unknown keys are rejected with their dotted path and line number.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .motion.flow import FlowParams
from .simulator import MotionSpec, NoiseSpec
from .solver import SolverConfig
from .superres import BuiltinSuperResolver, ExternalSuperResolver
from .types import ImagingModel

DEFAULT_MODEL = {"nbins": 100, "bin_width_m": 0.0552, "irf_sigma_m": 0.04, "upsample_factor": 16,
                 "background_per_bin": 0.0}


@dataclass
class SRConfig:
    kind: str = "builtin"
    cmd: list[str] | str | None = None
    workdir: str | None = None
    strict_hvsr: bool = False
    timeout: float | None = None
    sigma_s: float = 1.0
    sigma_r: float = 0.1
    radius: int = 2
    temporal: bool = True
    temporal_radius: int | None = 1
    matched_filter: bool = True

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise ValueError(f"kind must be 'builtin' or 'external', got {self.kind!r}")
        if self.kind == "external" and not self.cmd:
            raise ValueError("external super-resolver needs 'cmd'")

    def build(self):
        if self.kind == "external":
            return ExternalSuperResolver(self.cmd, workdir=self.workdir, strict_hvsr=self.strict_hvsr,
                                         timeout=self.timeout)
        return BuiltinSuperResolver(sigma_s=self.sigma_s, sigma_r=self.sigma_r, radius=self.radius,
                                    temporal=self.temporal, temporal_radius=self.temporal_radius,
                                    matched_filter=self.matched_filter)


@dataclass
class PathsConfig:
    dataset: str | None = None
    out: str | None = None
    scene_depth: str | None = None       # .spt or .npy, HR depth in meters
    scene_intensity: str | None = None   # .spt or .npy, HR intensity (RGB averaged)


@dataclass
class SceneConfig:
    kind: str = "synthetic"
    lr_shape: tuple[int, int] = (56, 64)
    seed: int | None = None              # defaults to the run seed

    def __post_init__(self):
        if self.kind not in ("synthetic", "files"):
            raise ValueError(f"kind must be 'synthetic' or 'files', got {self.kind!r}")
        self.lr_shape = tuple(int(v) for v in self.lr_shape)
        if len(self.lr_shape) != 2 or min(self.lr_shape) < 1:
            raise ValueError("lr_shape must be two positive integers")


@dataclass
class SweepConfig:
    sbr: list[float] = field(default_factory=lambda: [4.0, 16.0, 256.0])
    ppp: list[float] = field(default_factory=lambda: [4.0, 16.0, 64.0])

    def __post_init__(self):
        if not self.sbr or not self.ppp:
            raise ValueError("sweep lists must be nonempty")


@dataclass
class RunConfig:
    model: ImagingModel = field(default_factory=lambda: ImagingModel(**DEFAULT_MODEL))
    motion_spec: MotionSpec = field(default_factory=lambda: MotionSpec(0.1, 0.1, 0.1, 100, 6))
    noise_spec: NoiseSpec = field(default_factory=NoiseSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    flow_params: FlowParams = field(default_factory=FlowParams)
    sr: SRConfig = field(default_factory=SRConfig)
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def noise(self) -> NoiseSpec:
        """Noise spec carrying the run seed."""
        return dataclasses.replace(self.noise_spec, seed=self.seed)


_SECTIONS = {
    "model": ImagingModel,
    "motion_spec": MotionSpec,
    "noise_spec": NoiseSpec,
    "solver": SolverConfig,
    "flow_params": FlowParams,
    "sr": SRConfig,
    "paths": PathsConfig,
    "scene": SceneConfig,
    "sweep": SweepConfig,
}


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _section(cls, data: Any, name: str, text: str | None):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", key=name, line=_line_of(text, name))
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError("unknown key", key=f"{name}.{k}", line=_line_of(text, k))
    kwargs = dict(DEFAULT_MODEL) if cls is ImagingModel else {}
    kwargs.update(data)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in data if k in str(exc)), None)
        key = f"{name}.{bad}" if bad else name
        raise ConfigError(str(exc), key=key, line=_line_of(text, bad or name)) from exc


def config_from_dict(data: dict, text: str | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    kwargs = {}
    for key, value in data.items():
        if key == "seed":
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError("seed must be a nonnegative integer", key="seed", line=_line_of(text, "seed"))
            kwargs["seed"] = value
        elif key in _SECTIONS:
            kwargs[key] = _section(_SECTIONS[key], value, key, text)
        else:
            raise ConfigError("unknown key", key=key, line=_line_of(text, key))
    return RunConfig(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    return config_from_dict(data, text)


def config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v
    return out
