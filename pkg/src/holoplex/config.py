"""Run configuration: flat ``key = value`` files with dotted keys.

Example::

    # grid
    grid.height = 64
    grid.pitch = 8e-6
    mask.r.cx = 0

A JSON object is accepted as well, either flat (``{"grid.height": 64}``) or
nested (``{"grid": {"height": 64}}``); a result manifest works too, its
``config`` entry is used. Environment variables ``HOLOPLEX_<KEY>`` with dots
written as ``__`` (``HOLOPLEX_OPTIMIZER__ITERATIONS=10``) override the file;
command-line ``--set`` overrides both.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import color as _color
from .core import Grid, HoloError, WaveSpec
from .loss import LossConfig
from .mask import MaskSchedule, SpectrumMask
from .optimize import OptimizerConfig

ENV_PREFIX = "HOLOPLEX_"
DEFAULT_PITCH = 8e-6


class ConfigError(HoloError, ValueError):
    """Invalid or unknown configuration."""


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v):
    return None if v is None or str(v).strip().lower() in ("", "none") else float(v)


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "grid.height": (int, 64),
    "grid.width": (int, 64),
    "grid.pitch": (_opt_float, None),
    "grid.pitch_x": (_opt_float, None),
    "grid.pitch_y": (_opt_float, None),
    "wave.r": (float, 638e-9),
    "wave.g": (float, 520e-9),
    "wave.b": (float, 450e-9),
    "wave.mono": (float, 520e-9),
    "plane.r": (float, 0.02),
    "plane.g": (float, 0.025),
    "plane.b": (float, 0.03),
    "plane.mono": (float, 0.02),
    "plane.auto": (_bool, False),
    "plane.margin": (float, 1.25),
    "scheme": (str, "SGDDM"),
    "propagate.pad": (_bool, False),
    "optimizer.method": (str, "adam"),
    "optimizer.iterations": (int, 100),
    "optimizer.learning_rate": (float, 1e-4),
    "optimizer.mask_learning": (_bool, False),
    "optimizer.mask_lr_factor": (float, 10.0),
    "optimizer.init": (str, "zero"),
    "optimizer.epoch_length": (int, 50),
    "optimizer.warm_start": (_bool, True),
    "optimizer.divergence_factor": (float, 1e6),
    "schedule.tau0": (float, 0.00625),
    "schedule.growth": (float, 2.0),
    "schedule.tau_max": (float, 1.6),
    "loss.mse_weight": (float, 1.0),
    "loss.ffl_weight": (float, 1.0),
    "loss.alpha": (float, 1.0),
    "loss.scale_mode": (str, "none"),
    "loss.detach_weight": (_bool, True),
    "loss.target_is_intensity": (_bool, False),
    "io.srgb": (_bool, False),
    "seed": (int, 0),
}
for _ch in "rgb":
    for _p in ("cx", "cy", "r"):
        SCHEMA[f"mask.{_ch}.{_p}"] = (_opt_float, None)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_text(text: str) -> dict:
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        raw[k] = v
    return raw


def load_file(path) -> dict:
    p = Path(path)
    text = p.read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        return _flatten(data)
    return parse_text(text)


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            out[k[len(ENV_PREFIX):].lower().replace("__", ".")] = v
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    @classmethod
    def from_sources(cls, *sources: dict) -> "RunConfig":
        """Merge raw key/value dicts (later wins), parse and validate."""
        vals = {k: d for k, (_, d) in SCHEMA.items()}
        for src in sources:
            for k, v in src.items():
                if k not in SCHEMA:
                    raise ConfigError(f"unknown config key {k!r}")
                parser = SCHEMA[k][0]
                try:
                    vals[k] = parser(v)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from exc
        cfg = cls(vals)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: dict | None = None, environ=None) -> "RunConfig":
        base = load_file(path) if path else {}
        return cls.from_sources(base, env_overrides(environ), overrides or {})

    def __getitem__(self, key):
        return self.values[key]

    def validate(self) -> None:
        """Build every derived object once so invalid combinations fail at parse time."""
        try:
            self.grid()
            self.loss()
            self.optimizer()
            WaveSpec(self["wave.mono"])
            self.color()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def grid(self) -> Grid:
        given = {v for v in (self["grid.pitch"], self["grid.pitch_x"], self["grid.pitch_y"]) if v is not None}
        if len(given) > 1:
            raise ConfigError(f"rectangular or conflicting pixel pitch {sorted(given)}; only square pixels are supported")
        pitch = given.pop() if given else DEFAULT_PITCH
        return Grid(self["grid.height"], self["grid.width"], pitch)

    def loss(self) -> LossConfig:
        return LossConfig(self["loss.mse_weight"], self["loss.ffl_weight"], self["loss.alpha"],
                          self["loss.scale_mode"], self["loss.detach_weight"],
                          self["loss.target_is_intensity"])

    def schedule(self) -> MaskSchedule:
        return MaskSchedule(self["schedule.tau0"], self["schedule.growth"], self["schedule.tau_max"])

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            method=self["optimizer.method"],
            iterations=self["optimizer.iterations"],
            learning_rate=self["optimizer.learning_rate"],
            mask_learning=self["optimizer.mask_learning"],
            mask_lr_factor=self["optimizer.mask_lr_factor"],
            seed=self["seed"],
            init=self["optimizer.init"],
            schedule=self.schedule(),
            loss=self.loss(),
            epoch_length=self["optimizer.epoch_length"],
            divergence_factor=self["optimizer.divergence_factor"],
        )

    def masks(self) -> tuple[SpectrumMask, SpectrumMask, SpectrumMask]:
        """Configured masks; channels left unset fall back to the default off-axis layout."""
        defaults = _color.default_masks(self.grid())
        out = []
        for ch, d in zip("rgb", defaults):
            p = [self[f"mask.{ch}.{k}"] for k in ("cx", "cy", "r")]
            if all(v is None for v in p):
                out.append(d)
            elif any(v is None for v in p):
                raise ConfigError(f"mask.{ch} needs all of cx, cy, r")
            else:
                out.append(SpectrumMask(*p))
        return tuple(out)

    def wavelengths(self) -> tuple[float, float, float]:
        return (self["wave.r"], self["wave.g"], self["wave.b"])

    def planes(self) -> tuple[float, float, float]:
        if self["plane.auto"]:
            return _color.separated_planes(self.grid(), self.masks(), self.wavelengths(),
                                           z0=self["plane.r"], margin=self["plane.margin"])
        return (self["plane.r"], self["plane.g"], self["plane.b"])

    def color(self, scheme: str | None = None) -> _color.ColorConfig:
        scheme = scheme or self["scheme"]
        masks = self.masks() if scheme == "SGDDM" else None
        return _color.ColorConfig(self.wavelengths(), self.planes(), scheme, masks)

    def echo(self) -> dict:
        """Every key with its effective value (JSON-serializable)."""
        return {k: self.values[k] for k in SCHEMA}

    def to_text(self) -> str:
        return "".join(f"{k} = {'none' if v is None else v}\n" for k, v in self.echo().items())


def bundled_config_path(name: str = "desk.cfg") -> Path:
    return Path(__file__).parent / "data" / name
