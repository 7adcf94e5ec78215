"""Experiment configuration: INI-style sections, with JSON as an alternative.

Example::

    [psi]
    center_omega = 2.3254e15
    sigma_omega = 1e13

    [sweep]
    n_photons = 1, 2, 4
    bandwidth_ratios = maximal, 1, 2, 4, 8, 16
    loss = 0

List values are comma separated.  In ``bandwidth_ratios`` the word
``maximal`` selects the maximally entangled state.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .sampler import SamplerConfig
from .spectral import SPEED_OF_LIGHT, FrequencyAmplitude, GridSpec, SpectralAmplitude, TransverseAmplitude
from .state import Scene, StateSpec

MAXIMAL_WORD = "maximal"


class ConfigError(ValueError):
    def __init__(self, message: str, section: str | None = None, key: str | None = None,
                 line: int | None = None):
        where = ".".join(p for p in (section, key) if p)
        prefix = f"line {line}: " if line else ""
        super().__init__(f"{prefix}{where + ': ' if where else ''}{message}")
        self.section, self.key, self.line = section, key, line


@dataclass
class PsiSection:
    center_omega: float = 2.0 * math.pi * SPEED_OF_LIGHT / 810e-9
    sigma_omega: float = 1.0e13
    center_kx: float = 0.0
    center_ky: float = 0.0
    sigma_kx: float = 1.0e4
    sigma_ky: float = 1.0e4


@dataclass
class SceneSection:
    target_x: float = 0.0
    target_y: float = 0.0
    emission_time: float = 0.0
    reflectivity: float = 1.0
    monostatic: bool = False
    speed_of_light: float = SPEED_OF_LIGHT


@dataclass
class StateSection:
    n_photons: int = 2
    bandwidth_ratio: typing.Optional[float] = None
    window_factor: float = 20.0


@dataclass
class SamplerSection:
    seed: int = 20240501
    method: str = "exact_mixture"
    inflation: float = 1.5
    max_rejection_iters: int = 10_000
    block_size: int = 8192
    workers: int = 1


@dataclass
class RunSection:
    shots: int = 100_000
    n_boot: int = 200
    confidence: float = 0.95


@dataclass
class SweepSection:
    n_photons: typing.List[int] = field(default_factory=lambda: [1, 2, 4])
    bandwidth_ratios: typing.List[typing.Optional[float]] = field(default_factory=lambda: [None])
    loss: typing.List[float] = field(default_factory=lambda: [0.0])


@dataclass
class GridSection:
    n_points: int = 801
    extent_sigmas: float = 9.0
    memory_budget_mib: int = 1024


@dataclass
class OutputSection:
    path: str = ""
    format: str = "csv"


SECTIONS = {
    "psi": PsiSection, "scene": SceneSection, "state": StateSection, "sampler": SamplerSection,
    "run": RunSection, "sweep": SweepSection, "grid": GridSection, "output": OutputSection,
}


def _parse_scalar(kind, text: str):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    if kind == typing.Optional[float]:
        if text.lower() in (MAXIMAL_WORD, "none", "inf"):
            return None
        return float(text)
    raise TypeError(kind)


def _parse_value(kind, text: str):
    if typing.get_origin(kind) in (list, typing.List):
        (item,) = typing.get_args(kind)
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return [_parse_scalar(item, p) for p in parts]
    return _parse_scalar(kind, text)


def _format_scalar(value) -> str:
    if value is None:
        return MAXIMAL_WORD
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _format_value(value) -> str:
    if isinstance(value, list):
        return ", ".join(_format_scalar(v) for v in value)
    return _format_scalar(value)


def _key_lines(text: str) -> dict:
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", stripped)
        if m and section:
            lines[(section, m.group(1).strip().lower())] = no
    return lines


@dataclass
class ExperimentConfig:
    psi: PsiSection = field(default_factory=PsiSection)
    scene: SceneSection = field(default_factory=SceneSection)
    state: StateSection = field(default_factory=StateSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    grid: GridSection = field(default_factory=GridSection)
    output: OutputSection = field(default_factory=OutputSection)
    tolerances: dict = field(default_factory=dict)

    # --- validation ---

    def validate(self, *, statistical: bool = True) -> None:
        if statistical and self.run.shots < 1000:
            raise ConfigError("shot count must be >= 1000 for statistical runs", "run", "shots")
        for key in ("n_photons", "bandwidth_ratios", "loss"):
            if not getattr(self.sweep, key):
                raise ConfigError("sweep list must be non-empty", "sweep", key)
        if any(n < 1 for n in self.sweep.n_photons):
            raise ConfigError("photon numbers must be >= 1", "sweep", "n_photons")
        if any(b is not None and not b > 0 for b in self.sweep.bandwidth_ratios):
            raise ConfigError("bandwidth ratios must be positive", "sweep", "bandwidth_ratios")
        if any(not 0 <= p < 1 for p in self.sweep.loss):
            raise ConfigError("loss probabilities must lie in [0, 1)", "sweep", "loss")
        if self.output.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json", "output", "format")
        try:
            self.build_psi()
            self.build_scene()
            self.sampler_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # --- builders ---

    def build_psi(self) -> SpectralAmplitude:
        p = self.psi
        return SpectralAmplitude(FrequencyAmplitude(p.center_omega, p.sigma_omega),
                                 TransverseAmplitude((p.center_kx, p.center_ky), (p.sigma_kx, p.sigma_ky)))

    def build_scene(self) -> Scene:
        s = self.scene
        return Scene((s.target_x, s.target_y), s.emission_time, s.reflectivity, s.monostatic,
                     s.speed_of_light)

    def build_state(self, n_photons: int | None = None, bandwidth_ratio=MAXIMAL_WORD) -> StateSpec:
        n = self.state.n_photons if n_photons is None else n_photons
        beta = self.state.bandwidth_ratio if bandwidth_ratio == MAXIMAL_WORD else bandwidth_ratio
        psi = self.build_psi()
        if beta is None or n == 1:
            return StateSpec.maximal(n, psi, window_factor=self.state.window_factor)
        return StateSpec.partial(n, psi, beta)

    def sampler_config(self, seed: int | None = None) -> SamplerConfig:
        s = self.sampler
        return SamplerConfig(seed=s.seed if seed is None else seed, method=s.method,
                             rejection_envelope_inflation=s.inflation,
                             max_rejection_iters=s.max_rejection_iters, block_size=s.block_size,
                             workers=s.workers)

    def grid_spec(self) -> GridSpec:
        return GridSpec(max(self.grid.n_points, 256), max(self.grid.extent_sigmas, 6.0))

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    # --- serialization ---

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, *, lines: dict | None = None) -> "ExperimentConfig":
        lines = lines or {}
        cfg = cls()
        for name, values in data.items():
            if name == "tolerances":
                try:
                    cfg.tolerances = {str(k): float(v) for k, v in dict(values).items()}
                except (TypeError, ValueError) as exc:
                    raise ConfigError(str(exc), "tolerances", line=lines.get(("tolerances", None)))
                continue
            if name not in SECTIONS:
                raise ConfigError("unknown section", name, line=lines.get((name, None)))
            section_cls = SECTIONS[name]
            hints = typing.get_type_hints(section_cls)
            section = section_cls()
            for key, raw in dict(values).items():
                key = key.lower()
                if key not in hints:
                    raise ConfigError("unknown key", name, key, lines.get((name, key)))
                try:
                    if isinstance(raw, str):
                        value = _parse_value(hints[key], raw)
                    else:
                        value = _parse_value(hints[key], _format_value(raw))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value {raw!r} ({exc})", name, key, lines.get((name, key)))
                setattr(section, key, value)
            setattr(cfg, name, section)
        return cfg

    def to_ini(self) -> str:
        out = []
        for name in SECTIONS:
            out.append(f"[{name}]")
            for key, value in dataclasses.asdict(getattr(self, name)).items():
                out.append(f"{key} = {_format_value(value)}")
            out.append("")
        if self.tolerances:
            out.append("[tolerances]")
            out.extend(f"{k} = {v!r}" for k, v in sorted(self.tolerances.items()))
            out.append("")
        return "\n".join(out)

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}", line=getattr(exc, "lineno", None)) from exc
        data = {s: dict(parser.items(s)) for s in parser.sections()}
        return cls.from_dict(data, lines=_key_lines(text))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
        if not isinstance(data, dict):
            raise ConfigError("top-level JSON value must be an object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        if str(path).endswith(".json") or text.lstrip().startswith("{"):
            return cls.from_json(text)
        return cls.from_ini(text)

    def config_hash(self) -> str:
        """Hash of everything that affects results (worker count and output target excluded)."""
        data = self.to_dict()
        data.pop("output")
        data["sampler"].pop("workers")
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]
