"""Randomization config: the distributions every scene sample draws from.

The config file is YAML with four sections -- ``materials``, ``postfx``,
``lighting``, ``configuration`` -- and one entry per parameter:

    materials:
      metallic: {dist: uniform, lo: 0.5, hi: 0.55}
    postfx:
      enable_film_grain: {dist: bernoulli, p: 0.1}

``lo``/``hi`` may be 3-vectors for color-valued parameters.  Omitted
entries keep their defaults; the defaults reproduce the stock
randomization schedule exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigurationError
from .serial import digest_of

# refresh periods, in frames
SCENE_PERIOD = 3000
HDRI_PERIOD = 2000
MATERIAL_PERIOD = 20


@dataclass(frozen=True)
class Uniform:
    lo: float | tuple[float, float, float]
    hi: float | tuple[float, float, float]

    def sample(self, rng: np.random.Generator):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        value = np.asarray(rng.uniform(lo, hi))
        if value.ndim == 0:
            return float(value)
        return tuple(float(v) for v in value)

    def sample_int(self, rng: np.random.Generator) -> int:
        return int(rng.integers(int(self.lo), int(self.hi) + 1))

    def to_dict(self):
        return {"dist": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def sample(self, rng: np.random.Generator) -> bool:
        return bool(rng.random() < self.p)

    def to_dict(self):
        return {"dist": "bernoulli", "p": self.p}


# Parameters sampled as integers (counts).
INTEGER_PARAMS = {"target_count", "distractor_count", "furniture_count", "point_light_count"}

_V3 = lambda a, b: ((a, a, a), (b, b, b))


def _defaults() -> dict[str, dict[str, Uniform | Bernoulli]]:
    return {
        "materials": {
            "albedo_desaturation": Uniform(0.0, 0.4),
            "albedo_add": Uniform(-0.03, 0.5),
            "albedo_brightness": Uniform(3.0, 4.0),
            "diffuse_tint": Uniform(*_V3(0.2, 1.0)),
            "reflection_roughness": Uniform(0.5, 0.7),
            "metallic": Uniform(0.5, 0.55),
            "specular_level": Uniform(0.0, 1.0),
            "emissive_color": Uniform(*_V3(0.0, 0.3)),
        },
        "postfx": {
            "enable_tv_noise": Bernoulli(0.1),
            "enable_scan_lines": Bernoulli(0.1),
            "scan_line_spread": Uniform(0.1, 0.2),
            "enable_vertical_lines": Bernoulli(0.1),
            "enable_splotches": Bernoulli(0.1),
            "enable_film_grain": Bernoulli(0.1),
            "grain_amount": Uniform(0.0, 0.1),
            "grain_size": Uniform(0.7, 1.0),
            "color_amount": Uniform(0.0, 0.15),
            "enable_vignetting": Bernoulli(0.1),
        },
        "lighting": {
            "ambient_intensity": Uniform(0.1, 0.5),
            "point_light_count": Uniform(1, 3),
            "point_light_intensity": Uniform(1.0, 10.0),
            "point_light_color": Uniform(*_V3(0.5, 1.0)),
        },
        "configuration": {
            "room_width": Uniform(4.5, 5.0),
            "room_length_factor": Uniform(1.0, 1.1),
            "object_height": Uniform(1.0, 5.0),
            "table_drop_height": Uniform(0.05, 0.5),
            "drop_half_extent": Uniform(0.5, 0.5),
            "table_half_extent": Uniform(0.5, 0.5),
            "camera_radius": Uniform(1.0, 1.0),
            "camera_vfov_deg": Uniform(60.0, 60.0),
            "target_count": Uniform(4, 10),
            "distractor_count": Uniform(3, 12),
            "furniture_count": Uniform(4, 8),
        },
    }


class RandomizationConfig:
    """Resolved distribution table with sampling helpers."""

    def __init__(self, sections: dict[str, dict[str, Uniform | Bernoulli]] | None = None):
        self.sections = sections if sections is not None else _defaults()

    def dist(self, section: str, name: str) -> Uniform | Bernoulli:
        try:
            return self.sections[section][name]
        except KeyError:
            raise ConfigurationError(f"no randomization entry [{section}] {name}") from None

    def sample(self, rng: np.random.Generator, section: str, name: str):
        d = self.dist(section, name)
        if isinstance(d, Uniform) and name in INTEGER_PARAMS:
            return d.sample_int(rng)
        return d.sample(rng)

    def to_dict(self) -> dict:
        return {
            section: {name: dist.to_dict() for name, dist in entries.items()}
            for section, entries in self.sections.items()
        }

    def digest(self) -> str:
        return digest_of(self.to_dict())


DEFAULT_CONFIG = RandomizationConfig()


def _parse_entry(section: str, name: str, raw) -> Uniform | Bernoulli:
    if not isinstance(raw, dict) or "dist" not in raw:
        raise ConfigurationError(f"[{section}] {name}: entry must be a map with a 'dist' key")
    kind = raw["dist"]
    if kind == "uniform":
        if "lo" not in raw or "hi" not in raw:
            raise ConfigurationError(f"[{section}] {name}: uniform needs 'lo' and 'hi'")
        lo, hi = raw["lo"], raw["hi"]
        if isinstance(lo, list):
            lo = tuple(float(v) for v in lo)
            hi = tuple(float(v) for v in hi)
            if len(lo) != 3 or len(hi) != 3:
                raise ConfigurationError(f"[{section}] {name}: vector bounds must have 3 components")
        else:
            lo, hi = float(lo), float(hi)
        return Uniform(lo, hi)
    if kind == "bernoulli":
        if "p" not in raw:
            raise ConfigurationError(f"[{section}] {name}: bernoulli needs 'p'")
        p = float(raw["p"])
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError(f"[{section}] {name}: p must be in [0, 1]")
        return Bernoulli(p)
    raise ConfigurationError(f"[{section}] {name}: unknown dist '{kind}'")


def load_randomization_config(path) -> RandomizationConfig:
    """Defaults overlaid with the entries from a YAML config file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping of sections")
    sections = _defaults()
    for section, entries in raw.items():
        if section not in sections:
            raise ConfigurationError(f"{path}: unknown section '{section}'")
        if not isinstance(entries, dict):
            raise ConfigurationError(f"{path}: section '{section}' must be a mapping")
        for name, entry in entries.items():
            if name not in sections[section]:
                raise ConfigurationError(f"{path}: unknown entry [{section}] {name}")
            sections[section][name] = _parse_entry(section, name, entry)
    return RandomizationConfig(sections)
