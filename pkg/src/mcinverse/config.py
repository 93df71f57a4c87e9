"""Experiment configuration: one JSON document, defaults always materialised."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .potentials import KINDS

ALGORITHMS = ("algo1", "algo1A", "algo2", "born")


def _pow2(x):
    return isinstance(x, int) and x >= 2 and (x & (x - 1)) == 0


@dataclass
class PotentialSpec:
    kind: str = "smooth_compact"
    amplitude: float = 1.0
    width: float = 0.35
    radius: float = 1.0
    smoothness: int = 3
    seed: int = 0
    diagonal: list | None = None
    path: str | None = None


@dataclass
class Tolerances:
    condition_limit: float = 1e12
    ls_residual: float = 1e-12
    radial_check: float = 1e-3
    arc_nodes: int = 256


@dataclass
class ExperimentConfig:
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    channels: int = 1
    smoothness: dict = field(default_factory=lambda: {"m": 3, "eps": 1.0, "sigma": 0.5})
    energies: list = field(default_factory=lambda: [100.0])
    circle_size: int = 64
    boundary_size: int = 64
    space_size: int = 64
    radial_size: int = 32
    half_width: float = 1.5
    noise_levels: list = field(default_factory=lambda: [1e-4, 1e-3, 1e-2])
    seed: int = 0
    algorithm: str = "algo2"
    background: list | None = None
    point_margin: float = 0.25
    point_stride: int = 1
    radial_check: bool = True
    out_dir: str = "out"
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if isinstance(self.potential, dict):
            self.potential = _build(PotentialSpec, self.potential, "potential")
        if isinstance(self.tolerances, dict):
            self.tolerances = _build(Tolerances, self.tolerances, "tolerances")
        self.validate()

    def validate(self):
        if self.potential.kind not in KINDS and self.potential.path is None:
            raise ConfigError(f"unknown potential kind {self.potential.kind!r}")
        if not isinstance(self.channels, int) or self.channels < 1:
            raise ConfigError("channels must be a positive integer")
        for name in ("circle_size", "boundary_size", "space_size", "radial_size"):
            if not _pow2(getattr(self, name)):
                raise ConfigError(f"{name} must be a power of two")
        if not self.energies or any(not (float(e) > 0) for e in self.energies):
            raise ConfigError("energies must be positive")
        if list(self.energies) != sorted(self.energies):
            raise ConfigError("energies must be sorted ascending")
        self.energies = [float(e) for e in self.energies]
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.algorithm == "algo1A":
            if self.background is None or len(self.background) != self.channels:
                raise ConfigError("algo1A needs a background diagonal with one entry per channel")
        if any(not (float(d) >= 0) for d in self.noise_levels):
            raise ConfigError("noise levels must be nonnegative")
        if self.point_stride < 1:
            raise ConfigError("point_stride must be >= 1")
        sm = self.smoothness
        if int(sm.get("m", 3)) < 3:
            raise ConfigError("smoothness m must be at least 3")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self):
        """SHA-256 of the canonical JSON, excluding the output directory."""
        d = self.to_dict()
        d.pop("out_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_changes(self, **kw):
        d = copy.deepcopy(self.to_dict())
        d.update(kw)
        return ExperimentConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return _build(cls, d, "config")

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json())


def _build(cls, d, where):
    known = set(cls.__dataclass_fields__)
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
