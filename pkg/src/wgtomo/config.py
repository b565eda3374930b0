"""Experiment configuration: TOML in, validated dataclasses, TOML out."""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .lattice import CrossSection, SpaceTimeGrid
from .presets import PRESETS, PresetError, preset_potential


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class GridConfig:
    T: float = 0.5
    Nt: int = 64
    Nx1: int = 32
    half_width: float = 0.5
    n_side: int = 24
    box_R: float = 1.0
    box_Nt: int = 64
    box_N2: int = 64
    box_N3: int = 64

    def build(self) -> SpaceTimeGrid:
        return SpaceTimeGrid(
            self.T, self.Nt, self.Nx1, CrossSection(self.half_width, self.n_side),
            self.box_R, self.box_Nt, self.box_N2, self.box_N3,
        )


@dataclass
class PresetConfig:
    name: str = "zero"
    params: dict = field(default_factory=dict)


@dataclass
class PotentialsConfig:
    bound: float = 10.0  # a priori bound M on max |V_j|
    v1: PresetConfig = field(default_factory=lambda: PresetConfig("separable_bump", {"amplitude": 0.5}))
    v2: PresetConfig = field(default_factory=lambda: PresetConfig(
        "separable_bump", {"amplitude": 0.55}))
    perturbation: PresetConfig = field(default_factory=lambda: PresetConfig(
        "random_bandlimited", {"amplitude": 1.0}))


@dataclass
class CgoConfig:
    c0: float = 0.0  # 0 selects 2 R / pi
    r: list = field(default_factory=lambda: [2.0])
    r_max: float = 8.0
    tol: float = 1e-10
    max_iter: int = 50
    enforce_r0: bool = True

    def c0_value(self, grid: SpaceTimeGrid) -> float:
        from .cgo import default_c0

        return self.c0 if self.c0 > 0 else default_c0(grid)


@dataclass
class ProbeConfig:
    ell: float = 0.0  # probed (shifted) time frequency
    eta: list = field(default_factory=lambda: [2.0 * math.pi, 0.0])
    k: int = 0
    theta: float = 0.0


@dataclass
class RecoveryConfig:
    rho: float = 16.0
    mode: str = "oracle"
    theta: float = 0.0
    k_max: int = -1  # -1: no longitudinal window


@dataclass
class SweepConfig:
    eps: list = field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005])
    r_probe: float = 0.0  # 0 selects r0


@dataclass
class FbgConfig:
    K: list = field(default_factory=lambda: [2, 4, 8, 16])


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    potentials: PotentialsConfig = field(default_factory=PotentialsConfig)
    cgo: CgoConfig = field(default_factory=CgoConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    fbg: FbgConfig = field(default_factory=FbgConfig)
    seed: int = 0
    out_dir: str = "results"

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = _build(cls, data, "")
        cfg.validate()
        return cfg

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<toml>", str(exc)) from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", str(exc)) from None
        return cls.loads(text)

    # -- validation -------------------------------------------------------
    def validate(self) -> "ExperimentConfig":
        g = self.grid
        for name in ("T", "half_width", "box_R"):
            if not getattr(g, name) > 0:
                raise ConfigError(f"grid.{name}", "must be positive")
        try:
            grid = g.build()
        except ValueError as exc:
            raise ConfigError("grid", str(exc)) from None
        P = self.potentials
        if not P.bound > 0:
            raise ConfigError("potentials.bound", "must be positive")
        for key in ("v1", "v2", "perturbation"):
            pc = getattr(P, key)
            if pc.name not in PRESETS:
                raise ConfigError(f"potentials.{key}.name", f"unknown preset {pc.name!r}")
        # presets are built here so flag violations surface before any compute
        for key in ("v1", "v2"):
            pc = getattr(P, key)
            try:
                preset_potential(pc.name, self.preset_params(key), grid, P.bound)
            except (PresetError, ValueError) as exc:
                raise ConfigError(f"potentials.{key}", str(exc)) from None
        pw = P.perturbation
        try:
            W = preset_potential(pw.name, self.preset_params("perturbation"), grid)
        except (PresetError, ValueError) as exc:
            raise ConfigError("potentials.perturbation", str(exc)) from None
        if np.abs(W.values[[0, -1]]).max() > 1e-12 or _ring(W.values) > 1e-12:
            raise ConfigError("potentials.perturbation", "must vanish at t = 0, T and on the lateral boundary")
        C = self.cgo
        if not C.r or any(not float(r) > 0 for r in C.r):
            raise ConfigError("cgo.r", "needs at least one positive value")
        if C.c0 < 0:
            raise ConfigError("cgo.c0", "must be non-negative (0 selects the default)")
        if not C.tol > 0 or C.max_iter < 1:
            raise ConfigError("cgo", "tol must be positive and max_iter >= 1")
        if len(self.probe.eta) != 2 or math.hypot(*self.probe.eta) == 0:
            raise ConfigError("probe.eta", "must be a nonzero 2-vector")
        R = self.recovery
        if R.mode not in ("oracle", "boundary"):
            raise ConfigError("recovery.mode", f"must be 'oracle' or 'boundary', got {R.mode!r}")
        if R.rho < 1:
            raise ConfigError("recovery.rho", "must be at least 1")
        if any(e < 0 for e in self.sweep.eps):
            raise ConfigError("sweep.eps", "amplitudes must be non-negative")
        if any(int(K) < 1 for K in self.fbg.K):
            raise ConfigError("fbg.K", "cell counts must be positive")
        return self

    # -- convenience ------------------------------------------------------
    def build_grid(self) -> SpaceTimeGrid:
        return self.grid.build()

    def preset_params(self, key: str) -> dict:
        """Preset parameters; random presets without an explicit seed take the run seed."""
        pc = getattr(self.potentials, key)
        params = dict(pc.params)
        if pc.name == "random_bandlimited":
            params.setdefault("seed", self.seed)
        return params

    def potential(self, key: str, grid: SpaceTimeGrid | None = None):
        grid = grid or self.build_grid()
        pc = getattr(self.potentials, key)
        bound = None if key == "perturbation" else self.potentials.bound
        return preset_potential(pc.name, self.preset_params(key), grid, bound)


def _ring(v):
    return max(np.abs(v[..., 0, :]).max(), np.abs(v[..., -1, :]).max(),
               np.abs(v[..., :, 0]).max(), np.abs(v[..., :, -1]).max())


def _coerce(tp, value, path):
    if tp in ("float", float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp in ("int", int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp in ("bool", bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp in ("str", str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if tp in ("list", list):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return list(value)
    if tp in ("dict", dict):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a table, got {value!r}")
        return dict(value)
    raise ConfigError(path, f"unsupported field type {tp!r}")


_NESTED = {
    "GridConfig": GridConfig,
    "PresetConfig": PresetConfig,
    "PotentialsConfig": PotentialsConfig,
    "CgoConfig": CgoConfig,
    "ProbeConfig": ProbeConfig,
    "RecoveryConfig": RecoveryConfig,
    "SweepConfig": SweepConfig,
    "FbgConfig": FbgConfig,
}


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", "expected a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}", "unknown field")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        path = f"{prefix}{name}"
        tp = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
        if tp in _NESTED:
            kwargs[name] = _build(_NESTED[tp], value, path + ".")
        else:
            kwargs[name] = _coerce(tp, value, path)
    return cls(**kwargs)


def default_config() -> ExperimentConfig:
    return ExperimentConfig().validate()


__all__ = ["ConfigError", "ExperimentConfig", "GridConfig", "PresetConfig", "default_config"]
