"""
Experiment configuration: a single JSON document, validated in full
before anything is computed.

Example::

    {
      "task": "scan",
      "lattice": {"kind": "chain", "dims": 40, "exit_spec": "end"},
      "model": {"J": 1.0, "noise": "CH", "Gamma": 3.0},
      "run": {"tol": 1e-5},
      "scan": {"p_min": 0.001, "p_max": 0.5}
    }
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from .dynamics import NOISE_KINDS
from .lattice import KINDS, build

TASKS = ("simulate", "momentum-map", "dwell", "scan", "fit", "locking", "reinit", "drive")


class ConfigError(ValueError):
    """The configuration is malformed or inconsistent."""


@dataclass
class LatticeSection:
    kind: str = "chain"
    dims: object = 40
    exit_spec: object = "end"


@dataclass
class ModelSection:
    J: float = 1.0
    p: float = 0.0
    noise: str = "CH"
    Gamma: float = 3.0


@dataclass
class RunSection:
    t_max: float = 200.0
    n_out: int = 201
    rtol: float = 1e-8
    atol: float = 1e-12
    tol: float = 1e-5
    seed: Optional[int] = None
    initial: object = "uniform"
    method: str = "auto"
    trajectories: int = 0
    batch_size: int = 1000


@dataclass
class ScanSection:
    p_min: float = 1e-3
    p_max: float = 0.5
    n_grid: int = 25
    Ns: Optional[list] = None
    p_values: Optional[list] = None


@dataclass
class FitSection:
    data: Optional[dict] = None
    confidence: float = 0.95


@dataclass
class LockingSection:
    eigtol: float = 1e-8
    amptol: float = 1e-7
    disorder: float = 0.0
    dynamical: bool = False


@dataclass
class ReinitSection:
    window: Optional[float] = None
    n_grid: int = 400


@dataclass
class DriveSection:
    omega: float = 20.0
    Omega: float = 0.3
    gamma: float = 0.4
    Jprime: float = 0.0
    field: str = "complex"
    frame: str = "rotating"
    omega_band: Optional[list] = None


@dataclass
class ExperimentConfig:
    task: str
    lattice: LatticeSection = field(default_factory=LatticeSection)
    model: ModelSection = field(default_factory=ModelSection)
    run: RunSection = field(default_factory=RunSection)
    scan: ScanSection = field(default_factory=ScanSection)
    fit: FitSection = field(default_factory=FitSection)
    locking: LockingSection = field(default_factory=LockingSection)
    reinit: ReinitSection = field(default_factory=ReinitSection)
    drive: DriveSection = field(default_factory=DriveSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


_SECTIONS = {
    "lattice": LatticeSection,
    "model": ModelSection,
    "run": RunSection,
    "scan": ScanSection,
    "fit": FitSection,
    "locking": LockingSection,
    "reinit": ReinitSection,
    "drive": DriveSection,
}


def _section(name, cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    return cls(**raw)


def _number(section, key, value, lo=None, hi=None, strict_lo=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    if lo is not None and (value <= lo if strict_lo else value < lo):
        op = ">" if strict_lo else ">="
        raise ConfigError(f"{section}.{key} must be {op} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"{section}.{key} must be <= {hi}, got {value!r}")


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` on the first problem found."""
    if cfg.task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {cfg.task!r}")
    lat = cfg.lattice
    if lat.kind not in KINDS:
        raise ConfigError(f"lattice.kind must be one of {KINDS}, got {lat.kind!r}")
    dims = lat.dims if isinstance(lat.dims, list) else [lat.dims]
    if not 1 <= len(dims) <= 2:
        raise ConfigError("lattice.dims must be an integer or a pair")
    for d in dims:
        _number("lattice", "dims", d, lo=1, integer=True)
    if not isinstance(lat.exit_spec, (str, list)):
        raise ConfigError("lattice.exit_spec must be a string or a list of sites")
    if cfg.scan.Ns is None or cfg.task not in ("scan", "fit"):
        # building the lattice is cheap and catches bad dims/exit combinations
        try:
            build(lat.kind, tuple(lat.dims) if isinstance(lat.dims, list) else lat.dims, lat.exit_spec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"lattice: {exc}") from exc
    m = cfg.model
    _number("model", "J", m.J, lo=0, strict_lo=True)
    _number("model", "p", m.p, lo=0, hi=1)
    _number("model", "Gamma", m.Gamma, lo=0)
    if m.noise not in NOISE_KINDS:
        raise ConfigError(f"model.noise must be one of {NOISE_KINDS}, got {m.noise!r}")
    r = cfg.run
    _number("run", "t_max", r.t_max, lo=0, strict_lo=True)
    _number("run", "n_out", r.n_out, lo=2, integer=True)
    _number("run", "rtol", r.rtol, lo=0, strict_lo=True)
    _number("run", "atol", r.atol, lo=0, strict_lo=True)
    _number("run", "tol", r.tol, lo=0, strict_lo=True)
    _number("run", "trajectories", r.trajectories, lo=0, integer=True)
    _number("run", "batch_size", r.batch_size, lo=1, integer=True)
    if r.seed is not None:
        _number("run", "seed", r.seed, lo=0, integer=True)
    if r.method not in ("auto", "resolvent", "integrate"):
        raise ConfigError(f"run.method must be auto, resolvent or integrate, got {r.method!r}")
    if not (r.initial == "uniform" or (isinstance(r.initial, int) and not isinstance(r.initial, bool))):
        raise ConfigError("run.initial must be 'uniform' or a 1-based site index")
    s = cfg.scan
    _number("scan", "p_min", s.p_min, lo=0)
    _number("scan", "p_max", s.p_max, lo=0)
    if not s.p_min <= s.p_max < 1:
        raise ConfigError("scan requires 0 <= p_min <= p_max < 1")
    _number("scan", "n_grid", s.n_grid, lo=3, integer=True)
    for key in ("Ns", "p_values"):
        v = getattr(s, key)
        if v is not None and (not isinstance(v, list) or not v):
            raise ConfigError(f"scan.{key} must be a non-empty list")
    if s.p_values is not None:
        for v in s.p_values:
            _number("scan", "p_values", v, lo=0, hi=1)
    f = cfg.fit
    _number("fit", "confidence", f.confidence, lo=0, hi=1, strict_lo=True)
    if f.data is not None and not isinstance(f.data, dict):
        raise ConfigError("fit.data must map N to p_opt")
    lk = cfg.locking
    _number("locking", "eigtol", lk.eigtol, lo=0, strict_lo=True)
    _number("locking", "amptol", lk.amptol, lo=0, strict_lo=True)
    _number("locking", "disorder", lk.disorder, lo=0)
    if lk.disorder > 0 and r.seed is None:
        raise ConfigError("locking.disorder needs run.seed for reproducibility")
    if cfg.reinit.window is not None:
        _number("reinit", "window", cfg.reinit.window, lo=0, strict_lo=True)
    _number("reinit", "n_grid", cfg.reinit.n_grid, lo=10, integer=True)
    d = cfg.drive
    _number("drive", "omega", d.omega)
    _number("drive", "Omega", d.Omega, lo=0)
    _number("drive", "gamma", d.gamma, lo=0)
    _number("drive", "Jprime", d.Jprime)
    if d.field not in ("complex", "real"):
        raise ConfigError("drive.field must be 'complex' or 'real'")
    if d.frame not in ("lab", "rotating"):
        raise ConfigError("drive.frame must be 'lab' or 'rotating'")
    if cfg.task == "drive" and m.p != 0:
        raise ConfigError("the drive task requires model.p = 0")
    if cfg.task == "momentum-map" and lat.kind != "chain":
        raise ConfigError("momentum-map is only defined for chain lattices")
    if cfg.task == "simulate" and r.trajectories and r.seed is None:
        raise ConfigError("trajectory runs need run.seed")
    if cfg.task == "fit" and f.data is None and (s.Ns is None or len(s.Ns) < 3):
        raise ConfigError("fit needs fit.data or at least three scan.Ns")


def from_dict(raw: dict, check: bool = True) -> ExperimentConfig:
    """Build a configuration from parsed JSON; ``check=False`` defers
    :func:`validate` (used when command-line overrides follow)."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw) - set(_SECTIONS) - {"task"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "task" not in raw:
        raise ConfigError("missing 'task'")
    try:
        kw = {name: _section(name, cls, raw[name]) for name, cls in _SECTIONS.items() if name in raw}
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = ExperimentConfig(task=raw["task"], **kw)
    if check:
        validate(cfg)
    return cfg


def load(path, seed=None, tol=None) -> ExperimentConfig:
    """Read a JSON configuration file, apply overrides and validate.

    Raises
    ------
    ConfigError
        Malformed JSON or invalid contents.
    OSError
        The file cannot be read.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return apply_overrides(from_dict(raw, check=False), seed=seed, tol=tol)


def apply_overrides(cfg: ExperimentConfig, seed=None, tol=None) -> ExperimentConfig:
    """Command-line flags take precedence over the file. The result is
    validated."""
    run = cfg.run
    if seed is not None:
        run = dataclasses.replace(run, seed=int(seed))
    if tol is not None:
        run = dataclasses.replace(run, tol=float(tol))
    out = dataclasses.replace(cfg, run=run)
    validate(out)
    return out
