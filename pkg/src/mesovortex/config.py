"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment; sections are written as
dotted keys (``solver.tol = 1e-9``).  Lists are comma separated.  Every key
is checked against a fixed table and every value is converted and validated
before anything is solved.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, GeometryError, MesovortexError, ParameterError
from .geometry import DomainSpec, build_grid

OUTPUT_ENV = "MESOVORTEX_OUTPUT_DIR"
SUBCOMMANDS = ("solve-h0", "green", "obstacle", "sweep", "radial", "ueps", "accept")


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _float_list(v):
    if isinstance(v, str):
        items = [s for s in v.replace(";", ",").split(",") if s.strip()]
    else:
        items = list(v)
    return [float(s) for s in items]


def _int_list(v):
    return [int(x) for x in _float_list(v)]


def _points(v):
    flat = _float_list(v)
    if len(flat) % 2:
        raise ValueError("points need an even number of coordinates")
    return [(flat[k], flat[k + 1]) for k in range(0, len(flat), 2)]


# key -> converter; domain keys are converted by DomainSpec itself
DOMAIN_KEYS = ("shape", "radius", "extents", "inclusion_radius", "inclusion_center",
               "polygon", "a", "nx", "ny", "allow_degenerate")
SCHEMA = {
    **{k: str for k in DOMAIN_KEYS},
    "solver.omega": float,
    "solver.tol": float,
    "solver.max_iter": int,
    "obstacle.lambdas": _float_list,
    "obstacle.factors": _float_list,
    "ueps.epsilons": _float_list,
    "radial.R": float,
    "radial.a": float,
    "radial.N": int,
    "radial.m": int,
    "green.sources": _points,
    "green.epsilon": float,
    "output.dir": str,
    "output.csv": _bool,
    "seed": int,
    "accept.scale": str,
    "accept.only": _int_list,
}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of raw strings."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load_domain_spec(path) -> DomainSpec:
    """DomainSpec from a config file; non-domain keys are ignored."""
    values = load_config(path)
    try:
        return DomainSpec.from_mapping({k: v for k, v in values.items() if k in DOMAIN_KEYS})
    except (ParameterError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc


@dataclass
class RunConfig:
    subcommand: str
    domain: DomainSpec
    omega: float = 1.5
    tol: float = 1e-9
    max_iter: int | None = None
    lambdas: list = field(default_factory=list)
    lambda_factors: list = field(default_factory=list)
    epsilons: list = field(default_factory=lambda: [0.08, 0.04, 0.02])
    radial_R: float | None = None
    radial_a: float | None = None
    radial_N: int = 40
    radial_m: int = 4096
    sources: list = field(default_factory=lambda: [(0.25, 0.0), (-0.7, 0.0)])
    green_epsilon: float | None = None
    output_dir: str = "mesovortex-out"
    write_csv: bool = False
    seed: int = 0
    scale: str = "desk"
    only: list | None = None
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """JSON-ready copy of the resolved configuration."""
        d = asdict(self)
        d["domain"] = {k: getattr(self.domain, k) for k in DOMAIN_KEYS}
        d.pop("raw")
        return d


def build_run_config(subcommand: str, values: dict) -> RunConfig:
    """Convert and validate raw values (config file merged with flag overrides).

    Raises
    ------
    ConfigError
        for unknown keys, unparsable values or parameters that would make a
        solve fail before it starts (bad geometry, eps below the grid
        resolution, non-positive lambdas, ...).
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    typed = {}
    for key, value in values.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        if value is None:
            continue
        try:
            # domain values are converted by DomainSpec.from_mapping
            typed[key] = value if key in DOMAIN_KEYS else SCHEMA[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    try:
        domain = DomainSpec.from_mapping({k: typed[k] for k in DOMAIN_KEYS if k in typed})
    except (MesovortexError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc

    cfg = RunConfig(subcommand, domain, raw=dict(values))
    cfg.omega = typed.get("solver.omega", cfg.omega)
    cfg.tol = typed.get("solver.tol", cfg.tol)
    cfg.max_iter = typed.get("solver.max_iter", cfg.max_iter)
    cfg.lambdas = typed.get("obstacle.lambdas", cfg.lambdas)
    cfg.lambda_factors = typed.get("obstacle.factors", cfg.lambda_factors)
    cfg.epsilons = typed.get("ueps.epsilons", cfg.epsilons)
    cfg.radial_R = typed.get("radial.R", domain.inclusion_radius)
    cfg.radial_a = typed.get("radial.a", domain.a)
    cfg.radial_N = typed.get("radial.N", cfg.radial_N)
    cfg.radial_m = typed.get("radial.m", cfg.radial_m)
    cfg.sources = typed.get("green.sources", cfg.sources)
    cfg.green_epsilon = typed.get("green.epsilon")
    cfg.output_dir = typed.get("output.dir", cfg.output_dir)
    cfg.write_csv = typed.get("output.csv", cfg.write_csv)
    cfg.seed = typed.get("seed", cfg.seed)
    cfg.scale = typed.get("accept.scale", cfg.scale)
    cfg.only = typed.get("accept.only")
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if not 0 < cfg.omega < 2:
        raise ConfigError("solver.omega must lie in (0, 2)")
    if not cfg.tol > 0:
        raise ConfigError("solver.tol must be positive")
    if cfg.max_iter is not None and cfg.max_iter < 1:
        raise ConfigError("solver.max_iter must be at least 1")
    if cfg.scale not in ("desk", "reduced"):
        raise ConfigError("accept.scale must be 'desk' or 'reduced'")
    sub = cfg.subcommand
    if sub == "radial":
        from .radial import RadialParams
        try:
            RadialParams(cfg.radial_R, cfg.radial_a, cfg.radial_N, cfg.radial_m,
                         allow_degenerate=cfg.domain.allow_degenerate)
        except ParameterError as exc:
            raise ConfigError(f"invalid radial parameters: {exc}") from exc
        return
    if sub == "accept":
        return
    try:
        grid = build_grid(cfg.domain)
    except GeometryError as exc:
        raise ConfigError(f"invalid geometry: {exc}") from exc
    if sub in ("obstacle", "sweep"):
        if not cfg.lambdas and not cfg.lambda_factors:
            raise ConfigError(f"{sub} needs obstacle.lambdas or obstacle.factors")
        if any(v <= 0 for v in cfg.lambdas + cfg.lambda_factors):
            raise ConfigError("lambdas must be positive")
    if sub == "ueps" or (sub == "green" and cfg.green_epsilon is not None):
        eps = cfg.epsilons if sub == "ueps" else [cfg.green_epsilon]
        if not eps or any(not 0 < e <= 1 for e in eps):
            raise ConfigError("epsilons must lie in (0, 1]")
        if grid.h > min(eps) / 2 * (1 + 1e-9):
            raise ConfigError(f"grid spacing {grid.h:.4g} exceeds eps/2 for eps = {min(eps)}")
    if sub == "green":
        if not cfg.sources:
            raise ConfigError("green needs at least one source point")
        for x, y in cfg.sources:
            if not bool(np.all(cfg.domain.in_domain(np.array([x]), np.array([y])))):
                raise ConfigError(f"source ({x}, {y}) is outside the domain")


def resolve_output_dir(cfg: RunConfig, flag: str | None = None) -> str:
    """Flag beats the environment variable, which beats the config file."""
    if flag:
        return flag
    return os.environ.get(OUTPUT_ENV) or cfg.output_dir
