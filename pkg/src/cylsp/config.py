"""YAML configuration shared by the solver, the sweep harness and the CLI.

Schema::

    p: 4.0
    V:   [ {kind: poly, coeffs: [[0, 0, 1.0], [0, 2, 4.0]], r_center: 2.0} ]
    K:   [ {kind: constant, c: 1.0} ]
    rho: [ {kind: constant, c: 1.0} ]
    Lambda: {r0: 2.0, a_s: 1.0, a_r: 1.0}
    penalization: {kappa: 0.1, beta: 1.0, mu: 0.1}     # optional
    solver: {tol: 1.0e-6, cells_per_eps: 8, half_width_eps: 14}   # optional
    sweep: {eps: [0.2, 0.1, 0.05], profile_window: 3.0}           # optional
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError, DomainError, InvariantError
from .model import PotentialSpec, RegionLambda

SOLVER_KEYS = {"tol", "max_iter", "max_newton", "switch_tol", "cells_per_eps", "half_width_eps", "excluded_radius"}
SWEEP_KEYS = {"eps", "profile_window", "envelope_case", "out"}
PENALTY_KEYS = {"kappa", "beta", "mu"}


@dataclass
class ProblemConfig:
    spec: PotentialSpec
    region: RegionLambda
    p: float = 4.0
    penalization: dict = field(default_factory=lambda: {"kappa": 0.1, "beta": 1.0, "mu": 0.1})
    solver: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    source: str = "<memory>"


def _section(raw, name, keys):
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = set(sec) - keys
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return dict(sec)


def parse_config(raw: dict, source="<memory>") -> ProblemConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    for key in ("V", "K", "Lambda"):
        if key not in raw:
            raise ConfigError(f"missing required section {key!r}")
    unknown = set(raw) - {"p", "V", "K", "rho", "Lambda", "penalization", "solver", "sweep"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    try:
        spec = PotentialSpec.from_records(raw["V"], raw["K"], raw.get("rho") or [])
        lam = raw["Lambda"]
        region = RegionLambda(float(lam["r0"]), float(lam["a_s"]), float(lam["a_r"]))
        p = float(raw.get("p", 4.0))
    except (DomainError, InvariantError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem definition in {source}: {exc}") from None
    pen = {"kappa": 0.1, "beta": 1.0, "mu": 0.1}
    pen.update(_section(raw, "penalization", PENALTY_KEYS))
    return ProblemConfig(spec=spec, region=region, p=p, penalization=pen,
                         solver=_section(raw, "solver", SOLVER_KEYS), sweep=_section(raw, "sweep", SWEEP_KEYS),
                         source=str(source))


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    return parse_config(raw, path)


def flagship_path() -> Path:
    return Path(str(resources.files("cylsp") / "data" / "flagship.yaml"))


def flagship_config() -> ProblemConfig:
    return load_config(flagship_path())
