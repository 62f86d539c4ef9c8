"""Experiment configuration: a flat key/value file in TOML or JSON.

Section headers are allowed and ignored, so ``[coeff]\\namp_t = 0.1`` and a
top-level ``amp_t = 0.1`` mean the same thing.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

from .coeff import CoefficientSpec, LowerOrderCoefficients, make_lower_order
from .energy import theta_upper

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # principal coefficient
    lambda0: float = 0.5
    Lambda0: float = 1.5
    base: float = 1.0
    amp_t: float = 0.1
    amp_x: float = 0.1
    J: int = 12
    seed: int = 0
    # lower-order coefficients
    omega: float = 0.5
    amp_b: float = 0.1
    c0: float = 0.1
    J_b: int = 8
    # discretization and data
    n: int = 512
    theta: float = 0.25
    data_kmax: int = 16
    data_decay: float = 1.0
    dt: float = 0.0                 # 0 selects the default step
    n_out: int = 64
    beta: Union[str, float] = "auto"
    n_seeds: int = 5
    n_forced: int = 2
    # per-stage sizes
    probe_n: int = 256
    lemma_n: int = 256
    comm_n: int = 1024
    schur_N: int = 9
    theorem_ns: tuple = (256, 512, 1024)

    def __post_init__(self):
        hi = theta_upper(self.omega)
        if not 0 < self.theta < hi:
            raise ConfigError(f"theta={self.theta} outside the admissible range "
                              f"(0, min(1/2, omega/(1+log 2))) = (0, {hi:.6g})")
        if not self.omega > 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if self.beta != "auto":
            try:
                b = float(self.beta)
            except (TypeError, ValueError):
                raise ConfigError(f"beta must be 'auto' or a positive number, got {self.beta!r}")
            if not b > 0:
                raise ConfigError(f"beta must be positive, got {b}")
        if self.n_seeds < 1 or self.n_out < 2:
            raise ConfigError("need at least one seed and two checkpoints")

    @property
    def coefficient_spec(self) -> CoefficientSpec:
        return CoefficientSpec(self.lambda0, self.Lambda0, self.base, self.amp_t,
                               self.amp_x, self.J, self.seed)

    def solver_spec(self, n_min: int) -> CoefficientSpec:
        """The coefficient used inside the solver: depth capped so 2^J <= n/4."""
        return replace(self.coefficient_spec, J=min(self.J, _depth_cap(n_min)))

    def lower_order(self, n_min: Optional[int] = None) -> LowerOrderCoefficients:
        """Lower-order coefficients; with ``n_min`` the depth obeys the same cap as the solver."""
        J = self.J_b if n_min is None else min(self.J_b, _depth_cap(n_min))
        return make_lower_order(self.omega, self.amp_b, self.c0, J, self.seed)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theorem_ns"] = list(self.theorem_ns)
        return d


def _depth_cap(n_min: int) -> int:
    # largest J with 2^J <= n/4
    return max(1, int(n_min).bit_length() - 3)


def _flatten(d: dict, out: Optional[dict] = None) -> dict:
    out = {} if out is None else out
    for k, v in d.items():
        if isinstance(v, dict):
            _flatten(v, out)
        else:
            if k in out:
                raise ConfigError(f"key {k!r} given twice")
            out[k] = v
    return out


def config_from_mapping(raw: dict) -> ExperimentConfig:
    flat = _flatten(raw)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "theorem_ns" in flat:
        flat["theorem_ns"] = tuple(int(v) for v in flat["theorem_ns"])
    return ExperimentConfig(**flat)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_mapping(raw)
