"""Experiment configuration read from YAML."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import yaml

from ..errors import ConfigurationError
from ..network import NetworkConfig, dbm_to_watt

SCENARIOS = ("single-cell", "multi-cell")
FAMILIES = ("gaussian", "nakagami")
SWEEP_PARAMS = ("sigma2_dbm", "rho", "mt")
ALGORITHMS = ("fast-fp", "fp", "wmmse-static")

# (L, K, Mt, Mr): desk-sized defaults and the full-size setup
DESK_DIMS = {"single-cell": (1, 8, 16, 2), "multi-cell": (7, 4, 8, 2)}
FULL_DIMS = {"single-cell": (1, 32, 64, 2), "multi-cell": (7, 16, 32, 2)}


@dataclass
class Sweep:
    param: str = "sigma2_dbm"
    values: List[float] = field(default_factory=lambda: [-90.0])

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigurationError(f"sweep.param must be one of {SWEEP_PARAMS}, got {self.param!r}")
        if not isinstance(self.values, (list, tuple)) or len(self.values) == 0:
            raise ConfigurationError("sweep.values must be a nonempty list")
        self.values = [float(v) for v in self.values]
        if self.param == "mt" and any(v != int(v) or v < 1 for v in self.values):
            raise ConfigurationError("mt sweep values must be positive integers")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one sweep.

    Dimensions left as ``None`` take the desk defaults of the scenario, or the
    full-size ones when ``paper_scale`` is set.
    """

    scenario: str = "single-cell"
    family: str = "gaussian"
    L: Optional[int] = None
    K: Optional[int] = None
    Mt: Optional[int] = None
    Mr: Optional[int] = None
    paper_scale: bool = False
    P_dbm: float = 30.0
    sigma2_dbm: float = -90.0
    rho: float = 0.5
    nakagami_m: float = 0.5
    weight: float = 1.0
    cell_radius_m: float = 300.0
    sweep: Sweep = field(default_factory=Sweep)
    algorithms: List[str] = field(default_factory=lambda: ["fp", "fast-fp", "wmmse-static"])
    n_blocks: int = 1000
    seed: int = 0
    tol: float = 1e-5
    max_iters: int = 200
    timing: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.sweep, dict):
            _reject_unknown(self.sweep, Sweep, "sweep")
            self.sweep = Sweep(**self.sweep)
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {SCENARIOS}")
        if self.family not in FAMILIES:
            raise ConfigurationError(f"family must be one of {FAMILIES}")
        if not self.algorithms:
            raise ConfigurationError("at least one algorithm is required")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigurationError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigurationError("algorithms listed twice")
        if self.n_blocks < 2:
            raise ConfigurationError("n_blocks must be at least 2")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigurationError("rho must lie in (0, 1]")
        if self.scenario == "single-cell" and self.L not in (None, 1):
            raise ConfigurationError("single-cell scenario has L = 1")
        if self.scenario == "multi-cell" and self.L not in (None, 7):
            raise ConfigurationError("multi-cell scenario uses the 7-cell wrap-around layout")

    @property
    def dims(self):
        base = (FULL_DIMS if self.paper_scale else DESK_DIMS)[self.scenario]
        given = (self.L, self.K, self.Mt, self.Mr)
        return tuple(int(g) if g is not None else b for g, b in zip(given, base))

    def network(self, sigma2_dbm=None, Mt=None) -> NetworkConfig:
        L, K, Mt0, Mr = self.dims
        s = self.sigma2_dbm if sigma2_dbm is None else sigma2_dbm
        return NetworkConfig(L, K, int(Mt or Mt0), Mr, P=dbm_to_watt(self.P_dbm),
                             sigma2=dbm_to_watt(s), weights=self.weight * np.ones((L, K)))

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigurationError("configuration must be a mapping")
        _reject_unknown(d, cls, "config")
        return cls(**d)

    def digest(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **kw):
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(d)


def _reject_unknown(d, cls, where):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(d) - known)
    if extra:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(extra)}")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            d = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return ExperimentConfig.from_dict(d)
