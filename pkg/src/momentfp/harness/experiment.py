"""Sweeps: topology, fading model, solvers and common-random-number scoring."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .. import __version__
from ..channels import analytic_moments, models_from_topology
from ..errors import PrecodingError
from ..fastfp import run_algorithm2
from ..fp import MomentModel, fhat_at, run_algorithm1
from ..network import generate_topology, monte_carlo_weighted_sum_rate
from .baseline import wmmse_static
from .config import ExperimentConfig

# block stream for scoring; shared by every algorithm and sweep point
MC_STREAM_OFFSET = 1_000_003


@dataclass
class ReportRow:
    sweep_param: str
    sweep_value: float
    algorithm: str
    fhat_nats: Optional[float]
    mc_rate_nats: Optional[float]
    mc_ci99_nats: Optional[float]
    iters: Optional[int]
    iter_time_ms: Optional[float]
    seed: int
    block_digest: str = ""
    error: Optional[str] = None

    @property
    def failed(self):
        return self.error is not None

    @property
    def bound_ok(self):
        """``fhat`` does not exceed the Monte-Carlo upper confidence limit."""
        if self.failed:
            return True
        return self.fhat_nats <= self.mc_rate_nats + self.mc_ci99_nats


@dataclass
class ExperimentReport:
    config: dict
    config_digest: str
    seed: int
    version: str = __version__
    rows: List[ReportRow] = field(default_factory=list)

    def to_dict(self):
        return {"config": self.config, "config_digest": self.config_digest, "seed": self.seed,
                "version": self.version, "rows": [asdict(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d):
        return cls(config=d["config"], config_digest=d["config_digest"], seed=d["seed"],
                   version=d["version"], rows=[ReportRow(**r) for r in d["rows"]])

    def bound_violations(self):
        return [r for r in self.rows if not r.bound_ok]

    def crn_consistent(self):
        """True when all rows of a sweep point were scored on the same blocks."""
        seen = {}
        for r in self.rows:
            if r.failed:
                continue
            if seen.setdefault(r.sweep_value, r.block_digest) != r.block_digest:
                return False
        return True


def _median_ms(trace):
    return float(np.median(trace.iter_time) * 1e3) if trace.iter_time else 0.0


def _solve(name, model, fading, net, cfg):
    if name == "fp":
        V, _, tr = run_algorithm1(model, net, tol=cfg.tol, max_iters=cfg.max_iters)
        return V, tr.final, tr
    if name == "fast-fp":
        V, _, _, tr = run_algorithm2(model, net, tol=cfg.tol, max_iters=cfg.max_iters)
        return V, tr.final, tr
    V, tr = wmmse_static(fading.mean, net, tol=cfg.tol, max_iters=cfg.max_iters)
    # the baseline's own bound assumed static channels; rescore it under the true moments
    return V, fhat_at(model, V, net), tr


def sweep_point(cfg: ExperimentConfig, value):
    """Network config, fading model and moments for one sweep value."""
    p = cfg.sweep.param
    net = cfg.network(sigma2_dbm=value if p == "sigma2_dbm" else None,
                      Mt=int(value) if p == "mt" else None)
    rho = value if p == "rho" else cfg.rho
    topo = generate_topology(net, cell_radius_m=cfg.cell_radius_m, seed=cfg.seed)
    fading = models_from_topology(topo, net, cfg.family, rho=rho, m=cfg.nakagami_m,
                                  seed=cfg.seed)
    return net, fading, analytic_moments(fading)


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentReport:
    """Run every algorithm at every sweep point and score them on common blocks.

    Rows are ordered by sweep index, then algorithm name.  A solver failure
    is recorded in the row's ``error`` field and the sweep continues.
    """
    report = ExperimentReport(config=cfg.to_dict(), config_digest=cfg.digest(), seed=cfg.seed)
    algos = sorted(cfg.algorithms)
    mc_seed = cfg.seed + MC_STREAM_OFFSET
    for value in cfg.sweep.values:
        net, fading, moments = sweep_point(cfg, value)
        model = MomentModel(moments, "auto")
        for name in algos:
            row = ReportRow(cfg.sweep.param, float(value), name, None, None, None, None, None,
                            cfg.seed)
            try:
                V, fhat, tr = _solve(name, model, fading, net, cfg)
                est = monte_carlo_weighted_sum_rate(fading, V, net.sigma2, net.weights,
                                                    n_blocks=cfg.n_blocks, seed=mc_seed)
            except PrecodingError as e:
                row.error = f"{type(e).__name__}: {e}"
            else:
                row.fhat_nats = float(fhat)
                row.mc_rate_nats = float(est.mean)
                row.mc_ci99_nats = float(est.half_width)
                row.iters = int(tr.iterations)
                row.iter_time_ms = _median_ms(tr) if cfg.timing else None
                row.block_digest = est.digest
                if not math.isfinite(row.fhat_nats):
                    row.error = "non-finite objective"
            report.rows.append(row)
            if progress is not None:
                progress(row)
    return report
