"""Per-iteration timing of the two solvers as the transmit array grows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channels import analytic_moments, models_from_topology
from ..fastfp import run_algorithm2
from ..fp import MomentModel, initial_precoders, run_algorithm1
from ..network import NetworkConfig, dbm_to_watt, generate_topology


@dataclass
class BenchRow:
    mt: int
    fp_ms: float
    fast_fp_ms: float
    iterations: int

    @property
    def ratio(self):
        return self.fp_ms / self.fast_fp_ms


def time_solvers(Mt, K=16, Mr=2, n_iters=25, seed=0, rho=0.5, family="gaussian"):
    """Median per-iteration wall time (ms) of both solvers on one single-cell instance.

    Each solver gets one short warmup run, then ``n_iters`` iterations with
    the stopping rule disabled, from the same starting point.
    """
    net = NetworkConfig(1, K, Mt, Mr, P=dbm_to_watt(30.0), sigma2=dbm_to_watt(-90.0))
    topo = generate_topology(net, seed=seed)
    model = MomentModel(analytic_moments(models_from_topology(topo, net, family, rho, seed=seed)),
                        "auto")
    V0 = initial_precoders(model.C, net.P)
    run_algorithm1(model, net, init=V0, tol=0.0, max_iters=2)
    run_algorithm2(model, net, init=V0, tol=0.0, max_iters=2)
    _, _, t1 = run_algorithm1(model, net, init=V0, tol=0.0, max_iters=n_iters)
    _, _, _, t2 = run_algorithm2(model, net, init=V0, tol=0.0, max_iters=n_iters)
    return BenchRow(Mt, float(np.median(t1.iter_time) * 1e3), float(np.median(t2.iter_time) * 1e3),
                    n_iters)


def run_bench(mt_list, K=16, Mr=2, n_iters=25, seed=0):
    return [time_solvers(Mt, K, Mr, n_iters, seed) for Mt in mt_list]
