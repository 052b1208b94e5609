"""Benchmark that treats the static channel components as exact."""
from __future__ import annotations

from ..channels import deterministic_moments
from ..fp import run_algorithm1


def wmmse_static(H_static, config, init=None, tol=1e-5, max_iters=200):
    """Precoders optimized for the deterministic channels ``H_static``.

    ``H_static`` has the full ``(L, K, L, Mr, Mt)`` layout.  With rank-one
    second moments the moment-based iteration reduces to a deterministic
    WMMSE-type fixed point, so this is the usual static-CSI benchmark.  The
    result is meant to be scored under the true fading model.

    Returns ``(V, trace)``.
    """
    V, _, trace = run_algorithm1(deterministic_moments(H_static), config, init=init, tol=tol,
                                 max_iters=max_iters)
    return V, trace
