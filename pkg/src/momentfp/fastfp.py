"""Inverse-free precoder for large transmit arrays.

The quadratic term ``V^H Xi_j V`` of the bound is majorized by
``alpha_j V^H V`` plus a correction centred at an auxiliary point ``Z``
(``alpha_j`` at least the top eigenvalue of ``Xi_j``).  The resulting surrogate
``zeta`` touches ``fhat`` at ``Z = V``, and its maximizer over ``V`` is a
gradient-like step followed by a scaling onto the power budget, so no
``Mt x Mt`` system is ever solved.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .fp import (AuxState, MomentModel, SolveTrace, _aux_step, _check_init, _gamma_terms, _retr,
                 initial_precoders, objective_fhat_quadratic, precoder_target)
from .linalg import herm, power_iteration

ALPHA_INFLATION = 1e-9


@dataclass
class FastAuxState:
    Z: np.ndarray  # (L, K, Mt, Mr)
    Xi: np.ndarray  # (L, Mt, Mt)
    alpha: np.ndarray  # (L,)


def compute_alpha(Xi, tol=1e-10, max_iter=500, warm=None):
    """Top eigenvalue of each ``Xi_j`` by power iteration, inflated by ``1 + 1e-9``.

    ``warm`` is an optional ``(L, Mt)`` array of start vectors; it is
    overwritten with the final iterates so the next call starts close.
    """
    alpha = np.empty(Xi.shape[0])
    for j in range(Xi.shape[0]):
        x0 = None if warm is None else warm[j]
        lam, _, x = power_iteration(Xi[j], tol=tol, max_iter=max_iter, x0=x0, return_vector=True)
        if warm is not None and x is not None:
            warm[j] = x
        alpha[j] = max(lam, 0.0) * (1.0 + ALPHA_INFLATION)
    return alpha


def compute_Xi_alpha(Lambda, weights):
    """``Xi_j = sum w_ls Lambda_{j,ls}`` and ``alpha_j`` from ``Lambda[j, l, s]``."""
    Xi = np.einsum("ls,jlsab->jab", weights, Lambda)
    Xi = 0.5 * (Xi + herm(Xi))
    return Xi, compute_alpha(Xi)


def quadratic_majorizer(Lm, Km, X, Z):
    """Upper bound on ``Tr(X^H Lm X)`` for Hermitian ``Lm <= Km``, tight at ``Z = X``.

    ``Tr(X^H Km X + 2 Re{X^H (Lm - Km) Z} + Z^H (Km - Lm) Z)``.
    """
    D = Lm - Km
    xz = np.vdot(X, D @ Z)  # Tr(X^H D Z)
    return float(np.vdot(X, Km @ X).real + 2.0 * xz.real - np.vdot(Z, D @ Z).real)


def update_Z(V):
    return np.array(V, copy=True)


def update_V_fast(C, Y, Gamma, Z, Xi, alpha, weights, P):
    """Surrogate maximizer: one step from ``Z`` then scaling onto the budget.

    ``Psi = Z + (T - Xi Z) / alpha`` with ``T = w C^H Y (I + Gamma)``; cells
    whose ``Psi`` exceeds ``P`` are scaled by ``sqrt(P / ||Psi||^2)``.  A cell
    with ``alpha = 0`` has a linear surrogate and is sent along ``T`` at full
    power.
    """
    T = precoder_target(C, Y, Gamma, weights)
    L, K, Mt, Mr = T.shape
    V = np.empty_like(T)
    for j in range(L):
        if alpha[j] > 0:
            Zj = np.moveaxis(Z[j], 0, 1).reshape(Mt, K * Mr)
            XiZ = np.moveaxis((Xi[j] @ Zj).reshape(Mt, K, Mr), 1, 0)
            psi = Z[j] + (T[j] - XiZ) / alpha[j]
        elif np.any(Xi[j]):
            raise ConfigurationError("alpha must bound the spectrum of Xi")
        else:
            psi = T[j]
            p = np.sum(np.abs(psi) ** 2)
            V[j] = psi * np.sqrt(P / p) if p > 0 else psi
            continue
        p = np.sum(np.abs(psi) ** 2)
        V[j] = psi if p <= P else psi * np.sqrt(P / p)
    return V


def objective_zeta(V, Gamma, Y, Z, C, Xi, alpha, sigma2, weights):
    """Surrogate lower bound of ``fhat``; equal to it at ``Z = V``."""
    Mr = Gamma.shape[-1]
    IG = np.eye(Mr) + Gamma
    w = weights
    A = herm(C @ V) @ Y
    a = alpha[:, None, None, None]
    XiZ = Xi[:, None] @ Z
    cross = _retr(herm(V), a * Z - XiZ)
    const = _retr(herm(Z), XiZ - a * Z)
    vv = alpha[:, None] * np.sum(np.abs(V) ** 2, axis=(-2, -1))
    lin = w * (2.0 * _retr(IG, A) - sigma2 * _retr(IG, herm(Y) @ Y))
    return float(np.sum(w * _gamma_terms(Gamma) + lin + 2.0 * cross + const - vv))


def run_algorithm2(moments, config, init=None, tol=1e-5, max_iters=200,
                   contraction="entrywise", log_surrogate=False, callback=None):
    """Alternate ``Y``, ``Gamma``, ``Z`` and the inverse-free ``V`` update.

    Same stopping rule as :func:`momentfp.fp.run_algorithm1`, applied to
    ``fhat``.  With ``log_surrogate`` every iteration appends
    ``(fhat_old, zeta_old, zeta_new, fhat_new)`` to ``trace.sandwich``.
    """
    model = moments if isinstance(moments, MomentModel) else MomentModel(moments, contraction)
    C = model.C
    sigma2, w, P = config.sigma2, config.weights, config.P
    V = initial_precoders(C, P) if init is None else np.array(init, dtype=complex)
    _check_init(V, config)
    trace = SolveTrace()
    prev = None
    fast = None
    warm = np.zeros((C.shape[0], C.shape[-1]), dtype=complex)
    for it in range(max_iters + 1):
        t0 = time.perf_counter()
        try:
            Y, Gamma, f = _aux_step(model, V, sigma2, w)
        except NumericalError as e:
            e.iteration = it
            raise
        trace.fhat.append(f)
        if callback is not None:
            callback(it, V, AuxState(Gamma, Y), f)
        if prev is not None and abs(f - prev) <= tol * abs(prev):
            trace.stop_reason = "converged"
            break
        if it == max_iters:
            trace.stop_reason = "max_iters"
            break
        Z = update_Z(V)
        Xi = model.Xi(Y, Gamma, w)
        alpha = compute_alpha(Xi, warm=warm)
        V_new = update_V_fast(C, Y, Gamma, Z, Xi, alpha, w, P)
        trace.iter_time.append(time.perf_counter() - t0)
        if log_surrogate:
            z_old = objective_zeta(V, Gamma, Y, Z, C, Xi, alpha, sigma2, w)
            z_new = objective_zeta(V_new, Gamma, Y, Z, C, Xi, alpha, sigma2, w)
            f_new = objective_fhat_quadratic(V_new, Gamma, Y, C, Xi, sigma2, w)
            trace.sandwich.append((f, z_old, z_new, f_new))
        fast = FastAuxState(Z, Xi, alpha)
        V = V_new
        trace.iterations = it + 1
        prev = f
    if fast is None:
        Mt = C.shape[-1]
        fast = FastAuxState(V.copy(), np.zeros((C.shape[0], Mt, Mt), complex),
                            np.zeros(C.shape[0]))
    return V, AuxState(Gamma, Y), fast, trace
