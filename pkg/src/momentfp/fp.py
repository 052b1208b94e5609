"""Moment-based matrix FP precoder (the inverse-based solver).

The lower bound ``fhat(V, Gamma, Y)`` of the expected weighted sum rate only
depends on the channel moments through two contractions:

``U_{jk,ls} = E[H_{jk,l} V_ls V_ls^H H_{jk,l}^H]``            (Mr x Mr)
``Lambda_{j,ls} = E[H_{ls,j}^H Y_ls (I + Gamma_ls) Y_ls^H H_{ls,j}]``  (Mt x Mt)

Both are linear in their kernel, so they are evaluated as one matrix-vector
product per link with a permuted copy of ``D``.  The solver alternates the
closed-form optima of ``Y`` and ``Gamma`` with a power-constrained ``V``
update whose multiplier is found by bisection.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, InputError, NumericalError
from .linalg import cholesky, cho_solve, herm, hermitize, logdet_hpd

BISECT_RTOL = 1e-8
MONOTONE_RTOL = 1e-8


@dataclass
class AuxState:
    """Per-user auxiliary variables, each of shape ``(L, K, Mr, Mr)``."""

    Gamma: np.ndarray
    Y: np.ndarray


@dataclass
class SolveTrace:
    """Objective history of one solver run.

    ``fhat[0]`` is the value at the initial precoders (with their optimal
    auxiliaries), ``fhat[t]`` the value after ``t`` precoder updates.
    ``iter_time`` holds the wall time of every completed iteration in seconds.
    ``sandwich`` is filled only when requested; each row is
    ``(fhat_old, zeta_old, zeta_new, fhat_new)`` at fixed ``(Gamma, Y)``.
    """

    fhat: list = field(default_factory=list)
    iter_time: list = field(default_factory=list)
    iterations: int = 0
    stop_reason: str = ""
    sandwich: list = field(default_factory=list)

    def is_monotone(self, rtol=MONOTONE_RTOL):
        f = np.asarray(self.fhat)
        return bool(np.all(f[1:] >= f[:-1] - rtol * np.abs(f[:-1])))

    @property
    def final(self):
        return self.fhat[-1]

    def median_iter_time(self):
        return float(np.median(self.iter_time)) if self.iter_time else float("nan")


# ---------------------------------------------------------------------------
# moment contractions
# ---------------------------------------------------------------------------

def _dims_from_D(D, Mr):
    N = D.shape[-1]
    if N % Mr:
        raise ConfigurationError(f"second-moment size {N} is not a multiple of Mr={Mr}")
    return N // Mr


def u_operator(D, Mr):
    """Permute ``D`` so that ``vec_U = op @ ravel(V V^H)`` (row-major ravel).

    ``(U)_{m,n} = sum_{a,b} Q_{a,b} D[a*Mr + m, b*Mr + n]``.
    """
    Mt = _dims_from_D(D, Mr)
    D4 = D.reshape(D.shape[:-2] + (Mt, Mr, Mt, Mr))  # [a, m, b, n]
    op = np.moveaxis(D4, (-4, -3, -2, -1), (-2, -4, -1, -3))  # [m, n, a, b]
    return np.ascontiguousarray(op.reshape(D.shape[:-2] + (Mr * Mr, Mt * Mt)))


def lambda_operator(D, Mr):
    """Permute ``conj(D)`` so that ``vec_Lambda = op @ ravel(G)``.

    ``(Lambda)_{m,n} = sum_{a,b} G_{a,b} conj(D)[m*Mr + a, n*Mr + b]``.
    """
    Mt = _dims_from_D(D, Mr)
    D4 = np.conj(D).reshape(D.shape[:-2] + (Mt, Mr, Mt, Mr))  # [m, a, n, b]
    op = np.moveaxis(D4, (-4, -3, -2, -1), (-4, -2, -3, -1))  # [m, n, a, b]
    return np.ascontiguousarray(op.reshape(D.shape[:-2] + (Mt * Mt, Mr * Mr)))


def gram(V):
    """``V V^H`` over the last two axes."""
    return V @ herm(V)


def cell_gram(V):
    """``sum_s V_ls V_ls^H`` per BS as one GEMM of the stacked precoders, ``(L, Mt, Mt)``."""
    L, K, Mt, Mr = V.shape
    X = np.moveaxis(V, 1, 2).reshape(L, Mt, K * Mr)
    return X @ herm(X)


def compute_U(V, D):
    """All ``U_{jk,ls}``, shape ``(L, K, L, K, Mr, Mr)``, from the entrywise formula."""
    V = np.asarray(V)
    L, K, Mt, Mr = V.shape
    if D.shape != (L, K, L, Mr * Mt, Mr * Mt):
        raise ConfigurationError(f"D shape {D.shape} incompatible with V shape {V.shape}")
    op = u_operator(D, Mr)
    Q = gram(V).reshape(L, K, Mt * Mt)
    U = np.einsum("jklab,lsb->jklsa", op, Q).reshape(L, K, L, K, Mr, Mr)
    return hermitize(U)


def compute_U_gaussian(V, mean, var):
    """Closed-form ``U`` for links with independent zero-mean random entries.

    ``mean`` is the link mean ``(L, K, L, Mr, Mt)`` and ``var`` the entrywise
    variance of the random part (``(1 - rho^2) W**2`` for the Gaussian model).
    ``U = Hm Q Hm^H + diag(var @ Diag(Q))``.
    """
    V = np.asarray(V)
    Q = gram(V)  # (L, K, Mt, Mt)
    HQ = np.einsum("jklab,lsbc->jklsac", mean, Q)
    U = HQ @ herm(mean)[:, :, :, None]
    dq = np.diagonal(Q, axis1=-2, axis2=-1).real  # (L, K, Mt)
    diag = np.einsum("jklab,lsb->jklsa", var, dq)
    U = U + diag[..., :, None] * np.eye(V.shape[-1])
    return hermitize(U)


def total_U(V, op=None, D=None):
    """``sum_{(l,s)} U_{jk,ls}`` for every user, shape ``(L, K, Mr, Mr)``."""
    V = np.asarray(V)
    L, K, Mt, Mr = V.shape
    if op is None:
        op = u_operator(D, Mr)
    Qsum = cell_gram(V).reshape(L, Mt * Mt)
    U = np.einsum("jklab,lb->jka", op, Qsum).reshape(L, K, Mr, Mr)
    return hermitize(U)


def total_U_gaussian(V, mean, var):
    V = np.asarray(V)
    L, K, Mt, Mr = V.shape
    Q = cell_gram(V)
    U = np.zeros((L, K, Mr, Mr), dtype=complex)
    for l in range(L):
        Ml = mean[:, :, l]  # links from BS l, (L, K, Mr, Mt)
        MQ = (Ml.reshape(L * K * Mr, Mt) @ Q[l]).reshape(L, K, Mr, Mt)
        U += MQ @ herm(Ml)
    dq = np.diagonal(Q, axis1=-2, axis2=-1).real  # (L, Mt)
    d = np.sum(var * dq[:, None, :], axis=(-1, 2))  # over Mt and BS
    U += d[..., :, None] * np.eye(Mr)
    return hermitize(U)


def kernel(Y, Gamma):
    """``Y (I + Gamma) Y^H`` per user."""
    Mr = Y.shape[-1]
    return hermitize(Y @ (np.eye(Mr) + Gamma) @ herm(Y))


def compute_Lambda(Y, Gamma, D):
    """All ``Lambda_{j,ls}``, shape ``(L, L, K, Mt, Mt)`` indexed ``[j, l, s]``."""
    L, K, Mr, _ = Y.shape
    N = D.shape[-1]
    Mt = N // Mr
    op = lambda_operator(D, Mr)  # [l, s, j]
    G = kernel(Y, Gamma).reshape(L, K, Mr * Mr)
    Lam = np.einsum("lsjab,lsb->jlsa", op, G).reshape(L, L, K, Mt, Mt)
    return hermitize(Lam)


def compute_Lambda_gaussian(Y, Gamma, mean, var):
    """Closed-form ``Lambda`` for independent zero-mean random link entries.

    ``Lambda_{j,ls} = Hm^H G Hm + diag(var^T @ Diag(G))`` with ``Hm`` and
    ``var`` those of the link from BS ``j`` to user ``(l, s)``.
    """
    G = kernel(Y, Gamma)  # (L, K, Mr, Mr)
    Hm = np.moveaxis(mean, 2, 0)  # [j, l, s, Mr, Mt]
    Lam = herm(Hm) @ G[None] @ Hm
    dg = np.diagonal(G, axis1=-2, axis2=-1).real  # (L, K, Mr)
    vj = np.moveaxis(var, 2, 0)  # [j, l, s, Mr, Mt]
    diag = np.einsum("jlsab,lsa->jlsb", vj, dg)
    Mt = mean.shape[-1]
    return hermitize(Lam + diag[..., :, None] * np.eye(Mt))


def compute_Xi(Y, Gamma, weights, op=None, D=None):
    """``Xi_j = sum_{(l,s)} w_ls Lambda_{j,ls}``, shape ``(L, Mt, Mt)``."""
    L, K, Mr, _ = Y.shape
    if op is None:
        op = lambda_operator(D, Mr)
    Mt = int(round(np.sqrt(op.shape[-2])))
    G = (weights[..., None, None] * kernel(Y, Gamma)).reshape(L, K, Mr * Mr)
    Xi = np.einsum("lsjab,lsb->ja", op, G).reshape(L, Mt, Mt)
    return hermitize(Xi)


def compute_Xi_gaussian(Y, Gamma, weights, mean, var):
    L, K, Mr, _ = Y.shape
    Mt = mean.shape[-1]
    G = weights[..., None, None] * kernel(Y, Gamma)
    M = np.moveaxis(mean, 2, 0)  # [j, l, s, Mr, Mt]: link from BS j to user (l, s)
    GM = (G @ M).reshape(L, L * K * Mr, Mt)
    Xi = herm(M.reshape(L, L * K * Mr, Mt)) @ GM
    dg = np.diagonal(G, axis1=-2, axis2=-1).real  # (L, K, Mr)
    d = np.einsum("lsjab,lsa->jb", var, dg)
    return hermitize(Xi + d[..., :, None] * np.eye(Mt))


# ---------------------------------------------------------------------------
# block updates
# ---------------------------------------------------------------------------

def update_Y(V, C, U_total, sigma2):
    """``Y = (sigma2 I + sum U)^{-1} C V`` per user."""
    Mr = C.shape[-2]
    B = U_total + sigma2 * np.eye(Mr)
    return cho_solve(cholesky(B, sigma2, "sigma2*I + sum U"), C @ V)


def update_Gamma(V, C, U_total, sigma2):
    """``Gamma = (CV)^H (sigma2 I + sum U - CV (CV)^H)^{-1} CV`` per user."""
    Mr = C.shape[-2]
    S = C @ V
    B = U_total + sigma2 * np.eye(Mr) - S @ herm(S)
    X = cho_solve(cholesky(B, sigma2, "interference-plus-noise second moment"), S)
    return hermitize(herm(S) @ X)


def _retr(a, b):
    """``Re Tr(a b)`` over the last two axes."""
    return np.real(np.einsum("...ij,...ji->...", a, b))


def _gamma_terms(Gamma):
    Mr = Gamma.shape[-1]
    I = np.eye(Mr)
    ld = logdet_hpd(I + Gamma, 1.0, "I + Gamma")
    return ld - np.real(np.trace(Gamma, axis1=-2, axis2=-1))


def objective_fhat(V, Gamma, Y, C, U_total, sigma2, weights):
    """Lower bound on the expected weighted sum rate (nats).

    ``sum w [log|I+G| - Tr G + Tr((I+G)(2 Re(V^H C^H Y) - Y^H (sum U + s2 I) Y))]``
    where ``2 Re(A)`` denotes ``A + A^H``.
    """
    Mr = Gamma.shape[-1]
    IG = np.eye(Mr) + Gamma
    A = herm(C @ V) @ Y
    B = U_total + sigma2 * np.eye(Mr)
    quad = _retr(IG, 2.0 * A) - _retr(IG, herm(Y) @ B @ Y)
    return float(np.sum(weights * (_gamma_terms(Gamma) + quad)))


def objective_fhat_quadratic(V, Gamma, Y, C, Xi, sigma2, weights):
    """``fhat`` rewritten as a quadratic in ``V`` through ``Xi``.

    Equal to :func:`objective_fhat` at the same point; needs no ``U``, which
    makes it cheap to evaluate right after a precoder update.
    """
    Mr = Gamma.shape[-1]
    IG = np.eye(Mr) + Gamma
    A = herm(C @ V) @ Y
    w = weights
    lin = w * (2.0 * _retr(IG, A) - sigma2 * _retr(IG, herm(Y) @ Y))
    quad = _retr(herm(V), Xi[:, None] @ V)
    return float(np.sum(w * _gamma_terms(Gamma) + lin - quad))


def precoder_target(C, Y, Gamma, weights):
    """``w_jk C_jk^H Y_jk (I + Gamma_jk)``, shape ``(L, K, Mt, Mr)``."""
    Mr = Gamma.shape[-1]
    return weights[..., None, None] * (herm(C) @ Y @ (np.eye(Mr) + Gamma))


def _solve_cell(Xi_j, T, eta):
    """``(eta I + Xi_j)^{-1} T`` or None when the matrix is singular."""
    Mt = Xi_j.shape[-1]
    A = Xi_j + eta * np.eye(Mt)
    try:
        c = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    X = scipy.linalg.cho_solve(c, T, check_finite=False)
    if not np.all(np.isfinite(X)):
        return None
    return X


def power_bisection(Xi_j, T, P, rtol=BISECT_RTOL, max_steps=300):
    """Smallest ``eta >= 0`` with ``||(eta I + Xi)^{-1} T||_F^2 <= P``.

    Returns ``(X, eta)``.  The returned point is always feasible; bisection
    stops once the power is within ``rtol`` (relative) below ``P``.
    """
    if not np.any(T):
        return np.zeros_like(T), 0.0
    X = _solve_cell(Xi_j, T, 0.0)
    if X is not None and np.sum(np.abs(X) ** 2) <= P:
        return X, 0.0
    lo, hi = 0.0, 1.0
    Xhi = _solve_cell(Xi_j, T, hi)
    while Xhi is None or np.sum(np.abs(Xhi) ** 2) > P:
        lo, hi = hi, 2.0 * hi
        if not np.isfinite(hi):
            raise NumericalError("power multiplier search diverged")
        Xhi = _solve_cell(Xi_j, T, hi)
    for _ in range(max_steps):
        p = np.sum(np.abs(Xhi) ** 2)
        if P - p <= rtol * P:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        Xm = _solve_cell(Xi_j, T, mid)
        if Xm is not None and np.sum(np.abs(Xm) ** 2) <= P:
            hi, Xhi = mid, Xm
        else:
            lo = mid
    return Xhi, hi


def update_V(C, Y, Gamma, Xi, weights, P):
    """Optimal precoders for fixed ``(Gamma, Y)`` under the per-BS power budget.

    Returns ``(V, eta)`` with ``eta`` the per-cell power multipliers.
    """
    T = precoder_target(C, Y, Gamma, weights)
    if not (np.all(np.isfinite(T)) and np.all(np.isfinite(Xi))):
        raise InputError("non-finite input to the precoder update")
    L, K, Mt, Mr = T.shape
    V = np.empty_like(T)
    eta = np.zeros(L)
    for j in range(L):
        Tj = np.moveaxis(T[j], 0, 1).reshape(Mt, K * Mr)
        X, eta[j] = power_bisection(Xi[j], Tj, P)
        V[j] = np.moveaxis(X.reshape(Mt, K, Mr), 1, 0)
    return V, eta


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def initial_precoders(C, P):
    """``sqrt(P / (K Mr))`` times the ``Mr`` dominant right singular vectors of ``C_jk``."""
    L, K, Mr, Mt = C.shape
    _, _, vh = np.linalg.svd(C)
    V = herm(vh[..., :Mr, :])
    return np.sqrt(P / (K * Mr)) * V


class MomentModel:
    """Channel moments prepared for repeated contractions.

    ``contraction`` selects the entrywise path (``"entrywise"``), the closed
    form for independent zero-mean random entries (``"gaussian"``), or the
    closed form when the moments carry that structure (``"auto"``).
    """

    def __init__(self, moments, contraction="entrywise", validate=True):
        if validate:
            moments.check()
        self.moments = moments
        self.C = moments.C
        L, K, Mt, Mr = moments.dims
        self.dims = (L, K, Mt, Mr)
        if contraction == "auto":
            contraction = "gaussian" if moments.has_structure else "entrywise"
        if contraction == "gaussian" and not moments.has_structure:
            raise ConfigurationError("closed-form contraction needs link mean and variance")
        if contraction not in ("entrywise", "gaussian"):
            raise ConfigurationError(f"unknown contraction {contraction!r}")
        self.contraction = contraction
        if contraction == "entrywise":
            # one GEMV per contraction: rows (j, k, m, n), columns (l, a, b)
            op = u_operator(moments.D, Mr)
            self.u_cat = np.ascontiguousarray(
                op.transpose(0, 1, 3, 2, 4).reshape(L * K * Mr * Mr, L * Mt * Mt))
            # rows (j | m, n), columns (l, s, a, b)
            op = lambda_operator(moments.D, Mr)
            self.l_cat = np.ascontiguousarray(
                op.transpose(2, 3, 0, 1, 4).reshape(L, Mt * Mt, L * K * Mr * Mr))

    def total_U(self, V):
        if self.contraction == "gaussian":
            return total_U_gaussian(V, self.moments.link_mean, self.moments.link_var)
        L, K, Mt, Mr = self.dims
        Qsum = cell_gram(V).reshape(L * Mt * Mt)
        return hermitize((self.u_cat @ Qsum).reshape(L, K, Mr, Mr))

    def Xi(self, Y, Gamma, weights):
        if self.contraction == "gaussian":
            return compute_Xi_gaussian(Y, Gamma, weights, self.moments.link_mean,
                                       self.moments.link_var)
        L, K, Mt, Mr = self.dims
        g = (weights[..., None, None] * kernel(Y, Gamma)).reshape(L * K * Mr * Mr)
        return hermitize((self.l_cat @ g).reshape(L, Mt, Mt))


def _check_init(V, config):
    if V.shape != config.precoder_shape:
        raise ConfigurationError(f"initial precoders have shape {V.shape}, "
                                 f"expected {config.precoder_shape}")
    p = np.sum(np.abs(V) ** 2, axis=(1, 2, 3))
    if np.any(p > config.P * (1 + 1e-9)):
        raise ConfigurationError("initial precoders violate the power budget")


def _aux_step(model, V, sigma2, weights):
    C = model.C
    U = model.total_U(V)
    Y = update_Y(V, C, U, sigma2)
    Gamma = update_Gamma(V, C, U, sigma2)
    f = objective_fhat(V, Gamma, Y, C, U, sigma2, weights)
    return Y, Gamma, f


def run_algorithm1(moments, config, init=None, tol=1e-5, max_iters=200,
                   contraction="entrywise", callback=None):
    """Alternate the ``Y``, ``Gamma`` and ``V`` updates until ``fhat`` settles.

    Stops when the relative change of ``fhat`` between consecutive iterations
    drops below ``tol`` or after ``max_iters`` precoder updates.  The returned
    auxiliaries are optimal for the returned precoders, and ``trace.final`` is
    ``fhat`` at that point.

    ``callback(it, V, aux, fhat)`` is invoked after every auxiliary update.
    """
    model = moments if isinstance(moments, MomentModel) else MomentModel(moments, contraction)
    C = model.C
    sigma2, w, P = config.sigma2, config.weights, config.P
    V = initial_precoders(C, P) if init is None else np.array(init, dtype=complex)
    _check_init(V, config)
    trace = SolveTrace()
    prev = None
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
        try:
            Xi = model.Xi(Y, Gamma, w)
            V, _ = update_V(C, Y, Gamma, Xi, w, P)
        except NumericalError as e:
            e.iteration = it
            raise
        trace.iter_time.append(time.perf_counter() - t0)
        trace.iterations = it + 1
        prev = f
    return V, AuxState(Gamma, Y), trace


def fhat_at(moments_or_model, V, config, contraction="entrywise"):
    """``fhat`` at ``V`` with its optimal auxiliaries (the tightest bound at ``V``)."""
    model = moments_or_model if isinstance(moments_or_model, MomentModel) else \
        MomentModel(moments_or_model, contraction)
    _, _, f = _aux_step(model, np.asarray(V, dtype=complex), config.sigma2, config.weights)
    return f
