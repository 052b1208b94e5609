"""Small Hermitian linear-algebra helpers shared by the solvers.

Everything works on stacks of matrices (leading batch axes) so the solvers can
update all users of a network at once.
"""
import numpy as np
import scipy.linalg

from .errors import NumericalError

JITTER = 1e-12


def herm(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a):
    """Return the exactly Hermitian part ``(A + A^H) / 2``."""
    return 0.5 * (a + herm(a))


def eye_like(n, batch_shape=(), dtype=complex):
    return np.broadcast_to(np.eye(n, dtype=dtype), tuple(batch_shape) + (n, n))


def cholesky(a, scale=1.0, what="matrix"):
    """Batched lower Cholesky factor of Hermitian positive-definite ``a``.

    On failure a diagonal jitter of ``JITTER * scale`` is added once; if the
    factorization still fails a NumericalError is raised.  ``scale`` should be
    the natural floor of the matrix (the noise power for interference-plus-noise
    covariances).
    """
    a = hermitize(np.asarray(a))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    n = a.shape[-1]
    try:
        return np.linalg.cholesky(a + JITTER * scale * np.eye(n))
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(a)
        raise NumericalError(
            f"{what} is not positive definite",
            min_eigenvalue=float(w.min()),
            max_eigenvalue=float(w.max()),
        ) from None


def cho_solve(chol, b):
    """Solve ``A X = B`` given the batched lower factor of ``A``."""
    y = np.linalg.solve(chol, b) if chol.ndim > 2 else scipy.linalg.solve_triangular(
        chol, b, lower=True)
    ch = herm(chol)
    if chol.ndim > 2:
        return np.linalg.solve(ch, y)
    return scipy.linalg.solve_triangular(ch, y, lower=False)


def hpd_solve(a, b, scale=1.0, what="matrix"):
    """Solve ``A X = B`` for Hermitian positive-definite (stacks of) ``A``."""
    return cho_solve(cholesky(a, scale, what), b)


def logdet_from_cholesky(chol):
    d = np.diagonal(chol, axis1=-2, axis2=-1).real
    return 2.0 * np.sum(np.log(d), axis=-1)


def logdet_hpd(a, scale=1.0, what="matrix"):
    """log-determinant of Hermitian positive-definite (stacks of) ``a``."""
    return logdet_from_cholesky(cholesky(a, scale, what))


def min_eig_ratio(a):
    """Smallest eigenvalue of Hermitian ``a`` relative to ``1 + |trace|``."""
    a = hermitize(np.asarray(a))
    w = np.linalg.eigvalsh(a)
    tr = np.abs(np.trace(a, axis1=-2, axis2=-1))
    return w[..., 0] / (1.0 + tr)


def _power_run(a, x, tol, max_iter):
    x = x / np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = a @ x
        new = np.vdot(x, y).real
        ny = np.sqrt(np.vdot(y, y).real)
        if ny == 0.0:
            return None
        x = y / ny
        if abs(new - lam) <= tol * abs(new):
            # Rayleigh quotient of the normalized iterate
            return float(np.vdot(x, a @ x).real), x
        lam = new
    return None


def power_iteration(a, tol=1e-10, max_iter=500, x0=None, return_vector=False):
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Starts from ``x0`` when given (a warm start from a nearby matrix), then
    from the normalized all-ones vector.  If the Rayleigh quotient has not
    settled to ``tol`` (relative) after ``max_iter`` steps, the start vector is
    perturbed deterministically and the iteration restarted once; if that also
    fails the exact value from ``eigvalsh`` is returned.

    Returns
    -------
    lam : float
    converged : bool
        False when the dense fallback was used.
    x : ndarray, only with ``return_vector``
        Last iterate, usable as the next warm start (None after the fallback).
    """
    n = a.shape[0]
    if not np.any(a):
        return (0.0, True, None) if return_vector else (0.0, True)
    starts = [] if x0 is None or not np.any(x0) else [np.asarray(x0, dtype=complex)]
    starts.append(np.ones(n, dtype=complex))
    # a repeated top eigenvalue orthogonal to all-ones stalls the iteration
    starts.append(np.ones(n, dtype=complex) + 1j * np.linspace(-1.0, 1.0, n))
    for x in starts:
        out = _power_run(a, x, tol, max_iter)
        if out is not None:
            return (out[0], True, out[1]) if return_vector else (out[0], True)
    lam = float(np.linalg.eigvalsh(hermitize(a))[-1])
    return (lam, False, None) if return_vector else (lam, False)
