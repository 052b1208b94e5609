"""Fading models, realization sampling and channel moments.

Array layout used throughout the package (``L`` cells, ``K`` users per cell):

* a channel realization ``H`` has shape ``(L, K, L, Mr, Mt)`` where
  ``H[j, k, l]`` is the channel from BS ``l`` to user ``(j, k)``;
* first moments ``C`` have shape ``(L, K, Mr, Mt)`` (direct links only);
* second moments ``D`` have shape ``(L, K, L, Mr*Mt, Mr*Mt)`` and are indexed
  by the column-major vectorization, i.e. entry ``H[m, m']`` of a link sits at
  position ``m' * Mr + m`` of ``vec(H)``.

Random components are drawn from two uniforms per matrix entry (magnitude
by inverse transform, phase uniform on the circle).  Because every block then
consumes a fixed number of draws, block ``i`` of a Monte-Carlo run can be
regenerated from ``(seed, i)`` alone with a Philox counter offset, and
chunking or parallel evaluation does not change any result.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .errors import ConfigurationError, InputError

PSD_RTOL = 1e-9

# stream tags, so topology draws and Monte-Carlo blocks never share a stream
STREAM_BLOCKS = 1
STREAM_STATIC = 2
STREAM_EMPIRICAL = 3


def vec(a):
    """Column-major vectorization over the last two axes."""
    a = np.asarray(a)
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (a.shape[-1] * a.shape[-2],))


def unvec(v, n_rows):
    v = np.asarray(v)
    n_cols = v.shape[-1] // n_rows
    return np.swapaxes(v.reshape(v.shape[:-1] + (n_cols, n_rows)), -1, -2)


def philox_key(seed, tag):
    """128-bit Philox key derived from ``(seed, tag)``."""
    ss = np.random.SeedSequence([int(seed), int(tag)])
    return ss.generate_state(2, dtype=np.uint64)


def _mix(seed, tag):
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1)[0])


def block_generator(seed, block, stride, tag=STREAM_BLOCKS):
    """Generator positioned at the first draw of ``block``.

    ``stride`` (draws per block) must be a multiple of 4: one Philox counter
    increment yields four 64-bit draws.
    """
    if stride % 4:
        raise ConfigurationError("stride must be a multiple of 4")
    bitgen = np.random.Philox(key=philox_key(seed, tag), counter=block * (stride // 4))
    return np.random.Generator(bitgen)


class _FadingBase:
    """Shared sampling machinery; subclasses provide ``_magnitude``."""

    hbar: np.ndarray
    rho: np.ndarray

    @property
    def shape(self):
        return self.hbar.shape

    @property
    def dims(self):
        L, K, _, Mr, Mt = self.hbar.shape
        return L, K, Mt, Mr

    @property
    def n_draws(self):
        """Uniform draws consumed by one realization."""
        return 2 * self.hbar.size

    @property
    def stride(self):
        return -(-self.n_draws // 4) * 4

    def _rho5(self):
        return self.rho[:, :, None, None, None]

    @property
    def mean(self):
        """Mean of every link, ``rho * Hbar``."""
        return self._rho5() * self.hbar

    @property
    def variance(self):
        """Entrywise variance of every link (random part is zero-mean, independent)."""
        return (1.0 - self._rho5() ** 2) * self._entry_power()

    def _random_part(self, u):
        # u: (..., 2, *shape) uniforms in [0, 1)
        mag = self._magnitude(1.0 - u[..., 0, :, :, :, :, :])
        phase = np.exp(2j * np.pi * u[..., 1, :, :, :, :, :])
        return mag * phase

    def from_uniforms(self, u):
        """Realizations from uniforms of shape ``(..., 2, L, K, L, Mr, Mt)``."""
        r = self._rho5()
        return r * self.hbar + np.sqrt(1.0 - r ** 2) * self._random_part(u)

    def sample(self, rng):
        """One realization drawn from ``rng`` (consumes ``n_draws`` uniforms)."""
        u = rng.random(self.n_draws).reshape((2,) + self.shape)
        return self.from_uniforms(u)

    def sample_blocks(self, seed, start, stop):
        """Realizations for blocks ``start..stop-1`` of the stream ``seed``.

        Identical to calling ``sample(block_generator(seed, i, stride))`` for
        each block, but drawn in one shot.
        """
        n = stop - start
        rng = block_generator(seed, start, self.stride)
        u = rng.random((n, self.stride))[:, : self.n_draws]
        return self.from_uniforms(u.reshape((n, 2) + self.shape))

    def random_component(self, rng):
        """A draw of the zero-mean random component alone (used for ``Hbar``)."""
        u = rng.random(self.n_draws).reshape((2,) + self.shape)
        return self._random_part(u)


@dataclass
class GaussianFadingModel(_FadingBase):
    """``H = rho * Hbar + sqrt(1 - rho^2) * W o X`` with ``X`` i.i.d. CN(0, 1).

    ``scale`` is the real mask ``W`` (same shape as ``hbar``) and ``rho`` holds
    one temporal correlation coefficient per user, shape ``(L, K)``.
    """

    hbar: np.ndarray
    scale: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.hbar = np.asarray(self.hbar, dtype=complex)
        self.scale = np.broadcast_to(np.asarray(self.scale, dtype=float), self.hbar.shape).copy()
        self.rho = _check_rho(self.rho, self.hbar.shape)
        if self.hbar.ndim != 5:
            raise ConfigurationError("hbar must have shape (L, K, L, Mr, Mt)")
        if np.any(self.scale < 0) or not np.all(np.isfinite(self.scale)):
            raise InputError("scale mask entries must be finite and nonnegative")
        if not np.all(np.isfinite(self.hbar)):
            raise InputError("hbar has non-finite entries")

    family = "gaussian"

    def _entry_power(self):
        return self.scale ** 2

    def _magnitude(self, u):
        # |CN(0, s^2)| is Rayleigh: |x|^2 ~ Exp(mean s^2)
        return self.scale * np.sqrt(-np.log(u))


@dataclass
class NakagamiFadingModel(_FadingBase):
    """``H = rho * Hbar + sqrt(1 - rho^2) * M`` with Nakagami-m entries.

    Each entry of ``M`` has a uniform phase and magnitude ~ Nakagami(m, Omega),
    i.e. squared magnitude ~ Gamma(shape m, scale Omega / m).
    """

    hbar: np.ndarray
    omega: np.ndarray
    rho: np.ndarray
    m: float = 0.5

    family = "nakagami"

    def __post_init__(self):
        self.hbar = np.asarray(self.hbar, dtype=complex)
        self.omega = np.broadcast_to(np.asarray(self.omega, dtype=float), self.hbar.shape).copy()
        self.rho = _check_rho(self.rho, self.hbar.shape)
        if self.hbar.ndim != 5:
            raise ConfigurationError("hbar must have shape (L, K, L, Mr, Mt)")
        if not self.m >= 0.5:
            raise ConfigurationError(f"Nakagami shape m must be >= 0.5, got {self.m}")
        if np.any(self.omega <= 0) or not np.all(np.isfinite(self.omega)):
            raise InputError("omega entries must be finite and positive")
        if not np.all(np.isfinite(self.hbar)):
            raise InputError("hbar has non-finite entries")

    def _entry_power(self):
        return self.omega

    def _magnitude(self, u):
        # inverse transform of the Gamma(m, 1) upper tail; u in (0, 1]
        if self.m == 0.5:
            # Q(1/2, x) = erfc(sqrt(x)); same values, far cheaper than the general inverse
            g = special.erfcinv(u) ** 2
        else:
            g = special.gammainccinv(self.m, u)
        return np.sqrt(self.omega / self.m * g)


def _check_rho(rho, shape):
    L, K = shape[0], shape[1]
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (L, K)).copy()
    if np.any(rho <= 0) or np.any(rho > 1):
        raise ConfigurationError("rho must lie in (0, 1]")
    return rho


def sample_gaussian(model: GaussianFadingModel, rng) -> np.ndarray:
    return model.sample(rng)


def sample_nakagami(model: NakagamiFadingModel, rng) -> np.ndarray:
    return model.sample(rng)


@dataclass
class ChannelMoments:
    """First moments of the direct links and second moments of all links.

    ``link_mean`` and ``link_var`` are only present when the moments come from
    a model whose random part has independent zero-mean entries; they enable
    the closed-form contractions in :mod:`momentfp.fp`.
    """

    C: np.ndarray
    D: np.ndarray
    link_mean: Optional[np.ndarray] = field(default=None, repr=False)
    link_var: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=complex)
        self.D = np.asarray(self.D, dtype=complex)
        if self.C.ndim != 4 or self.D.ndim != 5:
            raise ConfigurationError("C must be (L, K, Mr, Mt) and D (L, K, L, N, N)")
        L, K, Mr, Mt = self.C.shape
        if self.D.shape != (L, K, L, Mr * Mt, Mr * Mt):
            raise ConfigurationError(
                f"D has shape {self.D.shape}, expected {(L, K, L, Mr * Mt, Mr * Mt)}")
        if not (np.all(np.isfinite(self.C)) and np.all(np.isfinite(self.D))):
            raise InputError("moments contain non-finite entries")

    @property
    def dims(self):
        L, K, Mr, Mt = self.C.shape
        return L, K, Mt, Mr

    @property
    def has_structure(self):
        return self.link_mean is not None and self.link_var is not None

    def direct_D(self):
        L = self.C.shape[0]
        idx = np.arange(L)
        return self.D[idx, :, idx]

    def check(self, rtol=PSD_RTOL):
        """Raise InputError unless D is Hermitian PSD and dominates vec(C)vec(C)^H."""
        D = self.D
        tr = np.abs(np.trace(D, axis1=-2, axis2=-1))
        if np.max(np.abs(D - np.conj(np.swapaxes(D, -1, -2)))) > rtol * max(tr.max(), 1e-300):
            raise InputError("second moments are not Hermitian")
        w = np.linalg.eigvalsh(D)[..., 0]
        if np.any(w < -rtol * tr):
            raise InputError("second moments are not positive semidefinite")
        c = vec(self.C)
        cov = self.direct_D() - c[..., :, None] * np.conj(c[..., None, :])
        wc = np.linalg.eigvalsh(cov)[..., 0]
        if np.any(wc < -rtol * np.abs(np.trace(self.direct_D(), axis1=-2, axis2=-1))):
            raise InputError(
                "direct-link second moment does not dominate vec(C)vec(C)^H; "
                "C and D are not the moments of one distribution")
        return self

    # -- persistence -----------------------------------------------------
    def save_npz(self, path):
        arrays = {"C": self.C, "D": self.D}
        if self.has_structure:
            arrays.update(link_mean=self.link_mean, link_var=self.link_var)
        np.savez(path, **arrays)

    @classmethod
    def load_npz(cls, path):
        with np.load(path) as f:
            kw = {k: f[k] for k in f.files}
        return cls(**kw)

    def to_json(self):
        def enc(a):
            return {"shape": list(a.shape), "re": a.real.ravel().tolist(),
                    "im": a.imag.ravel().tolist()}
        return json.dumps({"C": enc(self.C), "D": enc(self.D)})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)

        def dec(d):
            return (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(d["shape"])
        return cls(C=dec(obj["C"]), D=dec(obj["D"]))


def analytic_moments(model) -> ChannelMoments:
    """Closed-form moments of a Gaussian or Nakagami-m fading model.

    ``D = vec(mean) vec(mean)^H + diag(vec(variance))`` for every link, valid
    because the random parts have independent zero-mean entries.
    """
    mean = model.mean
    var = model.variance
    mv = vec(mean)
    D = mv[..., :, None] * np.conj(mv[..., None, :])
    n = mv.shape[-1]
    idx = np.arange(n)
    D[..., idx, idx] += vec(var)
    L = mean.shape[0]
    C = mean[np.arange(L), :, np.arange(L)]
    return ChannelMoments(C=C, D=D, link_mean=mean, link_var=var)


def empirical_moments(model, n_samples, seed, chunk=None) -> ChannelMoments:
    """Sample-average moments of any sampler with ``sample_blocks``.

    D is symmetrized to be exactly Hermitian.  Fewer samples than ``Mr * Mt``
    leaves D rank deficient; that only warns.
    """
    L, K, Mt, Mr = model.dims
    N = Mr * Mt
    if n_samples < N:
        warnings.warn(f"{n_samples} samples < Mr*Mt = {N}: empirical D is rank deficient",
                      RuntimeWarning, stacklevel=2)
    if chunk is None:
        chunk = max(1, int(2_000_000 // max(1, L * K * L * N * N)))
    s1 = np.zeros(model.shape, dtype=complex)
    s2 = np.zeros((L, K, L, N, N), dtype=complex)
    for start in range(0, n_samples, chunk):
        stop = min(n_samples, start + chunk)
        H = model.sample_blocks(_mix(seed, STREAM_EMPIRICAL), start, stop)
        s1 += H.sum(axis=0)
        h = vec(H)
        s2 += np.einsum("n...a,n...b->...ab", h, np.conj(h))
    mean = s1 / n_samples
    D = s2 / n_samples
    D = 0.5 * (D + np.conj(np.swapaxes(D, -1, -2)))
    C = mean[np.arange(L), :, np.arange(L)]
    return ChannelMoments(C=C, D=D)


def deterministic_moments(H) -> ChannelMoments:
    """Rank-one moments of a known channel ``H`` of shape ``(L, K, L, Mr, Mt)``."""
    H = np.asarray(H, dtype=complex)
    L = H.shape[0]
    h = vec(H)
    D = h[..., :, None] * np.conj(h[..., None, :])
    return ChannelMoments(C=H[np.arange(L), :, np.arange(L)], D=D,
                          link_mean=H, link_var=np.zeros(H.shape))


def jakes_rho(doppler_hz, interval_s):
    """Temporal correlation ``J0(2 pi f_d T)`` of Jakes' model, clipped to [1e-6, 1]."""
    if doppler_hz < 0 or interval_s < 0:
        raise ConfigurationError("doppler and interval must be nonnegative")
    x = 2.0 * np.pi * doppler_hz * interval_s
    return float(np.clip(special.j0(x), 1e-6, 1.0))


def models_from_topology(topology, config, family="gaussian", rho=0.9, m=0.5, seed=0):
    """Fading model whose large-scale scale mask comes from ``topology``.

    ``Hbar`` is one draw of the random component, fixed by ``seed``.  The
    Gaussian mask is ``W = scale``; the Nakagami mean power is ``scale**2``.
    """
    L, K, Mt, Mr = config.L, config.K, config.Mt, config.Mr
    shape = (L, K, L, Mr, Mt)
    scale = np.broadcast_to(topology.scale[..., None, None], shape)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), STREAM_STATIC]))
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (L, K))
    if family == "gaussian":
        proto = GaussianFadingModel(np.zeros(shape, complex), scale, np.ones((L, K)))
        return GaussianFadingModel(proto.random_component(rng), scale, rho)
    if family == "nakagami":
        proto = NakagamiFadingModel(np.zeros(shape, complex), scale ** 2, np.ones((L, K)), m)
        return NakagamiFadingModel(proto.random_component(rng), scale ** 2, rho, m)
    raise ConfigurationError(f"unknown fading family {family!r}")
