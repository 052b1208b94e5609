"""Network data model, per-block rates and the Monte-Carlo rate evaluator.

Rates are in nats.  Precoders are stored as one array ``V`` of shape
``(L, K, Mt, Mr)``; channels use the layout documented in
:mod:`momentfp.channels`.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from .errors import ConfigurationError, InputError
from .linalg import JITTER, herm, logdet_from_cholesky

POWER_RTOL = 1e-9
Z99 = float(stats.norm.ppf(0.995))


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


@dataclass
class NetworkConfig:
    """Dimensions, power budget, noise and rate weights of an L-cell network.

    ``weights`` defaults to all ones, shape ``(L, K)``.
    """

    L: int
    K: int
    Mt: int
    Mr: int
    P: float
    sigma2: float
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.L < 1 or self.K < 1 or self.Mr < 1 or self.Mt < self.Mr:
            raise ConfigurationError(
                f"need L, K >= 1 and Mt >= Mr >= 1 (got L={self.L}, K={self.K}, "
                f"Mt={self.Mt}, Mr={self.Mr})")
        if not self.P > 0 or not self.sigma2 > 0:
            raise ConfigurationError("P and sigma2 must be positive")
        if self.weights is None:
            self.weights = np.ones((self.L, self.K))
        self.weights = np.broadcast_to(np.asarray(self.weights, float), (self.L, self.K)).copy()
        if np.any(self.weights < 0):
            raise ConfigurationError("rate weights must be nonnegative")

    @property
    def precoder_shape(self):
        return (self.L, self.K, self.Mt, self.Mr)

    @property
    def channel_shape(self):
        return (self.L, self.K, self.L, self.Mr, self.Mt)


def cell_power(V):
    """Per-BS transmit power ``sum_k Tr(V V^H)``, shape ``(L,)``."""
    return np.sum(np.abs(V) ** 2, axis=(1, 2, 3))


def is_power_feasible(V, P, rtol=POWER_RTOL):
    return bool(np.all(cell_power(V) <= P * (1.0 + rtol)))


def _check_shapes(H, V):
    if V.ndim != 4:
        raise ConfigurationError("V must have shape (L, K, Mt, Mr)")
    L, K, Mt, Mr = V.shape
    if H.shape[-5:] != (L, K, L, Mr, Mt):
        raise ConfigurationError(
            f"channel shape {H.shape[-5:]} does not match precoders {V.shape}")


def user_rates(H, V, sigma2):
    """Rates of all users for one or many channel blocks.

    Parameters
    ----------
    H : array, shape ``(..., L, K, L, Mr, Mt)``
    V : array, shape ``(L, K, Mt, Mr)``
    sigma2 : float

    Returns
    -------
    array, shape ``(..., L, K)``
        ``log|I + S S^H F^{-1}|`` with ``S = H_{jk,j} V_{jk}`` and ``F`` the
        interference-plus-noise covariance.
    """
    H = np.asarray(H)
    V = np.asarray(V)
    _check_shapes(H, V)
    if not np.all(np.isfinite(H)):
        raise InputError("channel realization has non-finite entries")
    if not sigma2 > 0:
        raise ConfigurationError("sigma2 must be positive")
    L, K, Mt, Mr = V.shape
    # HV[..., j, k, l, s] = H_{jk,l} V_{ls}
    HV = H[..., :, :, :, None, :, :] @ V
    X = np.moveaxis(HV, -2, -4).reshape(HV.shape[:-4] + (Mr, L * K * Mr))
    rx = X @ herm(X)  # total received covariance, (..., L, K, Mr, Mr)
    S = np.einsum("...jkjkab->...jkab", HV)  # direct signal H_{jk,j} V_{jk}
    eye = np.eye(Mr)
    F = rx - S @ herm(S) + sigma2 * eye
    F = 0.5 * (F + herm(F))
    try:
        chol = np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(F + JITTER * sigma2 * eye)
    T = np.linalg.solve(chol, S)
    G = eye + herm(T) @ T
    G = 0.5 * (G + herm(G))
    return np.maximum(logdet_from_cholesky(np.linalg.cholesky(G)), 0.0)


def instantaneous_rate(H_user, V, sigma2, user):
    """Rate of user ``(j, k)`` for one realization of its incoming channels.

    ``H_user`` has shape ``(L, Mr, Mt)``: the channels from every BS to the
    user.
    """
    j, k = user
    V = np.asarray(V)
    L, K, Mt, Mr = V.shape
    H_user = np.asarray(H_user)
    if H_user.shape != (L, Mr, Mt):
        raise ConfigurationError(f"H_user must have shape {(L, Mr, Mt)}, got {H_user.shape}")
    H = np.zeros((L, K, L, Mr, Mt), dtype=complex)
    H[j, k] = H_user
    return float(user_rates(H, V, sigma2)[j, k])


def weighted_sum_rate(H, V, sigma2, weights):
    """``sum_jk w_jk R_jk`` per block; shape ``H.shape[:-5]``."""
    return np.sum(user_rates(H, V, sigma2) * weights, axis=(-2, -1))


class MonteCarloEstimate(NamedTuple):
    mean: float
    half_width: float
    n_blocks: int
    digest: str


def _chunk_size(model, V):
    L, K, Mt, Mr = V.shape
    per_block = L * K * L * K * Mr * Mr + L * K * L * Mr * Mt * 3
    return int(max(1, min(4096, 4_000_000 // per_block)))


def monte_carlo_weighted_sum_rate(sampler, V, sigma2, weights=None, n_blocks=1000, seed=0,
                                  chunk=None):
    """Average weighted sum rate over ``n_blocks`` i.i.d. channel blocks.

    Block ``i`` is drawn from the counter-based substream ``(seed, i)`` of
    ``sampler`` so the result does not depend on ``chunk``.  The half width is
    the normal-approximation 99% confidence half width.  ``digest`` hashes the
    sampled blocks: two calls with equal digests were scored on identical
    channels.
    """
    if n_blocks < 2:
        raise ConfigurationError("n_blocks must be at least 2")
    V = np.asarray(V)
    L, K = V.shape[:2]
    w = np.ones((L, K)) if weights is None else np.asarray(weights, float)
    chunk = chunk or _chunk_size(sampler, V)
    h = hashlib.sha256()
    vals = np.empty(n_blocks)
    for start in range(0, n_blocks, chunk):
        stop = min(n_blocks, start + chunk)
        H = sampler.sample_blocks(seed, start, stop)
        h.update(np.ascontiguousarray(H).tobytes())
        vals[start:stop] = weighted_sum_rate(H, V, sigma2, w)
    return summarize(vals, h.hexdigest())


def summarize(vals, digest=""):
    """Mean and 99% half width; exact for a constant sample."""
    vals = np.asarray(vals, dtype=float)
    n = vals.size
    dev = vals - vals[0]
    mean = float(vals[0] + np.mean(dev))
    sd = float(np.std(dev, ddof=1))
    return MonteCarloEstimate(mean, Z99 * sd / math.sqrt(n), n, digest)


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Topology:
    """BS and user positions plus the per-link large-scale amplitude scale.

    ``distance_m`` and ``shadowing_db`` have shape ``(L, K, L)`` (user ``(j,k)``
    to BS ``l``); ``scale`` is the amplitude factor ``10**(-xi/10)`` of each
    link.
    """

    bs_pos: np.ndarray
    user_pos: np.ndarray
    distance_m: np.ndarray
    shadowing_db: np.ndarray
    scale: np.ndarray
    cell_radius_m: float
    wrap_around: bool = False
    seed: Optional[int] = field(default=None, compare=False)

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        arrays = ("bs_pos", "user_pos", "distance_m", "shadowing_db", "scale")
        return (all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
                and self.cell_radius_m == other.cell_radius_m
                and self.wrap_around == other.wrap_around)

    def check(self):
        L, K = self.user_pos.shape[:2]
        d_own = self.distance_m[np.arange(L), :, np.arange(L)]
        if np.any(self.distance_m <= 0):
            raise ConfigurationError("nonpositive BS-user distance")
        if np.any(d_own > self.cell_radius_m * (1 + 1e-12)):
            raise ConfigurationError("user outside its serving cell radius")
        return self

    def to_dict(self):
        return {
            "bs_pos": self.bs_pos.tolist(),
            "user_pos": self.user_pos.tolist(),
            "distance_m": self.distance_m.tolist(),
            "shadowing_db": self.shadowing_db.tolist(),
            "scale": self.scale.tolist(),
            "cell_radius_m": self.cell_radius_m,
            "wrap_around": self.wrap_around,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            bs_pos=np.asarray(d["bs_pos"], float),
            user_pos=np.asarray(d["user_pos"], float),
            distance_m=np.asarray(d["distance_m"], float),
            shadowing_db=np.asarray(d["shadowing_db"], float),
            scale=np.asarray(d["scale"], float),
            cell_radius_m=float(d["cell_radius_m"]),
            wrap_around=bool(d["wrap_around"]),
            seed=d.get("seed"),
        )


def precoders_to_dict(V):
    V = np.asarray(V)
    return {"shape": list(V.shape), "re": V.real.ravel().tolist(), "im": V.imag.ravel().tolist()}


def precoders_from_dict(d):
    return (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(d["shape"])


def pathloss_xi(distance_km, shadowing_db=0.0):
    """Large-scale attenuation exponent ``0.5 * (128.1 + 37.6 log10 d + tau)``."""
    return 0.5 * (128.1 + 37.6 * np.log10(distance_km) + shadowing_db)


def link_scale(distance_km, shadowing_db=0.0):
    return 10.0 ** (-pathloss_xi(distance_km, shadowing_db) / 10.0)


def _hex_centers(L, isd):
    """First ``L`` centers of a hexagonal lattice, sorted by ring then angle."""
    if L == 1:
        return np.zeros((1, 2))
    a = isd * np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)])
    b = isd * np.array([0.0, 1.0])
    n = int(np.ceil(np.sqrt(L))) + 2
    pts = []
    for i in range(-n, n + 1):
        for k in range(-n, n + 1):
            p = i * a + k * b
            pts.append((round(np.hypot(*p) / isd, 9), np.arctan2(p[1], p[0]) % (2 * np.pi), p))
    pts.sort(key=lambda t: (t[0], t[1]))
    return np.array([p for _, _, p in pts[:L]])


def _wrap_shifts(isd):
    """Translations of the 7-cell cluster onto its six mirror images."""
    a = isd * np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)])
    b = isd * np.array([0.0, 1.0])
    t = 2 * a + b
    shifts = [np.zeros(2)]
    for q in range(6):
        c, s = np.cos(q * np.pi / 3), np.sin(q * np.pi / 3)
        shifts.append(np.array([c * t[0] - s * t[1], s * t[0] + c * t[1]]))
    return np.array(shifts)


def _drop_in_hexagon(rng, n, radius):
    # flat-topped hexagon of circumradius `radius`, rejection from its bounding box
    out = np.empty((0, 2))
    h = np.sqrt(3) / 2 * radius
    while out.shape[0] < n:
        p = rng.uniform([-radius, -h], [radius, h], size=(2 * n, 2))
        inside = np.sqrt(3) * np.abs(p[:, 0]) + np.abs(p[:, 1]) <= np.sqrt(3) * radius
        out = np.vstack([out, p[inside]])
    return out[:n]


def generate_topology(config: NetworkConfig, cell_radius_m=300.0, seed=0, wrap_around=None,
                      shadowing_std_db=8.0) -> Topology:
    """Hexagonal layout with ``K`` users dropped uniformly in each cell.

    With ``wrap_around`` (default: on for ``L == 7``) every distance is the
    minimum over the seven mirror images of the cluster.  Shadowing is drawn
    once per link and stays fixed for the topology.
    """
    if not cell_radius_m > 0:
        raise ConfigurationError("cell radius must be positive")
    L, K = config.L, config.K
    if wrap_around is None:
        wrap_around = L == 7
    if wrap_around and L not in (1, 7):
        raise ConfigurationError(f"wrap-around needs L in {{1, 7}}, got L={L}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    isd = np.sqrt(3) * cell_radius_m
    bs = _hex_centers(L, isd)
    users = np.stack([bs[j] + _drop_in_hexagon(rng, K, cell_radius_m) for j in range(L)])
    diff = users[:, :, None, :] - bs[None, None, :, :]  # (L, K, L, 2)
    if wrap_around and L == 7:
        shifts = _wrap_shifts(isd)
        d = np.linalg.norm(diff[..., None, :] - shifts, axis=-1).min(axis=-1)
    else:
        d = np.linalg.norm(diff, axis=-1)
    tau = rng.normal(0.0, shadowing_std_db, size=(L, K, L))
    scale = link_scale(d / 1000.0, tau)
    return Topology(bs, users, d, tau, scale, float(cell_radius_m), bool(wrap_around),
                    seed=seed).check()
