"""Random problem instances shared by the test modules."""
import numpy as np

from momentfp import (GaussianFadingModel, NakagamiFadingModel, NetworkConfig, analytic_moments,
                      generate_topology, models_from_topology)
from momentfp.network import dbm_to_watt


def crandn(rng, *shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)


def random_model(rng, L, K, Mt, Mr, family="gaussian", rho=None, m=0.5):
    """Unit-scale fading model with per-link gains spread over 10 dB."""
    shape = (L, K, L, Mr, Mt)
    gain = 10 ** rng.uniform(-0.5, 0.5, size=(L, K, L, 1, 1))
    hbar = gain * crandn(rng, *shape)
    rho = rng.uniform(0.3, 0.95, size=(L, K)) if rho is None else rho
    if family == "gaussian":
        return GaussianFadingModel(hbar, np.broadcast_to(gain, shape), rho)
    return NakagamiFadingModel(hbar, np.broadcast_to(gain ** 2, shape), rho, m)


def random_instance(rng, family="gaussian", L=None, K=None, Mt=None, Mr=None, rho=None):
    """(NetworkConfig, fading model, analytic moments) with random small dimensions."""
    L = L or int(rng.integers(1, 3))
    K = K or int(rng.integers(1, 4))
    Mr = Mr or int(rng.integers(1, 3))
    Mt = Mt or int(rng.integers(Mr, 7))
    cfg = NetworkConfig(L, K, Mt, Mr, P=float(rng.uniform(1, 10)),
                        sigma2=float(10 ** rng.uniform(-1.5, 0)),
                        weights=rng.uniform(0.5, 1.5, size=(L, K)))
    model = random_model(rng, L, K, Mt, Mr, family, rho)
    return cfg, model, analytic_moments(model)


def physical_instance(seed, family="gaussian", L=1, K=8, Mt=16, Mr=2, rho=0.5):
    """Desk-sized instance with hexagonal topology, pathloss and shadowing."""
    cfg = NetworkConfig(L, K, Mt, Mr, P=dbm_to_watt(30.0), sigma2=dbm_to_watt(-90.0))
    topo = generate_topology(cfg, seed=seed)
    model = models_from_topology(topo, cfg, family, rho=rho, seed=seed)
    return cfg, model, analytic_moments(model)


def random_precoders(rng, cfg, fill=0.8):
    V = crandn(rng, *cfg.precoder_shape)
    p = np.sum(np.abs(V) ** 2, axis=(1, 2, 3))
    return V * np.sqrt(fill * cfg.P / p)[:, None, None, None]
