import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _instances import crandn, random_instance, random_precoders
from momentfp import (ConfigurationError, GaussianFadingModel, InputError, NetworkConfig,
                      generate_topology, instantaneous_rate, monte_carlo_weighted_sum_rate,
                      weighted_sum_rate)
from momentfp.network import (Topology, dbm_to_watt, link_scale, pathloss_xi, precoders_from_dict,
                              precoders_to_dict, user_rates, watt_to_dbm)


def scalar_H(vals):
    return np.asarray(vals, dtype=complex).reshape(1, len(vals), 1, 1, 1)


def test_scalar_snr():
    H = scalar_H([1.0])
    V = np.full((1, 1, 1, 1), 2.0 + 0j)
    assert instantaneous_rate(H[0, 0], V, 1.0, (0, 0)) == pytest.approx(math.log(5), rel=1e-14)


def test_zero_precoders_give_zero_rate():
    rng = np.random.default_rng(1)
    H = crandn(rng, 2, 3, 2, 2, 4)
    V = np.zeros((2, 3, 4, 2), complex)
    assert np.all(user_rates(H, V, 0.5) == 0.0)


def test_two_user_interference():
    # two users in one cell, both channels 1, unit precoders: SINR 1/2
    H = scalar_H([1.0, 1.0])
    V = np.ones((1, 2, 1, 1), complex)
    r = user_rates(H, V, 1.0)
    np.testing.assert_allclose(r, math.log(1.5), rtol=1e-14)


def test_rate_matches_explicit_formula():
    rng = np.random.default_rng(2)
    L, K, Mt, Mr = 2, 2, 3, 2
    H = crandn(rng, L, K, L, Mr, Mt)
    V = crandn(rng, L, K, Mt, Mr)
    s2 = 0.3
    r = user_rates(H, V, s2)
    for j in range(L):
        for k in range(K):
            F = s2 * np.eye(Mr, dtype=complex)
            for l in range(L):
                for s in range(K):
                    if (l, s) != (j, k):
                        A = H[j, k, l] @ V[l, s]
                        F += A @ A.conj().T
            S = H[j, k, j] @ V[j, k]
            M = np.eye(Mr) + S @ S.conj().T @ np.linalg.inv(F)
            assert r[j, k] == pytest.approx(np.log(np.linalg.det(M)).real, rel=1e-12)


def test_rate_errors():
    H = scalar_H([1.0])
    with pytest.raises(ConfigurationError):
        user_rates(H, np.ones((1, 1, 2, 1)), 1.0)
    bad = H.copy()
    bad[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(InputError):
        user_rates(bad, np.ones((1, 1, 1, 1)), 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_rate_invariant_to_stream_rotation(seed):
    rng = np.random.default_rng(seed)
    L, K, Mt, Mr = 1, 2, 4, 2
    H = crandn(rng, L, K, L, Mr, Mt)
    V = crandn(rng, L, K, Mt, Mr)
    Q, _ = np.linalg.qr(crandn(rng, Mr, Mr))
    r0 = user_rates(H, V, 0.2)
    r1 = user_rates(H, V @ Q, 0.2)
    np.testing.assert_allclose(r1, r0, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_single_user_rate_nonnegative_and_monotone_in_power(seed):
    rng = np.random.default_rng(seed)
    H = crandn(rng, 1, 1, 1, 2, 3)
    V = crandn(rng, 1, 1, 3, 2)
    rates = [float(user_rates(H, c * V, 1.0)[0, 0]) for c in np.linspace(0, 1, 6)]
    assert min(rates) >= 0.0
    assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))


def test_dbm_round_trip():
    assert dbm_to_watt(-90.0) == pytest.approx(1e-12, rel=1e-15)
    assert dbm_to_watt(30.0) == pytest.approx(1.0, rel=1e-15)
    for x in (-120.0, -90.0, 0.0, 30.0, 46.0):
        assert watt_to_dbm(dbm_to_watt(x)) == pytest.approx(x, rel=1e-12, abs=1e-12)


def test_network_config_validation():
    with pytest.raises(ConfigurationError):
        NetworkConfig(1, 1, 1, 2, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        NetworkConfig(1, 1, 2, 1, -1.0, 1.0)
    with pytest.raises(ConfigurationError):
        NetworkConfig(1, 1, 2, 1, 1.0, 0.0)
    with pytest.raises(ConfigurationError):
        NetworkConfig(1, 2, 2, 1, 1.0, 1.0, weights=[[1.0, -1.0]])


# -- Monte-Carlo ------------------------------------------------------------

def test_mc_deterministic_model_is_exact():
    rng = np.random.default_rng(3)
    hbar = crandn(rng, 1, 2, 1, 2, 3)
    model = GaussianFadingModel(hbar, 0.0, 1.0)
    V = crandn(rng, 1, 2, 3, 2)
    est = monte_carlo_weighted_sum_rate(model, V, 0.5, n_blocks=50, seed=1)
    exact = weighted_sum_rate(hbar, V, 0.5, np.ones((1, 2)))
    assert est.mean == exact
    assert est.half_width == 0.0


def test_mc_same_seed_bit_identical_and_chunk_free():
    rng = np.random.default_rng(4)
    cfg, model, _ = random_instance(rng)
    V = random_precoders(rng, cfg)
    a = monte_carlo_weighted_sum_rate(model, V, cfg.sigma2, cfg.weights, 300, seed=9)
    b = monte_carlo_weighted_sum_rate(model, V, cfg.sigma2, cfg.weights, 300, seed=9)
    c = monte_carlo_weighted_sum_rate(model, V, cfg.sigma2, cfg.weights, 300, seed=9, chunk=7)
    assert a == b
    assert c.digest == a.digest
    assert c.mean == pytest.approx(a.mean, rel=1e-13)


def test_mc_needs_two_blocks():
    rng = np.random.default_rng(5)
    cfg, model, _ = random_instance(rng)
    with pytest.raises(ConfigurationError):
        monte_carlo_weighted_sum_rate(model, random_precoders(rng, cfg), cfg.sigma2, n_blocks=1)


def test_mc_scalar_rayleigh_against_brute_force():
    model = GaussianFadingModel(np.zeros((1, 1, 1, 1, 1), complex), 1.0, 1e-9)
    V = np.ones((1, 1, 1, 1), complex)
    est = monte_carlo_weighted_sum_rate(model, V, 1.0, n_blocks=20000, seed=2)
    # independent oracle: |h|^2 ~ Exp(1) from a different generator
    g = np.random.default_rng(12345).exponential(size=10**6)
    ref = np.log1p(g)
    ref_hw = 2.5758 * ref.std(ddof=1) / np.sqrt(ref.size)
    assert abs(est.mean - ref.mean()) <= est.half_width + ref_hw


# -- topology -----------------------------------------------------------------

def test_pathloss_one_km():
    assert pathloss_xi(1.0) == pytest.approx(64.05, abs=1e-12)
    assert link_scale(1.0) == pytest.approx(10 ** -6.405, rel=1e-12)


def test_topology_deterministic_and_within_radius():
    for L in (1, 7):
        cfg = NetworkConfig(L, 5, 4, 2, 1.0, 1e-12)
        a = generate_topology(cfg, seed=3)
        b = generate_topology(cfg, seed=3)
        assert a == b
        own = a.distance_m[np.arange(L), :, np.arange(L)]
        assert np.all(own <= 300.0) and np.all(a.distance_m > 0)
        assert Topology.from_dict(a.to_dict()) == a


def test_wraparound_distance_is_min_over_images():
    cfg = NetworkConfig(7, 3, 2, 1, 1.0, 1e-12)
    t = generate_topology(cfg, seed=1)
    raw = np.linalg.norm(t.user_pos[:, :, None, :] - t.bs_pos[None, None, :, :], axis=-1)
    assert np.all(t.distance_m <= raw + 1e-9)
    # a symmetric layout: no link is longer than the cluster allows
    assert t.distance_m.max() < 3 * np.sqrt(3) * 300


def test_wraparound_needs_one_or_seven_cells():
    with pytest.raises(ConfigurationError):
        generate_topology(NetworkConfig(3, 1, 2, 1, 1.0, 1.0), wrap_around=True)


def test_precoder_dict_round_trip():
    rng = np.random.default_rng(0)
    V = crandn(rng, 2, 3, 4, 2)
    np.testing.assert_array_equal(precoders_from_dict(precoders_to_dict(V)), V)
