import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from asvi.variational import (
    NoiseDraw,
    PriorConfig,
    VariationalParams,
    gumbel_gate,
    kl_gaussian_slab,
    kl_structure,
    log_prior_width,
    nu_from_raw,
    raw_from_nu,
    raw_from_sigma,
    sample_theta,
    sigma_from_raw,
    structure_entropy,
)


def quad_kl(mu, s, s0):
    """KL(N(mu, s^2) || N(0, s0^2)) by numerical integration."""
    p = stats.norm(mu, s)
    q = stats.norm(0.0, s0)
    f = lambda t: p.pdf(t) * (p.logpdf(t) - q.logpdf(t))
    val, _ = integrate.quad(f, mu - 20 * s, mu + 20 * s, limit=200, epsabs=1e-12, epsrel=1e-12)
    return val


def binomial_entropy_bits(H, q):
    pmf = stats.binom(H, q).pmf(np.arange(H + 1))
    pmf = pmf[pmf > 0]
    return float(-np.sum(pmf * np.log2(pmf)))


def params_from(mu, sigma, nu):
    return VariationalParams(np.atleast_1d(mu).astype(float), raw_from_sigma(np.atleast_1d(sigma)), raw_from_nu(np.atleast_1d(nu)))


def test_nu_from_raw():
    assert nu_from_raw(0.0) == 0.5
    assert nu_from_raw(math.log(9)) == pytest.approx(0.1, abs=1e-12)
    assert 1 - nu_from_raw(-20.0) < 1e-8
    assert 0 < nu_from_raw(40.0) < 1


def test_sigma_from_raw():
    assert sigma_from_raw(0.0) == pytest.approx(math.log(2), abs=1e-12)
    assert sigma_from_raw(30.0) - 30.0 < 1e-9
    for s in (0.1, 1.0, 5.0):
        assert sigma_from_raw(raw_from_sigma(s)) == pytest.approx(s, abs=1e-10)
    assert sigma_from_raw(-50.0) > 0


def test_gumbel_gate_values():
    soft, hard = gumbel_gate(0.5, 0.5, 0.7)
    assert soft == pytest.approx(0.5, abs=1e-15)
    assert hard is False
    # logit(0.9) / 0.5 = log(81), so the gate is exactly 81/82
    soft, hard = gumbel_gate(0.9, 0.5, 0.5)
    assert soft == pytest.approx(81 / 82, abs=1e-12)
    assert hard is True


@pytest.mark.parametrize("nu, u", [(0.0, 0.5), (1.0, 0.5), (0.3, 0.0), (0.3, 1.0)])
def test_gumbel_gate_rejects_boundary(nu, u):
    with pytest.raises(ValueError):
        gumbel_gate(nu, u, 0.5)


@pytest.mark.parametrize("nu", [0.2, 0.5, 0.8])
def test_gate_marginal_is_bernoulli(nu):
    rng = np.random.default_rng(17)
    u = rng.uniform(size=100_000)
    u = np.clip(u, 1e-7, 1 - 1e-7)
    _, hard = gumbel_gate(np.full(u.size, nu), u, 0.5)
    se = math.sqrt(nu * (1 - nu) / u.size)
    assert abs(hard.mean() - nu) < min(0.01, 3 * se + 1e-3)


def test_sample_theta_degenerate_cases():
    H = 5
    rng = np.random.default_rng(0)
    mu = rng.normal(size=H)
    on = VariationalParams(mu, np.zeros(H), np.full(H, -30.0))
    ts = sample_theta(on, NoiseDraw(np.zeros(H), np.full(H, 0.3)), 0.5)
    assert np.array_equal(ts.theta_hard, mu)

    off = VariationalParams(mu, np.zeros(H), np.full(H, 30.0))
    for u in np.linspace(0.0011, 0.9989, 50):
        ts = sample_theta(off, NoiseDraw(rng.normal(size=H), np.full(H, u)), 0.5)
        assert np.all(ts.theta_hard == 0.0)


def test_sample_theta_composed_example():
    p = params_from(1.0, 0.5, 0.9)
    ts = sample_theta(p, NoiseDraw(np.array([2.0]), np.array([0.5])), 0.5)
    assert ts.theta_soft[0] == pytest.approx(81 / 82 * 2.0, abs=1e-12)
    assert ts.theta_hard[0] == pytest.approx(2.0, abs=1e-12)
    assert ts.gate_hard[0]


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(0.01, 0.99), st.floats(0.05, 3.0), st.floats(-3, 3))
def test_sample_theta_invariants(nu_raw, u, tau, mu):
    p = VariationalParams(np.array([mu]), np.array([0.0]), np.array([nu_raw]))
    ts = sample_theta(p, NoiseDraw(np.array([0.7]), np.array([u])), tau)
    assert ts.gate_hard[0] == (ts.gate_soft[0] > 0.5)
    if not ts.gate_hard[0]:
        assert ts.theta_hard[0] == 0.0


def test_soft_tends_to_hard_as_tau_shrinks():
    rng = np.random.default_rng(4)
    H = 30
    p = VariationalParams(rng.normal(size=H), rng.normal(size=H), rng.normal(size=H))
    noise = NoiseDraw(rng.normal(size=H), rng.uniform(0.05, 0.95, size=H))
    gaps = [np.max(np.abs(sample_theta(p, noise, tau).theta_soft - sample_theta(p, noise, tau).theta_hard))
            for tau in (1.0, 0.1, 0.01, 1e-4)]
    assert gaps[-1] < 1e-6
    assert all(a >= b for a, b in zip(gaps, gaps[1:]))


def test_kl_slab_examples():
    H = 4
    same = params_from(np.zeros(H), np.full(H, 0.8), np.full(H, 0.6))
    assert kl_gaussian_slab(same, 0.8) == pytest.approx(0.0, abs=1e-14)
    one = params_from(1.0, 0.5, 1.0 - 1e-15)
    assert kl_gaussian_slab(one, 1.0) == pytest.approx(0.818147, abs=1e-6)
    assert quad_kl(1.0, 0.5, 1.0) == pytest.approx(0.818147, abs=1e-6)
    half = params_from(1.0, 0.5, 0.5)
    quarter = params_from(1.0, 0.5, 0.25)
    assert kl_gaussian_slab(quarter, 1.0) == pytest.approx(kl_gaussian_slab(half, 1.0) / 2, rel=1e-12)


def test_kl_slab_matches_quadrature():
    rng = np.random.default_rng(8)
    for _ in range(25):
        mu, s, s0 = rng.normal() * 2, rng.uniform(0.1, 2), rng.uniform(0.2, 2)
        p = VariationalParams(np.array([mu]), raw_from_sigma(np.array([s])), np.array([-40.0]))
        assert kl_gaussian_slab(p, s0) == pytest.approx(quad_kl(mu, s, s0), abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-10, 10)), min_size=1, max_size=8),
       st.floats(0.1, 3))
def test_kl_slab_nonnegative(rows, s0):
    mu, sr, nr = map(np.array, zip(*rows))
    assert kl_gaussian_slab(VariationalParams(mu, sr, nr), s0) >= -1e-12


def test_kl_structure_examples():
    p = params_from([0.0, 0.0], [1.0, 1.0], [0.5, 0.5])
    assert kl_structure(p, 3.0, 2) == pytest.approx(1.452904, abs=1e-6)
    off = VariationalParams(np.zeros(3), np.zeros(3), np.full(3, 60.0))
    v = kl_structure(off, 3.0, 3)
    assert math.isfinite(v)
    assert v == pytest.approx(-0.5 * math.log2(2 * math.pi * math.e * 1e-8), abs=1e-9)
    rng = np.random.default_rng(1)
    q = VariationalParams(np.zeros(6), np.zeros(6), rng.normal(size=6))
    total = float(np.sum(q.nu))
    assert kl_structure(q, 3.5, 6) - kl_structure(q, 3.0, 6) == pytest.approx(0.5 * total, abs=1e-12)


def test_kl_structure_natural_log_variant():
    p = params_from([0.0, 0.0], [1.0, 1.0], [0.5, 0.5])
    assert kl_structure(p, 3.0, 2, base="e") == pytest.approx(-0.5 * math.log(math.pi * math.e) + 3.0)


@pytest.mark.parametrize("q", [0.3, 0.5, 0.7])
def test_structure_entropy_close_to_binomial(q):
    assert structure_entropy(50 * q, 50) == pytest.approx(binomial_entropy_bits(50, q), abs=0.05)


def test_log_prior_width_example():
    lg = math.lgamma(11)
    expected = 10 * math.log(10) - math.log(math.exp(10) - 1) - lg
    assert expected == pytest.approx(-2.078518, abs=1e-5)
    assert log_prior_width(10, 10.0) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("lam", [1.0, 10.0, 50.0])
def test_log_prior_width_normalizes(lam):
    assert math.fsum(math.exp(log_prior_width(N, lam)) for N in range(1, 201)) == pytest.approx(1.0, abs=1e-9)


def test_log_prior_width_mode_and_domain():
    assert log_prior_width(600, 600.0) > log_prior_width(300, 600.0)
    assert log_prior_width(600, 600.0) > log_prior_width(900, 600.0)
    with pytest.raises(ValueError):
        log_prior_width(0, 10.0)


def test_prior_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(sigma0=0.0)
    with pytest.raises(ValueError):
        PriorConfig(entropy_base="10")
