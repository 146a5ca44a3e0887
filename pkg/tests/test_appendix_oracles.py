import math

import numpy as np
import pytest

from convlab.analytics import phi, psi, local_time_variance_factor
from convlab.appendix_oracles import (hermite_normalized, hermite_gram, GaussianPair, PolynomialPolicy,
                                      polynomial_cov, cov_bruteforce, pair_moment, band_occupation,
                                      occupation_band, delta_mean_mc, delta_second_moment,
                                      band_second_moment, delta_second_moment_mc, theta, theta_integral,
                                      delta_integral_variance_mc, var_f_prime, hermite_coefficients,
                                      variance_growth_rate_hermite, variance_growth_rate_mc,
                                      run_checks, DEFAULT_TOLERANCES)
from convlab.policies import LinearPolicy, DifferentiablePolicy
from convlab.process import OUParams, stationary_variance
from convlab.utils import DomainError, ValidationError

BETAS = (0.1, 0.5, 0.9)


# --- Hermite polynomials ---

def test_low_order_hermite():
    x = np.array([-1.5, 0.0, 0.3, 2.0])
    np.testing.assert_allclose(hermite_normalized(0, x), np.ones(4))
    np.testing.assert_allclose(hermite_normalized(1, x), x)
    np.testing.assert_allclose(hermite_normalized(2, x), (x ** 2 - 1) / math.sqrt(2.0))
    np.testing.assert_allclose(hermite_normalized(3, x), (x ** 3 - 3 * x) / math.sqrt(6.0))
    np.testing.assert_allclose(hermite_normalized(2, x, "factorial"), (x ** 2 - 1) / 2.0)
    with pytest.raises(ValidationError):
        hermite_normalized(-1, x)
    with pytest.raises(ValidationError):
        hermite_normalized(2, x, "physicists")


def test_orthonormality():
    gram = hermite_gram(8)
    assert np.max(np.abs(gram - np.eye(9))) <= 1e-10


def test_factorial_normalization_is_not_orthonormal():
    gram = hermite_gram(8, normalization="factorial")
    assert np.max(np.abs(gram - np.eye(9))) >= 0.4


def test_pair_covariance_identity():
    for beta in BETAS:
        pair = GaussianPair(beta)
        for i in range(7):
            for j in range(7):
                expected = beta ** i if i == j else 0.0
                assert pair_moment(i, j, pair) == pytest.approx(expected, abs=1e-8)


def test_pair_validation():
    with pytest.raises(ValidationError):
        GaussianPair(1.0)
    with pytest.raises(ValidationError):
        GaussianPair(-0.1)


def test_polynomial_cov_examples():
    assert polynomial_cov(PolynomialPolicy([1.0]), GaussianPair(0.5)) == pytest.approx(0.5)
    assert polynomial_cov(PolynomialPolicy([0.0, 0.0, 1.0]), GaussianPair(0.5)) == pytest.approx(0.125)
    mixed = PolynomialPolicy([1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)])
    assert polynomial_cov(mixed, GaussianPair(0.5)) == pytest.approx(0.375)


def test_bruteforce_examples():
    assert cov_bruteforce(PolynomialPolicy([1.0]), GaussianPair(0.7)) == pytest.approx(0.7, abs=1e-10)
    assert cov_bruteforce(PolynomialPolicy([0.0, 1.0]), GaussianPair(0.0)) == pytest.approx(0.0, abs=1e-12)


def test_bruteforce_agrees_with_the_series():
    rng = np.random.default_rng(11)
    for degree in range(1, 9):
        policy = PolynomialPolicy.random_unit(degree, rng)
        for beta in BETAS:
            pair = GaussianPair(beta)
            assert cov_bruteforce(policy, pair) == pytest.approx(polynomial_cov(policy, pair), abs=1e-8)


def test_too_few_nodes_rejected():
    with pytest.raises(ValidationError):
        cov_bruteforce(PolynomialPolicy.basis(10), GaussianPair(0.5), n_nodes=8)


def test_covariance_bounds():
    rng = np.random.default_rng(5)
    for n in range(100):
        degree = 1 + n % 6
        policy = PolynomialPolicy.random_unit(degree, rng)
        assert policy.norm_squared() == pytest.approx(1.0)
        for beta in BETAS:
            c = polynomial_cov(policy, GaussianPair(beta))
            assert beta ** degree - 1e-12 <= c <= beta + 1e-12
    for degree in range(1, 7):
        for beta in BETAS:
            pair = GaussianPair(beta)
            assert polynomial_cov(PolynomialPolicy.basis(1, degree), pair) == pytest.approx(beta, abs=1e-12)
            assert polynomial_cov(PolynomialPolicy.basis(degree), pair) == pytest.approx(beta ** degree, abs=1e-12)


def test_nonlinear_policies_have_positive_covariance():
    policies = [lambda x: -np.tanh(x), lambda x: -np.clip(x, -1.0, 1.0), PolynomialPolicy([0.6, 0.0, 0.8])]
    for f in policies:
        for beta in BETAS:
            assert cov_bruteforce(f, GaussianPair(beta)) >= -1e-10


# --- Band occupation and delta moments ---

def test_band_occupation():
    x = np.array([0.0, 1.0, 1.0, -1.0])
    np.testing.assert_allclose(band_occupation(x, 0.25, 0.75, 1.0), [0.5, 0.0, 0.25])
    np.testing.assert_allclose(band_occupation(x, 0.25, 0.75, 1.0, "points"), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(band_occupation(x, 0.5, 1.5, 2.0, "points"), [0.0, 2.0, 2.0])
    # a flat step inside the band counts in full
    np.testing.assert_allclose(band_occupation(x, 0.5, 1.5, 2.0)[1], 2.0)
    with pytest.raises(ValidationError):
        band_occupation(x, 0.0, 1.0, 1.0, "midpoint")


def test_occupation_band(unit_process):
    assert occupation_band(unit_process, 0.01) == pytest.approx(0.4 * math.sqrt(2.0) * 0.1)


@pytest.mark.slow
def test_delta_mean(unit_process):
    zero = delta_mean_mc(0.0, unit_process, 0.01, 2_000_000, seed=1)
    assert abs(zero.z_score(phi(0.0, 1.0))) <= 3
    one = delta_mean_mc(1.0, unit_process, 0.01, 2_000_000, seed=1)
    assert one.value / zero.value == pytest.approx(math.exp(-0.5), rel=0.05)


def test_delta_mean_wide_band_is_bounded(unit_process):
    est = delta_mean_mc(0.0, unit_process, 100.0, 10_000, seed=2)
    assert est.value <= (1.0 + 1e-12) / 100.0
    with pytest.raises(ValidationError):
        delta_mean_mc(0.0, unit_process, 0.0, 10_000, seed=2)


def test_delta_second_moment(unit_process):
    assert delta_second_moment(0.0, 50.0, unit_process) == pytest.approx(phi(0.0, 1.0) ** 2, rel=1e-12)
    a = math.exp(-0.5)
    expected = 1.0 / (2.0 * math.pi * math.sqrt(1.0 - a * a))
    assert delta_second_moment(0.0, 0.5, unit_process) == pytest.approx(expected, rel=1e-12)
    assert delta_second_moment(0.3, -0.5, unit_process) == delta_second_moment(0.3, 0.5, unit_process)
    with pytest.raises(DomainError):
        delta_second_moment(0.0, 0.0, unit_process)


def test_band_moment_tends_to_the_delta_moment(unit_process):
    exact = delta_second_moment(0.0, 1.0, unit_process)
    assert band_second_moment(0.0, 1.0, unit_process, 1e-3) == pytest.approx(exact, rel=1e-3)
    assert band_second_moment(0.0, 1.0, unit_process, 0.1) == pytest.approx(exact, rel=1e-2)


def test_two_time_band_estimate(unit_process):
    est = delta_second_moment_mc(0.0, 1.0, unit_process, 0.1, 400_000, seed=3)
    assert abs(est.z_score(band_second_moment(0.0, 1.0, unit_process, 0.1))) <= 3
    with pytest.raises(DomainError):
        delta_second_moment_mc(0.0, 0.001, unit_process, 0.1, 1000, seed=3)


def test_theta_limits(unit_process):
    phi0 = phi(0.0, 1.0)
    assert abs(theta(20.0, 0.0, unit_process)) <= 1e-6 * phi0 ** 2
    assert abs(theta(20.0, 0.5, unit_process)) <= 1e-6 * phi0 ** 2
    assert theta(0.1, 0.0, unit_process) > 0.0
    # 1 / sqrt(tau) blow-up at short lags
    scaled = theta(1e-8, 0.0, unit_process) * math.sqrt(1e-8)
    assert scaled == pytest.approx(phi0 ** 2 / math.sqrt(2.0), rel=1e-2)
    with pytest.raises(DomainError):
        theta(0.0, 0.0, unit_process)


def test_theta_integral_closes_the_chain(chain_process):
    Sigma = stationary_variance(chain_process)
    for m in (0.0, 1.0, 2.0):
        S = m * math.sqrt(Sigma)
        target = phi(S, Sigma) ** 2 * psi(S, chain_process.alpha, Sigma)
        assert 2.0 * theta_integral(S, chain_process) == pytest.approx(target, rel=1e-6)


def test_theta_integral_general_sigma(unit_process):
    for m in (0.0, 1.5):
        target = phi(m, 1.0) ** 2 * local_time_variance_factor(m, 1.0, 1.0)
        assert 2.0 * theta_integral(m, unit_process) == pytest.approx(target, rel=1e-6)


@pytest.mark.slow
def test_local_time_variance(chain_process):
    Sigma = stationary_variance(chain_process)
    dt = 0.001
    for m in (0.0, 1.0):
        S = m * math.sqrt(Sigma)
        est = delta_integral_variance_mc(S, chain_process, 100.0, occupation_band(chain_process, dt),
                                         seed=4, n_realizations=2000, dt=dt, threads=4)
        target = phi(S, Sigma) ** 2 * psi(S, chain_process.alpha, Sigma)
        assert est.value == pytest.approx(target, rel=0.1)


@pytest.mark.slow
def test_local_time_variance_is_stable_in_the_horizon(chain_process):
    dt = 0.002
    band = occupation_band(chain_process, dt)
    short = delta_integral_variance_mc(0.0, chain_process, 100.0, band, seed=5, n_realizations=500, dt=dt, threads=4)
    long = delta_integral_variance_mc(0.0, chain_process, 400.0, band, seed=6, n_realizations=500, dt=dt, threads=4)
    assert abs(long.value - short.value) <= 3.0 * math.hypot(short.stderr, long.stderr)


@pytest.mark.slow
def test_local_time_variance_under_a_halved_band(chain_process):
    S = math.sqrt(stationary_variance(chain_process))
    coarse_dt = 0.002
    fine_dt = coarse_dt / 4.0
    wide = delta_integral_variance_mc(S, chain_process, 100.0, occupation_band(chain_process, coarse_dt),
                                      seed=7, n_realizations=400, dt=coarse_dt, threads=4)
    narrow_band = occupation_band(chain_process, fine_dt)
    assert narrow_band == pytest.approx(occupation_band(chain_process, coarse_dt) / 2.0)
    narrow = delta_integral_variance_mc(S, chain_process, 100.0, narrow_band,
                                        seed=8, n_realizations=400, dt=fine_dt, threads=4)
    assert abs(narrow.value - wide.value) <= 3.0 * math.hypot(wide.stderr, narrow.stderr)


def test_local_time_variance_needs_two_realizations(chain_process):
    with pytest.raises(ValidationError):
        delta_integral_variance_mc(0.0, chain_process, 100.0, 0.01, seed=0, n_realizations=1)


# --- Variance growth ---

def test_hermite_coefficients_of_a_line():
    c = hermite_coefficients(lambda x: 2.0 * x + 1.0, 4.0, 4)
    np.testing.assert_allclose(c, [1.0, 4.0, 0.0, 0.0, 0.0], atol=1e-9)


def test_hermite_rate_of_a_linear_policy(unit_process):
    assert variance_growth_rate_hermite(LinearPolicy(3.0), unit_process) == pytest.approx(0.0, abs=1e-12)
    assert var_f_prime(LinearPolicy(3.0), unit_process) == pytest.approx(0.0, abs=1e-12)


def test_hermite_rate_bounds_for_tanh(unit_process):
    tanh = DifferentiablePolicy.tanh()
    r = variance_growth_rate_hermite(tanh, unit_process)
    v = var_f_prime(tanh, unit_process)
    assert r > 0.0
    assert r <= 2.0 * v / unit_process.alpha
    assert variance_growth_rate_hermite(tanh, unit_process, degree=60) == pytest.approx(r, rel=1e-6)


@pytest.mark.slow
def test_linear_policy_has_no_variance_growth(unit_process):
    result = variance_growth_rate_mc(LinearPolicy(5.0), unit_process, 500.0, 200, seed=5)
    assert abs(result.slope_z) <= 3


@pytest.mark.slow
def test_desk_linear_policy_has_no_variance_growth(desk_process):
    result = variance_growth_rate_mc(LinearPolicy(20.0), desk_process, 1000.0, 200, seed=8, threads=4)
    assert abs(result.slope_z) <= 3


@pytest.mark.slow
def test_constant_policy_has_no_variance_growth(unit_process):
    flat = DifferentiablePolicy(lambda x: np.full_like(x, 0.5), lambda x: np.zeros_like(x),
                                deriv_bound=1.0, antiderivative=lambda x: 0.5 * x)
    result = variance_growth_rate_mc(flat, unit_process, 500.0, 200, seed=6)
    assert abs(result.slope_z) <= 3
    assert result.var_f_prime == 0.0


@pytest.mark.slow
def test_tanh_variance_growth(unit_process):
    tanh = DifferentiablePolicy.tanh()
    result = variance_growth_rate_mc(tanh, unit_process, 500.0, 200, seed=7, threads=4)
    exact = variance_growth_rate_hermite(tanh, unit_process)
    assert result.r > 3.0 * result.stderr
    assert abs(result.r - exact) <= 3.0 * result.stderr
    assert result.r <= 2.0 * result.var_f_prime / unit_process.alpha + 3.0 * result.stderr


def test_variance_growth_validation(unit_process):
    with pytest.raises(ValidationError):
        variance_growth_rate_mc(LinearPolicy(1.0), unit_process, 10.0, 10, seed=0)
    with pytest.raises(ValidationError):
        variance_growth_rate_mc(LinearPolicy(1.0), unit_process, 10.0, 40, seed=0, method="euler")


# --- Suite ---

def test_quick_suite_passes():
    results = run_checks(seed=0, quick=True)
    assert [r.name for r in results] == list(DEFAULT_TOLERANCES)[:7]
    assert all(r.passed for r in results)


def test_factorial_normalization_fails_the_suite():
    results = {r.name: r for r in run_checks(seed=0, normalization="factorial", quick=True)}
    assert not results["orthonormality"].passed
    assert not results["hermite_covariance"].passed


def test_unknown_tolerance_rejected():
    with pytest.raises(ValidationError):
        run_checks(tolerances={"nonsense": 1.0}, quick=True)


@pytest.mark.slow
def test_full_suite_passes():
    results = run_checks(seed=0, threads=4)
    assert len(results) == len(DEFAULT_TOLERANCES)
    assert all(r.passed for r in results), [r for r in results if not r.passed]
