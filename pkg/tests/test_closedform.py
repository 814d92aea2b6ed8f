import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from jbb import closedform as cf
from jbb.estimation import gamma_k, o_estimation_stats
from jbb.model import Precoder, Scheme, SystemConfig, db_to_linear, linear_to_db

RHO_B = db_to_linear(-4.0)
RHO_O = db_to_linear(7.0)


def test_prelogs(cfg_a):
    assert cf.prelog_b(cfg_a, Scheme.JBB) == pytest.approx(0.49)
    assert cf.prelog_b(cfg_a, Scheme.OA) == pytest.approx(0.49)
    assert cf.prelog_b(cfg_a, Scheme.JBB_PRIME) == pytest.approx(0.47)
    assert cf.prelog_o(cfg_a) == pytest.approx(0.47)


def test_fig_a_b_rate_frozen(cfg_a, prof_a, gamma_a):
    # oracle values computed by hand from the scalar ZF expression with K=1, eta=1
    g = 0.5 * 10 * 10 ** -0.3 / (1 + 10 * 10 ** -0.3) * 2  # tau*rho_u/(1+tau*rho_u), beta = 1
    rb = RHO_B * 245 / 235
    oracle = math.log2(1 + 99 * rb * g / ((rb + RHO_O) * (1 - g) + 1))
    rep = cf.b_rate_report(cfg_a, prof_a, gamma_a, RHO_B, RHO_O, Scheme.JBB_PRIME, Precoder.ZF)
    assert rep.maxmin_rate == pytest.approx(oracle, rel=1e-12)
    assert rep.maxmin_rate == pytest.approx(4.24818157, rel=1e-8)
    assert rep.net_sum_b == pytest.approx(1.99664534, rel=1e-8)


def test_fig_a_o_rate_frozen(cfg_a):
    rb = cf.effective_rho_b(cfg_a, RHO_B, Scheme.JBB_PRIME)
    br = cf.o_rate_breakdown(cfg_a, 1.0, RHO_O, rb)
    assert br.rate_exact == pytest.approx(1.61641717, rel=1e-8)
    assert br.rate_bound == pytest.approx(1.51477044, rel=1e-8)
    assert br.net_rate == pytest.approx(0.759716069, rel=1e-8)
    # terms at a rounded operating point, within rounding of the reference values
    assert linear_to_db(br.signal) == pytest.approx(5.7, abs=0.15)
    assert linear_to_db(br.est_error) == pytest.approx(-2.1, abs=0.15)
    assert linear_to_db(br.b_interference) == pytest.approx(-3.8, abs=0.15)


def test_mr_zf_match_scalar_oracle(cfg_multi, prof_multi):
    beta = prof_multi.as_array()
    gamma = gamma_k(beta, cfg_multi.rho_u, cfg_multi.tau_pu)
    eta = np.array([0.1, 0.2, 0.3, 0.4])
    for k in range(4):
        mr = cfg_multi.M * 2.0 * gamma[k] * eta[k] / (2.0 * beta[k] + 3.0 * (beta[k] - gamma[k]) + 1)
        zf = (cfg_multi.M - 4) * 2.0 * gamma[k] * eta[k] / (5.0 * (beta[k] - gamma[k]) + 1)
        assert cf.sinr_b_mr(cfg_multi, beta, gamma, eta, 2.0, 3.0)[k] == pytest.approx(mr, rel=1e-13)
        assert cf.sinr_b_zf(cfg_multi, beta, gamma, eta, 2.0, 3.0)[k] == pytest.approx(zf, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.05, 50.0), min_size=1, max_size=8),
    st.floats(1e-3, 1e3),
    st.floats(0.0, 1e3),
    st.sampled_from([Precoder.MR, Precoder.ZF]),
)
def test_maxmin_self_consistency(beta, rho_b, rho_o, precoder):
    cfg = SystemConfig(M=64, K=len(beta), Mp=4, tau_c=200, tau_pu=8, tau_po=8, rho_u=0.5)
    gamma = gamma_k(np.array(beta), cfg.rho_u, cfg.tau_pu)
    pc, rate = cf.maxmin_control(cfg, beta, gamma, rho_b, rho_o, precoder)
    per_k = cf.rate_b(cfg, np.array(beta), gamma, pc.as_array(), rho_b, rho_o, precoder)
    np.testing.assert_allclose(per_k, rate, rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 50.0), min_size=1, max_size=6), st.floats(1e-3, 1e3))
def test_zero_broadcast_reduces_to_oa(beta, rho_b):
    cfg = SystemConfig(M=64, K=len(beta), Mp=4, tau_c=200, tau_pu=8, tau_po=8, rho_u=0.5)
    gamma = gamma_k(np.array(beta), cfg.rho_u, cfg.tau_pu)
    for p in Precoder:
        jbb = cf.maxmin_rate(cfg, beta, gamma, rho_b, 0.0, p)
        assert cf.oa_maxmin_rate(cfg, beta, gamma, rho_b, 0.0, p) == jbb


def test_rates_monotone(cfg_multi, prof_multi):
    beta = prof_multi.as_array()
    gamma = gamma_k(beta, cfg_multi.rho_u, cfg_multi.tau_pu)
    rb = np.geomspace(1e-3, 1e3, 50)
    for p in Precoder:
        r = cf.maxmin_rate(cfg_multi, beta, gamma, rb, 1.0, p)
        assert np.all(np.diff(r) >= 0)
        assert cf.maxmin_rate(cfg_multi, beta, gamma * 1.01, 1.0, 1.0, p) > cf.maxmin_rate(
            cfg_multi, beta, gamma, 1.0, 1.0, p)


def test_zf_mr_crossover(cfg_multi, prof_multi):
    beta = prof_multi.as_array()
    gamma = gamma_k(beta, cfg_multi.rho_u, cfg_multi.tau_pu)
    rb = np.geomspace(1e-4, 1e4, 200)
    d = cf.maxmin_rate(cfg_multi, beta, gamma, rb, 0.0, "ZF") - cf.maxmin_rate(cfg_multi, beta, gamma, rb, 0.0, "MR")
    assert d[0] < 0 < d[-1]


def test_power_control_validation():
    with pytest.raises(ValueError):
        cf.PowerControl((0.5, 0.6))
    with pytest.raises(ValueError):
        cf.PowerControl((1.5, -0.5))


# -- OA power matching -------------------------------------------------------


def test_oa_required_rho_b_example(cfg_a, gamma_a):
    rho = cf.oa_required_rho_b(cfg_a, [1.0], gamma_a, 2.0 / 0.49, 0.45, Precoder.ZF)
    assert rho == pytest.approx(3.15, abs=0.01)
    assert linear_to_db(rho) == pytest.approx(5.0, abs=0.05)


@pytest.mark.parametrize("precoder", list(Precoder))
@pytest.mark.parametrize("eps", [0.0, 0.2, 0.6])
def test_oa_required_rho_b_inverts_rate(cfg_multi, prof_multi, precoder, eps):
    # independent oracle: numerically invert the OA max-min rate
    beta = prof_multi.as_array()
    gamma = gamma_k(beta, cfg_multi.rho_u, cfg_multi.tau_pu)
    target = 0.5 * float(cf.oa_maxmin_rate(cfg_multi, beta, gamma, 1e6, eps, precoder))
    oracle = optimize.brentq(
        lambda r: float(cf.oa_maxmin_rate(cfg_multi, beta, gamma, r, eps, precoder)) - target, 1e-9, 1e7, xtol=1e-14
    )
    got = cf.oa_required_rho_b(cfg_multi, beta, gamma, target, eps, precoder)
    assert got == pytest.approx(oracle, rel=1e-9)


def test_oa_required_rho_b_edges(cfg_a, gamma_a):
    assert cf.oa_required_rho_b(cfg_a, [1.0], gamma_a, 0.0, 0.3, "ZF") == 0.0
    with pytest.raises(cf.InfeasibleTargetError):
        cf.oa_required_rho_b(cfg_a, [1.0], gamma_a, 4.0, 0.99, "ZF")
    with pytest.raises(cf.InfeasibleTargetError):
        cf.oa_required_rho_b(cfg_a, [1.0], gamma_a, 4.0, 1.0, "ZF")


# -- O-terminal quadrature ---------------------------------------------------


@pytest.mark.parametrize("shape", [1, 2, 7, 30])
@pytest.mark.parametrize("a", [1e-6, 1e-2, 0.5, 3.0, 1e2, 1e5])
def test_quadrature_matches_mpmath(shape, a):
    mpmath.mp.dps = 30
    ref = mpmath.quad(
        lambda y: mpmath.log(1 + a * y) * y ** (shape - 1) * mpmath.exp(-y) / mpmath.gamma(shape),
        [0, 1, 10, 100, mpmath.inf],
    ) / mpmath.log(2)
    assert cf.expected_log2_gamma(a, shape) == pytest.approx(float(ref), rel=1e-8)


def test_exact_rate_scipy_oracle(cfg_a):
    # second route: integrate over the Gamma(Mp, var_hat) law of ||h_hat||^2 with scipy.quad
    rb = cf.effective_rho_b(cfg_a, RHO_B, Scheme.JBB_PRIME)
    s = o_estimation_stats(1.0, RHO_O, 10, 7)
    denom = RHO_O * s.var_tilde + rb + 1.0
    law = stats.gamma(7, scale=s.var_hat)
    ref, _ = integrate.quad(lambda x: np.log2(1 + RHO_O / 7 * x / denom) * law.pdf(x), 0, np.inf, epsabs=1e-13)
    assert cf.o_rate_exact(1.0, RHO_O, rb, cfg_a) == pytest.approx(ref, rel=1e-9)


def test_quadrature_vectorized():
    a = np.array([0.1, 1.0, 10.0])
    np.testing.assert_allclose(cf.expected_log2_gamma(a, 7), [cf.expected_log2_gamma(x, 7) for x in a], rtol=1e-15)


def test_quadrature_failures():
    with pytest.raises(cf.NumericalIntegrationError):
        cf.expected_log2_gamma(np.inf, 7)
    with pytest.raises(cf.NumericalIntegrationError):
        cf.expected_log2_gamma(-1.0, 7)
    with pytest.raises(cf.NumericalIntegrationError):
        cf.expected_log2_gamma(1.0, 7, rtol=1e-30)


def test_jensen_bound_below_exact_grid(cfg_a):
    rho_o = np.geomspace(1e-2, 1e3, 10)
    beta_o = np.geomspace(1e-2, 1e2, 10)
    for ro in rho_o:
        for bo in beta_o:
            exact = cf.o_rate_exact(bo, ro, 0.4, cfg_a)
            bound = cf.o_rate_bound(bo, ro, 0.4, cfg_a)
            assert bound <= exact


def test_o_rate_zero_power(cfg_a):
    assert cf.o_rate_exact(1.0, 0.0, 1.0, cfg_a) == 0.0


def test_bound_needs_two_dims():
    cfg = SystemConfig(M=10, K=1, Mp=1, tau_c=100, tau_pu=2, tau_po=2, rho_u=1.0)
    with pytest.raises(cf.DomainError):
        cf.o_rate_bound(1.0, 1.0, 0.0, cfg)
    assert math.isnan(cf.o_rate_breakdown(cfg, 1.0, 1.0, 0.0).rate_bound)


def test_o_rate_increases_with_channel_gain(cfg_a):
    r = [cf.o_rate_exact(b, 2.0, 0.0, cfg_a) for b in (1.0, 3.0, 10.92)]
    assert r[0] < r[1] < r[2]
