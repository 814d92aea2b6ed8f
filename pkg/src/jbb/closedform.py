"""Deterministic rate engine.

Achievable rates for B-terminals (MR/ZF with max-min power control),
ergodic and bounded rates for O-terminals, frame prelogs and the OA
power-matching closed forms. Everything is in linear units and accepts
numpy arrays where that is natural.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammainccinv, gammaincinv, gammaln

from .estimation import o_estimation_stats
from .model import Precoder, Scheme, SystemConfig, as_beta_array, rho_b_prime


class NumericalIntegrationError(ArithmeticError):
    """Quadrature failed to reach the requested tolerance."""


class DomainError(ValueError):
    pass


class InfeasibleTargetError(ValueError):
    """The requested rate cannot be reached at any power."""


QUAD_RTOL = 1e-8


# ---------------------------------------------------------------------------
# frame accounting


def prelog_b(cfg: SystemConfig, scheme: Scheme) -> float:
    """Fraction of the coherence interval carrying B-terminal payload."""
    scheme = Scheme(scheme)
    tau_c, tau_pu = cfg.tau_c, cfg.tau_pu
    if scheme is Scheme.JBB_PRIME:
        return 0.5 * (1.0 - (tau_pu + 2 * cfg.tau_po) / tau_c)
    # JBB, and OA applied to rates already weighted by (1 - eps)
    return 0.5 * (1.0 - tau_pu / tau_c)


def prelog_o(cfg: SystemConfig) -> float:
    return 0.5 * (1.0 - (cfg.tau_pu + 2 * cfg.tau_po) / cfg.tau_c)


def net_sum_b(cfg: SystemConfig, sum_of_rates, scheme: Scheme):
    return prelog_b(cfg, scheme) * sum_of_rates


def effective_rho_b(cfg: SystemConfig, rho_b, scheme: Scheme):
    """B-power actually radiated during payload symbols under ``scheme``."""
    if Scheme(scheme) is Scheme.JBB_PRIME:
        return rho_b_prime(rho_b, cfg.budget, cfg.tau_po)
    return rho_b


# ---------------------------------------------------------------------------
# B-terminals


def leakage_var(beta_k, gamma_k, rho_o):
    """Broadcast power leaking into a B-terminal through imperfect nulling."""
    return rho_o * (np.asarray(beta_k) - np.asarray(gamma_k))


@dataclass(frozen=True)
class PowerControl:
    eta: tuple

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if np.any(eta < 0):
            raise ValueError(f"power control weights must be >= 0, got {eta}")
        if eta.size and abs(eta.sum() - 1.0) > 1e-9:
            raise ValueError(f"power control weights must sum to 1, got {eta.sum()!r}")
        object.__setattr__(self, "eta", tuple(float(e) for e in eta))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.eta, dtype=float)


def _interference_mr(beta, gamma, rho_b, rho_o):
    return rho_b * beta + leakage_var(beta, gamma, rho_o) + 1.0


def _interference_zf(beta, gamma, rho_b, rho_o):
    return (rho_b + rho_o) * (beta - gamma) + 1.0


def sinr_b_mr(cfg: SystemConfig, beta, gamma, eta, rho_b, rho_o):
    beta, gamma, eta = np.asarray(beta), np.asarray(gamma), np.asarray(eta)
    return cfg.M * rho_b * gamma * eta / _interference_mr(beta, gamma, rho_b, rho_o)


def sinr_b_zf(cfg: SystemConfig, beta, gamma, eta, rho_b, rho_o):
    beta, gamma, eta = np.asarray(beta), np.asarray(gamma), np.asarray(eta)
    return (cfg.M - cfg.K) * rho_b * gamma * eta / _interference_zf(beta, gamma, rho_b, rho_o)


def rate_b_mr(cfg: SystemConfig, beta, gamma, eta, rho_b, rho_o):
    """Per-terminal MR rate in b/s/Hz per downlink symbol."""
    return np.log2(1.0 + sinr_b_mr(cfg, beta, gamma, eta, rho_b, rho_o))


def rate_b_zf(cfg: SystemConfig, beta, gamma, eta, rho_b, rho_o):
    """Per-terminal ZF rate in b/s/Hz per downlink symbol."""
    return np.log2(1.0 + sinr_b_zf(cfg, beta, gamma, eta, rho_b, rho_o))


def sinr_b(cfg, beta, gamma, eta, rho_b, rho_o, precoder: Precoder):
    if Precoder(precoder) is Precoder.MR:
        return sinr_b_mr(cfg, beta, gamma, eta, rho_b, rho_o)
    return sinr_b_zf(cfg, beta, gamma, eta, rho_b, rho_o)


def rate_b(cfg, beta, gamma, eta, rho_b, rho_o, precoder: Precoder):
    return np.log2(1.0 + sinr_b(cfg, beta, gamma, eta, rho_b, rho_o, precoder))


def _maxmin_terms(cfg, beta, gamma, rho_b, rho_o, precoder):
    beta = as_beta_array(beta)
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    rho_b = np.asarray(rho_b, dtype=float)[..., None]
    rho_o = np.asarray(rho_o, dtype=float)[..., None]
    if Precoder(precoder) is Precoder.MR:
        per_k = _interference_mr(beta, gamma, rho_b, rho_o) / gamma
        gain = cfg.M
    else:
        per_k = _interference_zf(beta, gamma, rho_b, rho_o) / gamma
        gain = cfg.M - cfg.K
    return per_k, gain, rho_b[..., 0]


def maxmin_sinr(cfg: SystemConfig, beta, gamma, rho_b, rho_o, precoder: Precoder):
    """Common SINR under max-min power control; broadcasts over power arrays."""
    per_k, gain, rho_b = _maxmin_terms(cfg, beta, gamma, rho_b, rho_o, precoder)
    return gain * rho_b / per_k.sum(axis=-1)


def maxmin_rate(cfg: SystemConfig, beta, gamma, rho_b, rho_o, precoder: Precoder):
    return np.log2(1.0 + maxmin_sinr(cfg, beta, gamma, rho_b, rho_o, precoder))


def maxmin_control(cfg: SystemConfig, beta, gamma, rho_b: float, rho_o: float, precoder: Precoder):
    """Max-min fair weights and the common per-terminal rate.

    Returns ``(PowerControl, rate)`` where ``rate`` is the gross rate every
    B-terminal gets, in b/s/Hz per downlink symbol.
    """
    if len(as_beta_array(beta)) < 1:
        raise ValueError("max-min control needs at least one B-terminal")
    per_k, _, _ = _maxmin_terms(cfg, beta, gamma, float(rho_b), float(rho_o), precoder)
    eta = per_k / per_k.sum()
    return PowerControl(eta=tuple(eta)), float(maxmin_rate(cfg, beta, gamma, rho_b, rho_o, precoder))


def oa_maxmin_rate(cfg: SystemConfig, beta, gamma, rho_b_oa, epsilon, precoder: Precoder):
    """Max-min B rate under OA, already weighted by the (1 - eps) resource share."""
    return (1.0 - np.asarray(epsilon)) * maxmin_rate(cfg, beta, gamma, rho_b_oa, 0.0, precoder)


def _oa_required_rho_b(cfg, beta, gamma, target, epsilon, precoder):
    # NaN marks an unreachable target
    beta = as_beta_array(beta)
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    epsilon = np.asarray(epsilon, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        x = np.exp2(np.asarray(target, dtype=float) / (1.0 - epsilon)) - 1.0
        if Precoder(precoder) is Precoder.MR:
            denom = cfg.M - x * np.sum(beta / gamma)
        else:
            denom = cfg.M - cfg.K - x * np.sum((beta - gamma) / gamma)
        rho = x * np.sum(1.0 / gamma) / denom
    ok = (epsilon >= 0) & (epsilon < 1) & (denom > 0) & np.isfinite(x)
    return np.where(ok, rho, np.nan)


def oa_required_rho_b(cfg: SystemConfig, beta, gamma, target_maxmin_rate: float, epsilon: float, precoder: Precoder):
    """OA B-power needed so the (1 - eps)-weighted max-min rate hits ``target_maxmin_rate``.

    Raises :class:`InfeasibleTargetError` when the target is unreachable at
    any power (non-positive denominator, or ``eps`` outside ``[0, 1)``).
    """
    if target_maxmin_rate == 0:
        return 0.0
    rho = float(_oa_required_rho_b(cfg, beta, gamma, target_maxmin_rate, epsilon, precoder))
    if math.isnan(rho):
        raise InfeasibleTargetError(
            f"rate {target_maxmin_rate:.4g} b/s/Hz unreachable with OA at eps={epsilon:.4g} ({Precoder(precoder).value})"
        )
    return rho


# ---------------------------------------------------------------------------
# O-terminal


@functools.lru_cache(maxsize=32)
def gamma_quadrature(shape: int, order: int = 16):
    """Nodes and weights approximating E[f(Y)] for Y ~ Gamma(shape, 1).

    Composite Gauss-Legendre over geometric panels (each twice as wide as
    the previous) spanning the central 1 - 2e-20 of the probability mass,
    plus one panel down to zero. Geometric panels keep log(1 + a*y) well
    resolved near the origin for arbitrarily large ``a``.
    """
    lo = float(gammaincinv(shape, 1e-20))
    hi = float(gammainccinv(shape, 1e-20))
    n_panels = max(int(math.ceil(math.log2(hi / lo))), 1)
    edges = np.concatenate([[0.0], np.geomspace(lo, hi, n_panels + 1)])
    x, w = leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (a + 0.5 * (b - a) * (x + 1.0)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    log_pdf = (shape - 1) * np.log(nodes) - nodes - gammaln(shape)
    weights = weights * np.exp(log_pdf)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def expected_log2_gamma(a, shape: int, rtol: float = QUAD_RTOL):
    """E[log2(1 + a*Y)] with Y ~ Gamma(shape, 1), elementwise in ``a``.

    Two composite rules of different order are compared; disagreement
    beyond ``rtol`` raises :class:`NumericalIntegrationError`.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise NumericalIntegrationError(f"SINR scale must be finite and >= 0, got {a}")
    flat = a.reshape(-1, 1)
    nodes, weights = gamma_quadrature(shape, 16)
    fine = np.log1p(flat * nodes) @ weights / math.log(2.0)
    nodes_c, weights_c = gamma_quadrature(shape, 10)
    coarse = np.log1p(flat * nodes_c) @ weights_c / math.log(2.0)
    err = np.abs(fine - coarse)
    bad = err > rtol * np.abs(fine) + 1e-300
    if np.any(bad) or not np.all(np.isfinite(fine)):
        i = int(np.argmax(bad | ~np.isfinite(fine)))
        raise NumericalIntegrationError(
            f"quadrature did not converge: a={flat[i, 0]!r}, shape={shape}, "
            f"estimates {fine[i]!r} vs {coarse[i]!r} (rtol {rtol})"
        )
    out = fine.reshape(a.shape)
    return float(out) if out.ndim == 0 else out


def o_noise_terms(beta_o, rho_o, rho_b_eff, cfg: SystemConfig):
    """(signal scale, estimation-error variance, B-interference variance).

    The signal scale is ``rho_o * var_hat / Mp``, i.e. the conditional
    received power is ``scale * ||h_hat||^2 / var_hat``.
    """
    st = o_estimation_stats(np.asarray(beta_o, float), np.asarray(rho_o, float), cfg.tau_po, cfg.Mp)
    v1 = np.asarray(rho_o) * st.var_tilde
    v2 = np.asarray(rho_b_eff) * np.asarray(beta_o)
    return np.asarray(rho_o) * st.var_hat / cfg.Mp, v1, v2


def _o_sinr_scale(beta_o, rho_o, rho_b_eff, cfg):
    scale, v1, v2 = o_noise_terms(beta_o, rho_o, rho_b_eff, cfg)
    return scale / (v1 + v2 + 1.0)


def o_rate_exact(beta_o, rho_o, rho_b_eff, cfg: SystemConfig):
    """Ergodic O-terminal rate (gross, b/s/Hz per payload symbol).

    ``rho_b_eff`` is the beamformed power the O-terminal sees as
    interference: rho_b' for JBB', zero for OA.
    """
    return expected_log2_gamma(_o_sinr_scale(beta_o, rho_o, rho_b_eff, cfg), cfg.Mp)


def o_rate_bound(beta_o, rho_o, rho_b_eff, cfg: SystemConfig):
    """Closed-form lower bound on :func:`o_rate_exact` (needs Mp >= 2)."""
    if cfg.Mp < 2:
        raise DomainError(f"the Jensen bound needs Mp >= 2, got Mp={cfg.Mp}")
    out = np.log2(1.0 + (cfg.Mp - 1) * _o_sinr_scale(beta_o, rho_o, rho_b_eff, cfg))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ORateBreakdown:
    signal: float
    est_error: float
    b_interference: float
    rate_exact: float
    rate_bound: float
    net_rate: float
    net_rate_bound: float


def o_rate_breakdown(cfg: SystemConfig, beta_o: float, rho_o: float, rho_b_eff: float, epsilon: float = 1.0):
    """Signal, noise terms and rates of one O-terminal.

    ``signal`` is the numerator of the closed-form bound (useful power
    relative to noise). Net rates include the pilot prelog and, for OA,
    the ``epsilon`` resource share.
    """
    scale, v1, v2 = o_noise_terms(beta_o, rho_o, rho_b_eff, cfg)
    exact = o_rate_exact(beta_o, rho_o, rho_b_eff, cfg)
    bound = o_rate_bound(beta_o, rho_o, rho_b_eff, cfg) if cfg.Mp >= 2 else float("nan")
    w = prelog_o(cfg) * epsilon
    return ORateBreakdown(
        signal=float((cfg.Mp - 1) * scale),
        est_error=float(v1),
        b_interference=float(v2),
        rate_exact=float(exact),
        rate_bound=float(bound),
        net_rate=float(w * exact),
        net_rate_bound=float(w * bound),
    )


@dataclass(frozen=True)
class RateReport:
    scheme: Scheme
    precoder: Precoder
    per_terminal_rate: tuple
    maxmin_rate: float
    net_sum_b: float
    eta: tuple
    rho_b_eff: float


def b_rate_report(cfg: SystemConfig, beta, gamma, rho_b: float, rho_o: float, scheme: Scheme, precoder: Precoder):
    """B-terminal rates at a JBB-coordinate operating point under ``scheme``.

    For OA this is the full-resource rate with no broadcast power, i.e.
    the (1 - eps) share is not applied.
    """
    scheme = Scheme(scheme)
    rb = effective_rho_b(cfg, rho_b, scheme)
    ro = 0.0 if scheme is Scheme.OA else rho_o
    pc, rmm = maxmin_control(cfg, beta, gamma, rb, ro, precoder)
    per_k = rate_b(cfg, as_beta_array(beta), gamma, pc.as_array(), rb, ro, precoder)
    return RateReport(
        scheme=scheme,
        precoder=Precoder(precoder),
        per_terminal_rate=tuple(float(r) for r in per_k),
        maxmin_rate=rmm,
        net_sum_b=float(net_sum_b(cfg, np.sum(per_k), scheme)),
        eta=pc.eta,
        rho_b_eff=float(rb),
    )

