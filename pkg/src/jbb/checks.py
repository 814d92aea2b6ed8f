"""Monte Carlo versus closed-form comparison used by ``jbb verify``."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import closedform, montecarlo, solver
from .estimation import gamma_k, o_estimation_stats
from .model import ConfigError, OperatingPoint, Scheme
from .scenario import Scenario

REL_TOL_LEAKAGE = 0.02
REL_TOL_SINR = 0.02
REL_TOL_O_RATE = 0.01
N_SIGMA = 3.0


@dataclass(frozen=True)
class Check:
    name: str
    predicted: float
    measured: float
    std_error: float
    tolerance: str
    passed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _rel(name, pred, meas, se, tol):
    ok = abs(meas - pred) <= tol * abs(pred)
    return Check(name, float(pred), float(meas), float(se), f"{tol:.0%} relative", bool(ok))


def _sigma(name, pred, meas, se):
    ok = abs(meas - pred) <= N_SIGMA * se
    return Check(name, float(pred), float(meas), float(se), f"{N_SIGMA:g} sigma", bool(ok))


def resolve_operating_point(scn: Scenario) -> OperatingPoint:
    """The scenario's operating point, or the solved JBB' intersection."""
    if scn.operating_point is not None:
        return OperatingPoint(scn.operating_point.rho_b, scn.operating_point.rho_o, Scheme.JBB_PRIME)
    if scn.target_net_b is None or scn.target_net_o is None:
        raise ConfigError("operating_point", "needed when targets are not both given")
    prof = scn.profile()
    gamma = np.atleast_1d(gamma_k(prof.as_array(), scn.system.rho_u, scn.system.tau_pu))
    x = solver.solve_intersection(scn.system, prof, gamma, scn.precoder, scn.target_net_b, scn.target_net_o,
                                  Scheme.JBB_PRIME)
    return OperatingPoint(x.rho_b, x.rho_o, Scheme.JBB_PRIME)


def run_checks(scn: Scenario, seed: int | None = None, threads: int | None = None,
               n_channel: int | None = None, n_scalar: int | None = None) -> list[Check]:
    cfg = scn.system
    prof = scn.profile()
    op = resolve_operating_point(scn)
    seed = scn.mc.seed if seed is None else seed
    n_channel = scn.mc.n_channel if n_channel is None else n_channel
    n_scalar = scn.mc.n_scalar if n_scalar is None else n_scalar
    beta = prof.as_array()
    gamma = np.atleast_1d(gamma_k(beta, cfg.rho_u, cfg.tau_pu))
    rb = closedform.effective_rho_b(cfg, op.rho_b, Scheme.JBB_PRIME)

    checks = []
    b = montecarlo.measure_b_terms(cfg, prof, op, scn.precoder, n_channel, [seed, 0], threads)
    # looked up through the module so a substituted formula is what gets checked
    leak_pred = np.atleast_1d(closedform.leakage_var(beta, gamma, op.rho_o))
    sinr_pred = np.atleast_1d(closedform.sinr_b(cfg, beta, gamma, b.eta, rb, op.rho_o, scn.precoder))
    for k in range(len(beta)):
        checks.append(_rel(f"leakage[{k}]", leak_pred[k], b.leakage[k], b.leakage_se[k], REL_TOL_LEAKAGE))
    checks.append(_sigma("precoder_normalization", 1.0, b.norm, b.norm_se))
    for k in range(len(beta)):
        checks.append(_rel(f"sinr_b[{k}]", sinr_pred[k], b.sinr[k], float("nan"), REL_TOL_SINR))

    o = montecarlo.measure_o_rate(cfg, prof, op, scn.precoder, n_channel, [seed, 1], threads)
    st = o_estimation_stats(prof.beta_o, op.rho_o, cfg.tau_po, cfg.Mp)
    checks.append(_rel("o_rate_exact", closedform.o_rate_exact(prof.beta_o, op.rho_o, rb, cfg), o.rate, o.rate_se,
                       REL_TOL_O_RATE))
    checks.append(_sigma("o_estimate_variance", st.var_hat, o.var_hat, o.var_hat_se))
    checks.append(_sigma("o_estimation_error_power", op.rho_o * st.var_tilde, o.v1, o.v1_se))
    checks.append(_sigma("o_b_interference_power", rb * prof.beta_o, o.v2, o.v2_se))
    checks.append(_sigma("o_b_interference_slope", 0.0, o.slope, o.slope_se))

    if cfg.Mp >= 2:
        j = montecarlo.verify_jensen_constant(cfg.Mp, n_scalar, [seed, 2], threads)
        checks.append(_sigma("inverse_norm_mean", 1.0 / (cfg.Mp - 1), j.inv_mean, j.inv_se))
    return checks
