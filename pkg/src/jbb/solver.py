"""Operating-point machinery.

Curves are traced in JBB coordinates: total power ``rho_d = rho_b + rho_o``
against the ratio ``rho_o / rho_b``. For each ratio the power that meets a
net-rate target is found by root finding on ``log(rho_d)``. OA points are
attached to the JBB point they are matched against (equal energy per
coherence interval and equal B-terminal rate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import closedform as cf
from .estimation import gamma_k
from .model import OperatingPoint, PathLossProfile, Precoder, Scheme, SystemConfig, as_beta_array, linear_to_db

RHO_MIN = 1e-6
RHO_MAX = 1e6
RESIDUAL_TOL = 1e-6
EPS_STEP = 0.005
EPS_TOL = 1e-4
DEFAULT_RATIO_DB = np.linspace(-10.0, 20.0, 121)



class NoIntersectionError(ValueError):
    pass


@dataclass(frozen=True)
class OAMatch:
    epsilon: float
    rho_b_oa: float
    rho_o_oa: float
    feasible: bool
    o_rate: float


@dataclass(frozen=True)
class CurvePoint:
    rho_d: float
    ratio: float
    curve: str
    rate: float
    feasible: bool
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def rho_b(self) -> float:
        return self.rho_d / (1.0 + self.ratio)

    @property
    def rho_o(self) -> float:
        return self.rho_d * self.ratio / (1.0 + self.ratio)

    @property
    def point(self) -> OperatingPoint:
        return OperatingPoint(self.rho_b, self.rho_o, Scheme.JBB_PRIME)


def _split(rho_d, ratio):
    return rho_d / (1.0 + ratio), rho_d * ratio / (1.0 + ratio)


def _solve_log(fn, target, lo=RHO_MIN, hi=RHO_MAX):
    """Root of increasing ``fn(x) = target`` on [lo, hi], searched in log x.

    Returns ``None`` when even ``hi`` falls short (checked first).
    """
    if fn(hi) < target:
        return None
    f_lo = fn(lo) - target
    if f_lo >= 0:
        return lo
    t = brentq(lambda u: fn(math.exp(u)) - target, math.log(lo), math.log(hi), xtol=1e-14, rtol=1e-14, maxiter=200)
    x = math.exp(t)
    if abs(fn(x) - target) >= RESIDUAL_TOL:
        raise cf.NumericalIntegrationError(f"root residual {fn(x) - target:.3g} above {RESIDUAL_TOL}")
    return x


# ---------------------------------------------------------------------------
# rates at a JBB-coordinate point


def jbb_prime_maxmin_rate(cfg: SystemConfig, beta, gamma, rho_b, rho_o, precoder: Precoder) -> float:
    """Gross per-terminal B rate under JBB' (b/s/Hz per payload symbol)."""
    rb = cf.effective_rho_b(cfg, rho_b, Scheme.JBB_PRIME)
    return float(cf.maxmin_rate(cfg, beta, gamma, rb, rho_o, precoder))


def jbb_prime_net_b(cfg, beta, gamma, rho_b, rho_o, precoder) -> float:
    """Net B-terminal sum rate under JBB' and max-min control."""
    K = len(as_beta_array(beta))
    return cf.prelog_b(cfg, Scheme.JBB_PRIME) * K * jbb_prime_maxmin_rate(cfg, beta, gamma, rho_b, rho_o, precoder)


def jbb_prime_net_o(cfg, beta_o, rho_b, rho_o, bound=False) -> float:
    if rho_o <= 0:
        return 0.0
    rb = cf.effective_rho_b(cfg, rho_b, Scheme.JBB_PRIME)
    fn = cf.o_rate_bound if bound else cf.o_rate_exact
    return cf.prelog_o(cfg) * float(fn(beta_o, rho_o, rb, cfg))


# ---------------------------------------------------------------------------
# OA matching


def _oa_o_rates(cfg, beta_o, rho_d, rho_b_oa, eps, bound):
    # vectorized over eps; infeasible entries come back as 0
    eps = np.asarray(eps, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho_o_oa = (rho_d - (1.0 - eps) * rho_b_oa) / eps
    ok = np.isfinite(rho_b_oa) & np.isfinite(rho_o_oa) & (rho_o_oa >= 0)
    rates = np.zeros_like(eps)
    if np.any(ok):
        ro = rho_o_oa[ok]
        fn = cf.o_rate_bound if bound else cf.o_rate_exact
        rates[ok] = cf.prelog_o(cfg) * eps[ok] * np.asarray(fn(beta_o, ro, 0.0, cfg))
    return rates, rho_o_oa, ok


def match_oa(
    point: OperatingPoint,
    cfg: SystemConfig,
    profile: PathLossProfile,
    gamma,
    precoder: Precoder,
    epsilon: float,
    bound: bool = False,
) -> OAMatch:
    """OA powers giving the same B rate and the same energy as ``point``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    beta = as_beta_array(profile)
    target = jbb_prime_maxmin_rate(cfg, beta, gamma, point.rho_b, point.rho_o, precoder)
    rho_b_oa = float(cf._oa_required_rho_b(cfg, beta, gamma, target, epsilon, precoder)) if target > 0 else 0.0
    rates, rho_o_oa, ok = _oa_o_rates(cfg, profile.beta_o, point.rho_d, rho_b_oa, np.array([epsilon]), bound)
    if not ok[0]:
        return OAMatch(float(epsilon), rho_b_oa, float(rho_o_oa[0]), False, 0.0)
    return OAMatch(float(epsilon), rho_b_oa, float(rho_o_oa[0]), True, float(rates[0]))


def optimize_epsilon(
    point: OperatingPoint,
    cfg: SystemConfig,
    profile: PathLossProfile,
    gamma,
    precoder: Precoder,
    bound: bool = False,
) -> OAMatch:
    """Best OA match over eps: grid of step 0.005, then bounded scalar refinement."""
    beta = as_beta_array(profile)
    target = jbb_prime_maxmin_rate(cfg, beta, gamma, point.rho_b, point.rho_o, precoder)
    n = int(round(1.0 / EPS_STEP))
    grid = np.arange(1, n) * EPS_STEP

    def rates_at(eps):
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        rb = cf._oa_required_rho_b(cfg, beta, gamma, target, eps, precoder) if target > 0 else np.zeros_like(eps)
        return _oa_o_rates(cfg, profile.beta_o, point.rho_d, rb, eps, bound)[0]

    rates = rates_at(grid)
    i = int(np.argmax(rates))
    if rates[i] <= 0:
        return OAMatch(float("nan"), float("nan"), float("nan"), False, 0.0)
    a, b = max(grid[i] - EPS_STEP, 1e-9), min(grid[i] + EPS_STEP, 1.0 - 1e-9)
    best_eps, best_rate = grid[i], rates[i]
    res = minimize_scalar(lambda e: -rates_at(e)[0], bounds=(a, b), method="bounded",
                          options={"xatol": EPS_TOL})
    if -res.fun > best_rate:
        best_eps, best_rate = res.x, -res.fun
    return match_oa(point, cfg, profile, gamma, precoder, float(best_eps), bound)


# ---------------------------------------------------------------------------
# curve tracing


def _ratio_grid(ratio_grid):
    if ratio_grid is None:
        return 10.0 ** (DEFAULT_RATIO_DB / 10.0)
    return np.asarray(ratio_grid, dtype=float)


def b_curve_point(cfg, beta, gamma, precoder, target_net_b, ratio) -> CurvePoint:
    def net(rho_d):
        return jbb_prime_net_b(cfg, beta, gamma, *_split(rho_d, ratio), precoder)

    rho_d = _solve_log(net, target_net_b)
    if rho_d is None:
        return CurvePoint(float("nan"), float(ratio), "b_jbb_prime", float("nan"), False)
    return CurvePoint(rho_d, float(ratio), "b_jbb_prime", net(rho_d), True)


def trace_b_curve(cfg, profile, gamma, precoder, target_net_b, ratio_grid=None) -> list[CurvePoint]:
    """Powers at which the JBB' net B sum rate equals ``target_net_b``."""
    if not target_net_b > 0:
        raise ValueError(f"target must be > 0, got {target_net_b}")
    beta = as_beta_array(profile)
    return [b_curve_point(cfg, beta, gamma, precoder, target_net_b, r) for r in _ratio_grid(ratio_grid)]


def o_curve_point(cfg, profile, gamma, precoder, target_net_o, ratio, scheme: Scheme, bound=False) -> CurvePoint:
    scheme = Scheme(scheme)
    name = ("o_oa" if scheme is Scheme.OA else "o_jbb_prime") + ("_bound" if bound else "")
    last = {}

    if scheme is Scheme.OA:
        def net(rho_d):
            m = optimize_epsilon(OperatingPoint(*_split(rho_d, ratio)), cfg, profile, gamma, precoder, bound)
            last[rho_d] = m
            return m.o_rate
    else:
        def net(rho_d):
            return jbb_prime_net_o(cfg, profile.beta_o, *_split(rho_d, ratio), bound=bound)

    rho_d = _solve_log(net, target_net_o)
    if rho_d is None:
        return CurvePoint(float("nan"), float(ratio), name, float("nan"), False)
    rate = net(rho_d)
    meta = {}
    if scheme is Scheme.OA:
        m = last[rho_d]
        meta = {"epsilon": m.epsilon, "rho_b_oa": m.rho_b_oa, "rho_o_oa": m.rho_o_oa}
    return CurvePoint(rho_d, float(ratio), name, rate, True, meta)


@dataclass(frozen=True)
class OCurves:
    jbb_prime: list
    oa: list
    jbb_prime_bound: list
    oa_bound: list

    def items(self):
        return [("o_jbb_prime", self.jbb_prime), ("o_oa", self.oa),
                ("o_jbb_prime_bound", self.jbb_prime_bound), ("o_oa_bound", self.oa_bound)]


def trace_o_curves(cfg, profile, gamma, precoder, target_net_o, ratio_grid=None, bounds=True) -> OCurves:
    """O-terminal target curves for JBB' and for OA (eps optimized per point)."""
    if not target_net_o > 0:
        raise ValueError(f"target must be > 0, got {target_net_o}")
    grid = _ratio_grid(ratio_grid)

    def trace(scheme, bound):
        return [o_curve_point(cfg, profile, gamma, precoder, target_net_o, r, scheme, bound) for r in grid]

    return OCurves(
        jbb_prime=trace(Scheme.JBB_PRIME, False),
        oa=trace(Scheme.OA, False),
        jbb_prime_bound=trace(Scheme.JBB_PRIME, True) if bounds and cfg.Mp >= 2 else [],
        oa_bound=trace(Scheme.OA, True) if bounds and cfg.Mp >= 2 else [],
    )


# ---------------------------------------------------------------------------
# intersections


@dataclass(frozen=True)
class Intersection:
    ratio: float
    rho_d: float

    @property
    def rho_b(self):
        return _split(self.rho_d, self.ratio)[0]

    @property
    def rho_o(self):
        return _split(self.rho_d, self.ratio)[1]


def find_intersection(curve_a, curve_b) -> Intersection:
    """First crossing of two curves sampled on a common ratio grid.

    Sign change of the dB difference between consecutive feasible points,
    then linear interpolation in (ratio dB, rho_d dB).
    """
    if len(curve_a) != len(curve_b):
        raise ValueError("curves must share a ratio grid")
    xs = [linear_to_db(p.ratio) for p in curve_a]
    diff = []
    for pa, pb in zip(curve_a, curve_b):
        if not math.isclose(pa.ratio, pb.ratio, rel_tol=1e-12):
            raise ValueError("curves must share a ratio grid")
        ok = pa.feasible and pb.feasible
        diff.append(linear_to_db(pa.rho_d) - linear_to_db(pb.rho_d) if ok else float("nan"))
    for i, d in enumerate(diff):
        if d == 0.0:
            return Intersection(curve_a[i].ratio, curve_a[i].rho_d)
        if i and not math.isnan(diff[i - 1]) and not math.isnan(d) and (diff[i - 1] < 0) != (d < 0):
            t = diff[i - 1] / (diff[i - 1] - d)
            x = xs[i - 1] + t * (xs[i] - xs[i - 1])
            y0, y1 = linear_to_db(curve_a[i - 1].rho_d), linear_to_db(curve_a[i].rho_d)
            return Intersection(10.0 ** (x / 10.0), 10.0 ** ((y0 + t * (y1 - y0)) / 10.0))
    raise NoIntersectionError("curves do not cross on the ratio grid")


def _b_rho_d(cfg, beta, gamma, precoder, target_net_b, ratio):
    p = b_curve_point(cfg, beta, gamma, precoder, target_net_b, ratio)
    return p.rho_d if p.feasible else None


def solve_intersection(cfg, profile, gamma, precoder, target_net_b, target_net_o, scheme: Scheme,
                       ratio_lo_db=-10.0, ratio_hi_db=20.0, bound=False, n_scan=31) -> Intersection:
    """Ratio at which the O-target is met exactly on the B-target curve.

    Scans the B curve for a sign change of (net O rate - target), then
    refines with a root solve in ratio dB.
    """
    scheme = Scheme(scheme)
    beta = as_beta_array(profile)

    def excess(r_db):
        r = 10.0 ** (r_db / 10.0)
        rho_d = _b_rho_d(cfg, beta, gamma, precoder, target_net_b, r)
        if rho_d is None:
            return float("nan")
        rb, ro = _split(rho_d, r)
        if scheme is Scheme.OA:
            rate = optimize_epsilon(OperatingPoint(rb, ro), cfg, profile, gamma, precoder, bound).o_rate
        else:
            rate = jbb_prime_net_o(cfg, profile.beta_o, rb, ro, bound)
        return rate - target_net_o

    xs = np.linspace(ratio_lo_db, ratio_hi_db, n_scan)
    prev_x, prev_f = None, None
    for x in xs:
        f = excess(x)
        if f == 0.0:
            break
        if prev_f is not None and not math.isnan(prev_f) and not math.isnan(f) and (prev_f < 0) != (f < 0):
            x = brentq(excess, prev_x, x, xtol=1e-9)
            break
        prev_x, prev_f = x, f
    else:
        raise NoIntersectionError(f"{scheme.value} O-target never met on the B-target curve")
    r = 10.0 ** (x / 10.0)
    return Intersection(r, _b_rho_d(cfg, beta, gamma, precoder, target_net_b, r))


@dataclass(frozen=True)
class Comparison:
    jbb_prime: Intersection
    oa: Intersection
    oa_match: OAMatch

    @property
    def saving_db(self) -> float:
        return linear_to_db(self.oa.rho_d) - linear_to_db(self.jbb_prime.rho_d)


def compare_schemes(cfg, profile, precoder, target_net_b, target_net_o, gamma=None, bound=False) -> Comparison:
    """JBB' and OA operating points on the B-target curve and the dB saving."""
    if gamma is None:
        gamma = np.atleast_1d(gamma_k(as_beta_array(profile), cfg.rho_u, cfg.tau_pu))
    j = solve_intersection(cfg, profile, gamma, precoder, target_net_b, target_net_o, Scheme.JBB_PRIME, bound=bound)
    o = solve_intersection(cfg, profile, gamma, precoder, target_net_b, target_net_o, Scheme.OA, bound=bound)
    m = optimize_epsilon(OperatingPoint(o.rho_b, o.rho_o), cfg, profile, gamma, precoder, bound)
    return Comparison(jbb_prime=j, oa=o, oa_match=m)


# ---------------------------------------------------------------------------
# uplink SNR sweep


@dataclass(frozen=True)
class SweepRow:
    rho_u: float
    rho_o: float
    rho_b: float
    feasible: bool


def required_rho_b(cfg, beta, gamma, precoder, target_net_b_sum, rho_o, scheme: Scheme = Scheme.JBB):
    """B power for net sum rate ``target_net_b_sum`` at fixed broadcast power; None if unreachable."""
    scheme = Scheme(scheme)
    K = len(as_beta_array(beta))
    w = cf.prelog_b(cfg, scheme) * K
    ro = 0.0 if scheme is Scheme.OA else rho_o

    def net(rho_b):
        rb = cf.effective_rho_b(cfg, rho_b, scheme)
        return w * float(cf.maxmin_rate(cfg, beta, gamma, rb, ro, precoder))

    return _solve_log(net, target_net_b_sum)


def sweep_uplink_snr(cfg, profile, precoder, target_net_b_sum, rho_o, rho_u_grid, scheme=Scheme.JBB) -> list[SweepRow]:
    """Required B power against uplink SNR, rows sorted by ``rho_u``."""
    beta = as_beta_array(profile)
    rows = []
    for rho_u in sorted(float(x) for x in rho_u_grid):
        gamma = np.atleast_1d(gamma_k(beta, rho_u, cfg.tau_pu))
        rb = required_rho_b(cfg, beta, gamma, precoder, target_net_b_sum, rho_o, scheme)
        rows.append(SweepRow(rho_u, float(rho_o), float("nan") if rb is None else rb, rb is not None))
    return rows
