import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from jbb.model import (
    CellGeometry,
    ConfigError,
    FrameBudget,
    InfeasibleFrameError,
    OperatingPoint,
    PathLossProfile,
    SystemConfig,
    db_to_linear,
    drop_terminals,
    linear_to_db,
    rho_b_prime,
    sample_radii,
)

BASE = dict(M=100, K=1, Mp=7, tau_c=500, tau_pu=10, tau_po=10, rho_u=0.5)


def test_db_conversions():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(-3.0) == pytest.approx(0.501187, rel=1e-5)
    assert linear_to_db(0.0) == -math.inf
    np.testing.assert_allclose(db_to_linear(np.array([0.0, 20.0])), [1.0, 100.0])


@given(st.floats(-200, 200))
def test_db_roundtrip(x):
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-9)


def test_frame_budget_split():
    b = FrameBudget.from_symbols(500, 10)
    assert b.tau_du == b.tau_dd == 245
    with pytest.raises(ConfigError) as e:
        FrameBudget.from_symbols(500, 11)
    assert e.value.field == "tau_c"


@pytest.mark.parametrize(
    "change, field",
    [
        ({"K": 100}, "K"),
        ({"tau_pu": 0, "K": 1}, "tau_pu"),
        ({"tau_po": 5}, "tau_po"),
        ({"Mp": 101, "tau_po": 200}, "Mp"),
        ({"rho_u": -1.0}, "rho_u"),
        ({"rho_u": math.inf}, "rho_u"),
        ({"M": 10.5}, "M"),
        ({"tau_pu": 11}, "tau_c"),
    ],
)
def test_config_rejects(change, field):
    with pytest.raises(ConfigError) as e:
        SystemConfig(**{**BASE, **change})
    assert e.value.field == field


def test_check_scheme_nullspace_room():
    cfg = SystemConfig(**{**BASE, "M": 10, "K": 5, "Mp": 7})
    with pytest.raises(ConfigError):
        cfg.check_scheme("JBB_PRIME")
    cfg.check_scheme("OA")


def test_replace_revalidates():
    cfg = SystemConfig(**BASE)
    assert cfg.replace(M=64).M == 64
    with pytest.raises(ConfigError):
        cfg.replace(K=200)


def test_profile_validation():
    with pytest.raises(ConfigError) as e:
        PathLossProfile((1.0, 0.0), 1.0)
    assert e.value.field == "beta[1]"
    with pytest.raises(ConfigError):
        PathLossProfile((1.0,), math.nan)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_operating_point_split(rho_d, ratio):
    op = OperatingPoint.from_total(rho_d, ratio)
    assert op.rho_d == pytest.approx(rho_d, rel=1e-12)
    assert op.rho_o / op.rho_b == pytest.approx(ratio, rel=1e-12)


def test_rho_b_prime():
    b = FrameBudget.from_symbols(500, 10)
    assert rho_b_prime(1.0, b, 10) == pytest.approx(245 / 235)
    with pytest.raises(InfeasibleFrameError):
        rho_b_prime(1.0, b, 245)


def test_geometry_gain():
    g = CellGeometry()
    assert g.gain(1.0) == pytest.approx(1.0)
    assert g.gain(g.midpoint) == pytest.approx(0.55**-4)
    with pytest.raises(ConfigError):
        CellGeometry(inner_radius=1.0, outer_radius=0.5)


def test_radii_uniform_over_area():
    # oracle: for a uniform drop over the annulus, d^2 is uniform on [r_in^2, r_out^2]
    g = CellGeometry()
    d = sample_radii(g, 20000, np.random.default_rng(3))
    assert d.min() >= g.inner_radius and d.max() <= g.outer_radius
    res = stats.kstest(d**2, stats.uniform(loc=0.01, scale=0.99).cdf)
    assert res.pvalue > 1e-3


def test_drop_is_seeded():
    g = CellGeometry()
    a, b = drop_terminals(g, 10, 5), drop_terminals(g, 10, 5)
    assert a == b
    assert a != drop_terminals(g, 10, 6)
    assert all(beta >= 1.0 for beta in a.beta)
