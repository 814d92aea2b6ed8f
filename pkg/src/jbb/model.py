"""Configuration, geometry and operating-point types shared by every module.

All powers are linear ratios relative to unit noise variance. dB values
only appear at the I/O boundary (scenario files, reports).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """A configuration value violates one of its invariants."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class InfeasibleFrameError(ValueError):
    """No downlink payload symbols are left after the O-terminal pilots."""


class Scheme(str, Enum):
    JBB = "JBB"
    JBB_PRIME = "JBB_PRIME"
    OA = "OA"


class Precoder(str, Enum):
    MR = "MR"
    ZF = "ZF"


def db_to_linear(x_db):
    if np.ndim(x_db):
        return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)
    return 10.0 ** (float(x_db) / 10.0)


def linear_to_db(x):
    """Inverse of :func:`db_to_linear`. Zero maps to ``-inf``."""
    if np.ndim(x):
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(np.asarray(x, dtype=float))
    x = float(x)
    if x == 0.0:
        return -math.inf
    return 10.0 * math.log10(x)


def _require_int(name, value, minimum):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(name, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")


@dataclass(frozen=True)
class FrameBudget:
    """Symmetric split of a coherence interval after the uplink pilots."""

    tau_c: int
    tau_pu: int
    tau_du: int
    tau_dd: int

    @classmethod
    def from_symbols(cls, tau_c: int, tau_pu: int) -> "FrameBudget":
        if (tau_c - tau_pu) % 2:
            raise ConfigError("tau_c", f"tau_c - tau_pu must be even, got {tau_c} - {tau_pu}")
        half = (tau_c - tau_pu) // 2
        return cls(tau_c=tau_c, tau_pu=tau_pu, tau_du=half, tau_dd=half)


@dataclass(frozen=True)
class SystemConfig:
    """Array size, terminal count, broadcast subspace and frame layout.

    ``Mp`` is the broadcast subspace dimension, ``tau_pu`` / ``tau_po`` the
    uplink and O-terminal downlink pilot lengths and ``rho_u`` the linear
    uplink SNR.
    """

    M: int
    K: int
    Mp: int
    tau_c: int
    tau_pu: int
    tau_po: int
    rho_u: float

    def __post_init__(self):
        _require_int("M", self.M, 1)
        _require_int("K", self.K, 0)
        _require_int("Mp", self.Mp, 1)
        _require_int("tau_c", self.tau_c, 1)
        _require_int("tau_pu", self.tau_pu, 0)
        _require_int("tau_po", self.tau_po, 0)
        if not self.K < self.M:
            raise ConfigError("K", f"must satisfy K < M, got K={self.K}, M={self.M}")
        if not self.K <= self.tau_pu <= self.tau_c:
            raise ConfigError("tau_pu", f"must satisfy K <= tau_pu <= tau_c, got {self.tau_pu}")
        if not self.Mp <= self.tau_po <= self.tau_c:
            raise ConfigError("tau_po", f"must satisfy Mp <= tau_po <= tau_c, got {self.tau_po}")
        if self.Mp > self.M:
            raise ConfigError("Mp", f"must satisfy Mp <= M, got Mp={self.Mp}, M={self.M}")
        if not (math.isfinite(self.rho_u) and self.rho_u >= 0):
            raise ConfigError("rho_u", f"must be finite and >= 0, got {self.rho_u}")
        FrameBudget.from_symbols(self.tau_c, self.tau_pu)

    @property
    def budget(self) -> FrameBudget:
        return FrameBudget.from_symbols(self.tau_c, self.tau_pu)

    def check_scheme(self, scheme: Scheme) -> None:
        """Raise if the broadcast subspace cannot be hosted under ``scheme``."""
        scheme = Scheme(scheme)
        if scheme is not Scheme.OA and self.Mp > self.M - self.K:
            raise ConfigError(
                "Mp", f"nullspace broadcasting needs Mp <= M - K, got Mp={self.Mp}, M-K={self.M - self.K}"
            )

    def replace(self, **changes) -> "SystemConfig":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return SystemConfig(**values)


@dataclass(frozen=True)
class PathLossProfile:
    beta: tuple
    beta_o: float

    def __post_init__(self):
        beta = tuple(float(b) for b in np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "beta", beta)
        for i, b in enumerate(beta):
            if not (math.isfinite(b) and b > 0):
                raise ConfigError(f"beta[{i}]", f"must be finite and > 0, got {b}")
        if not (math.isfinite(self.beta_o) and self.beta_o > 0):
            raise ConfigError("beta_o", f"must be finite and > 0, got {self.beta_o}")
        object.__setattr__(self, "beta_o", float(self.beta_o))

    @property
    def K(self) -> int:
        return len(self.beta)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float)


@dataclass(frozen=True)
class OperatingPoint:
    rho_b: float
    rho_o: float
    scheme: Scheme = Scheme.JBB_PRIME

    def __post_init__(self):
        if not self.rho_b >= 0:
            raise ConfigError("rho_b", f"must be >= 0, got {self.rho_b}")
        if not self.rho_o >= 0:
            raise ConfigError("rho_o", f"must be >= 0, got {self.rho_o}")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def rho_d(self) -> float:
        return self.rho_b + self.rho_o

    @classmethod
    def from_total(cls, rho_d: float, ratio: float, scheme=Scheme.JBB_PRIME) -> "OperatingPoint":
        """Split ``rho_d`` so that ``rho_o / rho_b == ratio``."""
        return cls(rho_d / (1.0 + ratio), rho_d * ratio / (1.0 + ratio), scheme)


@dataclass(frozen=True)
class CellGeometry:
    inner_radius: float = 0.1
    outer_radius: float = 1.0
    pathloss_exponent: float = 4.0

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ConfigError(
                "inner_radius", f"need 0 < inner_radius < outer_radius, got {self.inner_radius}, {self.outer_radius}"
            )
        if not self.pathloss_exponent > 0:
            raise ConfigError("pathloss_exponent", f"must be > 0, got {self.pathloss_exponent}")

    def gain(self, distance):
        """Large-scale gain at ``distance``; unity at the cell border."""
        d = np.asarray(distance, dtype=float) / self.outer_radius
        return d ** (-self.pathloss_exponent)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.inner_radius + self.outer_radius)


def sample_radii(geometry: CellGeometry, n: int, rng: np.random.Generator) -> np.ndarray:
    # inverse CDF of the radius for a uniform density over the annulus area
    u = rng.random(n)
    r_in2, r_out2 = geometry.inner_radius**2, geometry.outer_radius**2
    return np.sqrt(u * (r_out2 - r_in2) + r_in2)


def drop_terminals(geometry: CellGeometry, K: int, rng_seed, beta_o: float = 1.0) -> PathLossProfile:
    """Drop ``K`` terminals uniformly over the annulus; no shadow fading."""
    _require_int("K", K, 1)
    rng = np.random.default_rng(rng_seed)
    d = sample_radii(geometry, K, rng)
    return PathLossProfile(beta=tuple(geometry.gain(d)), beta_o=beta_o)


def rho_b_prime(rho_b, budget: FrameBudget, tau_po: int):
    """B-power during JBB' payload symbols at equal energy per interval."""
    if tau_po >= budget.tau_dd:
        raise InfeasibleFrameError(f"tau_po={tau_po} leaves no payload in tau_dd={budget.tau_dd} symbols")
    return rho_b * budget.tau_dd / (budget.tau_dd - tau_po)


def as_beta_array(beta: Sequence[float] | PathLossProfile) -> np.ndarray:
    if isinstance(beta, PathLossProfile):
        return beta.as_array()
    return np.atleast_1d(np.asarray(beta, dtype=float))
