"""Channel-estimation quality: uplink MMSE for B-terminals and the
downlink pilot phase seen by an O-terminal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PathLossProfile, SystemConfig, as_beta_array


def gamma_k(beta, rho_u, tau_pu):
    """Per-element variance of the MMSE estimate of a B-terminal channel.

    Works elementwise on arrays. ``rho_u = inf`` gives the perfect-CSI
    limit ``gamma = beta``.
    """
    beta = np.asarray(beta, dtype=float)
    snr = tau_pu * np.asarray(rho_u, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(snr), beta, snr * beta**2 / (1.0 + snr * beta))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EstimationQuality:
    gamma: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.gamma, dtype=float)


def estimation_quality(cfg: SystemConfig, profile: PathLossProfile) -> EstimationQuality:
    g = np.atleast_1d(gamma_k(as_beta_array(profile), cfg.rho_u, cfg.tau_pu))
    return EstimationQuality(gamma=tuple(float(x) for x in g))


@dataclass(frozen=True)
class OEstimationStats:
    """Per-element variances of the O-terminal estimate and its error."""

    var_hat: float
    var_tilde: float

    @property
    def beta_o(self) -> float:
        return self.var_hat + self.var_tilde


def o_estimation_stats(beta_o, rho_o, tau_po, Mp) -> OEstimationStats:
    # MMSE from the pilot correlation statistic; pilots carry payload energy per symbol
    snr = tau_po * rho_o * beta_o
    var_tilde = Mp * beta_o / (Mp + snr)
    var_hat = snr * beta_o / (Mp + snr)
    return OEstimationStats(var_hat=var_hat, var_tilde=var_tilde)
