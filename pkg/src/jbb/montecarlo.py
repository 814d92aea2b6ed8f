"""Monte Carlo oracle for the closed forms.

Draws Rayleigh channels, forms MMSE estimates from orthogonal uplink
pilots, builds MR/ZF precoders and a random orthonormal basis of the
estimated-channel nullspace, and measures every variance and rate the
closed forms predict.

Draws are split into fixed-size blocks. Block ``i`` always uses the
``i``-th child of ``SeedSequence(seed)`` on a Philox generator, and block
results are merged in block order with exactly rounded sums, so the
statistics are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import closedform
from .estimation import gamma_k
from .model import OperatingPoint, PathLossProfile, Precoder, Scheme, SystemConfig, as_beta_array

BLOCK_SIZE = 2000
COND_LIMIT = 1e12


class SingularChannelError(np.linalg.LinAlgError):
    pass


class DimensionError(ValueError):
    pass


def complex_normal(rng: np.random.Generator, shape, var=1.0):
    """CN(0, var) samples: independent real and imaginary parts of variance var/2."""
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * scale


def _phase_fix(Q, R):
    d = np.diagonal(R, axis1=-2, axis2=-1)
    mag = np.abs(d)
    ph = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    return Q * ph[..., None, :]


def haar_unitary(n: int, rng: np.random.Generator, cols: int | None = None) -> np.ndarray:
    """Isotropically distributed n x n unitary (or its first ``cols`` columns).

    QR of a complex Gaussian matrix with the diagonal of R rotated to the
    positive reals; the first columns of a Haar unitary are distributed
    like the QR factor of a Gaussian matrix with that many columns.
    """
    Q, R = np.linalg.qr(complex_normal(rng, (n, n if cols is None else cols)))
    return _phase_fix(Q, R)


def pilot_matrix(tau_po: int, Mp: int) -> np.ndarray:
    """Downlink O-pilots: row t is q_p(t); columns are DFT columns / sqrt(Mp).

    Satisfies sum_t q_p(t) q_p(t)^H = (tau_po / Mp) I.
    """
    if tau_po < Mp:
        raise DimensionError(f"need tau_po >= Mp for orthogonal pilots, got {tau_po} < {Mp}")
    t = np.arange(tau_po)[:, None]
    n = np.arange(Mp)[None, :]
    return np.exp(-2j * np.pi * t * n / tau_po) / np.sqrt(Mp)


# ---------------------------------------------------------------------------
# single-realization API


@dataclass(frozen=True)
class ChannelRealization:
    G: np.ndarray
    G_hat: np.ndarray
    gamma: np.ndarray

    @property
    def G_tilde(self) -> np.ndarray:
        # estimation error, G_hat = G + G_tilde
        return self.G_hat - self.G


@dataclass(frozen=True)
class PrecoderSet:
    V: np.ndarray
    precoder: Precoder


@dataclass(frozen=True)
class NullBasis:
    U: np.ndarray


def draw_channels(M, beta, rho_u, tau_pu, rng, size=None, perfect_csi=False):
    """True channels and their MMSE estimates, shape ``(size, M, K)``.

    The estimate comes from a simulated pilot observation
    ``sqrt(tau_pu * rho_u) * g_k + n_k`` after despreading an orthogonal
    pilot, followed by the scalar per-element MMSE filter.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    shape = (M, beta.size) if size is None else (size, M, beta.size)
    G = complex_normal(rng, shape) * np.sqrt(beta)
    if perfect_csi:
        return G, G.copy()
    snr = tau_pu * rho_u
    y = np.sqrt(snr) * G + complex_normal(rng, shape)
    G_hat = (np.sqrt(snr) * beta / (1.0 + snr * beta)) * y
    return G, G_hat


def draw_realization(cfg: SystemConfig, profile: PathLossProfile, rng, perfect_csi=False) -> ChannelRealization:
    beta = as_beta_array(profile)
    G, G_hat = draw_channels(cfg.M, beta, cfg.rho_u, cfg.tau_pu, rng, perfect_csi=perfect_csi)
    gamma = beta.copy() if perfect_csi else np.atleast_1d(gamma_k(beta, cfg.rho_u, cfg.tau_pu))
    return ChannelRealization(G=G, G_hat=G_hat, gamma=gamma)


def precoder_matrix(G_hat, gamma, eta, precoder: Precoder):
    """Beamforming vectors as columns; works on single or stacked estimates."""
    M, K = G_hat.shape[-2:]
    gamma = np.asarray(gamma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if Precoder(precoder) is Precoder.MR:
        return G_hat * np.sqrt(eta / (M * gamma))
    GH = np.conj(np.swapaxes(G_hat, -1, -2))
    try:
        W = np.swapaxes(np.linalg.solve(GH @ G_hat, GH), -1, -2).conj()
    except np.linalg.LinAlgError as exc:
        raise SingularChannelError("estimated channel matrix is rank deficient") from exc
    # (G^H G)^{-1} is Hermitian, so conj(((G^H G)^{-1} G^H)^T) = G (G^H G)^{-1}
    return W * np.sqrt(eta * gamma * (M - K))


def build_precoders(real: ChannelRealization, eta, precoder: Precoder) -> PrecoderSet:
    eta = eta.as_array() if hasattr(eta, "as_array") else np.asarray(eta, dtype=float)
    if Precoder(precoder) is Precoder.ZF:
        cond = np.linalg.cond(real.G_hat)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularChannelError(f"condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    return PrecoderSet(V=precoder_matrix(real.G_hat, real.gamma, eta, precoder), precoder=Precoder(precoder))


def build_null_basis(real: ChannelRealization | np.ndarray, Mp: int, rng) -> NullBasis:
    """Random M x Mp orthonormal basis inside the nullspace of G_hat^H.

    Q spans the orthogonal complement of span(G_hat) (trailing columns of
    a complete QR); U is the first Mp columns of Q @ Psi with Psi a Haar
    unitary of size M - K.
    """
    G_hat = real.G_hat if isinstance(real, ChannelRealization) else np.asarray(real)
    M, K = G_hat.shape
    if Mp > M - K:
        raise DimensionError(f"Mp={Mp} does not fit in the {M - K}-dimensional nullspace")
    if K:
        Q_full, _ = np.linalg.qr(G_hat, mode="complete")
        Q = Q_full[:, K:]
    else:
        Q = np.eye(M, dtype=complex)
    Psi = haar_unitary(M - K, rng)
    return NullBasis(U=(Q @ Psi)[:, :Mp])


def null_basis_batch(G_hat, Mp, rng):
    """Stacked null bases for estimates of shape ``(n, M, K)``.

    Projects a Gaussian M x Mp matrix onto the nullspace and orthonormalizes
    it. Since the projection is Q Q^H and Q^H Z is Gaussian, this has the
    same law as the first Mp columns of Q @ Psi, at O(M Mp) per draw.
    """
    n, M, K = G_hat.shape
    if Mp > M - K:
        raise DimensionError(f"Mp={Mp} does not fit in the {M - K}-dimensional nullspace")
    Z = complex_normal(rng, (n, M, Mp))
    if K:
        GH = np.conj(np.swapaxes(G_hat, -1, -2))
        Z = Z - G_hat @ np.linalg.solve(GH @ G_hat, GH @ Z)
    Q, R = np.linalg.qr(Z)
    return _phase_fix(Q, R)


# ---------------------------------------------------------------------------
# block engine


def _exact_sum(stack: np.ndarray):
    if np.iscomplexobj(stack):
        return _exact_sum(stack.real) + 1j * _exact_sum(stack.imag)
    flat = stack.reshape(stack.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(stack.shape[1:]) if stack.ndim > 1 else out[0]


def _run_block(kernel, n, seed_seq):
    return kernel(n, np.random.Generator(np.random.Philox(seed_seq)))


def default_threads() -> int:
    return os.cpu_count() or 1


def run_blocks(kernel, n_draws: int, seed: int, threads: int | None = None, block_size: int = BLOCK_SIZE):
    """Run ``kernel(n, rng) -> (sums, samples)`` over ``n_draws`` draws.

    Returns merged ``(sums, samples)``: sums are added with exact rounding
    in block order, samples are concatenated in block order.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    sizes = [block_size] * (n_draws // block_size)
    if n_draws % block_size:
        sizes.append(n_draws % block_size)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    threads = default_threads() if threads is None else max(int(threads), 1)
    if threads == 1 or len(sizes) == 1:
        results = [_run_block(kernel, n, s) for n, s in zip(sizes, seqs)]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(sizes))) as ex:
            results = list(ex.map(partial(_run_block, kernel), sizes, seqs))
    sums = {k: _exact_sum(np.stack([np.asarray(r[0][k]) for r in results])) for k in results[0][0]}
    samples = {k: np.concatenate([r[1][k] for r in results]) for k in results[0][1]}
    sums["n"] = float(n_draws)
    return sums, samples


def _mean_se(s1, s2, n):
    mean = s1 / n
    var = np.maximum(s2 / n - np.abs(mean) ** 2, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


# ---------------------------------------------------------------------------
# B-terminal terms


def _b_block(n, rng, *, M, beta, rho_u, tau_pu, gamma, eta, precoder, Mp, perfect_csi):
    G, G_hat = draw_channels(M, beta, rho_u, tau_pu, rng, size=n, perfect_csi=perfect_csi)
    V = precoder_matrix(G_hat, gamma, eta, precoder)
    U = null_basis_batch(G_hat, Mp, rng)
    q = complex_normal(rng, (n, Mp), 1.0 / Mp)

    GH = np.conj(np.swapaxes(G, -1, -2))
    A = GH @ V  # A[k, k'] = g_k^H v_k'
    A_hat = np.conj(np.swapaxes(G_hat, -1, -2)) @ V
    A_til = A_hat - A
    K = A.shape[-1]
    diag = np.diagonal(A, axis1=-2, axis2=-1)
    diag_hat = np.diagonal(A_hat, axis1=-2, axis2=-1)
    off = ~np.eye(K, dtype=bool)

    leak = np.abs(GH @ (U @ q[..., None]))[..., 0] ** 2
    leak_cond = np.sum(np.abs(GH @ U) ** 2, axis=-1) / Mp
    norm = np.sum(np.abs(V) ** 2, axis=(-2, -1))
    intra = np.sum(np.abs(A_hat) ** 2 * off, axis=-1)
    sums = {
        "gain": diag.sum(0),
        "gain2": (np.abs(diag) ** 2).sum(0),
        "total": (np.abs(A) ** 2).sum(-1).sum(0),
        "gain_hat": diag_hat.sum(0),
        "gain_hat2": (np.abs(diag_hat) ** 2).sum(0),
        "est": (np.abs(A_til) ** 2).sum(-1).sum(0),
        "intra": intra.sum(0),
        "intra_max": np.zeros(K),
        "leak": leak.sum(0),
        "leak2": (leak**2).sum(0),
        "leak_cond": leak_cond.sum(0),
        "norm": norm.sum(),
        "norm2": (norm**2).sum(),
    }
    return sums, {"intra_max": intra.max(0, keepdims=True), "leak_max": leak.max(0, keepdims=True)}


@dataclass(frozen=True)
class BTermStats:
    """Empirical B-terminal terms, one entry per terminal.

    ``fluctuation`` is Var(g_hat_k^H v_k), ``est_error`` is
    E sum_k' |g_tilde_k^H v_k'|^2, ``intra`` is E sum_{k' != k}
    |g_hat_k^H v_k'|^2 and ``leakage`` is the broadcast power reaching the
    terminal (already scaled by rho_o). ``sinr`` is the hardening-bound
    SINR built from these empirical moments.
    """

    n: int
    rho_b_eff: float
    rho_o: float
    eta: np.ndarray
    gamma: np.ndarray
    signal_gain: np.ndarray
    fluctuation: np.ndarray
    est_error: np.ndarray
    intra: np.ndarray
    intra_max: np.ndarray
    interference: np.ndarray
    leakage: np.ndarray
    leakage_se: np.ndarray
    leakage_max: np.ndarray
    norm: float
    norm_se: float
    sinr: np.ndarray


def measure_b_terms(
    cfg: SystemConfig,
    profile: PathLossProfile,
    op: OperatingPoint,
    precoder: Precoder,
    n_draws: int,
    seed: int,
    threads: int | None = 1,
    perfect_csi: bool = False,
) -> BTermStats:
    beta = as_beta_array(profile)
    gamma = beta.copy() if perfect_csi else np.atleast_1d(gamma_k(beta, cfg.rho_u, cfg.tau_pu))
    rb = closedform.effective_rho_b(cfg, op.rho_b, op.scheme)
    ro = 0.0 if op.scheme is Scheme.OA else op.rho_o
    pc, _ = closedform.maxmin_control(cfg, beta, gamma, rb, ro, precoder)
    eta = pc.as_array()
    kernel = partial(
        _b_block, M=cfg.M, beta=beta, rho_u=cfg.rho_u, tau_pu=cfg.tau_pu, gamma=gamma, eta=eta,
        precoder=Precoder(precoder), Mp=cfg.Mp, perfect_csi=perfect_csi,
    )
    s, samples = run_blocks(kernel, n_draws, seed, threads)
    n = s["n"]
    gain = s["gain"] / n
    gain_hat = s["gain_hat"] / n
    leak_mean, leak_se = _mean_se(s["leak"], s["leak2"], n)
    norm_mean, norm_se = _mean_se(s["norm"], s["norm2"], n)
    interference = s["total"] / n - np.abs(gain) ** 2
    leakage = ro * leak_mean
    sinr = rb * np.abs(gain) ** 2 / (rb * interference + leakage + 1.0)
    return BTermStats(
        n=int(n),
        rho_b_eff=float(rb),
        rho_o=float(ro),
        eta=eta,
        gamma=gamma,
        signal_gain=np.abs(gain),
        fluctuation=s["gain_hat2"] / n - np.abs(gain_hat) ** 2,
        est_error=s["est"] / n,
        intra=s["intra"] / n,
        intra_max=samples["intra_max"].max(0),
        interference=interference,
        leakage=leakage,
        leakage_se=ro * leak_se,
        leakage_max=ro * samples["leak_max"].max(0),
        norm=float(norm_mean),
        norm_se=float(norm_se),
        sinr=sinr,
    )


def predicted_b_terms(cfg: SystemConfig, beta, gamma, eta, precoder: Precoder) -> dict:
    """Closed-form counterparts of the per-unit-power terms in BTermStats."""
    beta, gamma, eta = map(np.asarray, (beta, gamma, eta))
    if Precoder(precoder) is Precoder.MR:
        return {
            "signal_gain": np.sqrt(eta * cfg.M * gamma),
            "fluctuation": eta * gamma,
            "est_error": beta - gamma,
            "intra": gamma * (1.0 - eta),
        }
    return {
        "signal_gain": np.sqrt(eta * gamma * (cfg.M - cfg.K)),
        "fluctuation": np.zeros_like(beta),
        "est_error": beta - gamma,
        "intra": np.zeros_like(beta),
    }


# ---------------------------------------------------------------------------
# O-terminal


def _o_block(n, rng, *, M, beta, rho_u, tau_pu, gamma, eta, precoder, Mp, tau_po, beta_o, rho_o,
             rb_pilot, rb_payload, with_b):
    P = pilot_matrix(tau_po, Mp)
    if with_b:
        _, G_hat = draw_channels(M, beta, rho_u, tau_pu, rng, size=n)
        V = precoder_matrix(G_hat, gamma, eta, precoder)
        U = null_basis_batch(G_hat, Mp, rng)
    else:
        U = null_basis_batch(np.zeros((n, M, 0), dtype=complex), Mp, rng)
    h = complex_normal(rng, (n, M), beta_o)
    h_e = np.einsum("nmp,nm->np", np.conj(U), h)

    y = np.sqrt(rho_o) * (np.conj(h_e) @ P.T) + complex_normal(rng, (n, tau_po))
    if with_b:
        hv = np.einsum("nm,nmk->nk", np.conj(h), V)
        if rb_pilot > 0:
            s = complex_normal(rng, (n, tau_po, V.shape[-1]))
            y = y + np.sqrt(rb_pilot) * np.einsum("nk,ntk->nt", hv, s)
        interf = rb_payload * np.sum(np.abs(hv) ** 2, axis=-1)
    else:
        interf = np.zeros(n)
    y_p = np.conj(y) @ P
    h_hat = (Mp * np.sqrt(rho_o) * beta_o / (Mp + tau_po * rho_o * beta_o)) * y_p
    x = np.sum(np.abs(h_hat) ** 2, axis=-1)
    v1 = rho_o * np.sum(np.abs(h_hat - h_e) ** 2, axis=-1) / Mp
    sums = {
        "x": x.sum(), "x2": (x**2).sum(),
        "v1": v1.sum(), "v12": (v1**2).sum(),
        "i": interf.sum(), "i2": (interf**2).sum(),
        "xi": (x * interf).sum(),
    }
    return sums, {"x": x}


@dataclass(frozen=True)
class OTermStats:
    n: int
    scheme: Scheme
    rate: float
    rate_se: float
    var_hat: float
    var_hat_se: float
    v1: float
    v1_se: float
    v2: float
    v2_se: float
    slope: float
    slope_se: float


def measure_o_rate(
    cfg: SystemConfig,
    profile: PathLossProfile,
    op: OperatingPoint,
    precoder: Precoder,
    n_draws: int,
    seed: int,
    threads: int | None = 1,
) -> OTermStats:
    """Empirical ergodic O-terminal rate at ``op``.

    JBB' keeps the beamformer silent during the O-pilots; JBB lets it
    interfere with them (reported for reference only); OA has no
    beamformed transmission at all. The rate averages
    log2(1 + (rho_o/Mp)||h_hat||^2 / (V1 + V2 + 1)) with V1, V2 replaced by
    their empirical means.
    """
    scheme = Scheme(op.scheme)
    beta = as_beta_array(profile)
    with_b = scheme is not Scheme.OA and op.rho_b > 0
    gamma = np.atleast_1d(gamma_k(beta, cfg.rho_u, cfg.tau_pu))
    eta = np.ones(len(beta)) / len(beta)
    if with_b:
        rb = closedform.effective_rho_b(cfg, op.rho_b, scheme)
        eta = closedform.maxmin_control(cfg, beta, gamma, rb, op.rho_o, precoder)[0].as_array()
    rb_payload = closedform.effective_rho_b(cfg, op.rho_b, scheme) if with_b else 0.0
    rb_pilot = op.rho_b if scheme is Scheme.JBB and with_b else 0.0
    kernel = partial(
        _o_block, M=cfg.M, beta=beta, rho_u=cfg.rho_u, tau_pu=cfg.tau_pu, gamma=gamma, eta=eta,
        precoder=Precoder(precoder), Mp=cfg.Mp, tau_po=cfg.tau_po, beta_o=profile.beta_o, rho_o=op.rho_o,
        rb_pilot=rb_pilot, rb_payload=rb_payload, with_b=with_b,
    )
    s, samples = run_blocks(kernel, n_draws, seed, threads)
    n = s["n"]
    x_mean, x_se = _mean_se(s["x"], s["x2"], n)
    v1, v1_se = _mean_se(s["v1"], s["v12"], n)
    v2, v2_se = _mean_se(s["i"], s["i2"], n)
    var_x = s["x2"] / n - x_mean**2
    cov = s["xi"] / n - x_mean * v2
    var_i = s["i2"] / n - v2**2
    if var_x > 0 and var_i > 0:
        slope = cov / var_x
        resid = max(var_i - slope * cov, 0.0)
        slope_se = math.sqrt(resid / (n * var_x))
    else:
        slope, slope_se = 0.0, 0.0
    r = np.log2(1.0 + (op.rho_o / cfg.Mp) * samples["x"] / (v1 + v2 + 1.0))
    rate, rate_se = float(np.mean(r)), float(np.std(r, ddof=1) / math.sqrt(n))
    return OTermStats(
        n=int(n), scheme=scheme, rate=rate, rate_se=rate_se,
        var_hat=float(x_mean / cfg.Mp), var_hat_se=float(x_se / cfg.Mp),
        v1=float(v1), v1_se=float(v1_se), v2=float(v2), v2_se=float(v2_se),
        slope=float(slope), slope_se=float(slope_se),
    )


# ---------------------------------------------------------------------------
# scalar checks


def _psi_block(n, rng, *, Mp, alphas):
    r2 = np.sum(np.abs(complex_normal(rng, (n, Mp))) ** 2, axis=-1)
    inv = 1.0 / r2
    logs = np.log2(1.0 + np.outer(r2, alphas))
    return {"inv": inv.sum(), "inv2": (inv**2).sum(), "log": logs.sum(0), "log2": (logs**2).sum(0)}, {}


@dataclass(frozen=True)
class JensenStats:
    n: int
    inv_mean: float
    inv_se: float
    alphas: tuple
    log_mean: np.ndarray
    log_se: np.ndarray


def verify_jensen_constant(Mp: int, n_draws: int, seed: int, threads: int | None = 1,
                           alphas=(0.1, 1.0, 10.0)) -> JensenStats:
    """Sample mean of 1/||psi||^2 and of log2(1 + alpha ||psi||^2), psi ~ CN(0, I_Mp)."""
    if Mp < 2:
        raise closedform.DomainError(f"E[1/||psi||^2] is infinite for Mp < 2, got Mp={Mp}")
    kernel = partial(_psi_block, Mp=Mp, alphas=np.asarray(alphas, dtype=float))
    s, _ = run_blocks(kernel, n_draws, seed, threads, block_size=50_000)
    n = s["n"]
    inv, inv_se = _mean_se(s["inv"], s["inv2"], n)
    lm, lse = _mean_se(s["log"], s["log2"], n)
    return JensenStats(n=int(n), inv_mean=float(inv), inv_se=float(inv_se), alphas=tuple(alphas),
                       log_mean=lm, log_se=lse)
