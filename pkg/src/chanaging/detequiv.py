"""Deterministic equivalents: resolvent fixed point, its derivative, and the
closed-form large-system SINR of MRT and RZF under channel aging."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .channel_model import LargeScaleProfile, SystemConfig, aging_table, bessel_factor
from .errors import ConfigError, ConvergenceError, DegenerateError, DomainError, NumericError
from .estimation import estimate_covariance
from .precoding_mc import RateResult, ergodic_rate

__all__ = [
    "FixedPointSolution",
    "DerivativeSolution",
    "DeSinr",
    "solve_fixed_point",
    "solve_derivative",
    "phase_decay",
    "de_sinr_mrt",
    "de_sinr_mrt_iid",
    "power_scaled_sinr_mrt",
    "de_sinr_rzf",
    "de_sinr_rzf_equal",
    "closed_form_delta",
    "de_gammas",
    "de_rate",
]

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
# tolerance used when a fixed point feeds a SINR evaluation
SINR_TOL = 1e-13


@dataclass(frozen=True)
class FixedPointSolution:
    """Converged ``T(rho)`` and ``e(rho)``.

    ``T`` is the length-M diagonal when every input was diagonal
    (``diagonal=True``), otherwise a dense M x M matrix. ``residuals`` holds
    the residual of every iteration.
    """

    T: np.ndarray
    e: np.ndarray
    iterations: int
    residual: float
    rho: float
    S: np.ndarray
    diagonal: bool
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def M(self) -> int:
        return self.T.shape[0]

    def matrix(self) -> np.ndarray:
        return np.diag(self.T) if self.diagonal else self.T


@dataclass(frozen=True)
class DerivativeSolution:
    """``T'(rho)`` for one perturbation matrix and the vector ``e'(rho)``."""

    T_prime: np.ndarray
    e_prime: np.ndarray
    diagonal: bool

    def matrix(self) -> np.ndarray:
        return np.diag(self.T_prime) if self.diagonal else self.T_prime


@dataclass(frozen=True)
class DeSinr:
    """Deterministic-equivalent SINR of every user at one slot.

    ``components`` carries the ingredients (``delta``, ``delta_p``,
    ``delta_pp``, ``Q``, ``lam_bar``, ``decay`` and the denominator terms).
    """

    gamma_bar: np.ndarray
    kind: str
    n: int
    components: Dict[str, np.ndarray] = field(default_factory=dict)


def _as_covariance_set(R_set, M=None):
    """Return (array, diagonal) with shape (K, M) or (K, M, M)."""
    if isinstance(R_set, np.ndarray):
        arr = R_set
    else:
        items = [np.asarray(r) for r in R_set]
        if not items:
            if M is None:
                raise DomainError("cannot infer M from an empty covariance set; pass S with shape")
            return np.zeros((0, M)), True
        if all(r.ndim == 1 for r in items):
            arr = np.stack(items)
        else:
            arr = np.stack([np.diag(r) if r.ndim == 1 else r for r in items])
    if arr.ndim == 2:
        return arr.astype(float), True
    if arr.ndim == 3:
        return arr, False
    raise DomainError("covariance set must have shape (K, M) or (K, M, M)")


def _infer_M(R, S):
    if R.shape[1]:
        return R.shape[1]
    S = np.asarray(S)
    if S.ndim >= 1:
        return S.shape[0]
    raise DomainError("cannot infer M: empty covariance set and scalar S")


def _as_operator(X, M, diagonal):
    """Scalar, diagonal vector or matrix to the representation in use."""
    X = np.asarray(X)
    if X.ndim == 0:
        return np.full(M, float(X)) if diagonal else float(X) * np.eye(M)
    if X.ndim == 1:
        return X.astype(float) if diagonal else np.diag(X)
    if diagonal:
        raise DomainError("dense operator passed to the diagonal path")
    return X


def _is_diag_operator(X):
    X = np.asarray(X)
    if X.ndim < 2:
        return True
    return np.count_nonzero(X - np.diag(np.diagonal(X))) == 0


def _relative_residual(new, old):
    if new.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old) / np.maximum(1.0, np.abs(new))))


def solve_fixed_point(R_set, S=0.0, rho: float = 1.0, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> FixedPointSolution:
    """Solve ``e_k = (1/M) tr R_k T`` with
    ``T = ((1/M) sum_j R_j / (1 + e_j) + S + rho I)^{-1}``.

    Parameters
    ----------
    R_set : array_like
        Covariances, shape (K, M) for diagonals or (K, M, M) dense, or a
        sequence of either.
    S : float, ndarray
        Hermitian nonnegative matrix (scalar, diagonal or dense).
    rho : float
        Positive regularization.
    tol : float
        Stop when ``max_k |e_k^(t) - e_k^(t-1)| / max(1, |e_k^(t)|) < tol``.
    max_iter : int

    Returns
    -------
    FixedPointSolution

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    if not rho > 0:
        raise DomainError("rho must be > 0")
    if not tol > 0:
        raise DomainError("tol must be > 0")
    R, diag_R = _as_covariance_set(R_set, M=np.asarray(S).shape[0] if np.ndim(S) else None)
    M = _infer_M(R, S)
    diagonal = diag_R and _is_diag_operator(S)
    if not diagonal and diag_R:
        R = np.stack([np.diag(r) for r in R]) if R.shape[0] else np.zeros((0, M, M))
    S_op = np.diagonal(np.asarray(S)).astype(float) if (diagonal and np.ndim(S) == 2) else _as_operator(S, M, diagonal)
    K = R.shape[0]
    e = np.full(K, 1.0 / rho)
    history = []

    if diagonal:
        def resolvent(e):
            return 1.0 / (R.T @ (1.0 / (1.0 + e)) / M + S_op + rho)

        def update(T):
            return R @ T / M
    else:
        eye = np.eye(M)

        def resolvent(e):
            Q = np.einsum("k,kab->ab", 1.0 / (1.0 + e), R) / M + S_op + rho * eye
            Q = 0.5 * (Q + Q.conj().T)
            return np.linalg.solve(Q, eye)

        def update(T):
            return np.einsum("kab,ba->k", R, T).real / M

    if K == 0:
        T = resolvent(e)
        return FixedPointSolution(T, e, 0, 0.0, rho, S_op, diagonal, np.empty(0))
    residual = np.inf
    for it in range(1, max_iter + 1):
        T = resolvent(e)
        e_new = update(T)
        residual = _relative_residual(e_new, e)
        history.append(residual)
        e = e_new
        if residual < tol:
            break
    else:
        raise ConvergenceError(f"fixed point did not converge in {max_iter} iterations "
                               f"(residual {residual:.3e})", residual=residual, iterations=max_iter)
    T = resolvent(e)
    return FixedPointSolution(T, e, it, residual, rho, S_op, diagonal, np.array(history))


def _derivative_batch(base: FixedPointSolution, K_mats, R):
    """Derivatives for several perturbations at once.

    ``K_mats`` has shape (P, M) on the diagonal path and (P, M, M) otherwise.
    Returns ``(T_prime, e_prime)`` with leading axis P.
    """
    T, e = base.T, base.e
    M = base.M
    K = e.shape[0]
    w = 1.0 / (1.0 + e) ** 2
    if base.diagonal:
        RT = R * T
        J = (RT @ RT.T) / M * (w[None, :] / M)
        v = (K_mats * T * T) @ R.T / M
    else:
        RT = np.einsum("kab,bc->kac", R, T)
        J = np.einsum("kab,lba->kl", RT, RT).real / M * (w[None, :] / M)
        TKT = np.einsum("ab,pbc,cd->pad", T, K_mats, T)
        v = np.einsum("kab,pba->pk", R, TKT).real / M
    if K:
        radius = np.max(np.abs(np.linalg.eigvals(J)))
        if radius >= 1.0:
            raise NumericError(f"spectral radius of J is {radius:.6f} >= 1")
        IJ = np.eye(K) - J
        if np.linalg.cond(IJ) > 1e12:
            raise NumericError("I - J is numerically singular")
        e_prime = np.linalg.solve(IJ, v.T).T
    else:
        e_prime = np.zeros((K_mats.shape[0], 0))
    coeff = e_prime * (w / M)[None, :]
    if base.diagonal:
        T_prime = T * K_mats * T + (T * T)[None, :] * (coeff @ R)
    else:
        mid = np.einsum("pk,kab->pab", coeff, R)
        T_prime = TKT + np.einsum("ab,pbc,cd->pad", T, mid, T)
    return T_prime, e_prime


def solve_derivative(base: FixedPointSolution, K_mat, R_set) -> DerivativeSolution:
    """``T'(rho)`` for the perturbation ``K_mat``.

    ``e' = (I - J)^{-1} v`` with
    ``J_kl = (1/M) tr(R_k T R_l T) / (M (1 + e_l)^2)`` and
    ``v_k = (1/M) tr(R_k T K T)``, then
    ``T' = T K T + T ((1/M) sum_k R_k e'_k / (1 + e_k)^2) T``.
    With ``K_mat = I`` this is ``-dT/drho``.
    """
    R, diag_R = _as_covariance_set(R_set, M=base.M)
    if not base.diagonal and diag_R:
        R = np.stack([np.diag(r) for r in R]) if R.shape[0] else np.zeros((0, base.M, base.M))
    if base.diagonal and not _is_diag_operator(K_mat):
        dense = FixedPointSolution(np.diag(base.T), base.e, base.iterations, base.residual,
                                   base.rho, np.diag(base.S), False, base.residuals)
        return solve_derivative(dense, K_mat, np.stack([np.diag(r) for r in R]) if R.shape[0] else np.zeros((0, base.M, base.M)))
    if base.diagonal:
        Kd = np.diagonal(np.asarray(K_mat)) if np.ndim(K_mat) == 2 else _as_operator(K_mat, base.M, True)
    else:
        Kd = _as_operator(K_mat, base.M, False)
    T_prime, e_prime = _derivative_batch(base, Kd[None], R)
    return DerivativeSolution(T_prime[0], e_prime[0], base.diagonal)


def phase_decay(cfg: SystemConfig, n: int) -> np.ndarray:
    """Per-user factor ``exp(-2 (sigma_varphi_k^2 + sigma_phi^2) n)``.

    ``sigma_phi^2`` is the mean of the per-antenna variances, which covers
    non-identical separate oscillators.
    """
    return np.exp(-2.0 * (cfg.sigma_varphi2 + float(np.mean(cfg.sigma_phi2))) * n)


def _check_profile(cfg: SystemConfig, profile: LargeScaleProfile):
    if profile.K != cfg.K:
        raise ConfigError(f"profile has {profile.K} users, config has K={cfg.K}")
    if profile.M != cfg.M:
        raise ConfigError(f"profile has M={profile.M}, config has M={cfg.M}")


def _aged_covariances(cfg: SystemConfig, profile: LargeScaleProfile, n: int):
    if n < 0:
        raise DomainError("slot index n must be >= 0")
    _check_profile(cfg, profile)
    R = np.asarray(profile.r_diag, dtype=float)
    D = np.stack([estimate_covariance(r, cfg) for r in R])
    A = aging_table(n, cfg)
    return R, D, A * A * D


def _safe_ratio(num, den):
    out = np.zeros_like(num, dtype=float)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    return out


def de_sinr_mrt(cfg: SystemConfig, profile: LargeScaleProfile, n: int,
                gain_fluctuation: bool = False) -> DeSinr:
    """Deterministic-equivalent SINR with MRT precoding.

    ``gamma_k = c_k delta_k^2 / (delta'_k / M + sigma_k^2 / (p_d lam M)
    + sum_{i != k} delta''_ki / M)`` with ``delta_k = tr(A^2 D_k)/M``,
    ``delta'_k = tr(A^2 D_k (R_k - A^2 D_k))/M``,
    ``delta''_ki = tr(A^2 D_i R_k)/M`` and ``lam = 1/mean_i delta_i``.

    Parameters
    ----------
    gain_fluctuation : bool
        Add ``tr((A^2 D_k)^2) / M^2``, the fluctuation of the estimated
        desired gain, to the denominator. Off by default.
    """
    R, D, Phi = _aged_covariances(cfg, profile, n)
    M = cfg.M
    delta = Phi.sum(axis=1) / M
    delta_p = (Phi * (R - Phi)).sum(axis=1) / M
    delta_pp = R @ Phi.T / M  # [k, i] = tr(Phi_i R_k) / M
    mean_delta = float(np.mean(delta))
    if mean_delta <= 0:
        raise DegenerateError("all precoder gains vanish; lambda-bar undefined")
    lam_bar = 1.0 / mean_delta
    decay = phase_decay(cfg, n)
    noise = cfg.sigma_k2 / (cfg.p_d * lam_bar * M)
    interference = (delta_pp.sum(axis=1) - np.diagonal(delta_pp)) / M
    fluct = (Phi * Phi).sum(axis=1) / M / M if gain_fluctuation else np.zeros(cfg.K)
    den = delta_p / M + noise + interference + fluct
    gamma = _safe_ratio(decay * delta**2, den)
    comps = dict(delta=delta, delta_p=delta_p, delta_pp=delta_pp, lam_bar=lam_bar, decay=decay,
                 noise_term=noise, interference_term=interference, fluctuation_term=fluct)
    return DeSinr(gamma, "mrt", n, comps)


def _require_scalar_aging(cfg: SystemConfig, what: str):
    if cfg.oscillator_mode == "SLO_distinct":
        raise ConfigError(f"{what} needs CLO or SLO_identical oscillators")


def de_sinr_mrt_iid(cfg: SystemConfig, n: int) -> DeSinr:
    """MRT DE for ``R_k = I`` and a scalar aging factor.

    ``gamma = c_k alpha^2 d / ((1 - alpha^2 d)/M + sigma_k^2/(p_d M) + (K-1)/M)``
    with ``d = tau p_u / (tau p_u + sigma_b^2)``.
    """
    _require_scalar_aging(cfg, "de_sinr_mrt_iid")
    if n < 0:
        raise DomainError("slot index n must be >= 0")
    M, K = cfg.M, cfg.K
    d = cfg.p_p / (cfg.p_p + cfg.sigma_b2)
    alpha = aging_table(n, cfg)[:, 0]
    a2d = alpha**2 * d
    decay = phase_decay(cfg, n)
    den = (1.0 - a2d) / M + cfg.sigma_k2 / (cfg.p_d * M) + (K - 1) / M
    gamma = decay * a2d / den
    return DeSinr(gamma, "mrt", n, dict(alpha=alpha, d=np.float64(d), decay=decay))


def power_scaled_sinr_mrt(cfg: SystemConfig, q: float, E_u: float, E_d: float, n: int, M: int,
                          k: int = 0, r_mm: float = 1.0) -> float:
    """MRT SINR when both powers scale as ``E / M^q`` (low-SNR regime).

    ``gamma = tau E_d E_u / (sigma^4 M^{2q-1}) J0^2(2 pi fD_Ts n)
    exp(-3 (sigma_varphi_k^2 + sigma_phi^2) n) [R_k^2]_mm`` with
    ``sigma^4 = sigma_b^2 sigma_k^2``. At ``q = 1/2`` the value does not
    depend on ``M``.
    """
    if q <= 0:
        raise DomainError("q must be > 0")
    _require_scalar_aging(cfg, "power_scaled_sinr_mrt")
    sigma4 = cfg.sigma_b2 * float(cfg.sigma_k2[k])
    if sigma4 <= 0:
        raise DomainError("noise variances must be > 0")
    j0 = float(bessel_factor(n, cfg.fD_Ts))
    s2 = float(cfg.sigma_varphi2[k]) + float(np.mean(cfg.sigma_phi2))
    return (cfg.tau * E_d * E_u / (sigma4 * float(M) ** (2.0 * q - 1.0))
            * j0 * j0 * np.exp(-3.0 * s2 * n) * r_mm * r_mm)


def _rzf_regularizer(cfg: SystemConfig):
    z = cfg.z_scalar
    if z is not None:
        return z / cfg.M
    return np.asarray(cfg.rzf_Z) / cfg.M


def de_sinr_rzf(cfg: SystemConfig, profile: LargeScaleProfile, n: int,
                gain_fluctuation: bool = False, tol: float = SINR_TOL) -> DeSinr:
    """Deterministic-equivalent SINR with RZF precoding.

    One fixed point with ``R_k <- A^2 D_k``, ``S = Z/M``, ``rho = a`` gives
    ``T`` and ``delta = e``; derivative solves with ``K = I`` (C),
    ``R_k - A^2 D_k`` (C'), ``A^2 D_i`` (C'') and ``R_k`` (C''') give the
    remaining terms, assembled as
    ``gamma_k = c_k delta_k^2 / (delta'_k/M + sigma_k^2 (1+delta_k)^2/(p_d lam)
    + sum_{i != k} Q_ik (1+delta_k)^2 / (M (1+delta_i)^2))``.

    ``lam`` is evaluated as ``K M / sum_k [tr(A^2 D_k C)/M / (1+delta_k)^2]``,
    algebraically equal to ``K / (tr T/M - tr((Z/M + aI) C)/M)`` (also
    returned as ``lam_bar_trace_form``) but free of cancellation when
    ``a`` is small.

    Parameters
    ----------
    gain_fluctuation : bool
        Add ``delta''_kk / (M (1+delta_k)^2)``, the fluctuation of the
        estimated desired gain, to the denominator. Off by default.
    tol : float
        Relative tolerance of the fixed point.
    """
    R, D, Phi = _aged_covariances(cfg, profile, n)
    M, K = cfg.M, cfg.K
    a = cfg.rzf_alpha
    S = _rzf_regularizer(cfg)
    base = solve_fixed_point(Phi, S, a, tol=tol)
    delta = base.e
    ones = np.ones((1, M))
    Kd = np.concatenate([ones, R - Phi, Phi, R], axis=0)
    if base.diagonal:
        Tp, _ = _derivative_batch(base, Kd, Phi)
        diagTp = Tp
        trace_SC = float(np.sum((base.S + a) * Tp[0])) / M
        trT = float(np.sum(base.T)) / M
    else:
        Rd = np.stack([np.diag(r) for r in Phi])
        Tp, _ = _derivative_batch(base, np.stack([np.diag(x) for x in Kd]), Rd)
        diagTp = np.diagonal(Tp, axis1=1, axis2=2).real
        trace_SC = float(np.trace((base.S + a * np.eye(M)) @ Tp[0]).real) / M
        trT = float(np.trace(base.T).real) / M
    C = diagTp[0]
    Cp = diagTp[1:K + 1]
    Cpp = diagTp[K + 1:2 * K + 1]
    Cppp = diagTp[2 * K + 1:]
    delta_p = (Phi * Cp).sum(axis=1) / M
    delta_pp = Phi @ Cpp.T / M       # [k, i] = tr(Phi_k C''_i) / M
    t_ppp = Cppp @ Phi.T / M         # [k, i] = tr(Phi_i C'''_k) / M
    dk = delta[:, None]
    Q = t_ppp + dk**2 * delta_pp / (1.0 + dk) ** 2 - 2.0 * dk * delta_pp / (1.0 + dk)
    gain_sum = float(np.sum((Phi * C).sum(axis=1) / M / (1.0 + delta) ** 2))
    if gain_sum <= 0:
        raise DegenerateError("all precoder gains vanish; lambda-bar undefined")
    lam_bar = K * M / gain_sum
    gap = trT - trace_SC
    lam_trace = K / gap if gap > 0 else float("nan")
    decay = phase_decay(cfg, n)
    noise = cfg.sigma_k2 * (1.0 + delta) ** 2 / (cfg.p_d * lam_bar)
    weight = (1.0 + dk) ** 2 / (M * (1.0 + delta[None, :]) ** 2)
    inter_terms = Q * weight
    interference = inter_terms.sum(axis=1) - np.diagonal(inter_terms)
    fluct = np.diagonal(delta_pp) / (M * (1.0 + delta) ** 2) if gain_fluctuation else np.zeros(K)
    den = delta_p / M + noise + interference + fluct
    gamma = _safe_ratio(decay * delta**2, den)
    comps = dict(delta=delta, delta_p=delta_p, delta_pp=delta_pp, Q=Q, lam_bar=lam_bar,
                 lam_bar_trace_form=lam_trace, decay=decay, noise_term=noise,
                 interference_term=interference, fluctuation_term=fluct,
                 iterations=base.iterations)
    return DeSinr(gamma, "rzf", n, comps)


def closed_form_delta(phi: float, K: int, M: int, a: float, z: float = 0.0) -> float:
    """Positive root for ``R = I`` and scalar aging, ``phi = alpha^2 d``.

    With ``B = M/K`` and ``c = a + z/M`` the fixed point
    ``delta = phi / (phi/(B(1+delta)) + c)`` is the positive root of
    ``B c delta^2 + (phi (1-B) + B c) delta - B phi = 0``:
    ``delta = (sqrt(4 phi B^2 c + (phi (1-B) + B c)^2) + phi (B-1) - B c) / (2 B c)``.
    """
    B = M / K
    c = a + z / M
    if c <= 0:
        raise DomainError("a + z/M must be > 0")
    if phi == 0:
        return 0.0
    x = phi * (1.0 - B) + B * c
    root = np.sqrt(x * x + 4.0 * phi * B * B * c)
    if x >= 0:
        return float(2.0 * B * phi / (x + root))
    return float((root - x) / (2.0 * B * c))


def de_sinr_rzf_equal(cfg: SystemConfig, n: int, r=1.0, tol: float = SINR_TOL) -> DeSinr:
    """RZF DE when all users share one covariance ``R`` (diagonal).

    Uses the single-delta closed forms
    ``T = (A^2 D / (B (1+delta)) + Z/M + a I)^{-1}`` with ``B = M/K`` and
    ``T'_K = T K T + e'_K / (B (1+delta)^2) T A^2 D T``,
    ``e'_K = B (1+delta)^2 e_111 / (B - e_201)``. When ``A^2 D`` is a
    multiple of the identity, ``delta`` comes from
    :func:`closed_form_delta`; otherwise from a scalar fixed point.

    Parameters
    ----------
    r : float or ndarray, shape (M,)
        Common covariance diagonal (``1`` gives ``R = I``).
    tol : float
        Relative tolerance of the scalar fixed point.
    """
    if n < 0:
        raise DomainError("slot index n must be >= 0")
    if np.ptp(cfg.sigma_varphi2) != 0:
        raise ConfigError("equal-covariance DE needs identical user phase-noise variances")
    z = cfg.z_scalar
    if z is None:
        raise ConfigError("equal-covariance DE supports Z = z I only")
    M, K = cfg.M, cfg.K
    B = M / K
    a = cfg.rzf_alpha
    r = np.broadcast_to(np.asarray(r, dtype=float), (M,)).copy()
    D = estimate_covariance(r, cfg)
    A = aging_table(n, cfg)[0]
    Phi = A * A * D
    c = a + z / M
    if np.ptp(Phi) == 0:
        delta = closed_form_delta(float(Phi[0]), K, M, a, z)
    else:
        delta = 1.0 / a
        for it in range(1, DEFAULT_MAX_ITER + 1):
            new = float(np.sum(Phi / (Phi / (B * (1.0 + delta)) + c))) / M
            res = abs(new - delta) / max(1.0, abs(new))
            delta = new
            if res < tol:
                break
        else:
            raise ConvergenceError("scalar fixed point did not converge", residual=res,
                                   iterations=DEFAULT_MAX_ITER)
    T = 1.0 / (Phi / (B * (1.0 + delta)) + c)
    g = (1.0 + delta) ** 2
    e201 = float(np.sum(Phi * Phi * T * T)) / M / g

    def t_prime(Kd):
        e111 = float(np.sum(Phi * T * Kd * T)) / M / g
        e_prime = B * g * e111 / (B - e201)
        return T * Kd * T + e_prime / (B * g) * T * Phi * T

    C = t_prime(np.ones(M))
    Cp = t_prime(r - Phi)
    Cpp = t_prime(Phi)
    delta_p = float(np.sum(Phi * Cp)) / M
    delta_pp = float(np.sum(Phi * Cpp)) / M
    Q = float(np.sum(r * Cpp)) / M + delta**2 * delta_pp / g - 2.0 * delta * delta_pp / (1.0 + delta)
    gain = float(np.sum(Phi * C)) / M
    if gain <= 0:
        raise DegenerateError("precoder gain vanishes; lambda-bar undefined")
    lam_bar = M * g / gain
    decay = phase_decay(cfg, n)
    noise = cfg.sigma_k2 * g / (cfg.p_d * lam_bar)
    den = delta_p / M + noise + (K - 1) * Q / M
    gamma = _safe_ratio(np.full(K, decay * delta**2) if np.ndim(decay) == 0 else decay * delta**2, den)
    comps = dict(delta=np.float64(delta), delta_p=np.float64(delta_p), delta_pp=np.float64(delta_pp),
                 Q=np.float64(Q), lam_bar=lam_bar, decay=decay, noise_term=noise)
    return DeSinr(gamma, "rzf", n, comps)


def de_gammas(cfg: SystemConfig, profile: LargeScaleProfile, kind: str,
              slots: Optional[Sequence[int]] = None, gain_fluctuation: bool = False) -> np.ndarray:
    """Per-slot DE SINR, shape (n_slots, K); slots default to ``1..T_c - tau``."""
    if slots is None:
        slots = range(1, cfg.n_data + 1)
    if kind == "mrt":
        fn = de_sinr_mrt
    elif kind == "rzf":
        fn = de_sinr_rzf
    else:
        raise ConfigError(f"unknown precoder kind {kind!r}")
    return np.stack([fn(cfg, profile, int(n), gain_fluctuation).gamma_bar for n in slots])


def de_rate(cfg: SystemConfig, profile: LargeScaleProfile, kind: str,
            gammas: Optional[np.ndarray] = None) -> RateResult:
    """Deterministic rate ``(1/T_c) sum_n log2(1 + gamma_bar_{k,n})``."""
    if gammas is None:
        gammas = de_gammas(cfg, profile, kind)
    return ergodic_rate(gammas, cfg.T_c, cfg.tau)
