"""Uplink training and the joint channel / phase-noise LMMSE estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_model import SystemConfig, crandn
from .errors import ConfigError, DomainError

__all__ = [
    "PilotObservation",
    "ChannelEstimate",
    "pilot_observe",
    "lmmse_estimate",
    "estimate_covariance",
    "estimator_gain",
    "multicell_estimator_gain",
]


@dataclass(frozen=True)
class PilotObservation:
    """De-spread pilot observation ``y = g0 + z / sqrt(p_p)``.

    ``y_tilde`` has the shape of the effective channels passed to
    :func:`pilot_observe` (users along the last axis for matrices).
    """

    y_tilde: np.ndarray
    p_p: float


@dataclass(frozen=True)
class ChannelEstimate:
    """LMMSE estimate ``g_hat`` and its covariance ``D``.

    ``support_restricted`` is set when ``R_k`` was singular and the estimate
    was confined to its support.
    """

    g_hat: np.ndarray
    D: np.ndarray
    support_restricted: bool = False


def pilot_observe(g0, cfg: SystemConfig, rng: np.random.Generator) -> PilotObservation:
    """Observation after correlating with orthogonal pilots.

    Orthogonal pilots of length ``tau`` decouple the users, so the per-user
    observation is ``g0 + z / sqrt(p_p)`` with ``z ~ CN(0, sigma_b2 I)``.
    """
    p_p = cfg.p_p
    if p_p <= 0:
        raise ConfigError("pilot power tau * p_u must be > 0")
    g0 = np.asarray(g0)
    noise = np.sqrt(cfg.sigma_b2 / p_p) * crandn(rng, g0.shape)
    return PilotObservation(y_tilde=g0 + noise, p_p=p_p)


def estimator_gain(r_diag, s):
    """Diagonal of ``(I + s R^{-1})^{-1}``, zero where ``R`` is zero.

    Parameters
    ----------
    r_diag : array_like
        Diagonal covariance entries.
    s : float
        Ratio ``sigma_b2 / p_p``.
    """
    r = np.asarray(r_diag, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] / (r[pos] + s)
    return out


def multicell_estimator_gain(r_links, own: int, s: float, mode: str = "as_written"):
    """Per-antenna estimator gain of a BS facing pilot reuse.

    Parameters
    ----------
    r_links : array_like, shape (L, ...)
        Covariance diagonals from the BS to every co-pilot user; index
        ``own`` is the served user.
    own : int
        Index of the served user's cell.
    s : float
        ``sigma_b2 / p_p``.
    mode : {"as_written", "standard"}
        ``as_written`` applies ``(I + s sum_l R_l^{-1})^{-1}``; zero-gain
        links carry no observation and are left out of the sum.
        ``standard`` applies ``R_own (sum_l R_l + s I)^{-1}``.
    """
    r = np.asarray(r_links, dtype=float)
    if mode == "as_written":
        inv = np.zeros_like(r)
        pos = r > 0
        with np.errstate(over="ignore"):
            inv[pos] = 1.0 / r[pos]
        out = 1.0 / (1.0 + s * inv.sum(axis=0))
        return np.where(r[own] > 0, out, 0.0)
    if mode == "standard":
        total = r.sum(axis=0) + s
        out = np.zeros_like(total)
        pos = total > 0
        out[pos] = r[own][pos] / total[pos]
        return out
    raise ConfigError(f"unknown estimator mode {mode!r}")


def estimate_covariance(R_k, cfg: SystemConfig) -> np.ndarray:
    """``D_k = (I + (sigma_b2/p_p) R_k^{-1})^{-1} R_k``.

    A diagonal input (shape (M,)) returns the diagonal ``r^2 / (r + s)``.
    """
    s = cfg.sigma_b2 / cfg.p_p
    R_k = np.asarray(R_k)
    if R_k.ndim == 1:
        return estimator_gain(R_k, s) * R_k
    M = R_k.shape[0]
    return R_k @ np.linalg.solve(R_k + s * np.eye(M), R_k)


def lmmse_estimate(obs: PilotObservation, R_k, cfg: SystemConfig) -> ChannelEstimate:
    """Joint LMMSE estimate ``(I + (sigma_b2/p_p) R_k^{-1})^{-1} y``.

    ``R_k`` may be a diagonal (shape (M,)) or a full matrix. Singular
    covariances are handled through the equivalent form
    ``R_k (R_k + s I)^{-1}``, which vanishes on the null space of ``R_k``.
    Leading batch dimensions of ``obs.y_tilde`` are allowed.
    """
    if obs.p_p <= 0:
        raise DomainError("pilot power must be > 0")
    s = cfg.sigma_b2 / obs.p_p
    y = np.asarray(obs.y_tilde)
    R_k = np.asarray(R_k)
    if R_k.ndim == 1:
        gain = estimator_gain(R_k, s)
        restricted = bool(np.any(R_k <= 0))
        return ChannelEstimate(g_hat=gain * y, D=gain * R_k, support_restricted=restricted)
    M = R_k.shape[0]
    w, V = np.linalg.eigh(R_k)
    w = np.clip(w, 0.0, None)
    restricted = bool(np.any(w <= 1e-12 * max(1.0, w.max())))
    gain = np.zeros_like(w)
    pos = w > 0
    gain[pos] = w[pos] / (w[pos] + s)
    W = (V * gain) @ V.conj().T
    g_hat = y @ W.T
    D = W @ R_k
    D = 0.5 * (D + D.conj().T)
    return ChannelEstimate(g_hat=g_hat, D=D, support_restricted=restricted)
