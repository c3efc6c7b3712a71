"""Downlink precoders and the Monte-Carlo SINR / rate engine, single- and
multi-cell."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .channel_model import (
    AgingOperator,
    LargeScaleProfile,
    SystemConfig,
    _innovation_std,
    aging_table,
    crandn,
)
from .errors import ConfigError, DegenerateError, DomainError, NumericError
from .estimation import multicell_estimator_gain

__all__ = [
    "PRECODER_KINDS",
    "Precoder",
    "SinrBreakdown",
    "RateResult",
    "HexLayout",
    "mrt_precoder",
    "rzf_precoder",
    "estimate_lambda",
    "phase_drift",
    "ergodic_rate",
    "mc_sinr",
    "mc_sinr_slots",
    "mc_rate",
    "hex_layout",
    "multicell_mc_sinr",
    "multicell_mc_sumrate",
]

PRECODER_KINDS = ("mrt", "rzf")
CHUNK = 100

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class Precoder:
    """Un-normalized precoder ``F`` (M x K) and its per-realization ``lam``.

    ``lam = K / tr(F F^H)``; it is ``nan`` and ``degenerate`` is set when
    ``F`` vanishes.
    """

    F: np.ndarray
    lam: float
    kind: str

    @property
    def degenerate(self) -> bool:
        return not np.isfinite(self.lam)


@dataclass(frozen=True)
class SinrBreakdown:
    """Monte-Carlo SINR terms; arrays have shape (K,) or (n_slots, K).

    ``gamma = S / (var_term + noise_term + interference)``.
    """

    S: np.ndarray
    var_term: np.ndarray
    noise_term: np.ndarray
    interference: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    slots: Tuple[int, ...]
    n_mc: int
    kind: str


@dataclass(frozen=True)
class RateResult:
    """Per-user rates (bits/s/Hz), their sum and the per-slot SINR used."""

    per_user_rate: np.ndarray
    sum_rate: float
    per_slot_sinr: np.ndarray


@dataclass(frozen=True)
class HexLayout:
    """Cells of a hexagonal layout with per-link large-scale gains.

    ``gains[b, c, k]`` is the gain from BS ``b`` to user ``k`` of cell ``c``;
    cell 0 is the central cell.
    """

    gains: np.ndarray
    bs_positions: np.ndarray
    user_positions: np.ndarray
    cell_radius: float
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.gains.shape[0]

    @property
    def K(self) -> int:
        return self.gains.shape[2]

    def profile(self, M: int, cell: int = 0) -> LargeScaleProfile:
        """Own-cell profile of ``cell``."""
        return LargeScaleProfile.isotropic(self.gains[cell, cell], M)

    def subset(self, L: int) -> "HexLayout":
        """First ``L`` cells (cell 0 plus ``L - 1`` neighbours)."""
        if not 1 <= L <= self.L:
            raise ConfigError(f"L must be in [1, {self.L}]")
        return HexLayout(self.gains[:L, :L].copy(), self.bs_positions[:L].copy(),
                         self.user_positions[:L].copy(), self.cell_radius, dict(self.meta))

    def isolated(self) -> "HexLayout":
        """Same layout with every cross-cell gain set to zero."""
        g = np.zeros_like(self.gains)
        idx = np.arange(self.L)
        g[idx, idx] = self.gains[idx, idx]
        return HexLayout(g, self.bs_positions.copy(), self.user_positions.copy(),
                         self.cell_radius, dict(self.meta))


def _aging_columns(A_n, M, K):
    """Aging as an (M, K) array (scalar, AgingOperator, (M,), (M, K) or (K, M))."""
    if isinstance(A_n, AgingOperator):
        A_n = A_n.diag
    A = np.asarray(A_n, dtype=float)
    if A.ndim == 0:
        return np.full((M, K), float(A))
    if A.ndim == 1:
        if A.shape[0] != M:
            raise DomainError("aging diagonal must have length M")
        return np.repeat(A[:, None], K, axis=1)
    if A.shape == (M, K):
        return A
    if A.shape == (K, M):
        return A.T
    raise DomainError("aging operator shape does not match the estimate")


def _lam_of(F, K):
    tr = float(np.sum(np.abs(F) ** 2))
    return K / tr if tr > 0 else float("nan")


def mrt_precoder(G_hat0, A_n) -> Precoder:
    """``F = A_n G_hat0`` (column ``k`` aged with user ``k``'s operator)."""
    G = np.asarray(G_hat0)
    if G.ndim != 2:
        raise DomainError("G_hat0 must be M x K")
    M, K = G.shape
    F = _aging_columns(A_n, M, K) * G
    return Precoder(F, _lam_of(F, K), "mrt")


def rzf_precoder(G_hat0, A_n, Z, a: float) -> Precoder:
    """``F = (H H^H + Z + M a I)^{-1} H`` with ``H = A_n G_hat0``.

    Solved with a Hermitian positive-definite (Cholesky) factorization;
    no inverse is formed.

    Raises
    ------
    NumericError
        If the regularized Gram is not positive definite.
    """
    G = np.asarray(G_hat0)
    if G.ndim != 2:
        raise DomainError("G_hat0 must be M x K")
    M, K = G.shape
    H = _aging_columns(A_n, M, K) * G
    Zm = np.asarray(Z)
    if Zm.ndim == 0:
        Zm = float(Zm) * np.eye(M)
    elif Zm.ndim == 1:
        Zm = np.diag(Zm)
    Q = H @ H.conj().T + Zm + M * a * np.eye(M)
    Q = 0.5 * (Q + Q.conj().T)
    try:
        Lc = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise NumericError("regularized Gram is not positive definite") from exc
    y = np.linalg.solve(Lc, H)
    F = np.linalg.solve(Lc.conj().T, y)
    return Precoder(F, _lam_of(F, K), "rzf")


def estimate_lambda(precoder_draws, K: int) -> float:
    """``lam = 1 / mean_draws((1/K) tr F F^H)``.

    Raises
    ------
    DegenerateError
        If every draw is zero.
    """
    draws = [p.F if isinstance(p, Precoder) else np.asarray(p) for p in precoder_draws]
    if not draws:
        raise DomainError("need at least one precoder draw")
    traces = np.array([np.sum(np.abs(F) ** 2) for F in draws]) / K
    mean = float(np.mean(traces))
    if mean <= 0:
        raise DegenerateError("all precoder draws are zero")
    return 1.0 / mean


def phase_drift(dphi, dvarphi):
    """``Theta-tilde`` entries ``exp(2j (dphi_m + dvarphi_k))``.

    ``dphi`` has antennas on its last axis and ``dvarphi`` users on its last
    axis; the result has shape ``(..., M, K)``.
    """
    return np.exp(2j * (np.asarray(dphi)[..., :, None] + np.asarray(dvarphi)[..., None, :]))


def ergodic_rate(gammas, T_c: int, tau: Optional[int] = None) -> RateResult:
    """``R_k = (1/T_c) sum_n log2(1 + gamma_{k,n})``.

    Parameters
    ----------
    gammas : array_like, shape (T_c - tau, K)
        Per-slot SINR.
    T_c : int
    tau : int, optional
        When given, the number of slots must equal ``T_c - tau``.
    """
    g = np.asarray(gammas, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise DomainError("SINR values must be >= 0")
    if T_c < 1:
        raise DomainError("T_c must be >= 1")
    if tau is not None and g.shape[0] != T_c - tau:
        raise DomainError(f"expected {T_c - tau} slots, got {g.shape[0]}")
    per_user = np.log2(1.0 + g).sum(axis=0) / T_c
    return RateResult(per_user, float(per_user.sum()), g)


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63)))
    return np.random.SeedSequence(seed)


def _chunk_rng(root: np.random.SeedSequence, i: int) -> np.random.Generator:
    child = np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + (i,))
    return np.random.default_rng(child)


def _check_kinds(kinds):
    for kind in kinds:
        if kind not in PRECODER_KINDS:
            raise ConfigError(f"unknown precoder kind {kind!r}")


def _apply_precoder(kind, H, cfg: SystemConfig):
    """Batched precoder for channels ``H`` of shape (..., M, K)."""
    if kind == "mrt":
        return H
    M, K = H.shape[-2:]
    Hh = np.swapaxes(H.conj(), -1, -2)
    z = cfg.z_scalar
    if z is not None:
        reg = M * cfg.rzf_alpha + z
        if not reg > 0:
            raise NumericError("RZF regularization M a + z must be > 0")
        # push-through identity: (HH^H + cI)^{-1} H = H (H^H H + cI)^{-1}
        G = Hh @ H + reg * np.eye(K)
        return np.swapaxes(np.linalg.solve(G, Hh).conj(), -1, -2)
    Q = H @ Hh + np.asarray(cfg.rzf_Z) + M * cfg.rzf_alpha * np.eye(M)
    return np.linalg.solve(Q, H)


def _mc_core(cfg: SystemConfig, gains, kinds, slots, n_mc: int, seed: SeedLike,
             estimator: str = "as_written", chunk: int = CHUNK):
    """Monte-Carlo SINR of the users served by BS 0.

    Parameters
    ----------
    gains : ndarray, shape (L, L, K, M)
        ``gains[b, c, k]`` is the covariance diagonal from BS ``b`` to user
        ``k`` of cell ``c``; every cell reuses the same ``K`` pilots.
    kinds : sequence of str
    slots : sequence of int
        Increasing slot indices at which the SINR is evaluated.

    Per trial one set of channels, pilot noise, innovation base and Wiener
    phase path is drawn; the aged channel at slot ``n`` is
    ``A_n h_0 + (R - A_n R A_n)^{1/2} w`` with the same ``w`` at every slot.
    """
    if n_mc < 2:
        raise DomainError("N_mc must be >= 2")
    kinds = tuple(kinds)
    _check_kinds(kinds)
    slots = tuple(int(n) for n in slots)
    if not slots or min(slots) < 1 or any(b <= a for a, b in zip(slots, slots[1:])):
        raise DomainError("slots must be strictly increasing integers >= 1")
    gains = np.asarray(gains, dtype=float)
    L, _, K, M = gains.shape
    if K != cfg.K or M != cfg.M:
        raise ConfigError("gain array does not match (K, M) of the configuration")
    if cfg.p_p <= 0:
        raise ConfigError("pilot power tau * p_u must be > 0")
    s = cfg.sigma_b2 / cfg.p_p
    coef = np.stack([multicell_estimator_gain(gains[b], b, s, estimator).T for b in range(L)])
    sd_h = np.sqrt(np.transpose(gains, (0, 1, 3, 2)))  # (L, L, M, K)
    sd_central = sd_h[:, 0]                            # BS b -> users of cell 0
    ages = [aging_table(n, cfg).T for n in slots]       # (M, K) per slot
    innov = [_innovation_std(A[None], sd_central**2) for A in ages]
    clo = cfg.oscillator_mode == "CLO"
    sd_phi = np.sqrt(cfg.sigma_phi2)
    sd_varphi = np.sqrt(cfg.sigma_varphi2)

    n_slots = len(slots)
    keys = ("b", "b2", "bb", "tr")
    acc = {kind: {k: [] for k in keys} for kind in kinds}
    root = _seed_sequence(seed)
    sizes = [chunk] * (n_mc // chunk) + ([n_mc % chunk] if n_mc % chunk else [])
    for ci, t in enumerate(sizes):
        rng = _chunk_rng(root, ci)
        H0 = sd_h * crandn(rng, (t, L, L, M, K))
        Y = H0.sum(axis=2) + np.sqrt(s) * crandn(rng, (t, L, M, K))
        G_hat = coef * Y                                # (t, L, M, K)
        H0c = H0[:, :, 0]
        del H0, Y
        W = crandn(rng, (t, L, M, K))
        phi = np.zeros((t, L, M))
        varphi = np.zeros((t, K))
        prev = 0
        part = {kind: {k: np.zeros((n_slots,) + shp) for k, shp in
                       (("b", (K,)), ("b2", (K,)), ("bb", (L, K, K)), ("tr", (L,)))}
                for kind in kinds}
        for kind in kinds:
            part[kind]["b"] = part[kind]["b"].astype(complex)
        for si, n in enumerate(slots):
            step = np.sqrt(n - prev)
            prev = n
            if clo:
                phi += step * sd_phi[0] * rng.standard_normal((t, L, 1))
            else:
                phi += step * sd_phi * rng.standard_normal((t, L, M))
            varphi += step * sd_varphi * rng.standard_normal((t, K))
            theta = phase_drift(phi, varphi[:, None, :])
            A = ages[si]
            Gn = A * H0c + innov[si] * W
            V = np.swapaxes((Gn * theta).conj(), -1, -2)  # (t, L, K, M)
            Heff = A * G_hat
            for kind in kinds:
                F = _apply_precoder(kind, Heff, cfg)
                B = V @ F                                  # (t, L, K, K): [b, k, i]
                d = np.diagonal(B[:, 0], axis1=-2, axis2=-1)
                p = part[kind]
                p["b"][si] = d.sum(axis=0)
                p["b2"][si] = (np.abs(d) ** 2).sum(axis=0)
                p["bb"][si] = (np.abs(B) ** 2).sum(axis=0)
                p["tr"][si] = (np.abs(F) ** 2).sum(axis=(0, 2, 3)) / K
        for kind in kinds:
            for k in keys:
                acc[kind][k].append(part[kind][k])

    out = {}
    for kind in kinds:
        tot = {k: np.sum(np.stack(acc[kind][k]), axis=0) / n_mc for k in keys}
        mean_tr = tot["tr"]                                # (n_slots, L)
        if np.any(mean_tr <= 0):
            raise DegenerateError("precoder vanishes in every trial; lambda undefined")
        lam = 1.0 / mean_tr
        lam0 = lam[:, :1]
        mb = tot["b"]
        S = lam0 * np.abs(mb) ** 2
        var = lam0 * np.clip(tot["b2"] - np.abs(mb) ** 2, 0.0, None)
        bb = tot["bb"]                                     # (n_slots, L, K, K)
        own = np.diagonal(bb[:, 0], axis1=-2, axis2=-1)
        inter = np.einsum("sb,sbk->sk", lam, bb.sum(axis=-1)) - lam0 * own
        inter = np.clip(inter, 0.0, None)
        noise = np.broadcast_to(cfg.sigma_k2 / cfg.p_d, S.shape).copy()
        den = var + noise + inter
        gamma = np.where(den > 0, S / np.where(den > 0, den, 1.0), 0.0)
        out[kind] = SinrBreakdown(S, var, noise, inter, gamma, lam, slots, n_mc, kind)
    return out


def _single_cell_gains(cfg: SystemConfig, profile: LargeScaleProfile):
    if profile.K != cfg.K or profile.M != cfg.M:
        raise ConfigError("profile does not match (K, M) of the configuration")
    return np.asarray(profile.r_diag, dtype=float)[None, None]


def _squeeze(b: SinrBreakdown) -> SinrBreakdown:
    return SinrBreakdown(b.S[0], b.var_term[0], b.noise_term[0], b.interference[0], b.gamma[0],
                         b.lam[0], b.slots, b.n_mc, b.kind)


def mc_sinr(cfg: SystemConfig, profile: LargeScaleProfile, kind: str, n: int, N_mc: int,
            rng: SeedLike = None) -> SinrBreakdown:
    """Monte-Carlo SINR of every user at slot ``n`` (arrays of shape (K,)).

    ``S = lam |E[g^H Theta f_k]|^2``, ``var = lam var[g^H Theta f_k]``,
    ``interference = lam sum_{i != k} E|g^H Theta f_i|^2`` with
    ``lam = 1 / E[(1/K) tr F F^H]`` over the same trials.
    """
    res = _mc_core(cfg, _single_cell_gains(cfg, profile), (kind,), (n,), N_mc, rng)
    return _squeeze(res[kind])


def mc_sinr_slots(cfg: SystemConfig, profile: LargeScaleProfile, kinds: Sequence[str],
                  slots: Sequence[int], N_mc: int, rng: SeedLike = None) -> Dict[str, SinrBreakdown]:
    """Monte-Carlo SINR at several slots and precoders on common trials."""
    return _mc_core(cfg, _single_cell_gains(cfg, profile), kinds, slots, N_mc, rng)


def mc_rate(cfg: SystemConfig, profile: LargeScaleProfile, kind: str, N_mc: int,
            rng: SeedLike = None) -> RateResult:
    """Monte-Carlo ergodic rate over slots ``1..T_c - tau``."""
    slots = range(1, cfg.n_data + 1)
    res = mc_sinr_slots(cfg, profile, (kind,), slots, N_mc, rng)[kind]
    return ergodic_rate(res.gamma, cfg.T_c, cfg.tau)


def hex_layout(L: int, K: int, rng: np.random.Generator, cell_radius: float = 1000.0,
               guard_radius: float = 100.0, pathloss_exp: float = 3.8,
               shadow_sigma_dB: float = 8.0) -> HexLayout:
    """Central cell and up to six neighbours at distance ``sqrt(3) R``.

    Users are dropped uniformly on the annulus ``[guard, R]`` around their
    BS; own-cell gains are drawn exactly as in the single-cell drop, cross
    gains use the true distance (floored at the guard radius) and
    independent shadowing. No wrap-around.
    """
    if not 1 <= L <= 7:
        raise ConfigError("hexagonal layout supports 1 <= L <= 7")
    if K < 1:
        raise ConfigError("K must be >= 1")
    if guard_radius >= cell_radius:
        raise ConfigError("guard_radius must be below cell_radius")
    ang = np.pi / 6 + np.arange(6) * np.pi / 3
    bs = np.concatenate([[0.0], np.sqrt(3.0) * cell_radius * np.exp(1j * ang)])[:L]
    radii = np.empty((L, K))
    own_q = np.empty((L, K))
    for c in range(L):
        radii[c] = np.sqrt(rng.uniform(guard_radius**2, cell_radius**2, K))
        own_q[c] = 10.0 ** (shadow_sigma_dB * rng.standard_normal(K) / 10.0)
    theta = rng.uniform(0.0, 2.0 * np.pi, (L, K))
    users = bs[:, None] + radii * np.exp(1j * theta)
    cross_q = 10.0 ** (shadow_sigma_dB * rng.standard_normal((L, L, K)) / 10.0)
    gains = np.empty((L, L, K))
    for b in range(L):
        for c in range(L):
            if b == c:
                gains[b, c] = own_q[c] / (radii[c] / guard_radius) ** pathloss_exp
            else:
                d = np.maximum(np.abs(users[c] - bs[b]), guard_radius)
                gains[b, c] = cross_q[b, c] / (d / guard_radius) ** pathloss_exp
    meta = {"layout": "hexagonal", "wrap_around": "none", "measured_cell": "0"}
    return HexLayout(gains, bs, users, cell_radius, meta)


def _layout_gains(cfg: SystemConfig, L: int, geometry: HexLayout):
    if L < 1:
        raise ConfigError("L must be >= 1")
    if geometry.K != cfg.K:
        raise ConfigError("layout K does not match the configuration")
    g = geometry.subset(L).gains
    return np.repeat(g[..., None], cfg.M, axis=-1)


def multicell_mc_sinr(cfg: SystemConfig, L: int, geometry: HexLayout, kinds: Sequence[str],
                      slots: Sequence[int], N_mc: int, rng: SeedLike = None,
                      estimator: str = "as_written") -> Dict[str, SinrBreakdown]:
    """Central-cell Monte-Carlo SINR with pilot reuse in ``L`` cells.

    Each BS estimates its own users from the contaminated observation
    ``sum_c h_{b,c,k} + noise`` and normalizes its own precoder; the
    interference at a central user sums ``lam_b E|g_b^H Theta f_{b,i}|^2``
    over every BS and stream except the desired one.
    """
    return _mc_core(cfg, _layout_gains(cfg, L, geometry), kinds, slots, N_mc, rng, estimator)


def multicell_mc_sumrate(cfg: SystemConfig, L: int, geometry: HexLayout, kind: str, N_mc: int,
                         rng: SeedLike = None, estimator: str = "as_written",
                         slots: Optional[Sequence[int]] = None) -> RateResult:
    """Central-cell ergodic rates over slots ``1..T_c - tau``.

    ``slots`` may select a subset; the rate then averages the per-slot
    log terms over the subset and rescales to ``T_c - tau`` slots.
    """
    full = slots is None
    slots = tuple(range(1, cfg.n_data + 1)) if full else tuple(slots)
    res = multicell_mc_sinr(cfg, L, geometry, (kind,), slots, N_mc, rng, estimator)[kind]
    if full:
        return ergodic_rate(res.gamma, cfg.T_c, cfg.tau)
    per_user = np.log2(1.0 + res.gamma).mean(axis=0) * cfg.n_data / cfg.T_c
    return RateResult(per_user, float(per_user.sum()), res.gamma)
