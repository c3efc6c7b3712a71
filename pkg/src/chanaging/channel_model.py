"""Physical-layer state: system parameters, large-scale fading, Rayleigh
channels, Wiener phase noise, the aging operator and aged channels."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DomainError, NumericError
from .specfun import bessel_j0

__all__ = [
    "OSCILLATOR_MODES",
    "SystemConfig",
    "LargeScaleProfile",
    "PhaseState",
    "AgingOperator",
    "ChannelState",
    "dbm_to_watt",
    "watt_to_dbm",
    "thermal_noise_watt",
    "deg_to_rad2",
    "default_rzf_alpha",
    "crandn",
    "draw_large_scale",
    "sample_channel",
    "advance_phase",
    "phase_trajectories",
    "bessel_factor",
    "user_phase_factor",
    "antenna_phase_factor",
    "aging_operator",
    "aging_table",
    "aged_channel",
    "combined_error_cov",
    "draw_channel_state",
]

OSCILLATOR_MODES = ("CLO", "SLO_identical", "SLO_distinct")

_NEG_EIG_TOL = 1e-12

ArrayLike = Union[float, Sequence[float], np.ndarray]


def dbm_to_watt(dbm):
    """Convert dBm to watts."""
    if np.ndim(dbm):
        return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


def watt_to_dbm(w):
    """Convert watts to dBm."""
    return 10.0 * np.log10(w) + 30.0


def thermal_noise_watt(density_dbm_hz=-174.0, bandwidth_hz=20e6):
    """Thermal noise power ``density + 10 log10(W)`` in watts."""
    return dbm_to_watt(density_dbm_hz + 10.0 * math.log10(bandwidth_hz))


def deg_to_rad2(sigma_deg):
    """Increment standard deviation in degrees to variance in rad^2."""
    return (np.asarray(sigma_deg, dtype=float) * np.pi / 180.0) ** 2


def crandn(rng, shape):
    """Circularly symmetric complex Gaussian samples with unit variance."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * np.sqrt(0.5)


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _as_vector(value, length, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(length, float(arr))
    if arr.shape != (length,):
        raise ConfigError(f"{name} must be a scalar or have length {length}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """System parameters, all powers in linear watts.

    Attributes
    ----------
    M, K : int
        Antenna and user counts.
    p_u, p_d : float
        Uplink (per user) and downlink powers.
    sigma_b2 : float
        BS post-processed noise variance.
    sigma_k2 : ndarray, shape (K,)
        Downlink noise variance per user.
    tau, T_c : int
        Training length and coherence block length in symbols.
    fD_Ts : float
        Normalized Doppler shift.
    sigma_phi2 : ndarray, shape (M,)
        BS per-antenna phase increment variances (rad^2).
    sigma_varphi2 : ndarray, shape (K,)
        Per-user phase increment variances (rad^2).
    oscillator_mode : {"CLO", "SLO_identical", "SLO_distinct"}
    rzf_alpha : float
        RZF regularization ``a``.
    rzf_Z : float or ndarray
        RZF matrix ``Z``; a scalar ``z`` stands for ``z * I``.
    """

    M: int
    K: int
    p_u: float
    p_d: float
    sigma_b2: float
    sigma_k2: np.ndarray
    tau: int
    T_c: int
    fD_Ts: float
    sigma_phi2: np.ndarray
    sigma_varphi2: np.ndarray
    oscillator_mode: str = "SLO_identical"
    rzf_alpha: float = 1.0
    rzf_Z: Union[float, np.ndarray] = 0.0

    def __post_init__(self):
        M, K = self.M, self.K
        if int(M) != M or M < 1:
            raise ConfigError(f"M must be a positive integer, got {M}")
        if int(K) != K or K < 1:
            raise ConfigError(f"K must be a positive integer, got {K}")
        object.__setattr__(self, "M", int(M))
        object.__setattr__(self, "K", int(K))
        if int(self.tau) != self.tau or self.tau < K:
            raise ConfigError(f"tau must be an integer >= K={K}, got {self.tau}")
        if int(self.T_c) != self.T_c or self.T_c <= self.tau:
            raise ConfigError(f"T_c must be an integer > tau={self.tau}, got {self.T_c}")
        object.__setattr__(self, "tau", int(self.tau))
        object.__setattr__(self, "T_c", int(self.T_c))
        for name in ("p_u", "p_d", "sigma_b2", "fD_Ts"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "sigma_k2", _frozen(_as_vector(self.sigma_k2, K, "sigma_k2")))
        object.__setattr__(self, "sigma_phi2", _frozen(_as_vector(self.sigma_phi2, M, "sigma_phi2")))
        object.__setattr__(self, "sigma_varphi2", _frozen(_as_vector(self.sigma_varphi2, K, "sigma_varphi2")))
        for name in ("sigma_k2", "sigma_phi2", "sigma_varphi2"):
            if np.any(getattr(self, name) < 0) or not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError(f"{name} entries must be finite and >= 0")
        if self.oscillator_mode not in OSCILLATOR_MODES:
            raise ConfigError(f"oscillator_mode must be one of {OSCILLATOR_MODES}, got {self.oscillator_mode!r}")
        if self.oscillator_mode != "SLO_distinct" and np.ptp(self.sigma_phi2) != 0:
            raise ConfigError(f"sigma_phi2 entries must be equal under {self.oscillator_mode}")
        a = float(self.rzf_alpha)
        if not np.isfinite(a) or a <= 0:
            raise ConfigError(f"rzf_alpha must be > 0, got {a}")
        object.__setattr__(self, "rzf_alpha", a)
        Z = self.rzf_Z
        if np.ndim(Z) == 0:
            z = float(Z)
            if not np.isfinite(z) or z < 0:
                raise ConfigError(f"rzf_Z scalar must be >= 0, got {z}")
            object.__setattr__(self, "rzf_Z", z)
        else:
            Z = np.array(Z, dtype=complex)
            if Z.shape != (M, M) or not np.allclose(Z, Z.conj().T):
                raise ConfigError("rzf_Z must be a Hermitian M x M matrix")
            if np.linalg.eigvalsh(Z).min() < -_NEG_EIG_TOL * max(1.0, np.abs(Z).max()):
                raise ConfigError("rzf_Z must be nonnegative definite")
            Z.setflags(write=False)
            object.__setattr__(self, "rzf_Z", Z)

    @property
    def p_p(self) -> float:
        """Pilot power ``tau * p_u``."""
        return self.tau * self.p_u

    @property
    def beta(self) -> float:
        """Load ``K / M``."""
        return self.K / self.M

    @property
    def n_data(self) -> int:
        """Number of data slots ``T_c - tau``."""
        return self.T_c - self.tau

    @property
    def z_scalar(self) -> Optional[float]:
        """``z`` when ``Z = z I``, otherwise None."""
        return self.rzf_Z if isinstance(self.rzf_Z, float) else None

    def replace(self, **changes) -> "SystemConfig":
        """Copy with fields replaced.

        When ``M`` or ``K`` changes, per-antenna and per-user vectors that are
        constant are re-broadcast to the new length.
        """
        per_m = ("sigma_phi2",)
        per_k = ("sigma_k2", "sigma_varphi2")
        for names, key in ((per_m, "M"), (per_k, "K")):
            if key in changes and changes[key] != getattr(self, key):
                for name in names:
                    if name not in changes:
                        v = getattr(self, name)
                        if np.ptp(v) != 0:
                            raise ConfigError(f"cannot resize non-constant {name}; pass it explicitly")
                        changes[name] = float(v[0])
        return dataclasses.replace(self, **changes)

    @classmethod
    def build(
        cls,
        M: int = 60,
        K: int = 10,
        *,
        p_u_dbm: float = 46.0,
        p_d_dbm: float = 46.0,
        noise_dbm_hz: float = -174.0,
        bandwidth_hz: float = 20e6,
        tau: Optional[int] = None,
        T_c: int = 196,
        fD_Ts: float = 0.0,
        sigma_phi_deg: ArrayLike = 0.0,
        sigma_varphi_deg: ArrayLike = 0.0,
        oscillator_mode: str = "SLO_identical",
        rzf_alpha: Optional[float] = None,
        rzf_Z: Union[float, np.ndarray] = 0.0,
    ) -> "SystemConfig":
        """Build from engineering units (dBm, degrees).

        Phase-noise arguments are increment standard deviations in degrees.
        ``tau`` defaults to ``K``. ``rzf_alpha`` defaults to the MMSE-type
        value ``mean(sigma_k2) / (M p_d)``.
        """
        noise = thermal_noise_watt(noise_dbm_hz, bandwidth_hz)
        p_d = dbm_to_watt(p_d_dbm)
        if rzf_alpha is None:
            if int(M) != M or M < 1:
                raise ConfigError(f"M must be a positive integer, got {M}")
            rzf_alpha = default_rzf_alpha(noise, p_d, M)
        return cls(
            M=M,
            K=K,
            p_u=dbm_to_watt(p_u_dbm),
            p_d=p_d,
            sigma_b2=noise,
            sigma_k2=noise,
            tau=K if tau is None else tau,
            T_c=T_c,
            fD_Ts=fD_Ts,
            sigma_phi2=deg_to_rad2(sigma_phi_deg),
            sigma_varphi2=deg_to_rad2(sigma_varphi_deg),
            oscillator_mode=oscillator_mode,
            rzf_alpha=rzf_alpha,
            rzf_Z=rzf_Z,
        )


def default_rzf_alpha(sigma2, p_d, M):
    """MMSE-type regularization ``mean(sigma2) / (M p_d)``."""
    if p_d <= 0:
        raise ConfigError("p_d must be > 0 to derive the default rzf_alpha")
    return float(np.mean(sigma2)) / (M * p_d)


@dataclass(frozen=True)
class LargeScaleProfile:
    """Per-user large-scale gains and diagonal covariances.

    Attributes
    ----------
    l : ndarray, shape (K,)
        Large-scale gains.
    r_diag : ndarray, shape (K, M)
        Diagonals of ``R_k``; defaults to ``l_k`` on every antenna.
    distance : ndarray or None
        User distances in meters, when drawn from a geometry.
    """

    l: np.ndarray
    r_diag: np.ndarray
    distance: Optional[np.ndarray] = None

    def __post_init__(self):
        l = _frozen(np.atleast_1d(self.l))
        r = _frozen(np.atleast_2d(self.r_diag))
        if r.shape[0] != l.shape[0]:
            raise ConfigError("r_diag must have one row per user")
        if np.any(r < 0) or np.any(l < 0):
            raise ConfigError("large-scale gains must be >= 0")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "r_diag", r)

    @classmethod
    def isotropic(cls, l, M, distance=None) -> "LargeScaleProfile":
        """Profile with ``R_k = l_k I_M``."""
        l = np.atleast_1d(np.asarray(l, dtype=float))
        return cls(l=l, r_diag=np.repeat(l[:, None], M, axis=1), distance=distance)

    @property
    def K(self) -> int:
        return self.l.shape[0]

    @property
    def M(self) -> int:
        return self.r_diag.shape[1]

    def with_M(self, M: int) -> "LargeScaleProfile":
        """Same gains on a different antenna count (isotropic profiles)."""
        return LargeScaleProfile.isotropic(self.l, M, self.distance)

    def R(self, k: int) -> np.ndarray:
        """Full covariance matrix of user ``k``."""
        return np.diag(self.r_diag[k])


def draw_large_scale(
    cell_radius: float,
    guard_radius: float,
    pathloss_exp: float,
    shadow_sigma_dB: float,
    K: int,
    rng: np.random.Generator,
    M: int = 1,
) -> LargeScaleProfile:
    """Drop ``K`` users uniformly on the annulus ``[guard, cell]``.

    ``l_k = q_k / (r_k / r0)^upsilon`` with ``r0`` the guard radius and
    ``10 log10 q_k ~ N(0, shadow_sigma_dB^2)``.
    """
    if not (cell_radius > 0 and guard_radius > 0):
        raise ConfigError("radii must be positive")
    if guard_radius >= cell_radius:
        raise ConfigError("guard_radius must be below cell_radius")
    if K < 1:
        raise ConfigError("K must be >= 1")
    r = np.sqrt(rng.uniform(guard_radius**2, cell_radius**2, K))
    q = 10.0 ** (shadow_sigma_dB * rng.standard_normal(K) / 10.0)
    l = q / (r / guard_radius) ** pathloss_exp
    return LargeScaleProfile.isotropic(l, M, distance=r)


def _psd_sqrt(R):
    w, V = np.linalg.eigh(R)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w.min() < -_NEG_EIG_TOL * scale:
        raise NumericError(f"covariance not PSD: min eigenvalue {w.min():.3e}")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def sample_channel(R_k, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw ``R_k^{1/2} w`` with ``w ~ CN(0, I)``.

    Parameters
    ----------
    R_k : ndarray
        Covariance, either a diagonal given as shape (M,) or a full (M, M)
        Hermitian PSD matrix.
    rng : numpy.random.Generator
    size : int or tuple, optional
        Leading batch shape; output has shape ``size + (M,)``.
    """
    R_k = np.asarray(R_k)
    batch = () if size is None else tuple(np.atleast_1d(size))
    M = R_k.shape[0]
    w = crandn(rng, batch + (M,))
    if R_k.ndim == 1:
        if np.any(R_k < -_NEG_EIG_TOL * max(1.0, np.abs(R_k).max())):
            raise NumericError("diagonal covariance has negative entries")
        return np.sqrt(np.clip(R_k.real, 0.0, None)) * w
    root = _psd_sqrt(R_k)
    return w @ root.T


@dataclass(frozen=True)
class PhaseState:
    """Oscillator phases (radians) at symbol index ``n``."""

    phi: np.ndarray
    varphi: np.ndarray
    n: int = 0

    @classmethod
    def zeros(cls, M: int, K: int) -> "PhaseState":
        return cls(np.zeros(M), np.zeros(K), 0)


def advance_phase(state: PhaseState, cfg: SystemConfig, rng: np.random.Generator) -> PhaseState:
    """One Wiener step of every BS and user oscillator.

    Under CLO a single increment (variance ``sigma_phi2[0]``) is shared by
    all antennas. The user increments are drawn before the BS increments.
    """
    if state.n < 0:
        raise DomainError("phase state index must be >= 0")
    dv = np.sqrt(cfg.sigma_varphi2) * rng.standard_normal(cfg.K)
    if cfg.oscillator_mode == "CLO":
        dphi = np.full(cfg.M, math.sqrt(cfg.sigma_phi2[0]) * rng.standard_normal())
    else:
        dphi = np.sqrt(cfg.sigma_phi2) * rng.standard_normal(cfg.M)
    return PhaseState(state.phi + dphi, state.varphi + dv, state.n + 1)


def phase_trajectories(cfg: SystemConfig, n_steps: int, n_paths: int, rng: np.random.Generator):
    """Vectorized Wiener trajectories started at zero.

    Returns
    -------
    phi : ndarray, shape (n_paths, n_steps + 1, M)
    varphi : ndarray, shape (n_paths, n_steps + 1, K)
    """
    dv = np.sqrt(cfg.sigma_varphi2) * rng.standard_normal((n_paths, n_steps, cfg.K))
    if cfg.oscillator_mode == "CLO":
        d = math.sqrt(cfg.sigma_phi2[0]) * rng.standard_normal((n_paths, n_steps, 1))
        dphi = np.broadcast_to(d, (n_paths, n_steps, cfg.M))
    else:
        dphi = np.sqrt(cfg.sigma_phi2) * rng.standard_normal((n_paths, n_steps, cfg.M))
    zero_m = np.zeros((n_paths, 1, cfg.M))
    zero_k = np.zeros((n_paths, 1, cfg.K))
    phi = np.concatenate([zero_m, np.cumsum(dphi, axis=1)], axis=1)
    varphi = np.concatenate([zero_k, np.cumsum(dv, axis=1)], axis=1)
    return phi, varphi


def bessel_factor(n, fD_Ts: float):
    """Jakes factor ``J0(2 pi fD_Ts n)``."""
    return bessel_j0(2.0 * np.pi * fD_Ts * np.asarray(n, dtype=float))


def user_phase_factor(n, sigma_varphi2_k):
    """``exp(-sigma_varphi_k^2 n / 2)``."""
    return np.exp(-0.5 * np.asarray(sigma_varphi2_k) * n)


def antenna_phase_factor(n, sigma_phi2):
    """``exp(-sigma_phi_m^2 n / 2)`` per antenna."""
    return np.exp(-0.5 * np.asarray(sigma_phi2) * n)


@dataclass(frozen=True)
class AgingOperator:
    """Diagonal aging matrix ``A_n`` of one user.

    ``value`` is a float when the operator degenerates to ``alpha_n I``
    (CLO and identical SLOs), otherwise the length-M diagonal.
    """

    value: Union[float, np.ndarray]
    n: int
    M: int

    @property
    def is_scalar(self) -> bool:
        return np.ndim(self.value) == 0

    @property
    def diag(self) -> np.ndarray:
        if self.is_scalar:
            return np.full(self.M, float(self.value))
        return np.asarray(self.value)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)


def aging_operator(n: int, k: int, cfg: SystemConfig) -> AgingOperator:
    """``A_n`` for user ``k``: Bessel, user-phase and antenna-phase factors."""
    if n < 0:
        raise DomainError("aging delay n must be >= 0")
    common = bessel_factor(n, cfg.fD_Ts) * user_phase_factor(n, cfg.sigma_varphi2[k])
    if cfg.oscillator_mode == "SLO_distinct":
        return AgingOperator(common * antenna_phase_factor(n, cfg.sigma_phi2), n, cfg.M)
    return AgingOperator(float(common * antenna_phase_factor(n, cfg.sigma_phi2[0])), n, cfg.M)


def aging_table(n: int, cfg: SystemConfig) -> np.ndarray:
    """Aging diagonals of all users stacked as shape (K, M)."""
    if n < 0:
        raise DomainError("aging delay n must be >= 0")
    b = bessel_factor(n, cfg.fD_Ts)
    return (b * user_phase_factor(n, cfg.sigma_varphi2))[:, None] * antenna_phase_factor(n, cfg.sigma_phi2)[None, :]


def _diag_of(A):
    if isinstance(A, AgingOperator):
        return A.diag
    return np.asarray(A)


def _innovation_std(a_diag, r_diag):
    var = r_diag - a_diag * r_diag * a_diag
    scale = max(1.0, float(np.max(np.abs(r_diag)))) if np.size(r_diag) else 1.0
    if np.any(var < -_NEG_EIG_TOL * scale):
        raise NumericError("innovation covariance has a negative eigenvalue")
    return np.sqrt(np.clip(var, 0.0, None))


def aged_channel(g0, A_n, R_k, rng: np.random.Generator) -> np.ndarray:
    """Gauss-Markov aging ``A_n g0 + e`` with ``e ~ CN(0, R_k - A_n R_k A_n)``.

    ``R_k`` may be a diagonal (shape (M,)) or a full matrix; ``g0`` may carry
    leading batch dimensions.
    """
    g0 = np.asarray(g0)
    a = _diag_of(A_n)
    R_k = np.asarray(R_k)
    if R_k.ndim == 1:
        std = _innovation_std(a, R_k)
        e = std * crandn(rng, g0.shape)
        return a * g0 + e
    C = R_k - (a[:, None] * R_k * a[None, :])
    root = _psd_sqrt(C)
    w = crandn(rng, g0.shape)
    return a * g0 + w @ root.T


def combined_error_cov(A_n, D_k, R_k) -> np.ndarray:
    """``R_k - A_n D_k A_n``; diagonal inputs give a diagonal (M,) result."""
    a = _diag_of(A_n)
    D_k = np.asarray(D_k)
    R_k = np.asarray(R_k)
    if D_k.ndim == 1 and R_k.ndim == 1:
        out = R_k - a * D_k * a
        scale = max(1.0, float(np.max(np.abs(R_k))))
        if np.any(out < -_NEG_EIG_TOL * scale):
            raise NumericError("combined error covariance is indefinite")
        return np.clip(out, 0.0, None)
    D_k = np.diag(D_k) if D_k.ndim == 1 else D_k
    R_k = np.diag(R_k) if R_k.ndim == 1 else R_k
    out = R_k - a[:, None] * D_k * a[None, :]
    w = np.linalg.eigvalsh(out)
    if w.min() < -_NEG_EIG_TOL * max(1.0, float(np.abs(w).max())):
        raise NumericError("combined error covariance is indefinite")
    return out


@dataclass(frozen=True)
class ChannelState:
    """Channels ``h`` (shape (M, K)), effective channels ``g = Theta h``."""

    h: np.ndarray
    g: np.ndarray
    phase: PhaseState = field(default_factory=lambda: PhaseState.zeros(0, 0))


def draw_channel_state(cfg: SystemConfig, profile: LargeScaleProfile, rng: np.random.Generator,
                       phase: Optional[PhaseState] = None) -> ChannelState:
    """Draw ``h_k = R_k^{1/2} w_k`` for all users and apply the phase rotation."""
    if phase is None:
        phase = PhaseState.zeros(cfg.M, cfg.K)
    h = np.stack([sample_channel(profile.r_diag[k], rng) for k in range(cfg.K)], axis=1)
    theta = np.exp(1j * (phase.phi[:, None] + phase.varphi[None, :]))
    return ChannelState(h=h, g=theta * h, phase=phase)
