import numpy as np
import pytest
from hypothesis import given, strategies as st

from chanaging.channel_model import (
    AgingOperator,
    LargeScaleProfile,
    PhaseState,
    SystemConfig,
    advance_phase,
    aged_channel,
    aging_operator,
    aging_table,
    combined_error_cov,
    dbm_to_watt,
    deg_to_rad2,
    draw_channel_state,
    draw_large_scale,
    phase_trajectories,
    sample_channel,
    thermal_noise_watt,
    watt_to_dbm,
)
from chanaging.errors import ConfigError, DomainError, NumericError
from chanaging.specfun import bessel_j0


def test_power_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(46.0) == pytest.approx(39.810717055, rel=1e-9)
    assert watt_to_dbm(1e-3) == pytest.approx(0.0)
    assert watt_to_dbm(thermal_noise_watt(-174.0, 20e6)) == pytest.approx(-100.9897, abs=1e-4)


def test_deg_to_rad2():
    assert deg_to_rad2(180.0) == pytest.approx(np.pi**2)
    assert deg_to_rad2(0.0) == 0.0


def test_build_defaults():
    cfg = SystemConfig.build()
    assert (cfg.M, cfg.K, cfg.tau, cfg.T_c) == (60, 10, 10, 196)
    assert cfg.p_p == pytest.approx(10 * dbm_to_watt(46.0))
    assert cfg.n_data == 186
    assert cfg.beta == pytest.approx(1 / 6)
    assert cfg.z_scalar == 0.0
    assert cfg.rzf_alpha == pytest.approx(cfg.sigma_k2[0] / (60 * cfg.p_d))


@pytest.mark.parametrize("kwargs", [
    dict(M=0), dict(K=0), dict(tau=5), dict(T_c=10), dict(fD_Ts=-0.1),
    dict(oscillator_mode="XLO"), dict(rzf_alpha=0.0),
])
def test_build_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        SystemConfig.build(**kwargs)


def test_non_identical_phase_variances_need_distinct_mode():
    with pytest.raises(ConfigError):
        SystemConfig.build(M=4, K=2, sigma_phi_deg=[1, 2, 3, 4])
    cfg = SystemConfig.build(M=4, K=2, sigma_phi_deg=[1, 2, 3, 4], oscillator_mode="SLO_distinct")
    assert cfg.sigma_phi2.shape == (4,)


def test_replace_rebroadcasts_constant_vectors():
    cfg = SystemConfig.build(M=8, K=2, sigma_phi_deg=1.0)
    new = cfg.replace(M=16, K=4, tau=4)
    assert new.sigma_phi2.shape == (16,) and new.sigma_k2.shape == (4,)


def test_draw_large_scale_range():
    prof = draw_large_scale(1000.0, 100.0, 3.8, 0.0, 2000, np.random.default_rng(1), 3)
    assert np.all((prof.distance >= 100.0) & (prof.distance <= 1000.0))
    assert np.all(prof.l <= 1.0) and np.all(prof.l >= 10 ** (-3.8))
    assert prof.r_diag.shape == (2000, 3)
    # uniform in area: half the users inside radius sqrt((100^2 + 1000^2) / 2)
    assert np.mean(prof.distance < np.sqrt((100**2 + 1000**2) / 2)) == pytest.approx(0.5, abs=0.04)


def test_draw_large_scale_rejects_bad_radii():
    with pytest.raises(ConfigError):
        draw_large_scale(100.0, 100.0, 3.8, 8.0, 3, np.random.default_rng(0))


def test_sample_channel_covariance():
    rng = np.random.default_rng(2)
    r = np.array([0.5, 1.0, 2.0])
    h = sample_channel(r, rng, size=40000)
    assert np.allclose(np.mean(np.abs(h) ** 2, axis=0), r, rtol=0.03)
    R = np.array([[1.0, 0.5j], [-0.5j, 1.0]])
    h = sample_channel(R, rng, size=40000)
    C = h.T @ h.conj() / h.shape[0]
    assert np.allclose(C, R, atol=0.03)


def test_sample_channel_rejects_indefinite():
    with pytest.raises(NumericError):
        sample_channel(np.array([[1.0, 2.0], [2.0, 1.0]]), np.random.default_rng(0))


def test_wiener_variance_growth():
    cfg = SystemConfig.build(M=4, K=3, sigma_phi_deg=2.0, sigma_varphi_deg=3.0)
    phi, varphi = phase_trajectories(cfg, 50, 10_000, np.random.default_rng(3))
    n = np.arange(51)
    v_phi = phi.var(axis=0).mean(axis=1)
    v_varphi = varphi.var(axis=0).mean(axis=1)
    assert np.allclose(v_phi[1:], n[1:] * cfg.sigma_phi2[0], rtol=0.05)
    assert np.allclose(v_varphi[1:], n[1:] * cfg.sigma_varphi2[0], rtol=0.05)


def test_clo_phase_shared_across_antennas():
    cfg = SystemConfig.build(M=5, K=2, sigma_phi_deg=2.0, oscillator_mode="CLO")
    state = advance_phase(PhaseState.zeros(5, 2), cfg, np.random.default_rng(0))
    assert np.ptp(state.phi) == 0 and state.n == 1
    phi, _ = phase_trajectories(cfg, 3, 4, np.random.default_rng(0))
    assert np.all(np.ptp(phi, axis=2) == 0)


def test_aging_operator_values():
    cfg = SystemConfig.build(M=4, K=2, fD_Ts=0.05, sigma_phi_deg=2.0, sigma_varphi_deg=1.0)
    n = 3
    A = aging_operator(n, 0, cfg)
    expect = bessel_j0(2 * np.pi * 0.05 * n) * np.exp(-(cfg.sigma_varphi2[0] + cfg.sigma_phi2[0]) * n / 2)
    assert A.is_scalar and A.value == pytest.approx(expect, rel=1e-14)
    assert np.allclose(aging_table(n, cfg), expect, rtol=1e-14)
    assert aging_operator(0, 1, cfg).value == 1.0
    with pytest.raises(DomainError):
        aging_operator(-1, 0, cfg)


def test_aging_operator_distinct_is_diagonal():
    cfg = SystemConfig.build(M=3, K=1, sigma_phi_deg=[1.0, 2.0, 3.0], oscillator_mode="SLO_distinct")
    A = aging_operator(5, 0, cfg)
    assert not A.is_scalar
    assert np.all(np.diff(A.diag) < 0)
    assert A.matrix.shape == (3, 3)


@given(st.integers(0, 500), st.floats(0.0, 0.5), st.floats(0.0, 10.0))
def test_aging_magnitude_at_most_one(n, fd, sd):
    cfg = SystemConfig.build(M=2, K=2, fD_Ts=fd, sigma_phi_deg=sd, sigma_varphi_deg=sd)
    A = aging_table(n, cfg)
    assert np.all(np.abs(A) <= 1.0)


def test_aged_channel_statistics():
    rng = np.random.default_rng(4)
    r = np.array([1.0, 0.2])
    a = 0.6
    g0 = sample_channel(r, rng, size=50000)
    gn = aged_channel(g0, AgingOperator(a, 1, 2), r, rng)
    assert np.allclose(np.mean(np.abs(gn) ** 2, axis=0), r, rtol=0.03)
    corr = np.mean(gn * g0.conj(), axis=0) / r
    assert np.allclose(corr, a, atol=0.02)


def test_aged_channel_dense_matches_diag_law():
    rng = np.random.default_rng(5)
    R = np.array([[1.0, 0.3], [0.3, 0.5]])
    g0 = sample_channel(R, rng, size=40000)
    gn = aged_channel(g0, np.array([0.9, 0.5]), R, rng)
    C = gn.T @ gn.conj() / gn.shape[0]
    assert np.allclose(C, R, atol=0.03)


def test_combined_error_cov():
    out = combined_error_cov(0.5, np.array([0.8, 0.4]), np.array([1.0, 0.5]))
    assert np.allclose(out, [0.8, 0.4])
    with pytest.raises(NumericError):
        combined_error_cov(1.0, np.array([2.0]), np.array([1.0]))


def test_channel_state_phase_rotation():
    cfg = SystemConfig.build(M=3, K=2)
    prof = LargeScaleProfile.isotropic([1.0, 0.5], 3)
    phase = PhaseState(np.array([0.1, 0.2, 0.3]), np.array([0.5, -0.5]), 4)
    st_ = draw_channel_state(cfg, prof, np.random.default_rng(0), phase)
    assert np.allclose(np.abs(st_.g), np.abs(st_.h))
    assert np.allclose(st_.g[1, 0] / st_.h[1, 0], np.exp(0.7j))
