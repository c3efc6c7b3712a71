import numpy as np
import pytest
from hypothesis import given, strategies as st

from chanaging.channel_model import SystemConfig, sample_channel
from chanaging.errors import ConfigError
from chanaging.estimation import (
    PilotObservation,
    estimate_covariance,
    estimator_gain,
    lmmse_estimate,
    multicell_estimator_gain,
    pilot_observe,
)


@pytest.fixture
def low_snr_cfg():
    # sigma_b2 / p_p = 1
    return SystemConfig.build(M=4, K=2, p_u_dbm=30.0).replace(p_u=0.5, sigma_b2=1.0)


def test_estimator_gain_values():
    assert np.allclose(estimator_gain([1.0, 3.0, 0.0], 1.0), [0.5, 0.75, 0.0])


def test_covariance_of_estimate(low_snr_cfg):
    D = estimate_covariance(np.array([1.0, 3.0, 0.0, 2.0]), low_snr_cfg)
    assert np.allclose(D, [0.5, 2.25, 0.0, 4.0 / 3.0])
    R = np.diag([1.0, 3.0, 0.5, 2.0])
    assert np.allclose(estimate_covariance(R, low_snr_cfg), np.diag([0.5, 2.25, 0.5 / 3, 4 / 3]))


def test_lmmse_orthogonality(low_snr_cfg):
    """Error is uncorrelated with the estimate and has covariance R - D."""
    rng = np.random.default_rng(0)
    R = np.array([[1.0, 0.4, 0.1, 0.0], [0.4, 1.5, 0.2, 0.1], [0.1, 0.2, 0.8, 0.3], [0.0, 0.1, 0.3, 1.2]])
    g0 = sample_channel(R, rng, size=20000)
    est = lmmse_estimate(pilot_observe(g0, low_snr_cfg, rng), R, low_snr_cfg)
    err = g0 - est.g_hat
    cross = err.T @ est.g_hat.conj() / g0.shape[0]
    assert np.linalg.norm(cross, "fro") <= 0.05
    C_err = err.T @ err.conj() / g0.shape[0]
    assert np.allclose(C_err, R - est.D, atol=0.05)
    C_hat = est.g_hat.T @ est.g_hat.conj() / g0.shape[0]
    assert np.allclose(C_hat, est.D, atol=0.05)


def test_dense_and_diag_paths_agree(low_snr_cfg):
    r = np.array([1.0, 2.0, 0.5, 3.0])
    y = np.random.default_rng(1).standard_normal((5, 4)) + 0j
    obs = PilotObservation(y, low_snr_cfg.p_p)
    a = lmmse_estimate(obs, r, low_snr_cfg)
    b = lmmse_estimate(obs, np.diag(r), low_snr_cfg)
    assert np.allclose(a.g_hat, b.g_hat) and np.allclose(np.diag(a.D), b.D)


def test_singular_covariance_restricts_support(low_snr_cfg):
    R = np.diag([1.0, 0.0, 2.0, 0.0])
    obs = PilotObservation(np.ones((1, 4), complex), low_snr_cfg.p_p)
    est = lmmse_estimate(obs, R, low_snr_cfg)
    assert est.support_restricted
    assert np.allclose(est.g_hat[0, [1, 3]], 0.0)


def test_high_snr_estimate_is_observation():
    cfg = SystemConfig.build(M=2, K=1)
    y = np.array([1.0 + 1j, -2.0])
    est = lmmse_estimate(PilotObservation(y, cfg.p_p), np.array([1e-3, 1.0]), cfg)
    assert np.allclose(est.g_hat, y, rtol=1e-9)


def test_zero_pilot_power_rejected():
    cfg = SystemConfig.build(M=2, K=1).replace(p_u=0.0)
    with pytest.raises(ConfigError):
        pilot_observe(np.zeros(2), cfg, np.random.default_rng(0))


@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=8), st.floats(1e-6, 1e3))
def test_estimate_covariance_between_zero_and_R(r, s):
    r = np.array(r)
    D = estimator_gain(r, s) * r
    assert np.all(D >= 0) and np.all(D <= r)


def test_multicell_gain_modes():
    links = np.array([[1.0, 2.0], [0.5, 0.0], [0.25, 1.0]])
    aw = multicell_estimator_gain(links, 0, 1.0, "as_written")
    assert np.allclose(aw, [1 / (1 + 1 + 2 + 4), 1 / (1 + 0.5 + 1)])
    std = multicell_estimator_gain(links, 0, 1.0, "standard")
    assert np.allclose(std, [1.0 / 2.75, 2.0 / 4.0])
    single = multicell_estimator_gain(links[:1], 0, 0.3, "as_written")
    assert np.allclose(single, estimator_gain(links[0], 0.3), rtol=1e-15)
    with pytest.raises(ConfigError):
        multicell_estimator_gain(links, 0, 1.0, "other")
