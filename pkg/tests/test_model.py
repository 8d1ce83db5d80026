import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leoprecode.model import (CONTINUOUS, Architecture, ConfigError, PowerModel, SystemConfig,
                              array_response, db_to_linear, link_budget_gamma, noise_power,
                              parse_resolution, sample_channel, sample_channel_gain,
                              sample_space_angles, total_power, transmit_power_static)

angles = st.floats(min_value=-1.0, max_value=1.0, exclude_max=True)


class TestArrayResponse:
    def test_zero_angle_uniform(self):
        np.testing.assert_allclose(array_response(0, 0, 2, 2), [0.5] * 4, atol=1e-15)

    def test_half_wavelength_flip(self):
        np.testing.assert_allclose(array_response(1, 0, 2, 1), np.array([1, -1]) / np.sqrt(2), atol=1e-15)

    def test_kron_order(self):
        # x index is the slow one
        v = array_response(0.3, 0.0, 3, 2)
        np.testing.assert_allclose(v[0], v[1])
        np.testing.assert_allclose(v[2] / v[0], np.exp(-1j * np.pi * 0.3))

    @given(angles, angles, st.integers(1, 13), st.integers(1, 13))
    def test_unit_norm(self, tx, ty, nx, ny):
        assert abs(np.linalg.norm(array_response(tx, ty, nx, ny)) - 1.0) < 1e-12

    def test_unit_norm_1000_pairs(self, rng):
        for tx, ty in rng.uniform(-1, 1, size=(1000, 2)):
            assert abs(np.linalg.norm(array_response(tx, ty, 12, 12)) - 1.0) < 1e-12


class TestSampling:
    def test_angles_deterministic(self):
        a = sample_space_angles(np.random.default_rng(5), 9)
        b = sample_space_angles(np.random.default_rng(5), 9)
        np.testing.assert_array_equal(a, b)

    def test_angles_uniform_moments(self, rng):
        a = sample_space_angles(rng, 100_000)
        assert np.all((a >= -1) & (a < 1))
        assert np.all(np.abs(a.mean(axis=0)) <= 0.02)
        frac = np.mean(a < 0, axis=0)
        assert np.all(np.abs(frac - 0.5) <= 0.01)

    def test_gain_zero_power(self, rng):
        assert np.all(sample_channel_gain(rng, 63.1, 0.0, size=100) == 0)

    @pytest.mark.parametrize("kappa", [0.0, 63.1])
    def test_gain_mean_power(self, rng, kappa):
        g = sample_channel_gain(rng, kappa, 1.0, size=100_000)
        assert 0.98 <= np.mean(np.abs(g) ** 2) <= 1.02

    def test_gain_los_limit(self, rng):
        g = sample_channel_gain(rng, 1e9, 1.0, size=10_000)
        assert np.all(np.abs(np.abs(g) - 1.0) < 1e-3)

    def test_gain_per_user_shape(self, rng):
        g = sample_channel_gain(rng, 10.0, np.array([1.0, 4.0, 9.0]), size=50_000)
        assert g.shape == (50_000, 3)
        np.testing.assert_allclose(np.mean(np.abs(g) ** 2, axis=0), [1, 4, 9], rtol=0.03)

    def test_channel_state(self):
        cfg = SystemConfig()
        ch = sample_channel(cfg, np.random.default_rng(0))
        assert ch.v.shape == (144, 9)
        np.testing.assert_allclose(np.linalg.norm(ch.v, axis=0), 1.0, atol=1e-12)
        for k in range(ch.k_users):
            c = ch.gamma[k] * np.outer(ch.v[:, k], ch.v[:, k].conj())
            assert np.linalg.matrix_rank(c, tol=1e-12 * ch.gamma[k]) == 1
            assert abs(np.trace(c).real - ch.gamma[k]) <= 1e-12 * ch.gamma[k]


class TestLinkBudget:
    def test_reference_value(self):
        cfg = SystemConfig(gain_sat=2.0)
        assert link_budget_gamma(cfg, 1e6) == pytest.approx(4.1035e-14, rel=1e-4)

    def test_inverse_square(self):
        cfg = SystemConfig()
        assert link_budget_gamma(cfg, 2e6) * 4 == pytest.approx(link_budget_gamma(cfg, 1e6), rel=1e-14)

    def test_zero_ut_gain(self):
        assert link_budget_gamma(SystemConfig(gain_ut=0.0), 1e6) == 0.0

    @pytest.mark.parametrize("d", [0.0, -5.0])
    def test_rejects_nonpositive_distance(self, d):
        with pytest.raises(ValueError):
            link_budget_gamma(SystemConfig(), d)

    def test_monotone_and_linear(self):
        cfg = SystemConfig()
        ds = np.linspace(5e5, 2e6, 20)
        g = [link_budget_gamma(cfg, d) for d in ds]
        assert all(a > b for a, b in zip(g, g[1:]))
        base = link_budget_gamma(cfg, 1e6)
        assert link_budget_gamma(cfg.with_(gain_sat=3 * cfg.gain_sat), 1e6) == pytest.approx(3 * base)
        assert link_budget_gamma(cfg.with_(gain_ut=0.5), 1e6) == pytest.approx(0.5 * base)
        assert link_budget_gamma(cfg.with_(n_tx_x=6), 1e6) == pytest.approx(0.5 * base)


class TestNoise:
    def test_reference_value(self):
        assert noise_power(SystemConfig()) == pytest.approx(8.28e-14, rel=1e-12)

    def test_zero_bandwidth(self):
        assert noise_power(SystemConfig(bandwidth_hz=0.0)) == 0.0

    def test_linear_in_temperature(self):
        cfg = SystemConfig()
        assert noise_power(cfg.with_(noise_temp_k=600.0)) == pytest.approx(2 * noise_power(cfg))


class TestPowerModel:
    def test_rf_chain(self):
        assert PowerModel().p_rfc_mw == 338.0

    @pytest.mark.parametrize("arch, expected_mw", [
        (Architecture.FULLY_CONNECTED, 29_167.0),
        (Architecture.PARTIALLY_CONNECTED, 6_127.0),
        (Architecture.FULLY_DIGITAL, 48_877.0),
    ])
    def test_reference_static_power(self, arch, expected_mw):
        p = transmit_power_static(arch, 9, 4, PowerModel(), 144)
        assert p == pytest.approx(expected_mw * 1e-3, rel=1e-12)

    def test_digital_ignores_hybrid_args(self):
        pm = PowerModel()
        assert transmit_power_static("digital", 3, None, pm, 144) == transmit_power_static("digital", 36, 2, pm, 144)

    @given(st.integers(1, 64), st.sampled_from([2, 3, 4, "inf"]))
    def test_fully_minus_partial(self, m_rf, res):
        pm = PowerModel()
        diff = (transmit_power_static("fully", m_rf, res, pm, 144)
                - transmit_power_static("partially", m_rf, res, pm, 144))
        expected = 144 * (m_rf - 1) * pm.p_ps_mw[parse_resolution(res)] * 1e-3
        assert diff == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_unknown_resolution(self):
        with pytest.raises(KeyError):
            transmit_power_static("fully", 9, 5, PowerModel(), 144)

    def test_validate(self):
        PowerModel().validate()
        with pytest.raises(ConfigError):
            PowerModel(p_dac_mw=-1).validate()
        with pytest.raises(ConfigError):
            PowerModel(p_ps_mw={2: 30, 3: 16, 4: 20, "inf": 25}).validate()

    def test_from_mapping(self):
        pm = PowerModel.from_mapping({"p_ps_4_mw": 22, "p_ps_inf_mw": 30, "p_lo_mw": 6})
        assert pm.p_ps_mw[4.0] == 22 and pm.p_ps_mw[CONTINUOUS] == 30 and pm.p_ps_mw[2.0] == 12
        assert pm.p_lo_mw == 6


class TestTotalPower:
    def test_zero_precoder(self):
        assert total_power(np.zeros((4, 2)), 2.0, 6.127) == 6.127

    def test_arithmetic(self):
        b = np.zeros((4, 2), complex)
        b[0, 0] = np.sqrt(10.0)
        assert total_power(b, 2.0, 6.127) == pytest.approx(26.127)

    def test_quadratic_scaling(self, rng):
        b = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        r = np.sum(np.abs(b) ** 2)
        assert total_power(np.sqrt(2) * b, 2.0, 1.0) - total_power(b, 2.0, 1.0) == pytest.approx(2.0 * r)


class TestConfig:
    def test_defaults_valid(self):
        cfg = SystemConfig().validate(Architecture.PARTIALLY_CONNECTED)
        assert cfg.n_tx == 144 and cfg.k_users == 9 and len(cfg.distances_m) == 9
        assert cfg.rician_kappa == pytest.approx(63.0957, rel=1e-5)

    @pytest.mark.parametrize("changes", [
        dict(m_rf=8), dict(m_rf=145), dict(xi=0.5), dict(bandwidth_hz=0.0),
        dict(distances_m=(1e6,) * 8), dict(boltzmann=-1.0), dict(k_users=0),
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            SystemConfig(**changes).validate()

    def test_partial_divisibility(self):
        SystemConfig(m_rf=10).validate(Architecture.FULLY_CONNECTED)
        with pytest.raises(ConfigError):
            SystemConfig(m_rf=10).validate(Architecture.PARTIALLY_CONNECTED)

    def test_from_mapping_db(self):
        cfg = SystemConfig.from_mapping({"rician_kappa_db": 18, "gain_sat_db": 3, "power_budget_dbw": 10})
        assert cfg.rician_kappa == pytest.approx(db_to_linear(18))
        assert cfg.power_budget_w == pytest.approx(10.0)

    def test_with_users_resizes_distances(self):
        assert len(SystemConfig().with_(k_users=4, m_rf=4).distances_m) == 4

    def test_parse_resolution(self):
        assert math.isinf(parse_resolution("inf")) and math.isinf(parse_resolution(None))
        assert parse_resolution("4") == 4.0
        with pytest.raises(ConfigError):
            parse_resolution(2.5)
