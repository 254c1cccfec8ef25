import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leakbeam.channel import SystemConfig, eta, generate_channel, make_rng, perfect_csi, quantize_channel
from leakbeam.errors import BracketError, ConfigurationError, DomainError
from leakbeam.leakage import (
    cdf_D,
    cdf_G,
    cdf_V,
    cdf_Z,
    delta_lower_endpoint,
    evaluation_method,
    invert_cdf,
    min_avg_leakage,
    pdf_Z,
    percentile_D,
    percentile_V,
    simulate_zf_leakage,
    threshold_malc,
    threshold_ralc,
)

# Frozen outputs of tests/oracles/leakage_oracle.py: nested mpmath quadrature
# over the elementary laws of Z, G and the fading power, at 30 digits.
PV_ORACLE = [
    (2, 2, 0.1, 0.34390000000000002),
    (3, 2, 0.05, 0.17286963036272322),
    (4, 4, 0.02, 0.13071055405464622),
    (4, 6, 0.05, 0.44324047847431935),
]
PD_ORACLE = [
    (2, 2, 0.3, 0.57873050270053667),
    (4, 4, 0.2, 0.36220577692401876),
    (4, 6, 0.3, 0.64664742536106394),
    (4, 6, 1.0, 0.96105567279617505),
]
PV_INV_08_4_6 = 0.12187848134504573
PD_INV_08_4_6 = 0.47319119672141021
PD_AT_MALC_4_6 = 0.6426456451225101
PV_AT_MALC_4_6 = 0.5946810404359472


class TestBuildingBlocks:
    def test_z_endpoints(self):
        assert cdf_Z(0.0, 4, 6) == 0.0
        assert cdf_Z(1.0, 4, 6) == 1.0

    def test_z_density_integrates(self):
        from scipy import integrate
        val, _ = integrate.quad(pdf_Z, 0, 0.4, args=(4, 3))
        assert val == pytest.approx(cdf_Z(0.4, 4, 3), rel=1e-8)

    def test_g(self):
        assert cdf_G(0.5, 4) == pytest.approx(0.75)
        np.testing.assert_array_equal(cdf_G(np.array([0.3, 1.0]), 2), [0.0, 1.0])

    def test_domains(self):
        with pytest.raises(DomainError):
            cdf_Z(1.5, 4, 6)
        with pytest.raises(DomainError):
            cdf_V(0.1, 1, 2)
        with pytest.raises(DomainError):
            cdf_D(0.1, 4, -1)


class TestLeakageCdfs:
    @pytest.mark.parametrize("N,B,v,ref", PV_ORACLE)
    def test_pv_oracle(self, N, B, v, ref):
        assert cdf_V(v, N, B) == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("N,B,d,ref", PD_ORACLE)
    def test_pd_oracle(self, N, B, d, ref):
        assert cdf_D(d, N, B) == pytest.approx(ref, abs=1e-11)

    @pytest.mark.parametrize("N,B,v,ref", PV_ORACLE)
    def test_pv_numeric_path(self, N, B, v, ref):
        assert cdf_V(v, N, B, method="numeric") == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("N,B,d,ref", PD_ORACLE)
    def test_pd_numeric_path(self, N, B, d, ref):
        assert cdf_D(d, N, B, method="numeric") == pytest.approx(ref, abs=1e-7)

    @given(st.integers(2, 4), st.integers(0, 8), st.floats(1e-4, 0.999))
    def test_two_antennas_reduce_to_z(self, N, B, v):
        if N == 2:
            assert cdf_V(v, 2, B) == pytest.approx(cdf_Z(v, 2, B), abs=1e-12)
        else:
            # V = Z G <= Z, so P_V dominates P_Z
            assert cdf_V(v, N, B) >= cdf_Z(v, N, B) - 1e-12

    @pytest.mark.parametrize("N,B", [(2, 2), (3, 4), (4, 6), (4, 8)])
    def test_closed_equals_numeric(self, N, B):
        v = np.array([1e-4, 0.01, 0.1, 0.5])
        np.testing.assert_allclose(cdf_V(v, N, B), cdf_V(v, N, B, method="numeric"), atol=1e-8)
        d = np.array([1e-3, 0.1, 1.0, 5.0])
        np.testing.assert_allclose(cdf_D(d, N, B), cdf_D(d, N, B, method="numeric"), atol=1e-7)

    @pytest.mark.parametrize("N,B", [(4, 4), (4, 6), (4, 12)])
    def test_endpoints_and_monotone(self, N, B):
        assert cdf_V(0.0, N, B) == 0.0 and cdf_V(1.0, N, B) == 1.0
        assert cdf_D(0.0, N, B) == 0.0
        assert cdf_D(200.0, N, B) == pytest.approx(1.0, abs=1e-12)
        grid = np.linspace(0.0, 0.6, 40)
        assert np.all(np.diff(cdf_V(grid, N, B)) >= -1e-12)
        assert np.all(np.diff(cdf_D(grid * 5, N, B)) >= -1e-12)

    def test_method_selection(self):
        assert evaluation_method(4, 6) == "closed"
        assert evaluation_method(4, 12) == "numeric"

    def test_simulation_matches_mean(self):
        v, d = simulate_zf_leakage(4, 6, 20000, make_rng(0, 3))
        # E[V] = E[Z] E[G] = eta / (N - 1); E[D] = N E[V]
        assert np.mean(v) == pytest.approx(eta(4, 6) / 3, rel=0.05)
        assert np.mean(d) == pytest.approx(4 * eta(4, 6) / 3, rel=0.05)


class TestPercentiles:
    def test_oracle_inverses(self):
        assert percentile_V(0.8, 4, 6) == pytest.approx(PV_INV_08_4_6, rel=1e-8)
        assert percentile_D(0.8, 4, 6) == pytest.approx(PD_INV_08_4_6, rel=1e-8)

    @given(st.floats(0.05, 0.99))
    def test_roundtrip(self, delta):
        assert cdf_V(percentile_V(delta, 4, 4), 4, 4) == pytest.approx(delta, abs=1e-9)
        assert cdf_D(percentile_D(delta, 3, 2), 3, 2) == pytest.approx(delta, abs=1e-9)

    def test_bisection_on_known_function(self):
        x = invert_cdf(lambda t: t ** 2, 0.25, (0.0, 1.0), tol=1e-14)
        assert x == pytest.approx(0.5, abs=1e-7)

    def test_bracket_error(self):
        with pytest.raises(BracketError):
            invert_cdf(lambda t: t, 2.0, (0.0, 1.0))


def _csi(cmi_mode="average", **kw):
    cfg = SystemConfig(cmi_mode=cmi_mode, **kw)
    ch = generate_channel(cfg, make_rng(0, 0, 0))
    return cfg, quantize_channel(ch, cfg)


class TestThresholds:
    def test_min_avg_leakage(self):
        assert min_avg_leakage(3.0, 2.0, 4.0, 4, 6) == pytest.approx(3 * 2 * 4 * eta(4, 6) / 3)

    def test_malc_average(self):
        _, csi = _csi()
        # three interfered UEs with unit gains and A = N
        expected = 25.0 * 3 * 4 * eta(4, 6) / 3
        assert threshold_malc(25.0, csi, 0) == pytest.approx(expected, rel=1e-14)

    def test_ralc_average(self):
        _, csi = _csi()
        assert threshold_ralc(25.0, csi, 1, 0.8) == pytest.approx(75.0 * PD_INV_08_4_6, rel=1e-8)

    def test_ralc_exact_cmi(self):
        _, csi = _csi("perfect")
        others = np.delete(csi.cmi, 2).sum()
        assert threshold_ralc(2.0, csi, 2, 0.8) == pytest.approx(
            2.0 * others * PV_INV_08_4_6, rel=1e-8)

    def test_lower_endpoint(self):
        _, csi = _csi()
        assert delta_lower_endpoint(csi) == pytest.approx(PD_AT_MALC_4_6, abs=1e-11)
        _, csi = _csi("perfect")
        assert delta_lower_endpoint(csi) == pytest.approx(PV_AT_MALC_4_6, abs=1e-12)

    def test_delta_below_endpoint(self):
        _, csi = _csi()
        with pytest.raises(ConfigurationError):
            threshold_ralc(1.0, csi, 0, 0.6)
        with pytest.warns(UserWarning):
            threshold_ralc(1.0, csi, 0, 0.6, allow_low_delta=True)

    def test_ralc_above_malc(self):
        _, csi = _csi()
        assert threshold_ralc(5.0, csi, 0, 0.8) > threshold_malc(5.0, csi, 0)

    def test_single_user(self):
        cfg = SystemConfig(K=1, alpha=(1.0,), xi=(1.0,))
        csi = quantize_channel(generate_channel(cfg, make_rng(0)), cfg)
        assert threshold_malc(1.0, csi, 0) == 0.0
        assert threshold_ralc(1.0, csi, 0, 0.8) == 0.0

    def test_ralc_needs_quantized_cdi(self):
        cfg = SystemConfig()
        csi = perfect_csi(generate_channel(cfg, make_rng(0)))
        with pytest.raises(ConfigurationError):
            threshold_ralc(1.0, csi, 0, 0.8)


class TestReferenceExamples:
    def test_min_avg_leakage_trivial(self):
        assert min_avg_leakage(1.0, 1.0, 1.0, 2, 0) == 0.5
        assert min_avg_leakage(2.0, 1.0, 4.0, 4, 6) == 2 * min_avg_leakage(1.0, 1.0, 4.0, 4, 6)

    def test_min_avg_leakage_monte_carlo(self):
        _, d = simulate_zf_leakage(4, 6, 10 ** 5, make_rng(4, 3))
        sigma = np.std(d) / np.sqrt(d.size)
        # E{|sqrt(A) h w|^2} for unit ZF beams, with E{A} = N
        assert abs(np.mean(d) - min_avg_leakage(1.0, 1.0, 4.0, 4, 6)) <= 3 * sigma

    @given(st.floats(0.0, 1.0))
    def test_z_one_bit_two_antennas(self, z):
        assert cdf_Z(z, 2, 1) == pytest.approx(2 * z - z * z, abs=1e-14)

    def test_z_against_direct_quantization(self):
        rng = make_rng(6)
        n = 20000
        cb = rng.standard_normal((n, 16, 4)) + 1j * rng.standard_normal((n, 16, 4))
        cb /= np.linalg.norm(cb, axis=2, keepdims=True)
        h = rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))
        h /= np.linalg.norm(h, axis=1, keepdims=True)
        z = 1.0 - np.max(np.abs(np.einsum("lcn,ln->lc", cb, h.conj())) ** 2, axis=1)
        from scipy import stats
        assert stats.kstest(z, lambda x: cdf_Z(np.clip(x, 0, 1), 4, 4)).statistic < 0.015

    def test_g_shapes(self):
        assert cdf_G(0.0, 3) == 0.0 and cdf_G(1.0, 3) == 1.0
        assert cdf_G(0.37, 3) == pytest.approx(0.37)
        rng = make_rng(7)
        a = rng.standard_normal((20000, 3)) + 1j * rng.standard_normal((20000, 3))
        b = rng.standard_normal((20000, 3)) + 1j * rng.standard_normal((20000, 3))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        g = np.abs(np.sum(a * b.conj(), axis=1)) ** 2
        from scipy import stats
        assert stats.kstest(g, lambda x: cdf_G(np.clip(x, 0, 1), 4)).statistic < 0.015

    def test_pd_upper_tail(self):
        for N, B in ((2, 2), (4, 4)):
            assert cdf_D(N + 10 * np.sqrt(N), N, B) >= 0.999

    def test_inversion_examples(self):
        assert invert_cdf(lambda x: x, 0.8, (0.0, 1.0)) == pytest.approx(0.8, abs=1e-9)
        v = invert_cdf(lambda x: cdf_V(x, 4, 6), cdf_V(0.3, 4, 6), (0.0, 1.0), tol=1e-14)
        assert v == pytest.approx(0.3, abs=1e-8)

    def test_percentile_against_samples(self):
        v, _ = simulate_zf_leakage(4, 6, 10 ** 5, make_rng(8, 3))
        # binomial standard error of the empirical 80th percentile, in probability
        p_emp = np.mean(v <= percentile_V(0.8, 4, 6))
        assert abs(p_emp - 0.8) <= 4 * np.sqrt(0.8 * 0.2 / v.size)

    def test_quantized_mode_with_nominal_gain(self):
        _, avg = _csi()
        _, q = _csi("quantized", M=1)
        import dataclasses
        q = dataclasses.replace(q, cmi=np.full(4, 4.0))
        assert threshold_malc(3.0, q, 1) == pytest.approx(threshold_malc(3.0, avg, 1))

    def test_ralc_grows_towards_support_edge(self):
        _, csi = _csi()
        caps = [threshold_ralc(1.0, csi, 0, d) for d in (0.7, 0.9, 0.99, 0.999999)]
        assert np.all(np.diff(caps) > 0)
        # V is uniform without feedback bits, so its top percentile is the edge 1
        assert percentile_V(1 - 1e-12, 2, 0) == pytest.approx(1.0, abs=1e-9)
