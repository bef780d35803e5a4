import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astrosnn.hardware import (CrossbarView, DriftSpec, FaultSpec,
                               apply_drift, crossbar_current,
                               from_differential, inject_stuck_at,
                               sample_drift_ratios, to_differential)


class TestCrossbarCurrent:
    def test_zero_voltage_gives_zero_current(self):
        g = np.random.default_rng(0).random((8, 5))
        assert np.all(crossbar_current(g, np.zeros(8)) == 0.0)

    def test_single_nonzero_per_column(self):
        g = np.zeros((4, 3))
        g[1, 0] = 2.0
        g[3, 2] = 0.5
        v = np.array([1.0, 4.0, 2.0, 3.0])
        i = crossbar_current(g, v)
        assert i[0] == 2.0 * 4.0
        assert i[1] == 0.0
        assert i[2] == 0.5 * 3.0

    def test_all_one_voltage_reads_column_sums(self):
        # the hardware primitive for reading per-neuron weight sums
        g = np.random.default_rng(1).random((16, 7))
        i = crossbar_current(g, np.ones(16))
        assert np.allclose(i, g.sum(axis=0), rtol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        g = rng.random((10, 4))
        v1, v2 = rng.random(10), rng.random(10)
        a, b = 0.7, -1.3
        lhs = crossbar_current(g, a * v1 + b * v2)
        rhs = a * crossbar_current(g, v1) + b * crossbar_current(g, v2)
        assert np.allclose(lhs, rhs, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            crossbar_current(np.ones((3, 2)), np.ones(4))


class TestDifferentialMapping:
    def test_zero_weight_both_off(self):
        view = to_differential(np.zeros((2, 2)))
        assert np.all(view.g_plus == 0.0)
        assert np.all(view.g_minus == 0.0)

    def test_positive_branch(self):
        view = to_differential(np.array([[0.5]]), scale=1.0)
        assert view.g_plus[0, 0] == 0.5
        assert view.g_minus[0, 0] == 0.0

    def test_inhibitory_constant(self):
        view = to_differential(np.array([[-120.0]]), scale=2.0)
        assert view.g_minus[0, 0] == 240.0
        assert view.g_plus[0, 0] == 0.0

    def test_at_most_one_device_on(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(20, 20))
        view = to_differential(w)
        assert np.all((view.g_plus == 0) | (view.g_minus == 0))

    @given(st.floats(-1e3, 1e3), st.floats(0.1, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, w, scale):
        view = to_differential(np.array([[w]]), scale=scale)
        back = from_differential(view)[0, 0]
        assert abs(back - w) <= 1e-9 * max(1.0, abs(w))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            to_differential(np.array([np.inf]))


class TestStuckAt:
    def test_p_zero_is_identity(self):
        w = np.random.default_rng(4).random((6, 6))
        out, mask = inject_stuck_at(w, FaultSpec(0.0, seed=1))
        assert np.array_equal(out, w)
        assert not mask.any()

    def test_p_one_kills_everything(self):
        w = np.random.default_rng(5).random((6, 6))
        out, mask = inject_stuck_at(w, FaultSpec(1.0, seed=1))
        assert np.all(out == 0.0)
        assert mask.all()

    def test_masked_fraction_concentrates(self):
        w = np.ones((784, 400))
        _, mask = inject_stuck_at(w, FaultSpec(0.7, seed=11))
        assert abs(mask.mean() - 0.7) < 0.01

    def test_deterministic_per_seed(self):
        w = np.ones((50, 50))
        _, m1 = inject_stuck_at(w, FaultSpec(0.3, seed=9))
        _, m2 = inject_stuck_at(w, FaultSpec(0.3, seed=9))
        assert np.array_equal(m1, m2)

    def test_p_fault_validated(self):
        with pytest.raises(ValueError):
            FaultSpec(1.5)


class TestDrift:
    def test_deterministic_slope_scales_weights(self):
        w = np.full((4, 4), 2.0)
        spec = DriftSpec(t_norm=1e4, mu_v=1.0, sigma_v=0.0, seed=0)
        out = apply_drift(w, None, spec)
        assert np.allclose(out, 2.0e-4, rtol=1e-12)

    def test_t_norm_near_one_is_identity(self):
        w = np.random.default_rng(6).random((5, 5))
        spec = DriftSpec(t_norm=1.0 + 1e-12, mu_v=1.0, sigma_v=0.0, seed=0)
        out = apply_drift(w, None, spec)
        assert np.allclose(out, w, rtol=1e-9)

    def test_masked_entries_untouched(self):
        w = np.zeros((10, 10))
        w[0, 0] = 5.0
        mask = np.zeros((10, 10), bool)
        mask[0, 0] = True
        out = apply_drift(w, mask, DriftSpec(seed=3))
        assert out[0, 0] == 5.0

    def test_log_ratio_statistics(self):
        spec = DriftSpec(t_norm=1e4, mu_v=1.0, sigma_v=0.2258, seed=42)
        r = sample_drift_ratios(100_000, spec)
        log10r = np.log10(r)
        assert abs(log10r.mean() - (-4.0)) < 0.01
        assert abs(log10r.std() - 0.9032) < 0.01

    def test_growth_fraction_matches_gaussian_tail(self):
        # negative sampled v gives r > 1; fraction ~ Phi(-mu/sigma)
        from scipy.stats import norm
        spec = DriftSpec(t_norm=1e4, mu_v=1.0, sigma_v=0.5, seed=7)
        n = 200_000
        r = sample_drift_ratios(n, spec)
        expected = norm.cdf(-spec.mu_v / spec.sigma_v)
        sigma = np.sqrt(expected * (1 - expected) / n)
        assert abs((r > 1.0).mean() - expected) < 3 * sigma

    def test_stuck_at_then_drift_commutes_on_mask(self):
        rng = np.random.default_rng(8)
        w = rng.random((30, 30))
        fspec = FaultSpec(0.4, seed=5)
        dspec = DriftSpec(seed=6)
        a, mask = inject_stuck_at(w, fspec)
        a = apply_drift(a, mask, dspec)
        b = apply_drift(w, np.zeros_like(mask), dspec)
        b, _ = inject_stuck_at(b, fspec)
        assert np.array_equal(a[mask], b[mask])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            DriftSpec(t_norm=0.5)
        with pytest.raises(ValueError):
            DriftSpec(sigma_v=-0.1)
