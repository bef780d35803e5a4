import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astrosnn.macro import (RepairMeasurement, RepairTrajectoryParams,
                            fault_severity, fit_q_z, measure_repair_ratio,
                            repair_ratio, repair_ratio_fit,
                            repair_trajectory, temporal_intercept)


class TestFaultSeverity:
    def test_no_fault_gives_one(self):
        assert fault_severity([0.2, 0.5], [False, False]) == 1.0

    def test_direct_evaluation(self):
        z = fault_severity([0.2, 0.3, 0.5], [False, False, True])
        assert z == pytest.approx(0.5, abs=1e-12)

    def test_all_disabled_gives_zero(self):
        assert fault_severity([0.4, 0.6], [True, True]) == 0.0

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            fault_severity([0.0, 0.0], [False, False])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fault_severity([], [])


class TestRepairRatios:
    @pytest.mark.parametrize("z,expected", [
        (1.0, 1.03 / 1.04),
        (0.5, 1.03 / 0.54),
        (0.1, 1.03 / 0.14),
    ])
    def test_empirical_fit_values(self, z, expected):
        assert repair_ratio_fit(z) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("z,expected", [(1.0, 1.0), (0.5, 2.0),
                                            (0.25, 4.0)])
    def test_inverse_rule(self, z, expected):
        assert repair_ratio(z) == expected

    def test_domain_errors(self):
        for fn in (repair_ratio, repair_ratio_fit):
            with pytest.raises(ValueError):
                fn(0.0)
            with pytest.raises(ValueError):
                fn(-0.2)

    def test_rules_agree_within_ten_percent_on_operating_range(self):
        for z in np.linspace(0.3, 1.0, 50):
            assert abs(repair_ratio_fit(z) / repair_ratio(z) - 1.0) < 0.10

    def test_strictly_decreasing(self):
        zs = np.linspace(0.05, 1.0, 100)
        qs = [repair_ratio(z) for z in zs]
        assert all(a > b for a, b in zip(qs, qs[1:]))


class TestTemporalIntercept:
    def test_direct_values(self):
        assert temporal_intercept(2.0, 1.0) == pytest.approx(math.log(2))
        assert temporal_intercept(1.1, 10.0) == pytest.approx(
            -10 * math.log(1 / 11), rel=1e-12)

    def test_large_q_limit(self):
        assert temporal_intercept(1e9, 1.0) < 1e-8

    def test_q_at_most_one_rejected(self):
        with pytest.raises(ValueError):
            temporal_intercept(1.0, 1.0)
        with pytest.raises(ValueError):
            temporal_intercept(0.5, 1.0)

    @given(st.floats(1.0000001, 100.0))
    @settings(max_examples=200, deadline=None)
    def test_continuity_identity(self, q):
        # 1 - exp(-t_b/tau) == 1/q, exact up to rounding
        tau = 3.7
        t_b = temporal_intercept(q, tau)
        assert abs((1.0 - math.exp(-t_b / tau)) - 1.0 / q) < 1e-12


class TestRepairTrajectory:
    def params(self, q=2.0, tau=20.0, t_fault=200.0, pr_bf=0.4):
        return RepairTrajectoryParams(q=q, tau=tau, t_fault=t_fault,
                                      pr_bf=pr_bf)

    def test_continuous_at_fault(self):
        p = self.params()
        just_after = repair_trajectory(p, p.t_fault + 1e-9)
        assert just_after == pytest.approx(p.pr_bf, rel=1e-6)

    def test_asymptote(self):
        p = self.params()
        assert repair_trajectory(p, p.t_fault + 1e6) == pytest.approx(
            p.q * p.pr_bf, rel=1e-12)

    def test_hand_evaluated_point(self):
        # q=2, pr_bf=0.4, tau=20: at t-t_fault=20, t_b=20*ln2 so the
        # exponent is -(1+ln2) and pr = 0.8*(1 - exp(-1)/2)
        p = self.params()
        expected = 0.8 * (1.0 - math.exp(-1.0) / 2.0)
        assert repair_trajectory(p, 220.0) == pytest.approx(expected,
                                                            abs=1e-12)

    def test_strictly_increasing_and_bounded(self):
        p = self.params()
        ts = np.linspace(p.t_fault + 0.1, p.t_fault + 300, 200)
        vals = [repair_trajectory(p, t) for t in ts]
        assert all(a < b for a, b in zip(vals, vals[1:]))
        assert all(v < p.q * p.pr_bf for v in vals)

    def test_before_fault_rejected(self):
        with pytest.raises(ValueError):
            repair_trajectory(self.params(), 100.0)


class _FakeTrace:
    def __init__(self, pr, dt_ms=1.0, disabled=None):
        self.pr = pr
        self.dt_ms = dt_ms
        self.disabled = disabled if disabled is not None else \
            np.zeros(pr.shape[1:], bool)


class TestMeasureRepairRatio:
    def test_constant_trace_gives_one(self):
        pr = np.full((1000, 2, 3), 0.4)
        q = measure_repair_ratio(_FakeTrace(pr), (0.0, 0.3), (0.6, 1.0))
        assert np.allclose(q, 1.0, rtol=1e-12)

    def test_doubling_trace_gives_two(self):
        pr = np.full((1000, 2, 3), 0.2)
        pr[500:] = 0.4
        q = measure_repair_ratio(_FakeTrace(pr), (0.0, 0.5), (0.5, 1.0))
        assert np.allclose(q, 2.0, rtol=1e-12)

    def test_disabled_marked_nan(self):
        pr = np.full((100, 2, 2), 0.5)
        disabled = np.zeros((2, 2), bool)
        disabled[1, 0] = True
        q = measure_repair_ratio(_FakeTrace(pr, disabled=disabled),
                                 (0.0, 0.05), (0.05, 0.1))
        assert np.isnan(q[1, 0]) and q[1, 1] == pytest.approx(1.0)

    def test_zero_bf_mean_rejected(self):
        pr = np.zeros((100, 2, 2))
        pr[50:] = 0.5
        with pytest.raises(ValueError, match="BF mean"):
            measure_repair_ratio(_FakeTrace(pr), (0.0, 0.05), (0.05, 0.1))

    def test_window_outside_duration_rejected(self):
        pr = np.full((100, 2, 2), 0.5)
        with pytest.raises(ValueError, match="window"):
            measure_repair_ratio(_FakeTrace(pr), (0.0, 0.05), (0.05, 0.2))


class TestFitQZ:
    def synthetic(self, a, b, zs, seeds=None):
        return [RepairMeasurement(z=z, q=a / (z + b),
                                  run_seed=i if seeds is None else seeds[i])
                for i, z in enumerate(zs)]

    def test_recovers_paper_coefficients(self):
        zs = np.linspace(0.1, 1.0, 40)
        a, b, rms = fit_q_z(self.synthetic(1.03, 0.04, zs))
        assert a == pytest.approx(1.03, abs=1e-6)
        assert b == pytest.approx(0.04, abs=1e-6)
        assert rms < 1e-9

    def test_recovers_pure_inverse(self):
        zs = np.linspace(0.2, 1.0, 30)
        a, b, _ = fit_q_z(self.synthetic(1.0, 0.0, zs))
        assert a == pytest.approx(1.0, abs=1e-9)
        assert b == pytest.approx(0.0, abs=1e-9)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError, match=">= 10"):
            fit_q_z(self.synthetic(1.0, 0.0, np.linspace(0.3, 1.0, 5)))

    def test_degenerate_rejected(self):
        ms = [RepairMeasurement(z=0.5, q=2.0, run_seed=i) for i in range(12)]
        with pytest.raises(ValueError, match="degenerate"):
            fit_q_z(ms)

    def test_narrow_range_rejected(self):
        zs = np.linspace(0.5, 0.7, 15)
        with pytest.raises(ValueError, match="range width"):
            fit_q_z(self.synthetic(1.0, 0.0, zs))

    def test_measurement_validation(self):
        with pytest.raises(ValueError):
            RepairMeasurement(z=0.0, q=1.0)
        with pytest.raises(ValueError):
            RepairMeasurement(z=0.5, q=0.0)
        with pytest.raises(ValueError):
            RepairMeasurement(z=1.2, q=1.0)
