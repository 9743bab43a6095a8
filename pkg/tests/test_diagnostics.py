import numpy as np
import pytest

from splitrate import (
    AveragedOperator, Halfspace, Hyperplane, KM, StoppingRule, Trace, UsageError, WeightSchedule,
    check_averagedness, check_damped_step_inequalities, check_envelope, check_fejer,
    check_scaled_monotone, errors_to_limit, execute, fit_linear_rate, fit_sublinear_exponent,
    projection_op, rate_constants, ratio_curve, record_times, run_damped_dr, run_quasi_cyclic,
    simulate_dist_recurrence,
)


def synthetic(times, errors, direction=(0.6, 0.8)):
    times = np.asarray(times)
    X = np.asarray(errors, dtype=float)[:, None] * np.asarray(direction)
    return Trace(times=times, iterates=X, residuals=np.zeros(max(int(times[-1]), 0)))


class TestFejer:
    def test_constant_trace(self):
        tr = synthetic(np.arange(10), np.ones(10))
        assert check_fejer(tr, np.zeros(2)).passed

    def test_swapped_iterates_fail_with_index(self):
        err = 0.8 ** np.arange(20)
        err[[5, 6]] = err[[6, 5]]
        rep = check_fejer(synthetic(np.arange(20), err), np.zeros(2))
        assert not rep.passed and rep.first_violation == 6 and rep.first_violation_time == 6

    def test_distance_oracle(self):
        tr = synthetic(np.arange(5), [4.0, 3.0, 2.0, 1.0, 0.0])
        assert check_fejer(tr, lambda X: np.linalg.norm(X, axis=-1)).passed

    def test_engine_run_against_limit(self):
        c = np.cos(np.pi / 4)
        ops = [projection_op(Hyperplane([0.0, 1.0], 0.0)), projection_op(Hyperplane([-c, c], 0.0))]
        tr = run_quasi_cyclic(ops, WeightSchedule.cyclic([0, 1]), [1.0, 3.0], StoppingRule(200, 0.0))
        assert check_fejer(tr, np.zeros(2)).passed

    def test_empty_trace(self):
        tr = Trace(times=np.zeros(0, dtype=int), iterates=np.zeros((0, 2)), residuals=np.zeros(0))
        with pytest.raises(UsageError):
            check_fejer(tr, np.zeros(2))


class TestRateFits:
    def test_geometric_input(self):
        t = np.arange(200)
        rep = fit_linear_rate(synthetic(t, 0.9 ** t), np.zeros(2))
        assert rep.r_fit == pytest.approx(0.9, abs=1e-6) and rep.rho_fit is None
        assert rep.fit_quality == pytest.approx(1.0)

    def test_km_halving(self):
        op = projection_op(Halfspace([1.0, 0.0], 0.0))
        tr = execute(KM(op, 0.5), [2.0, 0.0], StoppingRule(60, 0.0), record="dense")
        assert fit_linear_rate(tr, [0.0, 0.0]).r_fit == pytest.approx(0.5, abs=1e-6)

    def test_alternating_projections_per_iteration(self):
        c = np.cos(np.pi / 4)
        ops = [projection_op(Hyperplane([0.0, 1.0], 0.0)), projection_op(Hyperplane([-c, c], 0.0))]
        tr = run_quasi_cyclic(ops, WeightSchedule.cyclic([0, 1]), [1.0, 3.0], StoppingRule(80, 0.0),
                              record="dense")
        assert fit_linear_rate(tr, np.zeros(2)).r_fit == pytest.approx(np.sqrt(0.5), abs=1e-3)

    def test_power_law(self):
        t = record_times(10 ** 5)
        err = 1.0 / np.sqrt(np.maximum(t, 1))
        rep = fit_sublinear_exponent(synthetic(t, err), np.zeros(2))
        assert rep.rho_fit == pytest.approx(0.5, abs=1e-3)
        assert rep.ratio_curve[-1] == pytest.approx(0.5)

    def test_recurrence_tight_theta_three(self):
        t = record_times(10 ** 5)
        seq = simulate_dist_recurrence(0.5, 3.0, 1, 1.0, 10 ** 5)[t]
        rep = fit_sublinear_exponent(synthetic(t, seq), np.zeros(2))
        assert rep.rho_fit == pytest.approx(0.25, abs=0.05)

    def test_floor_handling(self):
        t = np.arange(400)
        rep = fit_linear_rate(synthetic(t, 0.5 ** t), np.zeros(2))
        assert rep.floor_limited and rep.r_fit == pytest.approx(0.5, abs=1e-6)

    def test_too_few_points(self):
        rep = fit_linear_rate(synthetic(np.arange(3), [0.0, 0.0, 0.0]), np.zeros(2))
        assert np.isnan(rep.rate) and rep.to_dict()["terminal_ratio"] is None

    def test_ratio_curve(self):
        t = np.arange(1, 1000)
        rt, rc = ratio_curve(t, t ** -0.5 * 3.0)
        assert rt[0] == 2
        # with a constant above one the ratio approaches 1/2 from below
        assert np.all(np.diff(rc) > 0) and rc[-1] < 0.5

    def test_errors_to_limit(self):
        tr = synthetic(np.arange(3), [2.0, 1.0, 0.5])
        assert np.allclose(errors_to_limit(tr, np.zeros(2)), [2.0, 1.0, 0.5])


class TestEnvelope:
    def test_geometric_below_envelope(self):
        c = rate_constants(0.5, 1.0, 1, 1.0)
        t = np.arange(100)
        assert check_envelope(synthetic(t, 0.5 * 0.8 ** t), np.zeros(2), c) == 1.0

    def test_recurrence_tight(self):
        c = rate_constants(0.4, 2.0, 2, 1.0)
        t = np.arange(2001)
        seq = simulate_dist_recurrence(0.4, 2.0, 2, 1.0, 2000)
        assert check_envelope(synthetic(t, seq), np.zeros(2), c) == 1.0

    def test_small_modulus_reported(self):
        c = rate_constants(0.4, 2.0, 2, 1.0)
        small = type(c)(**{**c.__dict__, "M1": 1e-3})
        t = np.arange(1, 100)
        frac = check_envelope(synthetic(t, t ** -0.5), np.zeros(2), small)
        assert 0 <= frac < 1


class TestDampedSteps:
    C, D = Halfspace([1.0, 0.0], 0.0), Halfspace([-1.0, 0.0], 0.0)

    def test_in_intersection(self):
        tr = run_damped_dr(self.C, self.D, 1.0, 1.0, [0.0, 2.0], StoppingRule(10, 0.0))
        rep = check_damped_step_inequalities(tr, self.C, self.D, 1.0, [0.0, 2.0])
        assert rep.passed and rep.max_violation == 0.0

    @pytest.mark.parametrize("lam", [1.0, 2.0, [0.5, 1.5]])
    def test_halfspace_pair(self, lam):
        tr = run_damped_dr(self.C, self.D, 1.0, lam, [3.0, 4.0], StoppingRule(300, 0.0))
        rep = check_damped_step_inequalities(tr, self.C, self.D, 1.0, [0.0, 4.0])
        assert rep.passed and rep.step_passed.all()
        assert rep.lambda_inf == pytest.approx(np.min(lam))

    def test_wrong_eta_detected(self):
        tr = run_damped_dr(self.C, self.D, 1.0, 1.0, [3.0, 4.0], StoppingRule(50, 0.0))
        rep = check_damped_step_inequalities(tr, self.C, self.D, 2.0, [0.0, 4.0])
        assert not rep.passed and rep.first_failure == 0

    def test_needs_dense_trace(self):
        tr = run_damped_dr(self.C, self.D, 1.0, 1.0, [3.0, 4.0], StoppingRule(500, 0.0),
                           record="geometric")
        with pytest.raises(UsageError):
            check_damped_step_inequalities(tr, self.C, self.D, 1.0, [0.0, 4.0])


class TestAveragedness:
    def test_projection(self):
        rep = check_averagedness(projection_op(Halfspace([1.0, 0.0], 0.0)), 2)
        assert rep.passed and rep.alpha == 0.5 and rep.num_pairs == 200

    def test_overclaimed_alpha(self):
        shrink = AveragedOperator(lambda x: -x, 0.5)
        assert not check_averagedness(shrink, 2).passed
        # -I is not averaged for any alpha
        assert not check_averagedness(shrink, 2, alpha=0.99).passed


class TestScaledMonotone:
    def test_decreasing_series(self):
        t = record_times(10 ** 4)
        err = 1.0 / np.sqrt(np.maximum(t, 1))
        assert check_scaled_monotone(synthetic(t, err), np.zeros(2), 0.25, burn_in=100)
        assert not check_scaled_monotone(synthetic(t, err), np.zeros(2), 0.75, burn_in=100)

    def test_converged_trace_counts_as_monotone(self):
        t = np.arange(10)
        assert check_scaled_monotone(synthetic(t, np.zeros(10)), np.zeros(2), 0.25, burn_in=0)
        assert check_scaled_monotone(synthetic(t, np.ones(10)), np.zeros(2), 0.25, burn_in=100)
