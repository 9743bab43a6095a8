import numpy as np
import pytest

from splitrate import (
    AveragedOperator, Ball, Box, EpigraphPowerNorm, HalfLine, Halfspace, Hyperplane, SinglePoint,
    UsageError, VipProblem, ViaSet, anchored_dr_chain, ball_line_discrepancy, ball_line_sets,
    check_averagedness, compose_dr_chain, convex_combination, cyclic_dr_chain, dr_closed_form_ball_line,
    dr_op, extrapolation_transform, forward_backward_op, identity_op, km_relax, project,
    projection_op, reflect, regularized_dr_op,
)


def stepwise_dr(C, D, x):
    return 0.5 * (x + reflect(D, reflect(C, x)))


class TestProjectionOp:
    def test_halfspace_fixed_set_and_alpha(self):
        op = projection_op(Halfspace([1.0, 0.0], 0.0))
        assert op.alpha == 0.5
        assert isinstance(op.known_fix, ViaSet)
        assert np.allclose(op([-2.0, 3.0]), [-2.0, 3.0])
        assert np.allclose(op([2.0, 3.0]), [0.0, 3.0])

    def test_ball(self):
        assert np.allclose(projection_op(Ball([-1.0, 0.0], 1.0))([1.0, 0.0]), [0.0, 0.0])


class TestDrOp:
    @pytest.mark.parametrize("x, expected", [
        ([1.0, 1.0], [0.0, 1.0]),
        ([-2.0, 0.0], [-2.0, 0.0]),
        ([-2.0, 1.0], [(1 - 1 / np.sqrt(10)) * -3.0, 1 / np.sqrt(10)]),
    ])
    def test_ball_line_examples(self, x, expected):
        T = dr_op(*ball_line_sets())
        assert np.allclose(T(x), expected, atol=1e-12)

    def test_matches_stepwise_composition(self, rng):
        C, D = ball_line_sets()
        X = rng.uniform(-100, 100, size=(2000, 2))
        assert np.max(np.abs(dr_op(C, D)(X) - stepwise_dr(C, D, X))) < 1e-12

    def test_residual_uses_accurate_displacement(self):
        C, D = ball_line_sets()
        T = dr_op(C, D)
        x = np.array([[-3.0, 1e-9]])
        assert T.residual(x)[0] == pytest.approx(np.linalg.norm(x - T(x)), rel=1e-5)

    def test_ex61_fixed_points(self):
        T = dr_op(Halfspace([0.0, 0.0, 1.0], 0.0), EpigraphPowerNorm(2, 4))
        ray = np.column_stack([np.zeros((50, 2)), np.linspace(0, 10, 50)])
        assert np.max(np.abs(T(ray) - ray)) < 1e-10

    def test_ball_line_ray_fixed(self):
        T = dr_op(*ball_line_sets())
        ray = np.column_stack([np.linspace(-50, 0, 100), np.zeros(100)])
        assert np.max(np.abs(T(ray) - ray)) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            dr_op(Ball([0.0], 1.0), Ball([0.0, 0.0], 1.0))


class TestPrintedClosedForm:
    def test_documented_disagreements(self):
        assert np.allclose(dr_closed_form_ball_line([1.0, 1.0]), [-1.0, 1.0])
        assert np.allclose(dr_closed_form_ball_line([-3.0, 0.0]), [0.0, 0.0])
        assert np.allclose(dr_closed_form_ball_line([0.0, 0.0]), [0.0, 0.0])
        assert np.allclose(dr_op(*ball_line_sets())([0.0, 0.0]), [0.0, 0.0])

    def test_discrepancy_report(self, rng):
        pts = np.vstack([rng.uniform(-5, 5, size=(200, 2)), [[-1.0, 0.0], [-4.0, 0.0]]])
        rep = ball_line_discrepancy(pts)
        assert rep["authoritative"] == "composition"
        assert rep["ray_points"] == 2
        assert rep["composition_ray_defect"] < 1e-12
        assert rep["printed_ray_defect"] == pytest.approx(4.0)
        assert rep["fraction_disagreeing"] > 0.5

    def test_composition_equals_reversed_ordering_with_mirrored_ball(self, rng):
        # T_{line, ball(-1,0)} coincides with T_{ball(1,0), line}
        X = rng.uniform(-20, 20, size=(1000, 2))
        a = dr_op(Hyperplane([1.0, 0.0], 0.0), Ball([-1.0, 0.0], 1.0))(X)
        b = dr_op(Ball([1.0, 0.0], 1.0), Hyperplane([1.0, 0.0], 0.0))(X)
        assert np.max(np.abs(a - b)) < 1e-12


class TestKmRelax:
    def test_example(self):
        op = km_relax(projection_op(Halfspace([1.0, 0.0], 0.0)), 0.5)
        assert np.allclose(op([2.0, 0.0]), [1.0, 0.0])
        assert op.alpha == pytest.approx(0.25)

    def test_fixed_points_preserved(self, rng):
        base = projection_op(Ball([0.0, 0.0], 1.0))
        op = km_relax(base, 0.7)
        inside = rng.uniform(-0.7, 0.7, size=(100, 2))
        assert np.allclose(op(inside), inside)
        outside = np.array([[3.0, 0.0]])
        assert not np.allclose(op(outside), outside)

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.1])
    def test_invalid(self, lam):
        with pytest.raises(UsageError):
            km_relax(identity_op(), lam)


class TestForwardBackward:
    @pytest.fixture
    def lcp(self):
        return VipProblem(lambda x: x - 1.0, 1.0, Box([0.0], [np.inf]), solution=[1.0])

    def test_examples(self, lcp):
        assert np.allclose(forward_backward_op(lcp, 1.0)([5.0]), [1.0])
        assert np.allclose(forward_backward_op(lcp, 1.0)([1.0]), [1.0])
        assert np.allclose(forward_backward_op(lcp, 0.5)([0.0]), [0.5])

    def test_solution_wrapped(self, lcp):
        assert isinstance(lcp.solution, SinglePoint)

    def test_vip_residual_at_solution(self, lcp):
        for gamma in (0.3, 1.0, 1.9):
            assert forward_backward_op(lcp, gamma).residual([1.0]) <= 1e-10

    @pytest.mark.parametrize("gamma", [0.0, 2.0, 2.5, -1.0])
    def test_step_range(self, lcp, gamma):
        with pytest.raises(UsageError):
            forward_backward_op(lcp, gamma)

    def test_alpha_grows_past_the_modulus(self, lcp):
        assert forward_backward_op(lcp, 0.5).alpha == pytest.approx(2 / 3)
        assert forward_backward_op(lcp, 1.0).alpha == pytest.approx(2 / 3)
        assert forward_backward_op(lcp, 1.9).alpha == pytest.approx(1 / (2 - 0.95))

    def test_cocoercivity(self, lcp):
        assert lcp.cocoercivity_defect(1) <= 1e-12
        bad = VipProblem(lambda x: 3.0 * x, 1.0)
        assert bad.cocoercivity_defect(1) > 0

    def test_zero_function_prox(self):
        prob = VipProblem(lambda x: x, 1.0)
        assert np.allclose(prob.prox_f([2.0, -1.0], 0.5), [2.0, -1.0])


class TestRegularizedDr:
    def test_identical_sets_fix_members(self):
        C = Ball([0.0, 0.0], 1.0)
        assert np.allclose(regularized_dr_op(C, C, 0.3)([0.2, 0.1]), [0.2, 0.1])

    def test_disjoint_halfspaces_against_composition(self, rng):
        C, D = Halfspace([1.0, 0.0], -1.0), Halfspace([-1.0, 0.0], -1.0)
        op = regularized_dr_op(C, D, 0.5)
        X = rng.uniform(-5, 5, size=(200, 2))
        oracle = 0.5 * project(C, X) + 0.5 * stepwise_dr(C, D, X)
        assert np.max(np.abs(op(X) - oracle)) < 1e-12
        # gap vector: nearest point of D - C = {x1 >= 2} to the origin
        assert np.allclose(project(Halfspace([-1.0, 0.0], -2.0), [0.0, 0.0]), [2.0, 0.0])

    @pytest.mark.parametrize("beta", [0.0, 1.0])
    def test_beta_range(self, beta):
        with pytest.raises(UsageError):
            regularized_dr_op(Ball([0.0], 1.0), Ball([1.0], 1.0), beta)


class TestChains:
    def test_alpha_formula(self):
        T = dr_op(*ball_line_sets())
        assert compose_dr_chain([T]).alpha == 0.5
        assert compose_dr_chain([T, T]).alpha == pytest.approx(2 / 3)
        assert compose_dr_chain([T, T, T]).alpha == pytest.approx(3 / 4)

    def test_cyclic_order(self, rng):
        sets = [Ball([0.0, 0.0], 1.0), Ball([1.5, 0.0], 1.0), Halfspace([0.0, 1.0], 0.2)]
        X = rng.uniform(-3, 3, size=(100, 2))
        y = dr_op(sets[0], sets[1])(X)
        y = dr_op(sets[1], sets[2])(y)
        y = dr_op(sets[2], sets[0])(y)
        assert np.allclose(cyclic_dr_chain(sets)(X), y)
        z = dr_op(sets[0], sets[2])(dr_op(sets[0], sets[1])(X))
        assert np.allclose(anchored_dr_chain(sets)(X), z)

    @pytest.mark.parametrize("p", [2, 3])
    def test_chain_averagedness(self, p):
        sets = [Ball([0.0, 0.0], 1.0), Ball([1.5, 0.0], 1.0), Halfspace([0.0, 1.0], 0.2)]
        op = compose_dr_chain([dr_op(sets[j], sets[(j + 1) % 3]) for j in range(p)])
        assert check_averagedness(op, 2).passed

    def test_errors(self):
        with pytest.raises(UsageError):
            compose_dr_chain([])
        with pytest.raises(UsageError):
            compose_dr_chain([km_relax(projection_op(Ball([0.0], 1.0)), 0.5)])


class TestConvexCombination:
    def test_alpha_is_max(self):
        a = km_relax(projection_op(Ball([0.0], 1.0)), 0.5)
        b = projection_op(Ball([0.0], 1.0))
        assert convex_combination([a, b], [0.5, 0.5]).alpha == 0.5

    def test_invalid_weights(self):
        ops = [identity_op(), identity_op()]
        with pytest.raises(UsageError):
            convex_combination(ops, [0.5, 0.6])
        with pytest.raises(UsageError):
            convex_combination(ops, [1.5, -0.5])


class TestExtrapolation:
    def test_identity_when_alpha_matches(self):
        op = projection_op(Ball([0.0], 1.0))
        assert extrapolation_transform([op], 0.5)[0] is op

    def test_projection_example(self, rng):
        P = projection_op(Halfspace([1.0, -1.0], 0.5))
        (Tbar,) = extrapolation_transform([P], 0.75)
        X = rng.uniform(-10, 10, size=(500, 2))
        assert np.allclose(Tbar(X), 1.5 * P(X) - 0.5 * X, atol=1e-12)
        assert np.max(np.abs(Tbar.residual(X) - 1.5 * P.residual(X))) < 1e-12
        inside = P(X)
        assert np.allclose(Tbar(inside), inside, atol=1e-12)
        assert check_averagedness(Tbar, 2).passed

    def test_rejects_small_alpha_bar(self):
        op = km_relax(projection_op(Ball([0.0], 1.0)), 0.9)
        with pytest.raises(UsageError):
            extrapolation_transform([op], 0.4)
        with pytest.raises(UsageError):
            extrapolation_transform([op], 1.0)


class TestAveragedOperator:
    def test_alpha_range(self):
        with pytest.raises(UsageError):
            AveragedOperator(lambda x: x, 1.0)
        with pytest.raises(UsageError):
            AveragedOperator(lambda x: x, 0.0)

    def test_halfline_fix(self):
        fix = HalfLine([0.0, 0.0], [-2.0, 0.0])
        assert np.allclose(fix.project([[3.0, 1.0], [-3.0, 1.0]]), [[0.0, 0.0], [-3.0, 0.0]])
        assert np.allclose(fix.distance([[3.0, 4.0]]), [5.0])

    def test_wrongly_declared_alpha_detected(self):
        # reflection through a line is nonexpansive but not averaged
        refl = AveragedOperator(lambda x: reflect(Hyperplane([1.0, 0.0], 0.0), x), 0.5)
        assert not check_averagedness(refl, 2).passed
