import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from splitrate import (
    KM, EpigraphPowerNorm, FixedPointSolver, HalfLine, Halfspace, HolderRegularityEstimator,
    Hyperplane, UsageError, dr_op, projection_op,
)


def _slow_plan():
    # reflections between two lines at a shallow angle: linear but slow
    op = dr_op(Hyperplane([0.0, 1.0], 0.0), Hyperplane([-0.3, 1.0], 0.0))
    return KM(op, 0.5)


class TestFixedPointSolver:
    def test_params_and_clone(self):
        solver = FixedPointSolver(plan=_slow_plan(), max_iters=50)
        assert solver.get_params()["max_iters"] == 50
        copy = clone(solver)
        assert copy.max_iters == 50 and copy is not solver

    def test_fit_transform(self):
        X = np.array([[1.0, 2.0], [-3.0, 0.5]])
        op = projection_op(Halfspace([1.0, 0.0], 0.0))
        solver = FixedPointSolver(plan=KM(op, 0.5), max_iters=60).fit(X)
        assert solver.n_features_in_ == 2
        assert np.allclose(solver.final_, [[0.0, 2.0], [-3.0, 0.5]], atol=1e-12)
        assert np.allclose(solver.transform(X), solver.final_)
        assert len(solver.traces_) == 2 and solver.limits_ is None

    def test_limits(self):
        X = np.array([[1.0, 1.0]])
        solver = FixedPointSolver(plan=_slow_plan(), max_iters=20, residual_tol=1e-14,
                                  limit_iters=10 ** 4).fit(X)
        assert solver.n_iter_[0] == 20
        assert np.linalg.norm(solver.limits_[0]) < 1e-8
        assert np.linalg.norm(solver.final_[0]) > 1e-3

    def test_errors(self):
        with pytest.raises(UsageError):
            FixedPointSolver().fit([[0.0, 0.0]])
        with pytest.raises(NotFittedError):
            FixedPointSolver(plan=_slow_plan()).transform([[0.0, 0.0]])


class TestHolderEstimator:
    region = ([-2.0, -2.0], [2.0, 2.0])

    def test_operator_target(self):
        op = dr_op(Halfspace([0.0, 1.0], 0.0), EpigraphPowerNorm(1, 2),
                   known_fix=HalfLine([0.0, 0.0], [0.0, 1.0]))
        est = HolderRegularityEstimator(op=op, region=self.region, seed=1).fit()
        assert abs(est.gamma_ - 0.5) <= 0.1
        pts = np.random.default_rng(5).uniform(-2, 2, size=(300, 2))
        assert est.predict(pts).shape == (300,)
        assert est.score(pts) >= 0.95

    def test_set_target(self):
        sets = [Hyperplane([1.0, 0.0], 0.0), Hyperplane([1.0, 1.0], 0.0)]
        est = HolderRegularityEstimator(sets=sets, intersection_dist=lambda x: np.linalg.norm(x, axis=-1),
                                        region=([-1.0, -1.0], [1.0, 1.0])).fit()
        assert est.gamma_ == pytest.approx(1.0, abs=0.02)
        assert est.score(np.array([[0.5, 0.1], [-0.2, 0.9]])) == 1.0

    def test_clone_keeps_params(self):
        est = HolderRegularityEstimator(region=self.region, num_samples=500, seed=4)
        assert clone(est).get_params()["num_samples"] == 500

    def test_usage_errors(self):
        with pytest.raises(UsageError):
            HolderRegularityEstimator(op=projection_op(Halfspace([1.0, 0.0], 0.0))).fit()
        with pytest.raises(UsageError):
            HolderRegularityEstimator(region=self.region).fit()
        with pytest.raises(NotFittedError):
            HolderRegularityEstimator(region=self.region).predict([[0.0, 0.0]])
