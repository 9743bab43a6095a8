"""Scikit-learn style wrappers.

:class:`FixedPointSolver` treats starting points as samples: ``fit`` runs
the iteration from each row and ``transform`` maps rows to their final
iterates. :class:`HolderRegularityEstimator` fits a Hölder bound and scores
points by how often the bound holds.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import StoppingRule, execute, limit_proxy
from .exceptions import UsageError
from .regularity import estimate_intersection_holder, estimate_operator_holder

__all__ = ["FixedPointSolver", "HolderRegularityEstimator"]


class FixedPointSolver(TransformerMixin, BaseEstimator):
    """Run an iteration plan from each row of ``X``.

    Parameters
    ----------
    plan : IterationPlan
    max_iters : int
    residual_tol : float
    record : {"geometric", "dense"} or int
    limit_iters : int, optional
        When set, unconverged rows are continued to this horizon to build
        limit proxies stored in ``limits_``.

    Attributes
    ----------
    traces_ : list of Trace
    final_ : ndarray of shape (n_samples, n_features)
    n_iter_ : ndarray of int
    limits_ : ndarray or None
    """

    def __init__(self, plan=None, max_iters=10000, residual_tol=1e-13, record="geometric",
                 limit_iters=None):
        self.plan = plan
        self.max_iters = max_iters
        self.residual_tol = residual_tol
        self.record = record
        self.limit_iters = limit_iters

    def _run(self, X):
        if self.plan is None:
            raise UsageError("FixedPointSolver needs a plan")
        X = check_array(X, dtype=float)
        stop = StoppingRule(max_iters=self.max_iters, residual_tol=self.residual_tol)
        return execute(self.plan, X, stop, record=self.record)

    def fit(self, X, y=None):
        traces = self._run(X)
        self.traces_ = traces
        self.final_ = np.array([t.final for t in traces])
        self.n_iter_ = np.array([t.metadata["iterations"] for t in traces])
        self.n_features_in_ = self.final_.shape[1]
        self.limits_ = None
        if self.limit_iters is not None:
            limits = self.final_.copy()
            open_rows = self.n_iter_ >= self.max_iters
            if open_rows.any():
                limits[open_rows] = limit_proxy(self.plan, self.final_[open_rows], self.max_iters,
                                                self.limit_iters, residual_tol=self.residual_tol)
            self.limits_ = limits
        return self

    def transform(self, X):
        """Final iterates started from the rows of ``X``."""
        check_is_fitted(self, "final_")
        return np.array([t.final for t in self._run(X)])


class HolderRegularityEstimator(BaseEstimator):
    """Estimate ``dist <= modulus * residual**gamma`` for an operator or a set family.

    Parameters
    ----------
    op : AveragedOperator, optional
        Target operator (needs ``known_fix``).
    sets : sequence of ConvexSet, optional
        Alternative target: a set family with ``intersection_dist``.
    intersection_dist : callable, optional
    region : (lower, upper)
    num_samples : int
    seed : int

    Attributes
    ----------
    estimate_ : RegularityEstimate
    gamma_, modulus_ : float
    """

    def __init__(self, op=None, sets=None, intersection_dist=None, region=None, num_samples=4000,
                 seed=0):
        self.op = op
        self.sets = sets
        self.intersection_dist = intersection_dist
        self.region = region
        self.num_samples = num_samples
        self.seed = seed

    def fit(self, X=None, y=None):
        """Sample the region and fit; ``X`` is ignored."""
        if self.region is None:
            raise UsageError("region is required")
        if self.op is not None:
            est = estimate_operator_holder(self.op, self.region, self.num_samples, self.seed)
        elif self.sets is not None and self.intersection_dist is not None:
            est = estimate_intersection_holder(self.sets, self.intersection_dist, self.region,
                                               self.num_samples, self.seed)
        else:
            raise UsageError("give either op or sets with intersection_dist")
        self.estimate_ = est
        self.gamma_ = est.gamma
        self.modulus_ = est.modulus
        return self

    def _sides(self, X):
        X = check_array(X, dtype=float)
        if self.op is not None:
            return self.op.known_fix.distance(X), self.op.residual(X)
        return (np.asarray(self.intersection_dist(X), dtype=float),
                np.max(np.stack([c.distance(X) for c in self.sets], axis=-1), axis=-1))

    def predict(self, X):
        """Bound ``modulus * residual**gamma`` at the rows of ``X``."""
        check_is_fitted(self, "estimate_")
        return self.estimate_.bound(self._sides(X)[1])

    def score(self, X, y=None):
        """Fraction of rows where ``dist <= 1.1 * modulus * residual**gamma``."""
        check_is_fitted(self, "estimate_")
        lhs, rhs = self._sides(X)
        return float(np.mean(lhs <= 1.1 * self.estimate_.bound(rhs)))
