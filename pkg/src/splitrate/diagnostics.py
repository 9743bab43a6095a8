"""Checks and rate fits over recorded traces.

Everything here is a pure function of a :class:`~splitrate.engine.Trace`
(or of an operator, for the averagedness check) and returns a small report
object rather than raising on a failed check.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import UsageError
from .regularity import envelope

__all__ = [
    "ERROR_FLOOR",
    "FejerReport",
    "RateReport",
    "DampedStepReport",
    "AveragednessReport",
    "errors_to_limit",
    "ratio_curve",
    "check_fejer",
    "fit_linear_rate",
    "fit_sublinear_exponent",
    "check_envelope",
    "check_damped_step_inequalities",
    "check_averagedness",
    "check_scaled_monotone",
]

ERROR_FLOOR = 1e-15
FEJER_SLACK = 1e-9
ENVELOPE_SLACK = 1e-12
STEP_SLACK = 1e-8
MIN_WINDOW = 30


@dataclass
class FejerReport:
    passed: bool
    first_violation: Optional[int]
    first_violation_time: Optional[int]
    max_increase: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class RateReport:
    """Fitted convergence rate of one trace.

    ``rate`` is ``r_fit`` for ``kind == "linear"`` (per-iteration factor) and
    ``rho_fit`` for ``kind == "sublinear"`` (error ~ ``t**-rho``).
    """

    kind: str
    rate: float
    window: tuple
    fit_quality: float
    times: np.ndarray
    errors_to_limit: np.ndarray
    ratio_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ratio_curve: np.ndarray = field(default_factory=lambda: np.zeros(0))
    envelope_check: Optional[float] = None
    floor_limited: bool = False

    @property
    def r_fit(self):
        return self.rate if self.kind == "linear" else None

    @property
    def rho_fit(self):
        return self.rate if self.kind == "sublinear" else None

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate, "window": list(self.window),
                "fit_quality": self.fit_quality, "envelope_check": self.envelope_check,
                "floor_limited": self.floor_limited,
                "terminal_ratio": float(self.ratio_curve[-1]) if len(self.ratio_curve) else None}


@dataclass
class DampedStepReport:
    passed: bool
    step_passed: np.ndarray
    first_failure: Optional[int]
    max_violation: float
    lambda_inf: float

    def to_dict(self):
        return {"passed": self.passed, "first_failure": self.first_failure,
                "max_violation": self.max_violation, "lambda_inf": self.lambda_inf,
                "num_steps": int(len(self.step_passed))}


@dataclass
class AveragednessReport:
    passed: bool
    alpha: float
    max_violation: float
    num_pairs: int

    def to_dict(self):
        return dict(self.__dict__)


def errors_to_limit(trace, x_bar):
    """``||x^t - x_bar||`` at the recorded times."""
    x_bar = np.asarray(x_bar, dtype=float)
    return np.linalg.norm(trace.iterates - x_bar, axis=-1)


def ratio_curve(times, errors):
    """``-log(err) / log(t)`` for ``t >= 2`` and ``err > 0``."""
    times, errors = np.asarray(times, dtype=float), np.asarray(errors, dtype=float)
    keep = (times >= 2) & (errors > 0)
    return times[keep], -np.log(errors[keep]) / np.log(times[keep])


def check_fejer(trace, target, slack=FEJER_SLACK):
    """Check that the distance from the iterates to ``target`` never grows.

    ``target`` is a point or a callable distance oracle. The slack is
    relative to ``max(1, dist)``.
    """
    if len(trace) == 0:
        raise UsageError("empty trace")
    if callable(target):
        dist = np.asarray(target(trace.iterates), dtype=float)
    else:
        dist = errors_to_limit(trace, target)
    inc = np.diff(dist) - slack * np.maximum(1.0, dist[:-1])
    bad = np.flatnonzero(inc > 0)
    first = int(bad[0]) + 1 if len(bad) else None
    return FejerReport(passed=first is None, first_violation=first,
                       first_violation_time=None if first is None else int(trace.times[first]),
                       max_increase=float(np.max(np.diff(dist), initial=0.0)))


def _window(times, errors, window_fraction, min_t=0):
    """Indices of the trailing fit window above the error floor."""
    below = np.flatnonzero(errors < ERROR_FLOOR)
    end = below[0] if len(below) else len(errors)
    eligible = np.flatnonzero((errors[:end] > 100 * ERROR_FLOOR) & (times[:end] >= min_t))
    floor_limited = len(below) > 0
    if len(eligible) == 0:
        return eligible, floor_limited
    size = max(int(np.ceil(window_fraction * len(eligible))), MIN_WINDOW)
    return eligible[-size:], floor_limited


def _linfit(u, v):
    slope, intercept = np.polyfit(u, v, 1)
    pred = slope * u + intercept
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum((v - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def fit_linear_rate(trace, x_bar, window_fraction=0.5):
    """Per-iteration linear rate ``r`` from ``log err ~ t log r``.

    The fit uses the trailing ``window_fraction`` of recorded points whose
    error exceeds ``100 * ERROR_FLOOR`` (at least 30 points when available)
    and stops at the first point below the floor.

    Returns
    -------
    RateReport
        ``rate`` is NaN when fewer than three points are eligible.
    """
    times = np.asarray(trace.times, dtype=float)
    err = errors_to_limit(trace, x_bar)
    idx, floored = _window(times, err, window_fraction)
    rt, rc = ratio_curve(times, err)
    if len(idx) < 3:
        return RateReport("linear", float("nan"), (None, None), float("nan"), times, err, rt, rc,
                          floor_limited=True)
    slope, r2 = _linfit(times[idx], np.log(err[idx]))
    return RateReport("linear", float(np.exp(slope)), (int(times[idx[0]]), int(times[idx[-1]])), r2,
                      times, err, rt, rc, floor_limited=floored)


def fit_sublinear_exponent(trace, x_bar, window_fraction=0.5):
    """Exponent ``rho`` from ``log err ~ -rho log t`` on ``t >= 10``.

    Uses the same window rule as :func:`fit_linear_rate` and also returns the
    full ratio curve.
    """
    times = np.asarray(trace.times, dtype=float)
    err = errors_to_limit(trace, x_bar)
    idx, floored = _window(times, err, window_fraction, min_t=10)
    rt, rc = ratio_curve(times, err)
    if len(idx) < 3:
        return RateReport("sublinear", float("nan"), (None, None), float("nan"), times, err, rt, rc,
                          floor_limited=True)
    slope, r2 = _linfit(np.log(times[idx]), np.log(err[idx]))
    return RateReport("sublinear", -slope, (int(times[idx[0]]), int(times[idx[-1]])), r2,
                      times, err, rt, rc, floor_limited=floored)


def check_envelope(trace, x_bar, constants, slack=ENVELOPE_SLACK):
    """Fraction of recorded times with ``err(t) <= envelope(t) + slack``."""
    err = errors_to_limit(trace, x_bar)
    env = envelope(constants, np.asarray(trace.times, dtype=float))
    return float(np.mean(err <= env + slack))


def check_damped_step_inequalities(trace, C, D, eta, x_star, lambdas=None, slack=STEP_SLACK):
    """Verify the per-step descent inequality of damped DR and its two identities.

    For each step ``t -> t+1`` with auxiliaries ``y, z``::

        2 eta lam (dist(y, C)**2 + dist(z, D)**2) <= |x^t - x*|**2 - |x^{t+1} - x*|**2
        dist(y, C) = dist(x^t, C) / (2 eta + 1)
        dist(z, D) = dist(2y - x^t, D) / (2 eta + 1)

    ``lam`` is the infimum of the relaxation parameters, taken from
    ``lambdas`` (scalar or sequence) or from the recorded ones. Slack is
    relative to ``max(1, |x^t - x*|**2)``. Needs a densely recorded trace.
    """
    times = np.asarray(trace.times)
    if len(times) > 1 and np.any(np.diff(times) != 1):
        raise UsageError("damped-step checks need a densely recorded trace")
    if "y" not in trace.aux or "z" not in trace.aux:
        raise UsageError("trace lacks the y, z auxiliaries of damped DR")
    if lambdas is None:
        lam = float(np.nanmin(trace.aux["lambda"])) if len(times) > 1 else 1.0
    else:
        lam = float(np.min(np.atleast_1d(np.asarray(lambdas, dtype=float))))
    x_star = np.asarray(x_star, dtype=float)
    X = trace.iterates
    y, z = trace.aux["y"][1:], trace.aux["z"][1:]
    xt, xn = X[:-1], X[1:]
    k = 1.0 / (2.0 * eta + 1.0)
    dy, dz = C.distance(y), D.distance(z)
    before = np.sum((xt - x_star) ** 2, axis=-1)
    after = np.sum((xn - x_star) ** 2, axis=-1)
    scale = slack * np.maximum(1.0, before)
    v1 = 2.0 * eta * lam * (dy ** 2 + dz ** 2) - (before - after)
    v2 = np.abs(dy - k * C.distance(xt))
    v3 = np.abs(dz - k * D.distance(2.0 * y - xt))
    worst = np.maximum(v1, np.maximum(v2, v3)) - scale
    ok = worst <= 0
    bad = np.flatnonzero(~ok)
    return DampedStepReport(passed=bool(ok.all()), step_passed=ok,
                            first_failure=int(times[bad[0]]) if len(bad) else None,
                            max_violation=float(np.max(worst + scale, initial=0.0)),
                            lambda_inf=lam)


def check_averagedness(op, dim, num_pairs=200, scale=10.0, seed=0, alpha=None, slack=STEP_SLACK):
    """Test ``|Tx - Ty|**2 + (1-a)/a |(I-T)x - (I-T)y|**2 <= |x - y|**2`` on random pairs.

    Pairs are uniform in ``[-scale, scale]**dim``; ``alpha`` defaults to
    ``op.alpha``.
    """
    a = op.alpha if alpha is None else alpha
    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.uniform(-scale, scale, size=(num_pairs, dim))
    y = rng.uniform(-scale, scale, size=(num_pairs, dim))
    tx, ty = op(x), op(y)
    lhs = np.sum((tx - ty) ** 2, axis=-1) + (1.0 - a) / a * np.sum(((x - tx) - (y - ty)) ** 2, axis=-1)
    rhs = np.sum((x - y) ** 2, axis=-1)
    viol = lhs - rhs
    return AveragednessReport(passed=bool(np.all(viol <= slack * np.maximum(1.0, rhs))),
                              alpha=float(a), max_violation=float(np.max(viol)),
                              num_pairs=int(num_pairs))


def check_scaled_monotone(trace, x_bar, power, burn_in=1000, slack=1e-9):
    """Whether ``t**power * err(t)`` is nonincreasing for recorded ``t >= burn_in``.

    Errors below ``ERROR_FLOOR`` count as zero; ``slack`` is relative.
    """
    times = np.asarray(trace.times, dtype=float)
    err = errors_to_limit(trace, x_bar)
    err = np.where(err < ERROR_FLOOR, 0.0, err)
    keep = times >= burn_in
    series = times[keep] ** power * err[keep]
    if len(series) < 2:
        return True
    return bool(np.all(np.diff(series) <= slack * np.maximum(series[:-1], ERROR_FLOOR)))
