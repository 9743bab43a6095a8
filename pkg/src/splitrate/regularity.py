"""Hölder regularity exponents, explicit rate constants and recurrence bounds.

Closed-form pieces (the semi-algebraic exponent, the constants of the
distance recurrence and the resulting error envelopes) sit next to
empirical estimators that fit ``dist <= modulus * residual**gamma`` on
samples drawn near a known fixed-point set or intersection.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exceptions import DegenerateSampleError, UsageError
from .geometry import Box, SetCollection

__all__ = [
    "RateConstants",
    "RegularityEstimate",
    "central_binomial",
    "semialgebraic_exponent",
    "theoretical_delta_theta",
    "rate_constants",
    "envelope",
    "recurrence_bound",
    "simulate_recurrence",
    "simulate_dist_recurrence",
    "estimate_operator_holder",
    "estimate_intersection_holder",
    "holds_fraction",
]

ROUNDING_FLOOR = 1e-13
NUM_BINS = 20
MIN_RADIUS = 1e-6


# --- closed forms ------------------------------------------------------------

def central_binomial(n):
    """``C(n, floor(n/2))``."""
    if int(n) != n or n < 0:
        raise UsageError("central_binomial needs a nonnegative integer")
    n = int(n)
    return math.comb(n, n // 2)


def semialgebraic_exponent(n, d):
    """Hölder exponent for basic semi-algebraic convex data.

    ``1 / min{((2d - 1)**n + 1) / 2, B(n - 1) * d**n}`` with ``B`` the
    central binomial coefficient, evaluated exactly.

    Parameters
    ----------
    n : int
        Ambient dimension, ``n >= 1``.
    d : int
        Maximum polynomial degree, ``d >= 1``.

    Returns
    -------
    fractions.Fraction
    """
    if int(n) != n or n < 1 or int(d) != d or d < 1:
        raise UsageError("semialgebraic_exponent needs integers n >= 1 and d >= 1")
    n, d = int(n), int(d)
    first = Fraction((2 * d - 1) ** n + 1, 2)
    second = Fraction(central_binomial(n - 1) * d ** n)
    return 1 / min(first, second)


def theoretical_delta_theta(gamma1, gamma2, alpha, sigma, s, mu, beta):
    """Rate parameters ``(delta, theta)`` from regularity data.

    ``gamma1, mu`` describe operator regularity, ``gamma2, beta`` the
    regularity of the fixed-point sets, ``alpha`` the common averagedness,
    ``sigma`` the weight lower bound and ``s`` the coverage span.
    """
    for name, value in (("gamma1", gamma1), ("gamma2", gamma2)):
        if not 0 < value <= 1:
            raise UsageError(f"{name} must lie in (0, 1]")
    if not 0 < alpha < 1:
        raise UsageError("alpha must lie in (0, 1)")
    if not (sigma > 0 and s >= 1 and mu > 0 and beta > 0):
        raise UsageError("sigma, mu, beta must be positive and s >= 1")
    ratio = alpha / (1.0 - alpha)
    inner = mu * (ratio / sigma) ** gamma1 + ratio
    delta = 1.0 / (s ** gamma2 * beta ** 2 * inner ** gamma2)
    theta = 1.0 / (gamma1 * gamma2)
    return delta, theta


@dataclass(frozen=True)
class RateConstants:
    """Constants of the error envelope.

    ``M1`` governs the sublinear branch (``theta > 1``); ``M2`` and ``r``
    govern the linear branch and are NaN when ``delta > 1``.
    """

    theta: float
    delta: float
    M1: float
    M2: float
    r: float
    span_s: int
    dist0: float
    sigma: Optional[float] = None
    alpha: Optional[float] = None

    @property
    def kind(self):
        return "linear" if self.theta == 1 else "sublinear"

    @property
    def exponent(self):
        """Sublinear decay exponent ``1 / (2 (theta - 1))``; ``inf`` when linear."""
        return math.inf if self.theta == 1 else 1.0 / (2.0 * (self.theta - 1.0))

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("theta", "delta", "M1", "M2", "r", "span_s", "dist0", "sigma", "alpha")}


def rate_constants(delta, theta, s, dist0, sigma=None, alpha=None):
    """Explicit constants for sequences obeying the distance recurrence.

    Parameters
    ----------
    delta : float
        Recurrence coefficient, positive.
    theta : float
        Exponent, ``theta >= 1``; ``theta == 1`` requires ``delta <= 1``.
    s : int
        Span of the recurrence (steps per contraction).
    dist0 : float
        Distance of the starting point to the target set.
    """
    if not theta >= 1:
        raise UsageError("theta must be at least 1")
    if not delta > 0:
        raise UsageError("delta must be positive")
    if theta == 1 and delta > 1:
        raise UsageError("delta must lie in (0, 1] when theta == 1")
    if int(s) != s or s < 1:
        raise UsageError("span s must be a positive integer")
    if dist0 < 0:
        raise UsageError("dist0 must be nonnegative")
    s = int(s)
    if theta > 1:
        q = 1.0 / (2.0 * (theta - 1.0))
        M1 = 2.0 * max((2 * s) ** q * ((theta - 1.0) * delta) ** (-q), (2 * s) ** q * dist0)
    else:
        M1 = math.nan
    if delta <= 1:
        r = (1.0 - delta) ** (1.0 / (4 * s))
        if r == 0.0:
            first = math.inf if dist0 > 0 else 0.0
        else:
            first = r ** (-2 * s) * dist0
        M2 = 2.0 * max(first, math.sqrt(dist0))
    else:
        r = M2 = math.nan
    return RateConstants(theta=float(theta), delta=float(delta), M1=M1, M2=M2, r=r,
                         span_s=s, dist0=float(dist0), sigma=sigma, alpha=alpha)


def envelope(constants, t):
    """Error bound at iteration ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if constants.theta > 1:
        with np.errstate(divide="ignore"):
            out = constants.M1 * t ** (-constants.exponent)
    elif constants.r == 0.0:
        out = np.where(t == 0, constants.M2, 0.0)
    else:
        out = constants.M2 * constants.r ** t
    return out[()] if out.ndim == 0 else out


def recurrence_bound(beta0, p, deltas, t=None):
    """Upper bound ``(beta0**-p + p * sum(deltas[:t]))**(-1/p)``.

    With ``t`` omitted the bound is returned for every ``t`` from 0 to
    ``len(deltas)``.
    """
    if not p > 0:
        raise UsageError("p must be positive")
    if beta0 < 0:
        raise UsageError("beta0 must be nonnegative")
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas < 0):
        raise UsageError("deltas must be nonnegative")
    partial = np.concatenate([[0.0], np.cumsum(deltas)])
    if beta0 == 0:
        bounds = np.zeros_like(partial)
    else:
        bounds = (beta0 ** (-p) + p * partial) ** (-1.0 / p)
    if t is None:
        return bounds
    if not 0 <= t <= len(deltas):
        raise UsageError(f"t must lie in [0, {len(deltas)}]")
    return float(bounds[int(t)])


def simulate_recurrence(beta0, p, deltas):
    """Iterate ``beta <- beta * (1 - delta * beta**p)`` at equality."""
    out = np.empty(len(deltas) + 1)
    out[0] = beta = float(beta0)
    for i, dlt in enumerate(deltas):
        beta = beta * (1.0 - dlt * beta ** p)
        out[i + 1] = beta
    return out


def simulate_dist_recurrence(delta, theta, s, dist0, num_steps):
    """Distances ``dist(x^t, F)`` for ``t = 0..num_steps`` driven at equality.

    Every ``s`` steps the squared distance drops by ``delta * dist**(2 theta)``;
    in between the distance stays flat, the slowest Fejér-compatible path.
    Requires ``delta * dist0**(2 (theta - 1)) <= 1`` so distances stay real.
    """
    if delta * dist0 ** (2 * (theta - 1)) > 1:
        raise UsageError("delta * dist0**(2(theta-1)) must not exceed 1")
    blocks = num_steps // s + 1
    d2 = np.empty(blocks)
    d2[0] = dist0 ** 2
    for k in range(1, blocks):
        d2[k] = max(d2[k - 1] - delta * d2[k - 1] ** theta, 0.0)
    return np.sqrt(d2[np.arange(num_steps + 1) // s])


# --- empirical estimation ------------------------------------------------------

@dataclass
class RegularityEstimate:
    """Fitted ``dist <= modulus * residual**gamma`` on a bounded region.

    Attributes
    ----------
    gamma : float
        Exponent in ``(0, 1]``.
    modulus : float
        Smallest constant valid on the training samples for ``gamma``.
    sample_region : dict
        Box bounds and sample counts.
    fit_quality : float
        R^2 of the envelope regression.
    raw_slope : float
        Unclamped slope of the envelope fit.
    notes : list of str
    """

    gamma: float
    modulus: float
    sample_region: dict
    fit_quality: float
    raw_slope: float
    notes: list = field(default_factory=list)

    def bound(self, residual):
        return self.modulus * np.asarray(residual, dtype=float) ** self.gamma

    def to_dict(self):
        return {"gamma": self.gamma, "modulus": self.modulus, "sample_region": self.sample_region,
                "fit_quality": self.fit_quality, "raw_slope": self.raw_slope, "notes": list(self.notes)}


def _as_region(region):
    if isinstance(region, Box):
        return region.lower, region.upper
    lower, upper = region
    box = Box(lower, upper)
    return box.lower, box.upper


def _near_samples(rng, base, lower, upper, num):
    """Points at log-uniform radii around ``base`` along random directions."""
    dim = lower.shape[0]
    diam = float(np.linalg.norm(upper - lower))
    idx = rng.integers(0, len(base), size=num)
    dirs = rng.standard_normal((num, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.exp(rng.uniform(math.log(MIN_RADIUS), math.log(diam), size=num))
    return np.clip(base[idx] + radii[:, None] * dirs, lower, upper)


def _envelope_fit(lhs, rhs, floor):
    """Fit ``log lhs = log mu + gamma log rhs`` through per-bin maxima."""
    keep = (lhs > 0) & (rhs > floor) & np.isfinite(lhs) & np.isfinite(rhs)
    if np.count_nonzero(keep) < 2:
        raise DegenerateSampleError("too few samples outside the target set to fit an exponent")
    u, v = np.log(rhs[keep]), np.log(lhs[keep])
    edges = np.linspace(u.min(), u.max(), NUM_BINS + 1)
    which = np.clip(np.digitize(u, edges[1:-1]), 0, NUM_BINS - 1)
    xs, ys = [], []
    for b in range(NUM_BINS):
        members = which == b
        if np.any(members):
            j = np.argmax(np.where(members, v, -np.inf))
            xs.append(u[j])
            ys.append(v[j])
    xs, ys = np.asarray(xs), np.asarray(ys)
    if len(xs) < 2 or np.ptp(xs) == 0:
        raise DegenerateSampleError("residuals span too narrow a range to fit an exponent")
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ys - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2, keep


def _finish(lhs, rhs, floor, region_info):
    slope, r2, keep = _envelope_fit(lhs, rhs, floor)
    notes = []
    gamma = slope
    if gamma > 1:
        notes.append(f"fitted slope {slope:.4g} exceeds 1; reported as 1")
        gamma = 1.0
    elif gamma <= 0:
        notes.append(f"fitted slope {slope:.4g} is not positive; reported as 1e-3")
        gamma = 1e-3
    modulus = float(np.max(lhs[keep] / rhs[keep] ** gamma))
    region_info = dict(region_info, num_fitted=int(np.count_nonzero(keep)), residual_floor=floor)
    return RegularityEstimate(gamma=float(gamma), modulus=modulus, sample_region=region_info,
                              fit_quality=r2, raw_slope=slope, notes=notes)


def estimate_operator_holder(op, region, num_samples=4000, seed=0, *, residual_floor=None,
                             return_samples=False):
    """Estimate ``gamma, mu`` with ``dist(x, Fix T) <= mu * ||x - T x||**gamma`` on a box.

    Three quarters of the samples sit at log-uniform distances from points
    of the fixed-point set; the rest are uniform in the box. Residuals at or below
    ``residual_floor`` are dropped from the fit. The default is zero for
    operators with an exact ``displacement`` and a relative rounding floor
    otherwise, since ``x - T(x)`` loses all digits for tiny residuals.

    Parameters
    ----------
    op : AveragedOperator
        Must carry ``known_fix``.
    region : Box or (lower, upper)
    num_samples : int
        At least 50.
    seed : int

    Returns
    -------
    RegularityEstimate
        With ``return_samples=True`` a tuple ``(estimate, x, dist, residual)``.
    """
    if op.known_fix is None:
        raise UsageError("operator has no known fixed-point set")
    if num_samples < 50:
        raise UsageError("num_samples must be at least 50")
    lower, upper = _as_region(region)
    rng = np.random.Generator(np.random.PCG64(seed))
    n_near = (3 * num_samples) // 4
    base = op.known_fix.sample(rng, max(n_near, 1), lower, upper)
    x = np.vstack([_near_samples(rng, base, lower, upper, n_near),
                   rng.uniform(lower, upper, size=(num_samples - n_near, lower.shape[0]))])
    dist = np.asarray(op.known_fix.distance(x), dtype=float)
    res = np.asarray(op.residual(x), dtype=float)
    if residual_floor is None:
        scale = 1.0 + float(np.max(np.abs(x)))
        residual_floor = 0.0 if op.displacement is not None else ROUNDING_FLOOR * scale
    if not np.any(dist > 0):
        raise DegenerateSampleError("all samples lie in the fixed-point set")
    info = {"lower": lower.tolist(), "upper": upper.tolist(), "num_samples": int(num_samples),
            "seed": int(seed), "target": "operator"}
    est = _finish(dist, res, residual_floor, info)
    return (est, x, dist, res) if return_samples else est


def estimate_intersection_holder(sets, intersection_dist, region, num_samples=4000, seed=0, *,
                                 intersection_points=None, residual_floor=0.0,
                                 return_samples=False):
    """Estimate ``gamma, beta`` with ``dist(x, ∩C_j) <= beta * max_j dist(x, C_j)**gamma``.

    Samples are uniform in the box, log-uniform around ``intersection_points``
    (the box centre when omitted) and the projections of all of these onto
    each set, which probe the tangential directions where regularity is
    weakest.

    Parameters
    ----------
    sets : SetCollection or sequence of ConvexSet
    intersection_dist : callable
        Distance oracle to the intersection.
    region : Box or (lower, upper)
    intersection_points : array, optional
        Points of the intersection used as sampling centres.
    """
    if not isinstance(sets, SetCollection):
        sets = SetCollection(tuple(sets))
    if num_samples < 50:
        raise UsageError("num_samples must be at least 50")
    lower, upper = _as_region(region)
    rng = np.random.Generator(np.random.PCG64(seed))
    if intersection_points is None:
        centres = ((lower + upper) / 2.0)[None, :]
    else:
        centres = np.atleast_2d(np.asarray(intersection_points, dtype=float))
    per_group = max(num_samples // (2 * (len(sets) + 1)), 1)
    seeds = np.vstack([rng.uniform(lower, upper, size=(per_group, lower.shape[0])),
                       _near_samples(rng, centres, lower, upper, per_group)])
    x = np.vstack([seeds] + [np.clip(c.project(seeds), lower, upper) for c in sets])
    lhs = np.asarray(intersection_dist(x), dtype=float)
    rhs = sets.max_distance(x)
    if not np.any(lhs > 0):
        raise DegenerateSampleError("all samples lie in the intersection")
    info = {"lower": lower.tolist(), "upper": upper.tolist(), "num_samples": int(len(x)),
            "seed": int(seed), "target": "intersection"}
    est = _finish(lhs, rhs, residual_floor, info)
    return (est, x, lhs, rhs) if return_samples else est


def holds_fraction(estimate, lhs, rhs, factor=1.1):
    """Fraction of points with ``lhs <= factor * modulus * rhs**gamma``."""
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    if lhs.size == 0:
        return 1.0
    return float(np.mean(lhs <= factor * estimate.bound(rhs)))
