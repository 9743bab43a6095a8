"""Averaged nonexpansive operators.

An :class:`AveragedOperator` couples a pure, vectorized map with its
averagedness constant ``alpha`` (``T = (1 - alpha) I + alpha R`` for some
nonexpansive ``R``) and, when known, a description of its fixed-point set.
Constructors in this module build projections, Douglas-Rachford maps and
their relatives with the constants established for them.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import Ball, ConvexSet, Hyperplane, as_point
from .exceptions import UsageError

__all__ = [
    "AveragedOperator",
    "SinglePoint",
    "HalfLine",
    "ViaSet",
    "CustomFix",
    "VipProblem",
    "identity_op",
    "projection_op",
    "dr_op",
    "dr_closed_form_ball_line",
    "ball_line_sets",
    "ball_line_discrepancy",
    "km_relax",
    "forward_backward_op",
    "regularized_dr_op",
    "compose_dr_chain",
    "cyclic_dr_chain",
    "anchored_dr_chain",
    "extrapolation_transform",
    "convex_combination",
]


# --- fixed-point set descriptors -------------------------------------------

class KnownFixSet:
    """Distance oracle to a fixed-point set, plus sampling helpers."""

    def distance(self, x):
        raise NotImplementedError

    def project(self, x):
        """Nearest point of the set; ``None`` when no projection is available."""
        return None

    def sample(self, rng, size, lower, upper):
        """Points of the set inside the box ``[lower, upper]`` (best effort)."""
        return rng.uniform(lower, upper, size=(size, len(lower)))


@dataclass(frozen=True, eq=False)
class SinglePoint(KnownFixSet):
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", as_point(self.p, name="p"))

    def distance(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float) - self.p, axis=-1)

    def project(self, x):
        return np.broadcast_to(self.p, np.shape(x)).copy()

    def sample(self, rng, size, lower, upper):
        return np.tile(self.p, (size, 1))


@dataclass(frozen=True, eq=False)
class HalfLine(KnownFixSet):
    """``{anchor + u * direction : u >= 0}`` with ``direction`` normalised."""

    anchor: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        a = as_point(self.anchor, name="anchor")
        v = as_point(self.direction, dim=a.shape[0], name="direction")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise UsageError("half-line direction must be nonzero")
        object.__setattr__(self, "anchor", a)
        object.__setattr__(self, "direction", v / norm)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        u = np.maximum((x - self.anchor) @ self.direction, 0.0)
        return self.anchor + u[..., None] * self.direction

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x), axis=-1)

    def sample(self, rng, size, lower, upper):
        # Half of the base points sit on the endpoint, where regularity is weakest.
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.where(self.direction > 0, (upper - self.anchor) / self.direction,
                             np.where(self.direction < 0, (lower - self.anchor) / self.direction, np.inf))
        reach = max(float(np.min(steps)), 0.0)
        u = rng.uniform(0.0, reach, size=size)
        u[rng.random(size) < 0.5] = 0.0
        return self.anchor + u[:, None] * self.direction


@dataclass(frozen=True, eq=False)
class ViaSet(KnownFixSet):
    """Fixed-point set equal to a convex set (e.g. ``Fix P_C = C``)."""

    set: ConvexSet

    def distance(self, x):
        return self.set.distance(x)

    def project(self, x):
        return self.set.project(x)

    def sample(self, rng, size, lower, upper):
        return self.set.project(rng.uniform(lower, upper, size=(size, len(lower))))


@dataclass(frozen=True, eq=False)
class CustomFix(KnownFixSet):
    distance_fn: Callable

    def distance(self, x):
        return np.asarray(self.distance_fn(np.asarray(x, dtype=float)), dtype=float)


# --- operators ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AveragedOperator:
    """An ``alpha``-averaged map.

    Parameters
    ----------
    evaluator : callable
        Pure map acting on arrays of shape ``(..., n)``.
    alpha : float
        Averagedness constant in ``(0, 1)``.
    label : str
    known_fix : KnownFixSet, optional
    displacement : callable, optional
        Accurate evaluation of ``x - T(x)``; defaults to the subtraction.
    """

    evaluator: Callable
    alpha: float
    label: str = "T"
    known_fix: Optional[KnownFixSet] = None
    displacement: Optional[Callable] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise UsageError(f"averagedness constant must lie in (0, 1), got {self.alpha}")

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    def residual(self, x):
        """``||x - T x||`` along the last axis."""
        x = np.asarray(x, dtype=float)
        diff = self.displacement(x) if self.displacement is not None else x - self.evaluator(x)
        return np.linalg.norm(diff, axis=-1)


def identity_op(alpha=0.5):
    # I = (1 - a) I + a I is a-averaged for every a.
    return AveragedOperator(lambda x: x, alpha, label="I")


def projection_op(cset):
    return AveragedOperator(cset.project, 0.5, label=f"P[{type(cset).__name__}]",
                            known_fix=ViaSet(cset),
                            displacement=lambda x: x - cset.project(x))


def _check_same_dim(C, D):
    if C.dim != D.dim:
        raise UsageError(f"sets have dimensions {C.dim} and {D.dim}")


def dr_op(C, D, known_fix=None):
    """Two-set Douglas-Rachford operator ``(I + R_D R_C) / 2``."""
    _check_same_dim(C, D)

    def displacement(x):
        pc = C.project(x)
        return pc - D.project(2.0 * pc - x)

    def evaluate(x):
        pc = C.project(x)
        return x + D.project(2.0 * pc - x) - pc

    return AveragedOperator(evaluate, 0.5, label="T_DR", known_fix=known_fix,
                            displacement=displacement)


def ball_line_sets():
    """Line ``{x1 = 0}`` and unit ball centred at ``(-1, 0)``, tangent at the origin."""
    return Hyperplane([1.0, 0.0], 0.0), Ball([-1.0, 0.0], 1.0)


def dr_closed_form_ball_line(x):
    """Closed form ``(a - 1 - a x1, a x2)``, ``a = 1 / max(1, ||x - (1, 0)||)``.

    This is the expression as printed for the ball/line example.  It does
    not agree with ``dr_op(*ball_line_sets())``, whose first component is
    ``(1 - a)(x1 - 1)``; see :func:`ball_line_discrepancy`.
    """
    x = as_point(x, dim=2)
    a = 1.0 / np.maximum(1.0, np.hypot(x[..., 0] - 1.0, x[..., 1]))
    return np.stack([a - 1.0 - a * x[..., 0], a * x[..., 1]], axis=-1)


def ball_line_discrepancy(points):
    """Compare the printed closed form with direct composition at ``points``.

    Returns a dict with the maximal disagreement, the fraction of points on
    which the two differ by more than ``1e-12`` and the maximal fixed-point
    defect of each map along the ray ``(-inf, 0] x {0}`` sampled by the
    points with ``x2 == 0`` and ``x1 <= 0``.
    """
    pts = as_point(points, dim=2).reshape(-1, 2)
    op = dr_op(*ball_line_sets())
    composed = op(pts)
    printed = dr_closed_form_ball_line(pts)
    gap = np.linalg.norm(composed - printed, axis=-1)
    ray = (pts[:, 1] == 0.0) & (pts[:, 0] <= 0.0)
    report = {
        "num_points": int(len(pts)),
        "max_disagreement": float(gap.max(initial=0.0)),
        "fraction_disagreeing": float(np.mean(gap > 1e-12)) if len(pts) else 0.0,
        "ray_points": int(ray.sum()),
        "composition_ray_defect": float(np.linalg.norm(composed[ray] - pts[ray], axis=-1).max(initial=0.0)),
        "printed_ray_defect": float(np.linalg.norm(printed[ray] - pts[ray], axis=-1).max(initial=0.0)),
        "authoritative": "composition",
    }
    return report


def km_relax(T, lam):
    """``(1 - lam) I + lam T``, which is ``lam * alpha``-averaged."""
    if not 0.0 < lam < 1.0:
        raise UsageError(f"relaxation must lie in (0, 1), got {lam}")
    base = T.displacement

    def displacement(x):
        d = base(x) if base is not None else x - T.evaluator(x)
        return lam * d

    return AveragedOperator(lambda x: (1.0 - lam) * x + lam * T.evaluator(x), lam * T.alpha,
                            label=f"KM[{lam:g}]({T.label})", known_fix=T.known_fix,
                            displacement=displacement)


@dataclass(frozen=True, eq=False)
class VipProblem:
    """``find x: f(y) - f(x) + <F(x), y - x> >= 0 for all y``.

    ``f`` is the indicator of ``f_set`` or, when ``f_set`` is ``None``, the
    zero function.  ``F`` must be ``cocoercivity_modulus``-cocoercive.
    """

    F: Callable
    cocoercivity_modulus: float
    f_set: Optional[ConvexSet] = None
    solution: Optional[KnownFixSet] = None

    def __post_init__(self):
        if not self.cocoercivity_modulus > 0:
            raise UsageError("cocoercivity modulus must be positive")
        if self.solution is not None and not isinstance(self.solution, KnownFixSet):
            object.__setattr__(self, "solution", SinglePoint(self.solution))

    def prox_f(self, x, step):
        x = np.asarray(x, dtype=float)
        return x if self.f_set is None else self.f_set.project(x)

    def cocoercivity_defect(self, dim, num_pairs=200, scale=10.0, seed=0):
        """Largest violation of the cocoercivity inequality on random pairs."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-scale, scale, size=(num_pairs, dim))
        y = rng.uniform(-scale, scale, size=(num_pairs, dim))
        fx, fy = np.asarray(self.F(x)), np.asarray(self.F(y))
        lhs = np.einsum("ij,ij->i", fx - fy, x - y)
        rhs = self.cocoercivity_modulus * np.sum((fx - fy) ** 2, axis=-1)
        return float(np.max(rhs - lhs))


def forward_backward_op(problem, gamma):
    """``x -> prox_{gamma f}(x - gamma F(x))`` for ``0 < gamma < 2 beta``.

    ``I - gamma F`` is ``gamma / (2 beta)``-averaged and the prox is
    1/2-averaged, so the composition is ``1 / (2 - gamma / (2 beta))``-averaged.
    The declared constant is the larger of this value and 2/3; the two agree
    at ``gamma = beta``.
    """
    beta = problem.cocoercivity_modulus
    if not 0.0 < gamma < 2.0 * beta:
        raise UsageError(f"step {gamma} outside (0, {2.0 * beta})")
    alpha = max(2.0 / 3.0, 1.0 / (2.0 - gamma / (2.0 * beta)))

    def evaluate(x):
        return problem.prox_f(x - gamma * np.asarray(problem.F(x), dtype=float), gamma)

    return AveragedOperator(evaluate, alpha, label=f"FB[{gamma:g}]", known_fix=problem.solution)


def convex_combination(ops, weights, label=None, known_fix=None):
    """``sum_j w_j T_j``; the averagedness constant is the largest operand constant."""
    ops = list(ops)
    w = np.asarray(weights, dtype=float)
    if len(ops) != len(w) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise UsageError("weights must be nonnegative, match the operators and sum to 1")

    def evaluate(x):
        return sum(wj * T.evaluator(x) for wj, T in zip(w, ops) if wj > 0)

    return AveragedOperator(evaluate, max(T.alpha for T in ops),
                            label=label or "+".join(T.label for T in ops), known_fix=known_fix)


def regularized_dr_op(C, D, beta, known_fix=None):
    """``beta P_C + (1 - beta) T_{C,D}``."""
    if not 0.0 < beta < 1.0:
        raise UsageError(f"beta must lie in (0, 1), got {beta}")
    _check_same_dim(C, D)
    T = dr_op(C, D)

    def evaluate(x):
        return beta * C.project(x) + (1.0 - beta) * T.evaluator(x)

    def displacement(x):
        return beta * (x - C.project(x)) + (1.0 - beta) * T.displacement(x)

    return AveragedOperator(evaluate, 0.5, label=f"T_R[{beta:g}]", known_fix=known_fix,
                            displacement=displacement)


def compose_dr_chain(ops, known_fix=None):
    """Compose 1/2-averaged operators given in application order.

    ``compose_dr_chain([T1, T2, T3])`` evaluates ``T3(T2(T1(x)))`` and is
    ``p / (p + 1)``-averaged with ``p = 3``.
    """
    ops = list(ops)
    if not ops:
        raise UsageError("cannot compose an empty list of operators")
    if any(T.alpha != 0.5 for T in ops):
        raise UsageError("composition constant is only available for 1/2-averaged operands")
    p = len(ops)

    def evaluate(x):
        for T in ops:
            x = T.evaluator(x)
        return x

    label = " o ".join(T.label for T in reversed(ops))
    return AveragedOperator(evaluate, p / (p + 1.0), label=label, known_fix=known_fix)


def cyclic_dr_chain(sets):
    """``T_{m,1} ... T_{2,3} T_{1,2}`` over ``sets``."""
    sets = list(sets)
    m = len(sets)
    return compose_dr_chain([dr_op(sets[j], sets[(j + 1) % m]) for j in range(m)])


def anchored_dr_chain(sets):
    """``T_{1,m} ... T_{1,3} T_{1,2}`` over ``sets``."""
    sets = list(sets)
    return compose_dr_chain([dr_op(sets[0], sets[j]) for j in range(1, len(sets))])


def extrapolation_transform(ops, alpha_bar):
    """Rescale each ``T_j`` to ``(a/a_j) T_j - (a/a_j - 1) I`` with ``a = alpha_bar``.

    Each result is ``alpha_bar``-averaged, has the same fixed points and
    residual ``(a/a_j) ||x - T_j x||``.
    """
    ops = list(ops)
    if not ops:
        raise UsageError("no operators given")
    if not alpha_bar < 1.0:
        raise UsageError("alpha_bar must be < 1")
    if any(alpha_bar < T.alpha for T in ops):
        raise UsageError("alpha_bar must be >= every operand constant")
    out = []
    for T in ops:
        k = alpha_bar / T.alpha
        if k == 1.0:
            out.append(T)
            continue
        out.append(AveragedOperator(
            lambda x, T=T, k=k: k * T.evaluator(x) - (k - 1.0) * x,
            alpha_bar, label=f"X[{k:g}]({T.label})", known_fix=T.known_fix,
            displacement=lambda x, T=T, k=k: k * (T.displacement(x) if T.displacement else x - T.evaluator(x)),
        ))
    return out
