"""Fixed-point iteration driver.

Every algorithm is an :class:`IterationPlan` with a ``step(t, X)`` method
acting on a batch of iterates ``X`` of shape ``(m, n)``.  :func:`execute`
runs a plan from one starting point (returning a :class:`Trace`) or from a
batch of starting points (returning one trace per row), which is how
ensembles are vectorised.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, NumericalError, UsageError
from .geometry import SetCollection, as_point
from .operators import (AveragedOperator, dr_op, extrapolation_transform, forward_backward_op,
                        identity_op)

__all__ = [
    "StoppingRule",
    "WeightSchedule",
    "ScheduleReport",
    "validate_schedule",
    "Relaxation",
    "Trace",
    "IterationPlan",
    "QuasiCyclic",
    "ExtrapolatedQuasiCyclic",
    "MultiSetDR",
    "DampedDR",
    "KM",
    "ForwardBackward",
    "execute",
    "limit_proxy",
    "record_times",
    "run_quasi_cyclic",
    "run_extrapolated",
    "run_multiset_dr",
    "run_damped_dr",
    "run_km",
    "run_forward_backward",
    "cyclic_tuples",
    "anchored_tuples",
]

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class StoppingRule:
    max_iters: int = 10 ** 6
    residual_tol: float = 1e-13
    fix_dist_tol: Optional[float] = None

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError("max_iters must be a positive integer")
        if self.residual_tol < 0 or (self.fix_dist_tol is not None and self.fix_dist_tol < 0):
            raise ConfigError("tolerances must be nonnegative")


# --- schedules ---------------------------------------------------------------

class WeightSchedule:
    """Time-varying convex weights ``w_{j,t}`` over ``num_ops`` operators.

    Use the constructors :meth:`constant`, :meth:`cyclic` and :meth:`custom`.
    ``span_s`` is the window length within which every operator must be
    active at least once.
    """

    def __init__(self, kind, fn, span_s, num_ops=None, description=""):
        if int(span_s) != span_s or span_s < 1:
            raise ConfigError("span_s must be a positive integer")
        self.kind = kind
        self._fn = fn
        self.span_s = int(span_s)
        self.num_ops = num_ops
        self.description = description

    @classmethod
    def constant(cls, weights, span_s=1):
        w = np.asarray(weights, dtype=float)
        return cls("constant", lambda t: w, span_s, len(w), f"constant{w.tolist()}")

    @classmethod
    def cyclic(cls, order):
        order = [int(j) for j in order]
        if not order:
            raise ConfigError("cyclic order must be nonempty")
        num = max(order) + 1
        eye = np.eye(num)
        return cls("cyclic", lambda t: eye[order[t % len(order)]], len(order), num,
                   f"cyclic{order}")

    @classmethod
    def custom(cls, generator, span_s, num_ops=None):
        return cls("custom", lambda t: np.asarray(generator(t), dtype=float), span_s, num_ops,
                   "custom")

    def __call__(self, t):
        return self._fn(t)


@dataclass
class ScheduleReport:
    sigma: float
    span_s: int
    coverage_ok: bool
    max_sum_residual: float
    min_weight: float
    probe_steps: int
    passed: bool
    messages: list = field(default_factory=list)


def validate_schedule(schedule, num_ops, probe=None):
    """Check nonnegativity, unit sums, ``sigma > 0`` and window coverage.

    The probe window is ``10 * span_s`` steps unless ``probe`` is given.
    """
    s = schedule.span_s
    probe = 10 * s if probe is None else int(probe)
    W = np.array([np.broadcast_to(schedule(t), (num_ops,)) for t in range(probe + s)], dtype=float)
    messages = []
    min_w = float(W.min())
    if min_w < -WEIGHT_TOL:
        messages.append(f"negative weight {min_w:g}")
    sums = np.abs(W.sum(axis=1) - 1.0)
    max_sum = float(sums.max())
    if max_sum > WEIGHT_TOL:
        messages.append(f"weights sum to 1 only within {max_sum:g}")
    positive = W[W > WEIGHT_TOL]
    sigma = float(positive.min()) if positive.size else 0.0
    if sigma <= 0:
        messages.append("no positive weights")
    active = W > WEIGHT_TOL
    coverage_ok = True
    for t in range(probe):
        if not np.all(active[t:t + s].any(axis=0)):
            missing = np.flatnonzero(~active[t:t + s].any(axis=0)).tolist()
            messages.append(f"window starting at t={t} misses operators {missing}")
            coverage_ok = False
            break
    passed = not messages
    return ScheduleReport(sigma, s, coverage_ok, max_sum, min_w, probe, passed, messages)


class Relaxation:
    """Relaxation parameters ``lambda_t`` from a constant, a cycled sequence or a callable."""

    def __init__(self, spec):
        if callable(spec):
            self._fn = spec
            self.description = "custom"
        elif np.ndim(spec) == 0:
            value = float(spec)
            self._fn = lambda t: value
            self.description = f"{value:g}"
        else:
            seq = [float(v) for v in spec]
            if not seq:
                raise ConfigError("empty relaxation sequence")
            self._fn = lambda t: seq[t % len(seq)]
            self.description = f"cycle{seq}"

    def __call__(self, t):
        return self._fn(t)

    def probe(self, n=1000):
        return np.array([self._fn(t) for t in range(n)], dtype=float)


def _as_relaxation(spec):
    return spec if isinstance(spec, Relaxation) else Relaxation(spec)


# --- traces ------------------------------------------------------------------

def _geometric_stride(t):
    return 1 if t < 100 else 10 ** (len(str(int(t))) - 2)


def record_times(max_iters):
    """Geometric thinning: every step below 100, then about 90 per decade."""
    times = []
    t = 0
    while t <= max_iters:
        times.append(t)
        t += _geometric_stride(t)
    if times[-1] != max_iters:
        times.append(max_iters)
    return np.asarray(times, dtype=np.int64)


def _should_record(record, t):
    if record == "dense":
        return True
    if record == "geometric":
        return t % _geometric_stride(t) == 0
    return t % int(record) == 0


@dataclass
class Trace:
    """Recorded run of one starting point.

    ``iterates[k]`` is ``x^{times[k]}``; ``residuals[t]`` is
    ``||x^{t+1} - x^t||`` for every executed step.  ``aux`` holds per-step
    auxiliaries (e.g. ``y``, ``z``) aligned with ``times`` (row 0 is NaN).
    """

    times: np.ndarray
    iterates: np.ndarray
    residuals: np.ndarray
    dist_fix: Optional[np.ndarray] = None
    per_set_distances: Optional[np.ndarray] = None
    aux: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.iterates):
            raise UsageError("times and iterates have different lengths")
        if np.any(self.residuals < 0):
            raise UsageError("negative residual")

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def num_steps(self):
        return int(len(self.residuals))

    def __len__(self):
        return len(self.times)


class _Chunked:
    """Append-only buffer of rows of fixed width."""

    def __init__(self, width, chunk=4096):
        self._chunks = []
        self._cur = np.empty((chunk, width))
        self._n = 0
        self._size = 0

    def append(self, row):
        if self._n == len(self._cur):
            self._chunks.append(self._cur)
            self._cur = np.empty_like(self._cur)
            self._n = 0
        self._cur[self._n] = row
        self._n += 1
        self._size += 1

    def array(self):
        return np.concatenate(self._chunks + [self._cur[:self._n]], axis=0)

    def __len__(self):
        return self._size


# --- plans -------------------------------------------------------------------

class IterationPlan:
    """Base class.  Subclasses implement ``step(t, X) -> (X_next, aux_dict)``."""

    label = "plan"
    known_fix = None
    sets = None
    # steps per full cycle; stopping needs this many consecutive small steps
    span = 1

    def step(self, t, X):
        raise NotImplementedError

    def operators(self):
        """Averaged operators whose fixed points the plan targets (for checks)."""
        return []

    def describe(self):
        return {"kind": type(self).__name__, "label": self.label}


class QuasiCyclic(IterationPlan):
    """``x^{t+1} = sum_j w_{j,t} T_j(x^t)``."""

    def __init__(self, ops, schedule, known_fix=None, sets=None):
        self.ops = list(ops)
        if not self.ops:
            raise ConfigError("no operators given")
        report = validate_schedule(schedule, len(self.ops))
        if not report.passed:
            raise ConfigError("invalid weight schedule: " + "; ".join(report.messages))
        self.schedule = schedule
        self.report = report
        self.span = schedule.span_s
        if known_fix is None and len(self.ops) == 1:
            known_fix = self.ops[0].known_fix
        self.known_fix = known_fix
        self.sets = sets
        self.label = "quasi-cyclic[" + ", ".join(T.label for T in self.ops) + "]"

    def step(self, t, X):
        w = self.schedule(t)
        out = None
        for wj, T in zip(w, self.ops):
            if wj > 0:
                term = T.evaluator(X) if wj == 1.0 else wj * T.evaluator(X)
                out = term if out is None else out + term
        return out, None

    def operators(self):
        return self.ops

    def describe(self):
        return {"kind": "QuasiCyclic", "label": self.label, "schedule": self.schedule.description,
                "span_s": self.schedule.span_s, "sigma": self.report.sigma}


class ExtrapolatedQuasiCyclic(IterationPlan):
    """``x^{t+1} = sum_j w_{j,t} T_j(x^t) + w_{0,t} x^t`` with ``w_0`` possibly negative.

    ``weights(t)`` returns ``[w_0, w_1, ..., w_m]``.
    """

    def __init__(self, ops, weights, alpha_bar, span_s=1, probe=None, known_fix=None):
        self.ops = list(ops)
        self.weights = weights
        self.alpha_bar = float(alpha_bar)
        self.span_s = self.span = int(span_s)
        alphas = np.array([T.alpha for T in self.ops])
        if not (alphas.max() <= self.alpha_bar < 1):
            raise ConfigError("alpha_bar must satisfy max alpha_j <= alpha_bar < 1")
        probe = 10 * self.span_s if probe is None else probe
        W = np.array([np.asarray(weights(t), dtype=float) for t in range(probe + self.span_s)])
        if W.shape[1] != len(self.ops) + 1:
            raise ConfigError("weights(t) must return one identity weight plus one per operator")
        Wj = W[:, 1:]
        caps = self.alpha_bar / alphas
        if np.any(Wj < -WEIGHT_TOL) or np.any(Wj > caps + WEIGHT_TOL):
            raise ConfigError("operator weights must lie in [0, alpha_bar / alpha_j]")
        if np.max(np.abs(W.sum(axis=1) - 1.0)) > WEIGHT_TOL:
            raise ConfigError("weights must sum to 1")
        if not np.max(Wj @ alphas) < self.alpha_bar:
            raise ConfigError("sup_t sum_j alpha_j w_jt must be < alpha_bar")
        active = Wj > WEIGHT_TOL
        if not active.any():
            raise ConfigError("no operator is ever active")
        for t in range(probe):
            if not np.all(active[t:t + self.span_s].any(axis=0)):
                raise ConfigError(f"operator weights miss an operator in the window at t={t}")
        self.known_fix = known_fix if known_fix is not None else (
            self.ops[0].known_fix if len(self.ops) == 1 else None)
        self.label = "extrapolated[" + ", ".join(T.label for T in self.ops) + "]"

    def step(self, t, X):
        w = np.asarray(self.weights(t), dtype=float)
        out = w[0] * X
        for wj, T in zip(w[1:], self.ops):
            if wj != 0:
                out = out + wj * T.evaluator(X)
        return out, None

    def transformed(self):
        """Equivalent convex quasi-cyclic system ``(I, Tbar_1, ..., Tbar_m)``."""
        alphas = np.array([T.alpha for T in self.ops])
        bars = extrapolation_transform(self.ops, self.alpha_bar)
        ratio = alphas / self.alpha_bar

        def generator(t):
            w = np.asarray(self.weights(t), dtype=float)[1:] * ratio
            return np.concatenate([[1.0 - w.sum()], w])

        schedule = WeightSchedule.custom(generator, self.span_s, len(bars) + 1)
        return QuasiCyclic([identity_op(self.alpha_bar)] + bars, schedule, known_fix=self.known_fix)

    def operators(self):
        return self.ops


def cyclic_tuples(m):
    """``((0,1), (1,2), ..., (m-1,0))``: cyclic DR."""
    return [(j, (j + 1) % m) for j in range(m)]


def anchored_tuples(m):
    """``((0,1), (0,2), ..., (0,m-1))``: cyclically anchored DR."""
    return [(0, j) for j in range(1, m)]


class MultiSetDR(IterationPlan):
    """Multiple-sets DR: step ``t`` uses the pair ``tuples[t mod p]`` (0-based indices)."""

    def __init__(self, sets, tuples, known_fix=None):
        self.sets = sets if isinstance(sets, SetCollection) else SetCollection(tuple(sets))
        m = len(self.sets)
        self.tuples = [(int(a), int(b)) for a, b in tuples]
        if not self.tuples:
            raise ConfigError("no index pairs given")
        for a, b in self.tuples:
            if not (0 <= a < m and 0 <= b < m):
                raise ConfigError(f"pair {(a, b)} references a set outside 0..{m - 1}")
            if a == b:
                raise ConfigError(f"pair {(a, b)} repeats an index")
        covered = {i for pair in self.tuples for i in pair}
        if covered != set(range(m)):
            raise ConfigError(f"pairs do not cover sets {sorted(set(range(m)) - covered)}")
        self.known_fix = known_fix
        self.span = len(self.tuples)
        self.label = f"multiset-DR{self.tuples}"

    def step(self, t, X):
        a, b = self.tuples[t % len(self.tuples)]
        y = self.sets[a].project(X)
        z = self.sets[b].project(2.0 * y - X)
        return X + (z - y), {"y": y, "z": z}

    def operators(self):
        return [dr_op(self.sets[a], self.sets[b]) for a, b in self.tuples]

    def describe(self):
        return {"kind": "MultiSetDR", "label": self.label, "tuples": self.tuples}


class DampedDR(IterationPlan):
    """Damped DR with relaxed projections ``P^eta`` and relaxations ``lambda_t in (0, 2]``.

    With ``check_identities`` each step asserts that ``y`` and ``z`` sit on
    the segments towards the projections, i.e. their distances shrink by
    ``1 / (2 eta + 1)``.
    """

    def __init__(self, C, D, eta, lambdas=1.0, known_fix=None, check_identities=True,
                 probe=1000):
        if not eta > 0:
            raise ConfigError("eta must be positive")
        if C.dim != D.dim:
            raise ConfigError("sets have different dimensions")
        self.C, self.D, self.eta = C, D, float(eta)
        self.lambdas = _as_relaxation(lambdas)
        lam = self.lambdas.probe(probe)
        if np.any(lam <= 0) or np.any(lam > 2):
            raise ConfigError("relaxations must lie in (0, 2]")
        self.lambda_inf = float(lam.min())
        self.sets = SetCollection((C, D))
        self.known_fix = known_fix
        self.check_identities = check_identities
        self.label = f"damped-DR[eta={self.eta:g}, lambda={self.lambdas.description}]"

    def step(self, t, X):
        eta, C, D = self.eta, self.C, self.D
        k = 1.0 / (2.0 * eta + 1.0)
        pc = C.project(X)
        y = k * X + (1.0 - k) * pc
        w = 2.0 * y - X
        pd = D.project(w)
        z = k * w + (1.0 - k) * pd
        lam = self.lambdas(t)
        if self.check_identities:
            dy, dz = C.distance(y), D.distance(z)
            ex = k * np.linalg.norm(X - pc, axis=-1)
            ew = k * np.linalg.norm(w - pd, axis=-1)
            bad = max(np.max(np.abs(dy - ex) / np.maximum(1.0, ex)),
                      np.max(np.abs(dz - ew) / np.maximum(1.0, ew)))
            if bad > 1e-10:
                raise NumericalError(f"relaxed-projection segment identity violated at t={t}",
                                     residual=float(bad))
        return X + lam * (z - y), {"y": y, "z": z, "lambda": np.full(len(X), lam)}

    def describe(self):
        return {"kind": "DampedDR", "label": self.label, "eta": self.eta,
                "lambda_inf": self.lambda_inf}


class KM(QuasiCyclic):
    """``x^{t+1} = x^t + lambda_t (T x^t - x^t)``, run as the schedule ``(1-lambda_t, lambda_t)`` on ``{I, T}``."""

    def __init__(self, op, lambdas=0.5, probe=1000, sets=None):
        self.op = op
        self.lambdas = _as_relaxation(lambdas)
        lam = self.lambdas.probe(probe)
        if not np.min(lam * (1.0 - lam)) > 0:
            raise ConfigError("KM relaxations need inf lambda_t (1 - lambda_t) > 0")
        self.sigma0 = float(np.min(lam * (1.0 - lam)))
        schedule = WeightSchedule.custom(lambda t: (1.0 - self.lambdas(t), self.lambdas(t)), 1, 2)
        super().__init__([identity_op(op.alpha), op], schedule, known_fix=op.known_fix, sets=sets)
        self.label = f"KM[{self.lambdas.description}]({op.label})"

    def operators(self):
        return [self.op]


class ForwardBackward(KM):
    """Relaxed forward-backward splitting for a :class:`~splitrate.operators.VipProblem`."""

    def __init__(self, problem, gamma, lambdas=0.5, probe=1000):
        try:
            op = forward_backward_op(problem, gamma)
        except UsageError as exc:
            raise ConfigError(str(exc)) from exc
        self.problem = problem
        self.gamma = gamma
        super().__init__(op, lambdas, probe)
        self.label = f"FB[gamma={gamma:g}, lambda={self.lambdas.description}]"


# --- driver ------------------------------------------------------------------

def execute(plan, x0, stop=None, *, record="geometric", fejer_target=None, observers=None,
            seed=None):
    """Run ``plan`` from ``x0``.

    Parameters
    ----------
    plan : IterationPlan
    x0 : array_like, shape (n,) or (m, n)
        A batch of starting points yields a list of traces.
    stop : StoppingRule, optional
    record : {"geometric", "dense"} or int
        Iterate thinning; residuals are always stored for every step.
    fejer_target : array_like, optional
        Point whose distance to the iterates is monitored every step.
    observers : dict, optional
        ``name -> fn(X)`` evaluated at recorded times and stored in ``aux``.
    """
    stop = stop or StoppingRule()
    X0 = as_point(x0, name="x0")
    single = X0.ndim == 1
    X = np.atleast_2d(X0).astype(float, copy=True)
    m, n = X.shape
    observers = dict(observers or {})
    fix = plan.known_fix
    target = None if fejer_target is None else as_point(fejer_target, dim=n, name="fejer_target")

    rec_t, rec_X, rec_aux = [0], [X.copy()], [None]
    residuals = _Chunked(m)
    active = np.ones(m, dtype=bool)
    stop_t = np.full(m, stop.max_iters)
    final_X = X.copy()
    final_aux = [None] * m
    fejer_prev = None if target is None else np.linalg.norm(X - target, axis=1)
    fejer_first = np.full(m, -1)
    reason = np.array(["max_iters"] * m, dtype=object)
    quiet = np.zeros(m, dtype=int)
    span = max(int(getattr(plan, "span", 1)), 1)
    start = time.perf_counter()

    for t in range(stop.max_iters):
        Xn, aux = plan.step(t, X)
        if Xn.shape != X.shape:
            raise UsageError(f"operator changed the iterate shape from {X.shape} to {Xn.shape}")
        if not np.all(np.isfinite(Xn)):
            raise NumericalError(f"non-finite iterate at t={t + 1}")
        diff = Xn - X
        res = np.sqrt(np.einsum('ij,ij->i', diff, diff))
        residuals.append(res)
        X = Xn
        if target is not None:
            dist = np.linalg.norm(X - target, axis=1)
            newly = active & (fejer_first < 0) & (dist > fejer_prev + 1e-9)
            fejer_first[newly] = t + 1
            fejer_prev = dist
        if _should_record(record, t + 1):
            rec_t.append(t + 1)
            rec_X.append(X.copy())
            rec_aux.append(aux)
        quiet = np.where(res <= stop.residual_tol, quiet + 1, 0)
        done = active & (quiet >= span)
        reason[done] = "residual_tol"
        if fix is not None and stop.fix_dist_tol is not None:
            near = active & ~done & (fix.distance(X) <= stop.fix_dist_tol)
            reason[near] = "fix_dist_tol"
            done |= near
        if np.any(done):
            idx = np.flatnonzero(done)
            stop_t[idx] = t + 1
            final_X[idx] = X[idx]
            for i in idx:
                final_aux[i] = None if aux is None else {k: v[i] for k, v in aux.items()}
            active &= ~done
            if not active.any():
                break
    final_X[active] = X[active]
    if np.any(active):
        for i in np.flatnonzero(active):
            final_aux[i] = None if aux is None else {k: v[i] for k, v in aux.items()}
    elapsed = time.perf_counter() - start

    res_all = residuals.array()
    times = np.asarray(rec_t)
    stacked = np.stack(rec_X)  # (k, m, n)
    traces = []
    for i in range(m):
        keep = times <= stop_t[i]
        t_i = times[keep]
        it_i = stacked[keep, i, :]
        aux_rows = [rec_aux[k] for k in np.flatnonzero(keep)]
        if t_i[-1] != stop_t[i]:
            t_i = np.append(t_i, stop_t[i])
            it_i = np.vstack([it_i, final_X[i]])
            aux_rows.append("final")
        aux_out = _assemble_aux(aux_rows, i, final_aux[i])
        for name, fn in observers.items():
            aux_out[name] = np.asarray(fn(it_i))
        meta = {
            "plan": plan.describe(),
            "stop_reason": reason[i],
            "iterations": int(stop_t[i]),
            "wall_clock": elapsed / m,
            "record": record,
            "seed": seed,
        }
        if target is not None:
            meta["fejer_first_violation"] = None if fejer_first[i] < 0 else int(fejer_first[i])
        traces.append(Trace(
            times=t_i,
            iterates=it_i,
            residuals=res_all[:stop_t[i], i],
            dist_fix=None if fix is None else fix.distance(it_i),
            per_set_distances=None if plan.sets is None else plan.sets.distances(it_i),
            aux=aux_out,
            metadata=meta,
        ))
    return traces[0] if single else traces


def _assemble_aux(rows, i, final):
    names = set()
    for r in rows:
        if isinstance(r, dict):
            names.update(r)
    if isinstance(final, dict):
        names.update(final)
    out = {}
    for name in sorted(names):
        vals = []
        template = None
        for r in rows:
            if isinstance(r, dict):
                template = np.asarray(r[name][i])
                break
        if template is None:
            template = np.asarray(final[name])
        for r in rows:
            if r is None:
                vals.append(np.full(template.shape, np.nan))
            elif r == "final":
                vals.append(np.asarray(final[name]))
            else:
                vals.append(np.asarray(r[name][i]))
        out[name] = np.stack(vals)
    return out


def limit_proxy(plan, x_last, t_last, total_iters, residual_tol=1e-13, project=True):
    """Continue ``plan`` from ``x_last`` (time ``t_last``) up to ``total_iters``.

    Members whose steps stay below ``residual_tol`` for a full cycle are
    frozen.  When the plan has a known fixed-point set with a projection,
    the result is projected onto it, which removes the slowly vanishing
    component of sublinearly converging runs.
    """
    X = np.atleast_2d(np.asarray(x_last, dtype=float)).copy()
    active = np.ones(len(X), dtype=bool)
    quiet = np.zeros(len(X), dtype=int)
    span = max(int(getattr(plan, "span", 1)), 1)
    for t in range(int(t_last), int(total_iters)):
        Xn, _ = plan.step(t, X)
        res = np.linalg.norm(Xn - X, axis=1)
        X = np.where(active[:, None], Xn, X)
        quiet = np.where(res <= residual_tol, quiet + 1, 0)
        active &= quiet < span
        if not active.any():
            break
    if project and plan.known_fix is not None:
        P = plan.known_fix.project(X)
        if P is not None:
            X = P
    return X[0] if np.ndim(x_last) == 1 else X


# --- convenience runners -----------------------------------------------------

def run_quasi_cyclic(ops, schedule, x0, stop=None, *, known_fix=None, sets=None, **kwargs):
    plan = QuasiCyclic(ops, schedule, known_fix=known_fix, sets=sets)
    return execute(plan, x0, stop, **kwargs)


def run_extrapolated(ops, weights, alpha_bar, x0, stop=None, *, span_s=1, known_fix=None,
                     **kwargs):
    plan = ExtrapolatedQuasiCyclic(ops, weights, alpha_bar, span_s=span_s, known_fix=known_fix)
    return execute(plan, x0, stop, **kwargs)


def run_multiset_dr(sets, tuples, x0, stop=None, *, known_fix=None, **kwargs):
    plan = MultiSetDR(sets, tuples, known_fix=known_fix)
    return execute(plan, x0, stop, **kwargs)


def run_damped_dr(C, D, eta, lambdas, x0, stop=None, *, known_fix=None, record="dense",
                  **kwargs):
    plan = DampedDR(C, D, eta, lambdas, known_fix=known_fix)
    return execute(plan, x0, stop, record=record, **kwargs)


def run_km(op, lambdas, x0, stop=None, **kwargs):
    return execute(KM(op, lambdas), x0, stop, **kwargs)


def run_forward_backward(problem, gamma, lambdas, x0, stop=None, **kwargs):
    """Forward-backward iteration; ``aux['vip_residual']`` holds ``||x - T x||`` per record."""
    plan = ForwardBackward(problem, gamma, lambdas)
    observers = dict(kwargs.pop("observers", None) or {})
    observers.setdefault("vip_residual", plan.op.residual)
    return execute(plan, x0, stop, observers=observers, **kwargs)
