"""Config-driven experiments: schema, built-in registry, runner and writers.

An experiment is described by a YAML document validated against
:class:`ExperimentConfig` (unknown keys are rejected). :func:`run_experiment`
builds the sets and the iteration plan, runs the ensemble as one batch,
computes limit proxies, fits rates, runs the enabled checks and writes
trace CSVs, plot data and a JSON summary.
"""

import csv
import io
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import diagnostics as dg
from .engine import (DampedDR, ForwardBackward, KM, MultiSetDR, QuasiCyclic, StoppingRule,
                     WeightSchedule, anchored_tuples, cyclic_tuples, execute, limit_proxy,
                     record_times)
from .exceptions import ConfigError, UsageError
from .geometry import (AffineSubspace, Ball, Box, EpigraphPowerNorm, Halfspace, Hyperplane,
                       SetCollection)
from .operators import (HalfLine, SinglePoint, ViaSet, VipProblem, dr_op, projection_op,
                        regularized_dr_op)
from .regularity import (estimate_intersection_holder, estimate_operator_holder, rate_constants,
                         theoretical_delta_theta)

__all__ = [
    "ExperimentConfig",
    "RunSummary",
    "load_config",
    "parse_config",
    "list_experiments",
    "builtin_config",
    "resolve_config",
    "run_experiment",
    "emit_plot_data",
    "write_trace_csv",
    "OUTPUT_ENV_VAR",
]

OUTPUT_ENV_VAR = "SPLITRATE_OUT"
PERCENTILES = (5, 25, 50, 75, 95)


# --- schema --------------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HalfspaceSpec(_Strict):
    """``{x : <normal, x> <= offset}``."""
    type: Literal["halfspace"]
    normal: List[float]
    offset: float


class HyperplaneSpec(_Strict):
    type: Literal["hyperplane"]
    normal: List[float]
    offset: float


class BallSpec(_Strict):
    type: Literal["ball"]
    center: List[float]
    radius: float


class BoxSpec(_Strict):
    type: Literal["box"]
    lower: List[float]
    upper: List[float]


class AffineSpec(_Strict):
    type: Literal["affine"]
    basis: List[List[float]] = []
    anchor: List[float]


class EpigraphSpec(_Strict):
    """``{(x, r) : r >= ||x||**d}`` in dimension ``n + 1``."""
    type: Literal["epigraph"]
    n: int = Field(ge=1)
    d: int = Field(ge=2)


SetSpec = Annotated[Union[HalfspaceSpec, HyperplaneSpec, BallSpec, BoxSpec, AffineSpec, EpigraphSpec],
                    Field(discriminator="type")]


class PointFix(_Strict):
    type: Literal["point"]
    point: List[float]


class HalfLineFix(_Strict):
    type: Literal["halfline"]
    anchor: List[float]
    direction: List[float]


class SetFix(_Strict):
    type: Literal["set"]
    set: SetSpec


FixSpec = Annotated[Union[PointFix, HalfLineFix, SetFix], Field(discriminator="type")]


class AffineMapSpec(_Strict):
    """``F(x) = matrix @ x + shift``."""
    matrix: List[List[float]]
    shift: List[float]


class VipSpec(_Strict):
    F: AffineMapSpec
    cocoercivity: float = Field(gt=0)
    f_set: Optional[SetSpec] = None
    solution: Optional[List[float]] = None


class ProblemSpec(_Strict):
    sets: List[SetSpec] = []
    fix: Optional[FixSpec] = None
    intersection: Optional[SetSpec] = None
    vip: Optional[VipSpec] = None


Lambdas = Union[float, List[float]]


class DRAlg(_Strict):
    kind: Literal["dr"]
    pair: Tuple[int, int] = (0, 1)
    lambdas: Optional[Lambdas] = None


class CyclicProjectionsAlg(_Strict):
    kind: Literal["cyclic-projections"]
    order: Optional[List[int]] = None


class MultisetAlg(_Strict):
    kind: Literal["multiset-dr"]
    tuples: Union[Literal["cyclic", "anchored"], List[Tuple[int, int]]] = "cyclic"


class DampedAlg(_Strict):
    kind: Literal["damped-dr"]
    eta: float = Field(gt=0)
    lambdas: Lambdas = 1.0


class RegularizedAlg(_Strict):
    kind: Literal["regularized-dr"]
    beta: float = Field(gt=0, lt=1)


class FBAlg(_Strict):
    kind: Literal["forward-backward"]
    gamma: float = Field(gt=0)
    lambdas: Lambdas = 0.5


AlgorithmSpec = Annotated[Union[DRAlg, CyclicProjectionsAlg, MultisetAlg, DampedAlg, RegularizedAlg,
                                FBAlg], Field(discriminator="kind")]


class X0Box(_Strict):
    lower: List[float]
    upper: List[float]


class RunSpec(_Strict):
    x0: Union[List[float], X0Box]
    ensemble_count: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    max_iters: int = Field(10 ** 4, ge=1)
    residual_tol: float = Field(1e-13, ge=0)
    limit_iters: Optional[int] = Field(None, ge=1)
    record: Union[Literal["geometric", "dense"], int] = "geometric"


class RegularitySpec(_Strict):
    enabled: bool = False
    target: Literal["operator", "intersection"] = "operator"
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    num_samples: int = Field(4000, ge=50)


class EnvelopeSpec(_Strict):
    """Envelope inputs; ``source: estimate`` takes ``gamma1, mu`` from the regularity fit."""
    source: Literal["estimate", "explicit"] = "estimate"
    gamma1: Optional[float] = Field(None, gt=0, le=1)
    mu: Optional[float] = Field(None, gt=0)
    gamma2: float = Field(1.0, gt=0, le=1)
    beta: float = Field(1.0, gt=0)


class ChecksSpec(_Strict):
    fejer: bool = True
    averagedness: bool = True
    damped_step: bool = True


class AnalysisSpec(_Strict):
    window_fraction: float = Field(0.5, gt=0, le=1)
    regularity: RegularitySpec = RegularitySpec()
    envelope: Optional[EnvelopeSpec] = None
    scaled_power: Optional[float] = Field(None, gt=0)
    burn_in: int = Field(1000, ge=0)
    shadows: bool = False
    checks: ChecksSpec = ChecksSpec()
    references: Dict[str, float] = {}


class OutputSpec(_Strict):
    dir: Optional[str] = None
    trace_csv: str = "traces/member_{member:03d}.csv"
    summary_json: str = "summary.json"
    plot_data: str = "plot_data"
    iterate_stride: int = Field(1, ge=1)


class ExperimentConfig(_Strict):
    name: str
    description: str = ""
    problem: ProblemSpec
    algorithm: AlgorithmSpec
    run: RunSpec
    analysis: AnalysisSpec = AnalysisSpec()
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _consistent(self):
        alg, prob = self.algorithm, self.problem
        dims = {_spec_dim(s) for s in prob.sets}
        if len(dims) > 1:
            raise ValueError(f"problem.sets have mixed dimensions {sorted(dims)}")
        m = len(prob.sets)
        if alg.kind == "forward-backward":
            if prob.vip is None:
                raise ValueError("algorithm forward-backward needs problem.vip")
            dim = len(prob.vip.F.shift)
        else:
            need = {"dr": 2, "damped-dr": 2, "regularized-dr": 2, "cyclic-projections": 1,
                    "multiset-dr": 2}[alg.kind]
            if m < need:
                raise ValueError(f"algorithm {alg.kind} needs at least {need} sets in problem.sets")
            if alg.kind == "dr" and not all(0 <= i < m for i in alg.pair):
                raise ValueError(f"algorithm.pair {alg.pair} references a set outside 0..{m - 1}")
            dim = dims.pop()
        x0 = self.run.x0
        if isinstance(x0, X0Box):
            if len(x0.lower) != dim or len(x0.upper) != dim:
                raise ValueError(f"run.x0 box must have dimension {dim}")
        else:
            if len(x0) != dim:
                raise ValueError(f"run.x0 must have dimension {dim}")
            if self.run.ensemble_count != 1:
                raise ValueError("an explicit run.x0 point requires ensemble_count = 1")
        if self.analysis.envelope is not None and self.analysis.envelope.source == "explicit":
            env = self.analysis.envelope
            if env.gamma1 is None or env.mu is None:
                raise ValueError("explicit envelope needs gamma1 and mu")
        if (self.analysis.envelope is not None and self.analysis.envelope.source == "estimate"
                and not self.analysis.regularity.enabled):
            raise ValueError("envelope source 'estimate' needs analysis.regularity.enabled")
        return self


def _spec_dim(spec):
    if isinstance(spec, (HalfspaceSpec, HyperplaneSpec)):
        return len(spec.normal)
    if isinstance(spec, BallSpec):
        return len(spec.center)
    if isinstance(spec, BoxSpec):
        return len(spec.lower)
    if isinstance(spec, AffineSpec):
        return len(spec.anchor)
    return spec.n + 1


def _format_validation(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "invalid experiment configuration:\n  " + "\n  ".join(lines)


def parse_config(data):
    """Validate a mapping; raises :class:`ConfigError` with field-level messages."""
    if not isinstance(data, dict):
        raise ConfigError("experiment configuration must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def load_config(path):
    """Read and validate a YAML experiment file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from None
    return parse_config(data)


# --- built-ins -------------------------------------------------------------------

def _ex61(n=1, d=4):
    dim = n + 1
    e_last = [0.0] * n + [1.0]
    return {
        "name": "ex61",
        "description": f"DR for the halfspace r <= 0 and the epigraph of ||x||^{d}, n={n}",
        "problem": {"sets": [{"type": "halfspace", "normal": e_last, "offset": 0.0},
                             {"type": "epigraph", "n": n, "d": d}],
                    "fix": {"type": "halfline", "anchor": [0.0] * dim, "direction": e_last},
                    "intersection": {"type": "affine", "basis": [], "anchor": [0.0] * dim}},
        "algorithm": {"kind": "dr"},
        "run": {"x0": [1.0] * dim, "max_iters": 10 ** 5, "residual_tol": 0.0, "limit_iters": 10 ** 6},
        "analysis": {"regularity": {"enabled": True, "lower": [-2.0] * dim, "upper": [2.0] * dim},
                     "envelope": {"source": "estimate"},
                     "references": {"observed_order": 1.0 / (d - 2) if d > 2 else math.inf,
                                    "guaranteed_order": 1.0 / (2 * (d - 1)),
                                    "holder_exponent": 1.0 / d}},
    }


def _ball_line(name, description, x0, count, max_iters, seed=0, power=None):
    return {
        "name": name,
        "description": description,
        "problem": {"sets": [{"type": "hyperplane", "normal": [1.0, 0.0], "offset": 0.0},
                             {"type": "ball", "center": [-1.0, 0.0], "radius": 1.0}],
                    "fix": {"type": "halfline", "anchor": [0.0, 0.0], "direction": [-1.0, 0.0]}},
        "algorithm": {"kind": "dr"},
        "run": {"x0": x0, "ensemble_count": count, "seed": seed, "max_iters": max_iters,
                "residual_tol": 1e-13, "limit_iters": 10 * max_iters},
        "analysis": {"scaled_power": power, "burn_in": 1000,
                     "references": {"observed_ratio": 0.5, "guaranteed_order": 0.25}},
    }


def _multiset(tuples):
    return {
        "name": f"multiset-dr-{tuples}",
        "description": f"{tuples} multiple-sets DR for three unit balls with a thin common part",
        "problem": {"sets": [{"type": "ball", "center": [0.0, 0.0], "radius": 1.0},
                             {"type": "ball", "center": [1.9, 0.0], "radius": 1.0},
                             {"type": "ball", "center": [0.95, 1.2], "radius": 1.0}]},
        "algorithm": {"kind": "multiset-dr", "tuples": tuples},
        "run": {"x0": {"lower": [-5.0, -5.0], "upper": [5.0, 5.0]}, "ensemble_count": 10,
                "seed": 0, "max_iters": 10 ** 4, "limit_iters": 10 ** 5},
    }


_BUILTINS = {
    "ex61": _ex61,
    "ex62-single": lambda: _ball_line(
        "ex62-single", "DR for a unit ball and its tangent line, one random start",
        {"lower": [-100.0, -100.0], "upper": [100.0, 100.0]}, 1, 10 ** 5, power=0.25),
    "ex62-ensemble": lambda: _ball_line(
        "ex62-ensemble", "DR for a unit ball and its tangent line, 200 random starts",
        {"lower": [-100.0, -100.0], "upper": [100.0, 100.0]}, 200, 10 ** 5, power=0.25),
    "ex63-restricted-start": lambda: _ball_line(
        "ex63-restricted-start", "ball/tangent-line DR from u < 0, 0 < v < 1",
        {"lower": [-10.0, 1e-3], "upper": [-1e-3, 1.0 - 1e-3]}, 20, 10 ** 5, power=0.5),
    "polyhedral-damped": lambda: {
        "name": "polyhedral-damped",
        "description": "damped DR for two halfspaces meeting in a line",
        "problem": {"sets": [{"type": "halfspace", "normal": [1.0, 0.0], "offset": 0.0},
                             {"type": "halfspace", "normal": [-1.0, 0.0], "offset": 0.0}],
                    "intersection": {"type": "hyperplane", "normal": [1.0, 0.0], "offset": 0.0}},
        "algorithm": {"kind": "damped-dr", "eta": 1.0, "lambdas": 1.0},
        "run": {"x0": [3.0, 4.0], "max_iters": 2000, "residual_tol": 0.0, "record": "dense"},
    },
    "cyclic-projections-lines": lambda: {
        "name": "cyclic-projections-lines",
        "description": "alternating projections between two lines at angle pi/4",
        "problem": {"sets": [{"type": "hyperplane", "normal": [0.0, 1.0], "offset": 0.0},
                             {"type": "hyperplane",
                              "normal": [-math.sin(math.pi / 4), math.cos(math.pi / 4)],
                              "offset": 0.0}],
                    "fix": {"type": "point", "point": [0.0, 0.0]}},
        "algorithm": {"kind": "cyclic-projections"},
        "run": {"x0": [1.0, 2.0], "max_iters": 100, "residual_tol": 0.0, "record": "dense"},
        "analysis": {"references": {"per_cycle_contraction": 0.5}},
    },
    "multiset-dr-cyclic": lambda: _multiset("cyclic"),
    "multiset-dr-anchored": lambda: _multiset("anchored"),
    "infeasible-regularized-dr": lambda: {
        "name": "infeasible-regularized-dr",
        "description": "regularized DR for the disjoint halfspaces x1 <= -1 and x1 >= 1",
        "problem": {"sets": [{"type": "halfspace", "normal": [1.0, 0.0], "offset": -1.0},
                             {"type": "halfspace", "normal": [-1.0, 0.0], "offset": -1.0}],
                    "fix": {"type": "set",
                            "set": {"type": "hyperplane", "normal": [1.0, 0.0], "offset": 1.0}}},
        "algorithm": {"kind": "regularized-dr", "beta": 0.5},
        "run": {"x0": [5.0, 3.0], "max_iters": 500, "residual_tol": 0.0, "record": "dense"},
        "analysis": {"shadows": True, "references": {"set_distance": 2.0}},
    },
    "fb-lcp": lambda: {
        "name": "fb-lcp",
        "description": "forward-backward for x >= 0, x - 1 >= 0, x (x - 1) = 0",
        "problem": {"vip": {"F": {"matrix": [[1.0]], "shift": [-1.0]}, "cocoercivity": 1.0,
                            "f_set": {"type": "box", "lower": [0.0], "upper": [math.inf]},
                            "solution": [1.0]}},
        "algorithm": {"kind": "forward-backward", "gamma": 1.0, "lambdas": 0.5},
        "run": {"x0": [5.0], "max_iters": 200, "residual_tol": 0.0, "record": "dense"},
    },
}


def list_experiments():
    """Names of the built-in experiments."""
    return list(_BUILTINS)


def builtin_config(name, **params):
    """Validated configuration of a built-in experiment.

    ``params`` are forwarded to parameterised built-ins (``ex61`` takes
    ``n`` and ``d``).
    """
    if name not in _BUILTINS:
        raise ConfigError(f"unknown experiment {name!r}; valid names: {', '.join(_BUILTINS)}")
    try:
        data = _BUILTINS[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None
    return parse_config(data)


def resolve_config(ref):
    """A built-in name or a path to a YAML file."""
    if ref in _BUILTINS:
        return builtin_config(ref)
    if os.path.exists(ref):
        return load_config(ref)
    raise ConfigError(f"{ref!r} is neither a file nor a built-in; valid names: {', '.join(_BUILTINS)}")


# --- building ----------------------------------------------------------------------

def _make_set(spec):
    if isinstance(spec, HalfspaceSpec):
        return Halfspace(spec.normal, spec.offset)
    if isinstance(spec, HyperplaneSpec):
        return Hyperplane(spec.normal, spec.offset)
    if isinstance(spec, BallSpec):
        return Ball(spec.center, spec.radius)
    if isinstance(spec, BoxSpec):
        return Box(spec.lower, spec.upper)
    if isinstance(spec, AffineSpec):
        return AffineSubspace(np.asarray(spec.basis, dtype=float).reshape(-1, len(spec.anchor)),
                              spec.anchor)
    return EpigraphPowerNorm(spec.n, spec.d)


def _make_fix(spec):
    if spec is None:
        return None
    if isinstance(spec, PointFix):
        return SinglePoint(spec.point)
    if isinstance(spec, HalfLineFix):
        return HalfLine(spec.anchor, spec.direction)
    return ViaSet(_make_set(spec.set))


def _build(cfg):
    """Sets, plan and intersection set for a validated config."""
    sets = [_make_set(s) for s in cfg.problem.sets]
    fix = _make_fix(cfg.problem.fix)
    alg = cfg.algorithm
    if alg.kind == "dr":
        C, D = sets[alg.pair[0]], sets[alg.pair[1]]
        T = dr_op(C, D, known_fix=fix)
        if alg.lambdas is None:
            plan = QuasiCyclic([T], WeightSchedule.constant([1.0]), sets=SetCollection((C, D)))
        else:
            plan = KM(T, alg.lambdas, sets=SetCollection((C, D)))
    elif alg.kind == "cyclic-projections":
        order = alg.order if alg.order is not None else list(range(len(sets)))
        if any(not 0 <= j < len(sets) for j in order):
            raise ConfigError(f"algorithm.order references a set outside 0..{len(sets) - 1}")
        plan = QuasiCyclic([projection_op(c) for c in sets], WeightSchedule.cyclic(order),
                           known_fix=fix, sets=SetCollection(tuple(sets)))
    elif alg.kind == "multiset-dr":
        if alg.tuples == "cyclic":
            tuples = cyclic_tuples(len(sets))
        elif alg.tuples == "anchored":
            tuples = anchored_tuples(len(sets))
        else:
            tuples = alg.tuples
        plan = MultiSetDR(sets, tuples, known_fix=fix)
    elif alg.kind == "damped-dr":
        plan = DampedDR(sets[0], sets[1], alg.eta, alg.lambdas, known_fix=fix)
    elif alg.kind == "regularized-dr":
        T = regularized_dr_op(sets[0], sets[1], alg.beta, known_fix=fix)
        plan = QuasiCyclic([T], WeightSchedule.constant([1.0]), sets=SetCollection(tuple(sets[:2])))
    else:
        vip = cfg.problem.vip
        A, c = np.asarray(vip.F.matrix, dtype=float), np.asarray(vip.F.shift, dtype=float)
        problem = VipProblem(lambda x: x @ A.T + c, vip.cocoercivity,
                             f_set=None if vip.f_set is None else _make_set(vip.f_set),
                             solution=vip.solution)
        plan = ForwardBackward(problem, alg.gamma, alg.lambdas)
    inter = None if cfg.problem.intersection is None else _make_set(cfg.problem.intersection)
    return sets, plan, inter


def _starting_points(cfg, rng):
    x0 = cfg.run.x0
    if isinstance(x0, X0Box):
        lo, hi = np.asarray(x0.lower, dtype=float), np.asarray(x0.upper, dtype=float)
        return rng.uniform(lo, hi, size=(cfg.run.ensemble_count, len(lo)))
    return np.asarray([x0], dtype=float)


# --- summary -------------------------------------------------------------------------

@dataclass
class RunSummary:
    """Outcome of :func:`run_experiment`; ``to_dict`` gives the JSON document."""

    name: str
    config: dict
    members: list
    aggregate: dict
    checks: dict
    regularity: Optional[dict]
    constants: Optional[dict]
    timing: dict
    defaults: dict
    paths: dict = field(default_factory=dict)
    traces: list = field(default_factory=list, repr=False)
    limits: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self):
        return {"name": self.name, "config": self.config, "defaults": self.defaults,
                "aggregate": self.aggregate, "checks": self.checks, "regularity": self.regularity,
                "constants": self.constants, "timing": self.timing, "paths": self.paths,
                "members": self.members}


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _stats(values):
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"count": 0, "median": None, "min": None, "max": None}
    return {"count": int(v.size), "median": float(np.median(v)), "min": float(v.min()),
            "max": float(v.max())}


def _limits(cfg, plan, traces):
    """Final iterates for converged members, continued runs for the rest."""
    X = np.array([t.final for t in traces])
    open_rows = np.array([t.metadata["stop_reason"] == "max_iters" for t in traces])
    horizon = cfg.run.limit_iters or 10 * cfg.run.max_iters
    if open_rows.any() and horizon > cfg.run.max_iters:
        X[open_rows] = limit_proxy(plan, X[open_rows], cfg.run.max_iters, horizon,
                                   residual_tol=cfg.run.residual_tol, project=False)
    if plan.known_fix is not None:
        P = plan.known_fix.project(X)
        if P is not None:
            X = P
    return X, horizon


def run_experiment(cfg, *, out_dir=None, seed=None, max_iters=None, write=True):
    """Run a validated experiment, write its artifacts and return the summary.

    Parameters
    ----------
    cfg : ExperimentConfig
    out_dir : path, optional
        Overrides ``output.dir`` and the ``SPLITRATE_OUT`` environment variable.
    seed, max_iters : int, optional
        Override the corresponding ``run`` fields.
    write : bool
        Skip all file output when false.
    """
    run_changes = {}
    if seed is not None:
        run_changes["seed"] = int(seed)
    if max_iters is not None:
        run_changes["max_iters"] = int(max_iters)
    if run_changes:
        cfg = parse_config(dict(cfg.model_dump(mode="python"),
                                run=dict(cfg.run.model_dump(mode="python"), **run_changes)))
    clock = {}
    t_start = time.perf_counter()
    try:
        sets, plan, inter = _build(cfg)
    except UsageError as exc:
        raise ConfigError(str(exc)) from None
    rng = np.random.Generator(np.random.PCG64(cfg.run.seed))
    X0 = _starting_points(cfg, rng)
    stop = StoppingRule(max_iters=cfg.run.max_iters, residual_tol=cfg.run.residual_tol)
    t0 = time.perf_counter()
    traces = execute(plan, X0, stop, record=cfg.run.record, seed=cfg.run.seed)
    clock["iterate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    X_bar, horizon = _limits(cfg, plan, traces)
    clock["limit_proxy"] = time.perf_counter() - t0

    an = cfg.analysis
    t0 = time.perf_counter()
    regularity = None
    if an.regularity.enabled:
        regularity = _estimate_regularity(cfg, sets, plan, inter)
    constants = _envelope_inputs(cfg, plan, regularity)
    clock["regularity"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    members = []
    checks = {}
    ops = plan.operators()
    if an.checks.averagedness and ops:
        dim = X0.shape[1]
        reports = [dg.check_averagedness(op, dim, seed=cfg.run.seed) for op in ops]
        checks["averagedness"] = {"passed": all(r.passed for r in reports),
                                  "operators": [dict(r.to_dict(), label=op.label)
                                                for r, op in zip(reports, ops)]}
    for i, (tr, xb) in enumerate(zip(traces, X_bar)):
        members.append(_member_entry(cfg, plan, sets, inter, tr, xb, X0[i], i, constants))
    for key in ("fejer", "damped_step", "scaled_monotone"):
        vals = [m[key]["passed"] if isinstance(m.get(key), dict) else m.get(key)
                for m in members if m.get(key) is not None]
        if vals:
            checks[key] = {"passed_fraction": float(np.mean(vals)), "passed": bool(all(vals))}
    clock["analysis"] = time.perf_counter() - t0

    aggregate = {
        "r_fit": _stats(m["linear"]["rate"] for m in members),
        "rho_fit": _stats(m["sublinear"]["rate"] for m in members),
        "terminal_ratio": _stats(m["sublinear"]["terminal_ratio"] for m in members),
        "iterations": _stats(m["iterations"] for m in members),
        "num_members": len(members),
        "references": dict(an.references),
    }
    if constants is not None:
        aggregate["envelope_fraction"] = _stats(m["envelope_fraction"] for m in members)
    if an.shadows:
        aggregate["shadow_gap"] = _stats(m["shadow_gap"] for m in members)

    defaults = {"limit_iters": horizon, "residual_tol": cfg.run.residual_tol,
                "max_iters": cfg.run.max_iters, "record": cfg.run.record,
                "window_fraction": an.window_fraction, "error_floor": dg.ERROR_FLOOR,
                "prng": "numpy PCG64"}
    clock["total"] = time.perf_counter() - t_start
    summary = RunSummary(name=cfg.name, config=cfg.model_dump(mode="json"), members=members,
                         aggregate=aggregate, checks=checks, regularity=regularity,
                         constants=None if constants is None else constants["summary"],
                         timing=clock, defaults=defaults, traces=traces, limits=X_bar)
    if write:
        _write_outputs(cfg, summary, sets, out_dir)
    return summary


def _estimate_regularity(cfg, sets, plan, inter):
    spec = cfg.analysis.regularity
    dim = sets[0].dim
    lower = spec.lower if spec.lower is not None else [-1.0] * dim
    upper = spec.upper if spec.upper is not None else [1.0] * dim
    if spec.target == "operator":
        ops = plan.operators()
        if len(ops) != 1 or ops[0].known_fix is None:
            raise ConfigError("operator regularity needs a single-operator plan with problem.fix")
        est = estimate_operator_holder(ops[0], (lower, upper), spec.num_samples, cfg.run.seed)
    else:
        if inter is None:
            raise ConfigError("intersection regularity needs problem.intersection")
        est = estimate_intersection_holder(sets, inter.distance, (lower, upper), spec.num_samples,
                                           cfg.run.seed,
                                           intersection_points=inter.project(
                                               np.zeros((1, dim))))
    return est.to_dict()


def _envelope_inputs(cfg, plan, regularity):
    env = cfg.analysis.envelope
    if env is None:
        return None
    ops = plan.operators()
    if not ops or plan.known_fix is None:
        raise ConfigError("envelope checks need operators with a known fixed-point set")
    if env.source == "estimate":
        gamma1, mu = regularity["gamma"], regularity["modulus"]
    else:
        gamma1, mu = env.gamma1, env.mu
    alpha = max(op.alpha for op in ops)
    report = getattr(plan, "report", None)
    sigma = report.sigma if report is not None else 1.0
    span = report.span_s if report is not None else 1
    delta, theta = theoretical_delta_theta(gamma1, env.gamma2, alpha, sigma, span, mu, env.beta)
    return {"delta": delta, "theta": theta, "span": span, "sigma": sigma, "alpha": alpha,
            "summary": {"delta": delta, "theta": theta, "gamma1": gamma1, "mu": mu,
                        "gamma2": env.gamma2, "beta": env.beta, "alpha": alpha, "sigma": sigma,
                        "span_s": span}}


def _member_entry(cfg, plan, sets, inter, tr, xb, x0, i, constants):
    an = cfg.analysis
    lin = dg.fit_linear_rate(tr, xb, an.window_fraction)
    sub = dg.fit_sublinear_exponent(tr, xb, an.window_fraction)
    err = lin.errors_to_limit
    entry = {
        "member": i,
        "x0": x0.tolist(),
        "iterations": tr.metadata["iterations"],
        "stop_reason": tr.metadata["stop_reason"],
        "final": tr.final.tolist(),
        "limit_proxy": xb.tolist(),
        "final_error": float(err[-1]),
        "constant_zero_series": bool(np.all(err == 0)),
        "linear": lin.to_dict(),
        "sublinear": sub.to_dict(),
    }
    if an.checks.fejer:
        entry["fejer"] = dg.check_fejer(tr, xb).to_dict()
    if an.scaled_power is not None:
        entry["scaled_monotone"] = dg.check_scaled_monotone(tr, xb, an.scaled_power, an.burn_in)
    if constants is not None:
        dist0 = float(plan.known_fix.distance(x0))
        c = rate_constants(constants["delta"], constants["theta"], constants["span"], dist0,
                           sigma=constants["sigma"], alpha=constants["alpha"])
        entry["envelope"] = c.to_dict()
        entry["envelope_fraction"] = dg.check_envelope(tr, xb, c)
    if isinstance(plan, DampedDR) and an.checks.damped_step:
        x_star = inter.project(xb) if inter is not None else xb
        rep = dg.check_damped_step_inequalities(tr, plan.C, plan.D, plan.eta, x_star,
                                                lambdas=plan.lambda_inf)
        entry["damped_step"] = rep.to_dict()
    if an.shadows:
        s1 = sets[1].project(xb)
        s2 = sets[0].project(s1)
        entry["shadows"] = [s1.tolist(), s2.tolist()]
        entry["shadow_gap"] = float(np.linalg.norm(s1 - s2))
    if isinstance(plan, ForwardBackward):
        entry["vip_residual"] = float(plan.op.residual(tr.final))
    return entry


# --- writers ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_trace_csv(path, trace, iterate_stride=1):
    """Columns ``t, residual, dist_fix?, dist_set_1..m?, x_1..n?``.

    ``residual`` at time ``t`` is ``||x^t - x^{t-1}||`` (NaN at ``t = 0``);
    iterate columns are filled every ``iterate_stride``-th row and empty
    otherwise.
    """
    times = trace.times
    n = trace.iterates.shape[1]
    header = ["t", "residual"]
    if trace.dist_fix is not None:
        header.append("dist_fix")
    m = 0 if trace.per_set_distances is None else trace.per_set_distances.shape[1]
    header += [f"dist_set_{j + 1}" for j in range(m)]
    header += [f"x_{k + 1}" for k in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k, t in enumerate(times):
        row = [str(int(t)), _fmt(trace.residuals[t - 1]) if t > 0 else "nan"]
        if trace.dist_fix is not None:
            row.append(_fmt(trace.dist_fix[k]))
        row += [_fmt(v) for v in (trace.per_set_distances[k] if m else [])]
        if k % iterate_stride == 0 or k == len(times) - 1:
            row += [_fmt(v) for v in trace.iterates[k]]
        else:
            row += [""] * n
        w.writerow(row)
    _atomic_write(path, buf.getvalue())


def _series(tr, xb, power):
    err = dg.errors_to_limit(tr, xb)
    out = {"error": (tr.times, err)}
    rt, rc = dg.ratio_curve(tr.times, err)
    out["ratio"] = (rt, rc)
    if power is not None:
        out["scaled_error"] = (tr.times, tr.times.astype(float) ** power * err)
    return out


def emit_plot_data(summary, traces, out_dir, power=None, max_iters=None):
    """Write per-member ``(t, value)`` series and an aggregate percentile file.

    Per member and quantity the file is ``member_XXX_<quantity>.csv`` with
    quantities ``error``, ``ratio`` and, when ``power`` is given,
    ``scaled_error`` (``t**power * error``). ``aggregate_percentiles.csv``
    holds percentiles across members on a common geometric time grid; a
    member that stopped early contributes its last recorded value.
    Returns the list of written paths.
    """
    out_dir = Path(out_dir)
    limits = summary.limits
    paths = []
    per_member = []
    for i, (tr, xb) in enumerate(zip(traces, limits)):
        series = _series(tr, xb, power)
        per_member.append(series)
        for q, (t, v) in series.items():
            p = out_dir / f"member_{i:03d}_{q}.csv"
            _atomic_write(p, _csv_text(["t", "value"], zip(t.astype(int), v)))
            paths.append(p)
    horizon = max_iters or max(int(tr.times[-1]) for tr in traces)
    grid = record_times(horizon)
    # error held at its last recorded value beyond a member's stopping time
    held = np.empty((len(traces), len(grid)))
    for i, (tr, series) in enumerate(zip(traces, per_member)):
        j = np.searchsorted(tr.times, grid, side="right") - 1
        held[i] = np.where(j >= 0, series["error"][1][np.maximum(j, 0)], np.nan)
    tg = grid.astype(float)
    derived = {"error": held}
    with np.errstate(divide="ignore", invalid="ignore"):
        derived["ratio"] = np.where((tg >= 2) & (held > 0), -np.log(held) / np.log(tg), np.nan)
    if power is not None:
        derived["scaled_error"] = tg ** power * held
    rows = []
    for q, values in derived.items():
        for k, t in enumerate(grid):
            col = values[:, k]
            col = col[np.isfinite(col)]
            if col.size:
                pct = np.percentile(col, PERCENTILES)
                rows.append([q, int(t), int(col.size)] + [float(x) for x in pct])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "t", "count"] + [f"p{p:02d}" for p in PERCENTILES])
    for row in rows:
        w.writerow([row[0]] + [_fmt(v) for v in row[1:]])
    agg = out_dir / "aggregate_percentiles.csv"
    _atomic_write(agg, buf.getvalue())
    paths.append(agg)
    return paths


def _resolve_out_dir(cfg, out_dir):
    if out_dir is not None:
        return Path(out_dir)
    env = os.environ.get(OUTPUT_ENV_VAR)
    if env:
        return Path(env) / cfg.name
    if cfg.output.dir is not None:
        return Path(cfg.output.dir)
    return Path("runs") / cfg.name


def _write_outputs(cfg, summary, sets, out_dir):
    base = _resolve_out_dir(cfg, out_dir)
    out = cfg.output
    trace_paths = []
    for i, tr in enumerate(summary.traces):
        p = base / out.trace_csv.format(member=i, name=cfg.name)
        write_trace_csv(p, tr, out.iterate_stride)
        trace_paths.append(str(p))
    plot_paths = emit_plot_data(summary, summary.traces, base / out.plot_data,
                                power=cfg.analysis.scaled_power, max_iters=cfg.run.max_iters)
    summary.paths = {"out_dir": str(base), "traces": trace_paths,
                     "plot_data": str(base / out.plot_data), "num_plot_files": len(plot_paths),
                     "summary_json": str(base / out.summary_json)}
    _atomic_write(base / out.summary_json,
                  json.dumps(_json_safe(summary.to_dict()), indent=2, sort_keys=False) + "\n")
