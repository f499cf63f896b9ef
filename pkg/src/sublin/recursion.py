"""Backward induction for E[phi(S_n / n)] under Peng-independent steps.

The state is the raw partial sum s.  Stage i holds u_i(s), the value of the
remaining game after i steps, with u_n(s) = phi(s / n) and

    u_{i-1}(s) = max over mu of  sum_j p_ij * u_i(s + mu + z_ij).

Two representations of u_i are used.  When every step offers finitely many
means the reachable sums are enumerated exactly; otherwise each stage gets
a uniform grid spanning its full reachable range and values in between are
linearly interpolated.  Either way the returned ``error_bound`` is a sum of
per-stage terms, each a multiple of the stage Lipschitz constant L / n.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericError, ResourceError
from .models import LipschitzFn, SequenceModel, StepModel, constant, ramp_down, ramp_up

DEFAULT_MEAN_POINTS = 33
DEFAULT_NODES = 4096
MAX_EXACT_STATES = 200_000
STRATEGY_CAP = 1_000_000
GOLDEN_ITERATIONS = 24
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

MeanGrid = Callable[[int, StepModel], Sequence[float]] | Sequence[Sequence[float]]


@dataclass(frozen=True)
class ValueGrid:
    """Values on the uniform grid x_min, x_min + spacing, ..."""

    x_min: float
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        if not self.spacing > 0:
            raise InputError("grid spacing must be positive")
        if self.values.size < 2:
            raise InputError("a grid needs at least two nodes")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("non-finite value on grid")

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.values.size)

    @property
    def x_max(self) -> float:
        return self.x_min + self.spacing * (self.values.size - 1)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values)


@dataclass
class RecursionResult:
    value: float
    error_bound: float
    n: int
    grid_report: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "error_bound": self.error_bound, "n": self.n, "grid": self.grid_report}


def _explicit_choices(mean_grid: MeanGrid, i: int, step: StepModel) -> np.ndarray:
    pts = mean_grid(i, step) if callable(mean_grid) else mean_grid[i - 1]
    pts = np.unique(np.asarray(pts, dtype=float))
    if pts.size == 0:
        raise InputError(f"empty mean grid at step {i}")
    slack = 1e-12 * (1.0 + abs(step.mean_lo) + abs(step.mean_hi))
    if pts[0] < step.mean_lo - slack or pts[-1] > step.mean_hi + slack:
        raise InputError(f"mean grid at step {i} leaves [{step.mean_lo}, {step.mean_hi}]")
    return pts


@dataclass
class _Plan:
    choices: list          # per step: array of candidate means
    mean_gap: list         # per step: mean-grid spacing feeding the error bound
    refine: bool
    finite: bool           # choice sets are the whole admissible set used


def _plan(steps, phi: LipschitzFn, mean_grid, mean_points: int, refine: bool) -> _Plan:
    if mean_grid is not None:
        return _Plan([_explicit_choices(mean_grid, i, s) for i, s in enumerate(steps, 1)],
                     [0.0] * len(steps), False, True)
    if phi.monotone != 0:
        # u_i inherits phi's monotonicity, so the optimal mean is an endpoint.
        pick = (lambda s: s.mean_hi) if phi.monotone > 0 else (lambda s: s.mean_lo)
        return _Plan([np.array([pick(s)]) for s in steps], [0.0] * len(steps), False, True)
    if mean_points < 1:
        raise InputError("mean_points must be >= 1")
    choices, gaps = [], []
    for s in steps:
        m = 1 if s.width == 0 else max(mean_points, 2)
        choices.append(np.linspace(s.mean_lo, s.mean_hi, m))
        gaps.append(0.0 if m == 1 else s.width / (m - 1))
    single = all(c.size == 1 for c in choices)
    return _Plan(choices, gaps, refine and not single, single or not refine)


def _merge_sorted(values: np.ndarray):
    """Merge sums that differ only by rounding; returns representatives, group ids, max span."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    tol = 1e-12 * (1.0 + float(np.max(np.abs(v))))
    new_group = np.empty(v.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(v) > tol
    gid_sorted = np.cumsum(new_group) - 1
    reps = v[new_group]
    span = float(np.max(v - reps[gid_sorted])) if v.size else 0.0
    gid = np.empty_like(gid_sorted)
    gid[order] = gid_sorted
    return reps, gid, span


def _exact_states(steps, plan: _Plan, max_states: int):
    states = [np.array([0.0])]
    succ, spans = [], []
    for i, s in enumerate(steps):
        mu, z = plan.choices[i], s.noise.support
        cand = (states[-1][:, None, None] + mu[None, :, None]) + z[None, None, :]
        if cand.size > 8 * max_states:
            return None
        reps, gid, span = _merge_sorted(cand.ravel())
        if reps.size > max_states:
            return None
        states.append(reps)
        succ.append(gid.reshape(cand.shape))
        spans.append(span)
    return states, succ, spans


def _run_exact(steps, n, phi, plan, exact):
    states, succ, spans = exact
    lip = phi.lipschitz / n
    u = phi(states[-1] / n)
    err = 0.0
    for i in range(n, 0, -1):
        p = steps[i - 1].noise.probs
        stage = u[succ[i - 1]] @ p  # (S, m)
        u = stage.max(axis=1)
        if not np.all(np.isfinite(u)):
            raise NumericError(f"non-finite value at stage {i - 1}")
        err += lip * (spans[i - 1] + 0.5 * plan.mean_gap[i - 1])
    report = {
        "mode": "exact",
        "spacing": 0.0,
        "domain": [float(states[-1][0]), float(states[-1][-1])],
        "mu_grid_points": max(len(c) for c in plan.choices),
        "states": int(max(len(s) for s in states)),
    }
    return float(u[0]), err, report


def _reachable(steps, plan):
    lo = hi = 0.0
    out = [(0.0, 0.0)]
    for i, s in enumerate(steps):
        lo += float(plan.choices[i][0]) + float(s.noise.support[0])
        hi += float(plan.choices[i][-1]) + float(s.noise.support[-1])
        out.append((lo, hi))
    return out


def _golden(objective, a, b, best):
    """Vectorised golden-section search for a max on [a, b]; returns the best value seen."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = objective(c), objective(d)
    best = np.maximum(best, np.maximum(fc, fd))
    for _ in range(GOLDEN_ITERATIONS):
        left = fc >= fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        x = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        fx = objective(x)
        c, fc, d, fd = (np.where(left, x, d), np.where(left, fx, fd),
                        np.where(left, c, x), np.where(left, fc, fx))
        best = np.maximum(best, fx)
    return best


def _run_uniform(steps, n, phi, plan, nodes, spacing, domain, clamp):
    reach = _reachable(steps, plan)
    lip = phi.lipschitz / n
    grids = [None] * (n + 1)
    err_interp = err_mean = err_trunc = 0.0
    max_spacing = 0.0
    for i in range(1, n):
        lo, hi = reach[i]
        glo, ghi = lo, hi
        if domain is not None:
            glo, ghi = max(lo, domain[0]), min(hi, domain[1])
            overshoot = max(glo - lo, hi - ghi, 0.0)
            if overshoot > 0:
                if not clamp:
                    raise InputError(
                        f"grid domain {tuple(domain)} does not cover the reachable range "
                        f"[{lo:.6g}, {hi:.6g}] of stage {i}; enable clamping or widen it"
                    )
                err_trunc += lip * overshoot
            if ghi <= glo:
                ghi = glo + 1.0
        if ghi - glo <= 0:
            ghi = glo + 1.0
        if spacing is not None:
            count = int(math.floor((ghi - glo) / spacing)) + 2
            h = spacing
        else:
            count, h = nodes, (ghi - glo) / (nodes - 1)
        grids[i] = (glo, h, count)
        max_spacing = max(max_spacing, h)
        err_interp += lip * h / 2.0

    def lookup(i, x, vals):
        if i == n:
            return phi(x / n)
        return np.interp(x, grids[i][0] + grids[i][1] * np.arange(grids[i][2]), vals)

    vals = None
    for i in range(n, 0, -1):
        s = steps[i - 1]
        z, p = s.noise.support, s.noise.probs
        if i - 1 == 0:
            pts = np.array([0.0])
        else:
            g = grids[i - 1]
            pts = g[0] + g[1] * np.arange(g[2])
        mu = plan.choices[i - 1]

        def objective(m, pts=pts, i=i, vals=vals, z=z, p=p):
            # m has shape (nodes, candidates)
            x = (pts[:, None, None] + m[:, :, None]) + z
            return lookup(i, x, vals) @ p

        grid_vals = objective(np.broadcast_to(mu, (pts.size, mu.size)).copy())
        k = np.argmax(grid_vals, axis=1)
        best = grid_vals[np.arange(pts.size), k]
        if plan.refine and mu.size > 1:
            a = mu[np.maximum(k - 1, 0)]
            b = mu[np.minimum(k + 1, mu.size - 1)]
            best = _golden(lambda m: objective(m[:, None])[:, 0], a, b, best)
        if not np.all(np.isfinite(best)):
            raise NumericError(f"non-finite value at stage {i - 1}")
        vals = best
        err_mean += lip * plan.mean_gap[i - 1] / 2.0
    report = {
        "mode": "uniform",
        "spacing": max_spacing,
        "domain": list(reach[n]),
        "mu_grid_points": int(max(len(c) for c in plan.choices)),
        "nodes": int(max((g[2] for g in grids if g is not None), default=0)),
        "interp_error": err_interp,
        "mean_error": err_mean,
        "truncation_error": err_trunc,
    }
    return float(vals[0]), err_interp + err_mean + err_trunc, report


def upper_value(
    model: SequenceModel,
    n: int,
    phi: LipschitzFn,
    *,
    mean_grid: MeanGrid | None = None,
    mean_points: int = DEFAULT_MEAN_POINTS,
    refine: bool = True,
    grid: str = "auto",
    nodes: int = DEFAULT_NODES,
    spacing: float | None = None,
    domain: tuple | None = None,
    clamp: bool = False,
    max_exact_states: int = MAX_EXACT_STATES,
) -> RecursionResult:
    """Upper expectation of phi(S_n / n).

    With ``mean_grid`` each step may only choose means from the given points
    and the result is exact for that restricted model.  Otherwise means range
    over the full step interval: a grid of ``mean_points`` means is refined by
    golden-section search, and the grid spacing enters the error bound.
    ``grid`` is one of "auto", "exact" or "uniform".
    """
    if n < 1:
        raise InputError("n must be >= 1")
    if not isinstance(phi, LipschitzFn):
        raise InputError("phi must be a LipschitzFn with a declared constant")
    if grid not in ("auto", "exact", "uniform"):
        raise InputError(f"unknown grid mode {grid!r}")
    if nodes < 2:
        raise InputError("nodes must be >= 2")
    steps = model.steps_upto(n)
    plan = _plan(steps, phi, mean_grid, mean_points, refine)
    if grid == "exact" and not plan.finite:
        raise InputError("exact grid needs finitely many means per step (mean_grid, monotone phi or refine=False)")
    if plan.finite and grid != "uniform" and domain is None:
        exact = _exact_states(steps, plan, max_exact_states)
        if exact is not None:
            value, err, report = _run_exact(steps, n, phi, plan, exact)
            return RecursionResult(value, err, n, report)
        if grid == "exact":
            raise ResourceError(f"reachable sums exceed {max_exact_states} states")
    value, err, report = _run_uniform(steps, n, phi, plan, nodes, spacing, domain, clamp)
    return RecursionResult(value, err, n, report)


def lower_value(model: SequenceModel, n: int, phi: LipschitzFn, **kwargs) -> RecursionResult:
    """Lower (conjugate) expectation: minus the upper value of -phi."""
    r = upper_value(model, n, -phi, **kwargs)
    return RecursionResult(-r.value, r.error_bound, r.n, r.grid_report)


@dataclass(frozen=True)
class MeanEvent:
    """An event about the sample mean S_n / n.

    kinds: "le" (<= a), "lt" (< a), "ge" (>= a), "gt" (> a), "between"
    (a < . < b), "outside" (<= a or >= b), "all", "none".  Ramp sandwiches do
    not see the difference between open and closed ends.
    """

    kind: str
    a: float = math.nan
    b: float = math.nan

    def __post_init__(self):
        if self.kind not in ("le", "lt", "ge", "gt", "between", "outside", "all", "none"):
            raise InputError(f"unknown event kind {self.kind!r}")
        if self.kind in ("between", "outside") and not self.a < self.b:
            raise InputError("need a < b")

    def complement(self) -> "MeanEvent":
        flip = {"le": "gt", "lt": "ge", "ge": "lt", "gt": "le", "between": "outside",
                "outside": "between", "all": "none", "none": "all"}
        return MeanEvent(flip[self.kind], self.a, self.b)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        k, a, b = self.kind, self.a, self.b
        return {
            "le": lambda: x <= a, "lt": lambda: x < a, "ge": lambda: x >= a, "gt": lambda: x > a,
            "between": lambda: (x > a) & (x < b), "outside": lambda: (x <= a) | (x >= b),
            "all": lambda: np.ones(x.shape, bool), "none": lambda: np.zeros(x.shape, bool),
        }[k]()

    def sandwich(self, delta: float) -> tuple:
        """(inner, outer) Lipschitz ramps with inner <= indicator <= outer."""
        k, a, b = self.kind, self.a, self.b
        if k in ("le", "lt"):
            return ramp_down(a, delta), ramp_down(a + delta, delta)
        if k in ("ge", "gt"):
            return ramp_up(a, delta), ramp_up(a - delta, delta)
        if k == "all":
            return constant(1.0), constant(1.0)
        if k == "none":
            return constant(0.0), constant(0.0)
        if k == "between":
            def trap(lo, hi):
                return LipschitzFn(
                    lambda x: np.clip(np.minimum(x - lo, hi - x) / delta, 0.0, 1.0),
                    1.0 / delta, 0, (lo, lo + delta, hi - delta, hi), f"trap({lo},{hi})",
                )
            return trap(a, b), trap(a - delta, b + delta)
        raise InputError("outside events are bounded piecewise, not by a single sandwich")


@dataclass
class CapacityBounds:
    event: MeanEvent
    n: int
    delta: float
    V_lower: float
    V_upper: float
    v_lower: float
    v_upper: float
    error_bound: float

    def to_dict(self) -> dict:
        return {
            "event": {"kind": self.event.kind, "a": self.event.a, "b": self.event.b},
            "n": self.n, "delta": self.delta,
            "V_lower": self.V_lower, "V_upper": self.V_upper,
            "v_lower": self.v_lower, "v_upper": self.v_upper,
            "error_bound": self.error_bound,
        }


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _upper_capacity_bounds(model, n, event: MeanEvent, delta, kwargs):
    if event.kind == "outside":
        lo_part = _upper_capacity_bounds(model, n, MeanEvent("le", event.a), delta, kwargs)
        hi_part = _upper_capacity_bounds(model, n, MeanEvent("ge", event.b), delta, kwargs)
        # monotone under inclusion below, subadditive above
        return (max(lo_part[0], hi_part[0]), min(1.0, lo_part[1] + hi_part[1]),
                lo_part[2] + hi_part[2])
    inner, outer = event.sandwich(delta)
    r_in = upper_value(model, n, inner, **kwargs)
    r_out = upper_value(model, n, outer, **kwargs)
    lo = _clip01(r_in.value - r_in.error_bound)
    hi = _clip01(r_out.value + r_out.error_bound)
    return lo, hi, r_in.error_bound + r_out.error_bound


def mean_event_capacity(model: SequenceModel, n: int, event: MeanEvent, delta: float, **kwargs) -> CapacityBounds:
    """Certified bounds on V and v of an event about S_n / n.

    V is bracketed by the upper values of an inner ramp (vanishing off the
    event) and an outer ramp (equal to one on its closure), each widened by
    its error bound.  v follows by duality, v(A) = 1 - V(A^c).
    """
    if not delta > 0:
        raise InputError("delta must be positive")
    V_lo, V_hi, err = _upper_capacity_bounds(model, n, event, delta, kwargs)
    Vc_lo, Vc_hi, err_c = _upper_capacity_bounds(model, n, event.complement(), delta, kwargs)
    v_lo, v_hi = _clip01(1.0 - Vc_hi), _clip01(1.0 - Vc_lo)
    # V >= v always, so each side can borrow from the other
    V_lo = max(V_lo, v_lo)
    v_hi = min(v_hi, V_hi)
    return CapacityBounds(event, n, delta, V_lo, V_hi, v_lo, v_hi, err + err_c)


def strategy_count(model: SequenceModel, n: int, mean_grid: MeanGrid) -> int:
    steps = model.steps_upto(n)
    count, histories = 1, 1
    for i, s in enumerate(steps, 1):
        count *= len(_explicit_choices(mean_grid, i, s)) ** histories
        histories *= len(s.noise)
    return count


def strategy_oracle(
    model: SequenceModel,
    n: int,
    mean_grid: MeanGrid,
    phi: Callable,
    cap: int = STRATEGY_CAP,
) -> float:
    """Brute-force sup over every adapted strategy of the classical E[phi(S_n/n)].

    A strategy assigns a mean from the step's grid to each history of noise
    outcomes.  Each strategy's expectation is summed over the full outcome
    tree; no dynamic programming is involved.
    """
    if not 1 <= n <= 4:
        raise InputError("strategy_oracle supports 1 <= n <= 4")
    steps = model.steps_upto(n)
    grids = [_explicit_choices(mean_grid, i, s) for i, s in enumerate(steps, 1)]
    total = strategy_count(model, n, mean_grid)
    if total > cap:
        raise ResourceError(f"{total} adapted strategies exceed the cap {cap}")
    sizes = [len(s.noise) for s in steps]
    # decision nodes: depth d has prod(sizes[:d]) histories
    node_offset, radices, offset = [], [], 0
    for d in range(n):
        count_d = math.prod(sizes[:d])
        node_offset.append(offset)
        radices.extend([len(grids[d])] * count_d)
        offset += count_d
    idx = np.arange(total, dtype=np.int64)
    digits = np.empty((total, len(radices)), dtype=np.int16)
    for pos, r in enumerate(radices):
        digits[:, pos] = idx % r
        idx //= r
    f = phi if isinstance(phi, LipschitzFn) else LipschitzFn(phi, 0.0)
    value = np.zeros(total)
    for leaf in itertools.product(*(range(k) for k in sizes)):
        s = np.zeros(total)
        prob = 1.0
        for d in range(n):
            hist = 0
            for j in range(d):
                hist = hist * sizes[j] + leaf[j]
            mu = grids[d][digits[:, node_offset[d] + hist]]
            s = (s + mu) + steps[d].noise.support[leaf[d]]
            prob *= steps[d].noise.probs[leaf[d]]
        value += prob * f(s / n)
    return float(np.max(value))
