"""Exact sublinear expectations on a finite outcome space.

A sublinear expectation is realised as the upper envelope of a finite list of
probability vectors.  Everything here is exact up to floating point and is
used as the ground-truth oracle by the other modules.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import InputError, ResourceError

TOL = 1e-12
DEFAULT_FAMILY_CAP = 1_000_000
MAX_PRODUCT_ENTRIES = 50_000_000

HOMOGENEITY_GRID = (0.0, 0.5, 1.0, 2.0)
EXPONENTIAL_GRID = (0.1, 0.5, 1.0, 2.0)


def compensated_dot(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-wise ``weights @ values`` using Neumaier summation over columns."""
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    terms = weights * np.asarray(values, dtype=float)
    total = np.zeros(terms.shape[0])
    comp = np.zeros(terms.shape[0])
    for k in range(terms.shape[1]):
        x = terms[:, k]
        t = total + x
        big = np.abs(total) >= np.abs(x)
        comp += np.where(big, (total - t) + x, (x - t) + total)
        total = t
    return total + comp


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FiniteDistribution:
    """A law on finitely many real points."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if support.size == 0 or support.shape != probs.shape:
            raise InputError("support and probs must be non-empty and of equal length")
        if not (np.all(np.isfinite(support)) and np.all(np.isfinite(probs))):
            raise InputError("support and probs must be finite")
        if np.any(np.diff(support) <= 0):
            raise InputError("support points must be strictly increasing")
        if np.any(probs < 0) or abs(math.fsum(probs) - 1.0) > TOL:
            raise InputError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "support", _readonly(support))
        object.__setattr__(self, "probs", _readonly(probs))

    @classmethod
    def point_mass(cls, x: float = 0.0) -> "FiniteDistribution":
        return cls([x], [1.0])

    @classmethod
    def uniform(cls, points: Sequence[float]) -> "FiniteDistribution":
        return cls(sorted(points), [1.0 / len(points)] * len(points))

    def __len__(self) -> int:
        return self.support.size

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(compensated_dot(self.probs, fn(self.support))[0])

    @property
    def mean(self) -> float:
        return float(compensated_dot(self.probs, self.support)[0])

    @property
    def second_moment(self) -> float:
        return float(compensated_dot(self.probs, self.support**2)[0])

    def shifted(self, mu: float) -> "FiniteDistribution":
        return FiniteDistribution(self.support + mu, self.probs)

    def to_dict(self) -> dict:
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteDistribution":
        try:
            return cls(d["support"], d["probs"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad distribution document: {exc}") from exc


@dataclass(frozen=True)
class MeasureFamily:
    """Finite outcome space together with a finite set of probability vectors.

    ``upper_expectation`` is the maximum of the linear expectations under
    the listed measures.
    """

    outcomes: tuple
    measures: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        outcomes = tuple(self.outcomes)
        measures = np.atleast_2d(np.asarray(self.measures, dtype=float))
        if len(outcomes) < 1:
            raise InputError("a family needs at least one outcome")
        if len(set(outcomes)) != len(outcomes):
            raise InputError("outcome labels must be distinct")
        if measures.ndim != 2 or measures.shape[0] < 1 or measures.shape[1] != len(outcomes):
            raise InputError(
                f"measures must have shape (M, {len(outcomes)}), got {measures.shape}"
            )
        if not np.all(np.isfinite(measures)) or np.any(measures < 0):
            raise InputError("measure entries must be finite and nonnegative")
        sums = compensated_dot(measures, np.ones(len(outcomes)))
        if np.any(np.abs(sums - 1.0) > TOL):
            raise InputError("every measure must sum to 1 within 1e-12")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "measures", _readonly(measures))
        object.__setattr__(self, "_index", {o: i for i, o in enumerate(outcomes)})

    @property
    def size(self) -> int:
        return len(self.outcomes)

    @property
    def n_measures(self) -> int:
        return self.measures.shape[0]

    @classmethod
    def from_distributions(cls, dists: Sequence[FiniteDistribution]) -> "MeasureFamily":
        """Family on the union of supports, one measure per distribution."""
        points = sorted(set(itertools.chain.from_iterable(d.support.tolist() for d in dists)))
        pos = {x: i for i, x in enumerate(points)}
        rows = np.zeros((len(dists), len(points)))
        for r, d in enumerate(dists):
            for x, p in zip(d.support.tolist(), d.probs.tolist()):
                rows[r, pos[x]] += p
        return cls(tuple(points), rows)

    def variable(self, values: Callable[[Hashable], float] | Sequence[float]) -> np.ndarray:
        """Random variable as a value vector; accepts values or a function of the label."""
        if callable(values):
            return np.array([float(values(o)) for o in self.outcomes])
        return _check_variable(self, values)

    def mask(self, event: Iterable[Hashable]) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        for label in event:
            try:
                m[self._index[label]] = True
            except (KeyError, TypeError):
                raise InputError(f"unknown outcome label {label!r}") from None
        return m

    def complement(self, event: Iterable[Hashable]) -> frozenset:
        m = self.mask(event)
        return frozenset(o for o, inside in zip(self.outcomes, m) if not inside)

    def to_dict(self) -> dict:
        return {"outcomes": list(self.outcomes), "measures": self.measures.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureFamily":
        try:
            outcomes = [tuple(o) if isinstance(o, list) else o for o in d["outcomes"]]
            return cls(tuple(outcomes), d["measures"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad measure family document: {exc}") from exc


def _check_variable(family: MeasureFamily, X) -> np.ndarray:
    x = np.asarray(X, dtype=float).ravel()
    if x.size != family.size:
        raise InputError(f"variable has length {x.size}, family has {family.size} outcomes")
    return x


def upper_expectation(family: MeasureFamily, X) -> float:
    x = _check_variable(family, X)
    return float(np.max(compensated_dot(family.measures, x)))


def lower_expectation(family: MeasureFamily, X) -> float:
    return -upper_expectation(family, -_check_variable(family, X))


@dataclass(frozen=True)
class CapacityPair:
    upper: float
    lower: float


def capacity(family: MeasureFamily, event: Iterable[Hashable]) -> CapacityPair:
    ind = family.mask(event).astype(float)
    return CapacityPair(upper_expectation(family, ind), lower_expectation(family, ind))


@dataclass(frozen=True)
class BoundCheck:
    """One inequality ``lhs <= rhs`` evaluated exactly."""

    name: str
    lhs: float
    rhs: float
    tol: float = TOL

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.tol

    @property
    def tight(self) -> bool:
        return abs(self.lhs - self.rhs) <= self.tol


@dataclass
class CheckReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.checks)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if not c.holds]

    @property
    def any_tight(self) -> bool:
        return any(c.tight for c in self.checks)


def _scaled_tol(*xs: float) -> float:
    return TOL * max(1.0, *(abs(x) for x in xs))


def check_axioms(family: MeasureFamily, variables: Sequence) -> list[str]:
    """Check monotonicity, constants, subadditivity and homogeneity on all pairs.

    Returns a list of human-readable violations; empty means every check passed.
    """
    if not variables:
        raise InputError("need at least one sample variable")
    xs = [_check_variable(family, X) for X in variables]
    ups = [upper_expectation(family, x) for x in xs]
    out = []
    for c in sorted({0.0, 1.0, -3.5} | {float(x[0]) for x in xs}):
        e = upper_expectation(family, np.full(family.size, c))
        if abs(e - c) > _scaled_tol(c):
            out.append(f"constant preserving: E[{c}] = {e}")
    for i, x in enumerate(xs):
        for lam in HOMOGENEITY_GRID:
            e = upper_expectation(family, lam * x)
            if abs(e - lam * ups[i]) > _scaled_tol(e, ups[i]) * (1 + np.max(np.abs(x))):
                out.append(f"positive homogeneity: E[{lam}*X{i}] = {e} != {lam * ups[i]}")
    for i, j in itertools.product(range(len(xs)), repeat=2):
        x, y = xs[i], xs[j]
        scale = 1 + np.max(np.abs(x)) + np.max(np.abs(y))
        if np.all(x >= y) and ups[i] < ups[j] - TOL * scale:
            out.append(f"monotonicity: X{i} >= X{j} but E[X{i}] < E[X{j}]")
        d = upper_expectation(family, x - y)
        if ups[i] - ups[j] > d + TOL * scale:
            out.append(f"subadditivity: E[X{i}] - E[X{j}] = {ups[i] - ups[j]} > E[X{i}-X{j}] = {d}")
        lo = lower_expectation(family, x)
        if lo > ups[i] + TOL * scale:
            out.append(f"conjugate order: lower E[X{i}] > upper E[X{i}]")
    return out


def all_events(family: MeasureFamily) -> Iterable[frozenset]:
    labels = family.outcomes
    for r in range(len(labels) + 1):
        for combo in itertools.combinations(labels, r):
            yield frozenset(combo)


def check_capacity(family: MeasureFamily, max_outcomes: int = 10) -> list[str]:
    """Capacity axioms and duality over every event of a small family."""
    if family.size > max_outcomes:
        raise ResourceError(f"{family.size} outcomes exceeds the event enumeration cap {max_outcomes}")
    out = []
    empty, whole = capacity(family, ()), capacity(family, family.outcomes)
    if empty.upper != 0.0 or empty.lower != 0.0:
        out.append(f"V(empty) = {empty}")
    if abs(whole.upper - 1.0) > TOL or abs(whole.lower - 1.0) > TOL:
        out.append(f"V(Omega) = {whole}")
    events = list(all_events(family))
    caps = {A: capacity(family, A) for A in events}
    for A, cp in caps.items():
        if not (-TOL <= cp.lower <= cp.upper + TOL <= 1.0 + 2 * TOL):
            out.append(f"ordering 0 <= v <= V <= 1 fails on {set(A)}: {cp}")
        dual = cp.upper + caps[family.complement(A)].lower
        if abs(dual - 1.0) > TOL:
            out.append(f"duality V(A) + v(A^c) = {dual} on {set(A)}")
    for A in events:
        for o in family.outcomes:
            if o in A:
                continue
            B = A | {o}
            if caps[A].upper > caps[B].upper + TOL or caps[A].lower > caps[B].lower + TOL:
                out.append(f"monotonicity fails for {set(A)} within {set(B)}")
    return out


def monotone_chain_check(family: MeasureFamily, chain: Sequence[Iterable[Hashable]]) -> CheckReport:
    """Along a decreasing chain of events, V is non-increasing and ends at V of the intersection."""
    sets = [frozenset(A) for A in chain]
    for a, b in zip(sets, sets[1:]):
        if not b <= a:
            raise InputError("chain must be decreasing")
    report = CheckReport()
    vals = [capacity(family, A).upper for A in sets]
    for k, (a, b) in enumerate(zip(vals, vals[1:])):
        report.checks.append(BoundCheck(f"V(A{k + 1}) <= V(A{k})", b, a))
    inter = frozenset.intersection(*sets) if sets else frozenset()
    v_int = capacity(family, inter).upper
    report.checks.append(BoundCheck("V(last) <= V(intersection)", vals[-1], v_int))
    report.checks.append(BoundCheck("V(intersection) <= V(last)", v_int, vals[-1]))
    return report


def _adapted_selections(n_outcomes: int, n_choices: int) -> np.ndarray:
    """Every map from outcome index to choice index, one per row."""
    grids = np.indices((n_choices,) * n_outcomes).reshape(n_outcomes, -1).T
    return grids


def extend_independent(
    family: MeasureFamily,
    X_vals,
    step: Sequence[FiniteDistribution],
    cap: int = DEFAULT_FAMILY_CAP,
) -> MeasureFamily:
    """Family on Omega x support for a new variable Y independent of X.

    The measures are P (x) lambda_sigma where P runs over ``family`` and sigma
    over every map from outcomes of Omega to an index into ``step``.  Outcome
    labels of the result are ``(omega, y)`` pairs.  ``X_vals`` only needs to be
    a valid variable on ``family``; the adversary may condition on the whole
    outcome, which is at least as informative as X.
    """
    _check_variable(family, X_vals)
    if not step:
        raise InputError("step needs at least one distribution")
    K, M, J = family.size, family.n_measures, len(step)
    n_meas = M * J**K
    if n_meas > cap:
        raise ResourceError(f"extension would hold {n_meas} measures (cap {cap})")
    ys = sorted(set(itertools.chain.from_iterable(d.support.tolist() for d in step)))
    pos = {y: i for i, y in enumerate(ys)}
    if n_meas * K * len(ys) > MAX_PRODUCT_ENTRIES:
        raise ResourceError("extension exceeds the product-space entry cap")
    lam = np.zeros((J, len(ys)))
    for j, d in enumerate(step):
        for y, p in zip(d.support.tolist(), d.probs.tolist()):
            lam[j, pos[y]] = p
    sigmas = _adapted_selections(K, J)  # (J^K, K)
    # q[m, s, k, y] = P_m(k) * lam[sigma_s(k), y]
    q = family.measures[:, None, :, None] * lam[sigmas][None, :, :, :]
    measures = q.reshape(n_meas, K * len(ys))
    outcomes = tuple((o, y) for o in family.outcomes for y in ys)
    return MeasureFamily(outcomes, measures)


def two_stage_upper(
    family: MeasureFamily,
    X_vals,
    step: Sequence[FiniteDistribution],
    phi: Callable[[float, np.ndarray], np.ndarray],
) -> float:
    """E[phi_bar(X)] with phi_bar(x) = max over step laws of E[phi(x, Y)]."""
    x = _check_variable(family, X_vals)
    inner = np.array(
        [max(d.expect(lambda y, xv=xv: phi(xv, y)) for d in step) for xv in x]
    )
    return upper_expectation(family, inner)


def markov_bound_check(family: MeasureFamily, X, a: float, p: int = 2) -> CheckReport:
    """Markov/Chebyshev and exponential-moment tail bounds, evaluated exactly."""
    if not a > 0:
        raise InputError("a must be positive")
    if int(p) != p or p < 1:
        raise InputError("p must be a positive integer")
    x = _check_variable(family, X)
    report = CheckReport()
    tail = capacity(family, [o for o, v in zip(family.outcomes, x) if abs(v) >= a]).upper
    moment = upper_expectation(family, np.abs(x) ** p) / a**p
    report.checks.append(BoundCheck(f"V(|X|>={a}) <= E|X|^{p}/a^{p}", tail, moment))
    up_tail = capacity(family, [o for o, v in zip(family.outcomes, x) if v >= a]).upper
    for lam in EXPONENTIAL_GRID:
        rhs = math.exp(-lam * a) * upper_expectation(family, np.exp(lam * x))
        report.checks.append(
            BoundCheck(f"V(X>={a}) <= exp(-{lam}a) E[exp({lam}X)]", up_tail, rhs, _scaled_tol(rhs))
        )
    return report


def union_subadditivity_check(family: MeasureFamily, events: Sequence[Iterable[Hashable]]) -> CheckReport:
    """V of a union against the sum of V, plus monotonicity under inclusion."""
    sets = [frozenset(A) for A in events]
    ups = [capacity(family, A).upper for A in sets]
    report = CheckReport()
    union = frozenset().union(*sets) if sets else frozenset()
    report.checks.append(BoundCheck("V(union) <= sum V", capacity(family, union).upper, math.fsum(ups)))
    for i, A in enumerate(sets):
        report.checks.append(BoundCheck(f"V(A{i}) <= V(union)", ups[i], capacity(family, union).upper))
        for j, B in enumerate(sets):
            if i != j and A <= B:
                report.checks.append(BoundCheck(f"V(A{i}) <= V(A{j})", ups[i], ups[j]))
    return report


def load_family(path) -> MeasureFamily:
    with open(path) as fh:
        return MeasureFamily.from_dict(json.load(fh))


def dumps(obj: Any) -> str:
    return json.dumps(obj.to_dict(), indent=2)
