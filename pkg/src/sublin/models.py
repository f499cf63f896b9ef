"""Ambiguous sequence models, the maximal distribution and its generator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError
from .finite import FiniteDistribution

NOISE_MEAN_TOL = 1e-10
RULE_KINDS = ("constant", "alternating_sqrt", "harmonic")


def _vectorised(fn: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def call(x):
        x = np.asarray(x, dtype=float)
        y = np.asarray(fn(x), dtype=float)
        if y.shape != x.shape:
            y = np.vectorize(lambda t: float(fn(t)), otypes=[float])(x)
        return y

    return call


@dataclass(frozen=True)
class LipschitzFn:
    """A real function together with a caller-declared Lipschitz constant.

    ``monotone`` is +1 for nondecreasing, -1 for nonincreasing and 0 when
    nothing is promised.  ``breakpoints`` are kinks worth adding to grids.
    """

    fn: Callable
    lipschitz: float
    monotone: int = 0
    breakpoints: tuple = ()
    name: str = "phi"

    def __post_init__(self):
        if not (self.lipschitz >= 0 and math.isfinite(self.lipschitz)):
            raise InputError("Lipschitz constant must be finite and >= 0")
        if self.monotone not in (-1, 0, 1):
            raise InputError("monotone must be -1, 0 or 1")

    def __call__(self, x):
        return _vectorised(self.fn)(x)

    def __neg__(self) -> "LipschitzFn":
        fn = self.fn
        return LipschitzFn(lambda x: -_vectorised(fn)(x), self.lipschitz, -self.monotone,
                           self.breakpoints, f"-{self.name}")

    def shifted(self, c: float) -> "LipschitzFn":
        """x -> phi(x - c)."""
        fn = self.fn
        return LipschitzFn(lambda x: _vectorised(fn)(np.asarray(x, dtype=float) - c), self.lipschitz,
                           self.monotone, tuple(b + c for b in self.breakpoints), f"{self.name}(.-{c})")


def identity() -> LipschitzFn:
    return LipschitzFn(lambda x: x, 1.0, 1, (), "x")


def constant(c: float) -> LipschitzFn:
    return LipschitzFn(lambda x: np.full(np.shape(x), float(c)), 0.0, 0, (), f"{c}")


def neg_abs(center: float = 0.0) -> LipschitzFn:
    return LipschitzFn(lambda x: -np.abs(x - center), 1.0, 0, (center,), "-|x|")


def clipped_quadratic(cap: float = 1.0) -> LipschitzFn:
    """min(x^2, cap); Lipschitz with constant 2*sqrt(cap)."""
    r = math.sqrt(cap)
    return LipschitzFn(lambda x: np.minimum(np.square(x), cap), 2 * r, 0, (-r, r), "min(x^2,1)")


def peak(center: float, eps: float) -> LipschitzFn:
    """max(1 - exp(|x - center| - eps), 0): positive only within eps of center."""
    return LipschitzFn(
        lambda x: np.maximum(1.0 - np.exp(np.abs(x - center) - eps), 0.0),
        1.0, 0, (center - eps, center, center + eps), f"peak({center},{eps})",
    )


def ramp_down(a: float, width: float) -> LipschitzFn:
    """1 for x <= a - width, 0 for x >= a, linear in between."""
    if width <= 0:
        raise InputError("ramp width must be positive")
    return LipschitzFn(lambda x: np.clip((a - np.asarray(x)) / width, 0.0, 1.0), 1.0 / width, -1,
                       (a - width, a), f"ramp_down({a},{width})")


def ramp_up(a: float, width: float) -> LipschitzFn:
    """0 for x <= a, 1 for x >= a + width, linear in between."""
    if width <= 0:
        raise InputError("ramp width must be positive")
    return LipschitzFn(lambda x: np.clip((np.asarray(x) - a) / width, 0.0, 1.0), 1.0 / width, 1,
                       (a, a + width), f"ramp_up({a},{width})")


@dataclass(frozen=True)
class MaximalDistribution:
    mu_lo: float
    mu_hi: float

    def __post_init__(self):
        if not (math.isfinite(self.mu_lo) and math.isfinite(self.mu_hi)) or self.mu_lo > self.mu_hi:
            raise InputError(f"need finite mu_lo <= mu_hi, got [{self.mu_lo}, {self.mu_hi}]")


def g_eval(eta: MaximalDistribution, x):
    """Generator mu_hi * x^+ - mu_lo * x^-; works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    out = eta.mu_hi * np.maximum(x, 0.0) - eta.mu_lo * np.maximum(-x, 0.0)
    return float(out) if out.ndim == 0 else out


def maximal_expectation(
    eta: MaximalDistribution,
    phi: Callable,
    lipschitz: float | None = None,
    breakpoints: Sequence[float] = (),
    coarse: int = 2049,
    fine: int = 1025,
) -> float:
    """sup of phi over [mu_lo, mu_hi].

    A uniform grid of ``coarse`` points (plus any breakpoints) is followed by
    two zoom rounds of ``fine`` points around the incumbent.  The final
    spacing is about 4e-9 times the interval width.
    """
    if isinstance(phi, LipschitzFn):
        breakpoints = tuple(breakpoints) + phi.breakpoints
        lipschitz = phi.lipschitz if lipschitz is None else lipschitz
    if lipschitz is not None and lipschitz < 0:
        raise InputError("Lipschitz constant must be >= 0")
    f = _vectorised(phi)
    lo, hi = float(eta.mu_lo), float(eta.mu_hi)

    def evaluate(ys):
        v = f(ys)
        if not np.all(np.isfinite(v)):
            raise InputError("phi is not finite on the interval")
        return v

    if hi == lo:
        return float(evaluate(np.array([lo]))[0])
    ys = np.linspace(lo, hi, coarse)
    extra = np.array([b for b in breakpoints if lo <= b <= hi], dtype=float)
    vals = evaluate(ys)
    best = float(np.max(vals))
    if extra.size:
        best = max(best, float(np.max(evaluate(extra))))
    y_star = ys[int(np.argmax(vals))]
    h = ys[1] - ys[0]
    for _ in range(2):
        zoom = np.linspace(max(lo, y_star - h), min(hi, y_star + h), fine)
        zv = evaluate(zoom)
        k = int(np.argmax(zv))
        if zv[k] > best:
            best = float(zv[k])
        y_star = zoom[k]
        h = zoom[1] - zoom[0]
    return best


@dataclass(frozen=True)
class StepModel:
    """One step: the laws of ``mu + noise`` for mu in [mean_lo, mean_hi]."""

    mean_lo: float
    mean_hi: float
    noise: FiniteDistribution

    def __post_init__(self):
        if not (math.isfinite(self.mean_lo) and math.isfinite(self.mean_hi)):
            raise InputError("step means must be finite")
        if self.mean_lo > self.mean_hi:
            raise InputError(f"mean_lo {self.mean_lo} > mean_hi {self.mean_hi}")
        if abs(self.noise.mean) > NOISE_MEAN_TOL:
            raise InputError(f"noise must have mean 0, got {self.noise.mean}")

    @property
    def width(self) -> float:
        return self.mean_hi - self.mean_lo

    def second_moment_sup(self) -> float:
        # E(z + mu)^2 is convex in mu, so the sup sits at an endpoint.
        return max(self.noise.expect(lambda z, m=m: (z + m) ** 2) for m in (self.mean_lo, self.mean_hi))

    def to_dict(self) -> dict:
        return {"mean_lo": self.mean_lo, "mean_hi": self.mean_hi, "noise": self.noise.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "StepModel":
        try:
            return cls(float(d["mean_lo"]), float(d["mean_hi"]), FiniteDistribution.from_dict(d["noise"]))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad step document: {exc}") from exc


def step_upper_mean(step: StepModel) -> float:
    return step.mean_hi


def step_lower_mean(step: StepModel) -> float:
    return step.mean_lo


DEFAULT_NOISE = {"support": [-1.0, 1.0], "probs": [0.5, 0.5]}


@dataclass(frozen=True)
class SequenceModel:
    """Steps X_1, X_2, ... given either explicitly or by a named rule.

    ``mu_lo``/``mu_hi`` are the declared Cesaro limits of the step means;
    ``cesaro_envelope_c`` and ``moment_bound`` are the declared constants
    that :func:`validate_hypotheses` checks against.
    """

    mu_lo: float
    mu_hi: float
    steps: tuple = ()
    rule: dict | None = None
    cesaro_envelope_c: float = 1.0
    moment_bound: float = math.inf
    name: str = ""
    description: str = ""
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        MaximalDistribution(self.mu_lo, self.mu_hi)
        if bool(self.steps) == (self.rule is not None):
            raise InputError("give exactly one of steps or rule")
        if self.rule is not None:
            kind = self.rule.get("kind")
            if kind not in RULE_KINDS:
                raise InputError(f"unknown rule kind {kind!r}; expected one of {RULE_KINDS}")
            params = dict(self.rule.get("params", {}))
            unknown = set(params) - {"noise", "amplitude"}
            if unknown:
                raise InputError(f"unknown rule params {sorted(unknown)}")
            noise = FiniteDistribution.from_dict(params.get("noise", DEFAULT_NOISE))
            object.__setattr__(self, "_noise", noise)
            object.__setattr__(self, "_amplitude", float(params.get("amplitude", 1.0)))
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def eta(self) -> MaximalDistribution:
        return MaximalDistribution(self.mu_lo, self.mu_hi)

    @property
    def horizon(self) -> float:
        """Largest n for which steps are available."""
        return math.inf if self.rule is not None else len(self.steps)

    def step(self, i: int) -> StepModel:
        """Step i, counted from 1."""
        if i < 1:
            raise InputError("steps are indexed from 1")
        if self.rule is None:
            if i > len(self.steps):
                raise InputError(f"model only supplies {len(self.steps)} steps, asked for step {i}")
            return self.steps[i - 1]
        cached = self._cache.get(i)
        if cached is None:
            cached = self._cache[i] = self._rule_step(i)
        return cached

    def _rule_step(self, i: int) -> StepModel:
        kind = self.rule["kind"]
        hi = self.mu_hi
        if kind == "alternating_sqrt":
            hi = self.mu_hi + self._amplitude * (-1) ** i / math.sqrt(i)
        elif kind == "harmonic":
            hi = self.mu_hi + self._amplitude / i
        return StepModel(self.mu_lo, hi, self._noise)

    def steps_upto(self, n: int) -> list[StepModel]:
        return [self.step(i) for i in range(1, n + 1)]

    def upper_means(self, n: int) -> np.ndarray:
        return np.array([s.mean_hi for s in self.steps_upto(n)])

    def lower_means(self, n: int) -> np.ndarray:
        return np.array([s.mean_lo for s in self.steps_upto(n)])

    def to_dict(self) -> dict:
        d = {"mu_lo": self.mu_lo, "mu_hi": self.mu_hi}
        if self.rule is not None:
            d["rule"] = self.rule
        else:
            d["steps"] = [s.to_dict() for s in self.steps]
        d["cesaro_envelope_c"] = self.cesaro_envelope_c
        d["moment_bound"] = None if math.isinf(self.moment_bound) else self.moment_bound
        return d

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "SequenceModel":
        allowed = {"mu_lo", "mu_hi", "steps", "rule", "cesaro_envelope_c", "moment_bound",
                   "name", "description"}
        unknown = set(d) - allowed
        if unknown:
            raise InputError(f"unknown model keys {sorted(unknown)}")
        try:
            steps = tuple(StepModel.from_dict(s) for s in d.get("steps", ()))
            bound = d.get("moment_bound")
            return cls(
                mu_lo=float(d["mu_lo"]),
                mu_hi=float(d["mu_hi"]),
                steps=steps,
                rule=d.get("rule"),
                cesaro_envelope_c=float(d.get("cesaro_envelope_c", 1.0)),
                moment_bound=math.inf if bound is None else float(bound),
                name=d.get("name", name),
                description=d.get("description", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad model document: {exc}") from exc


@dataclass
class HypothesisReport:
    rows: list
    moment_sup: float
    moment_bound: float
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures


def cesaro_average(values: np.ndarray, target: float, n: int) -> float:
    return math.fsum(np.abs(np.asarray(values[:n]) - target)) / n


def validate_hypotheses(model: SequenceModel, n_max: int) -> HypothesisReport:
    """Check the Cesaro-mean condition against the declared envelope and the moment bound."""
    if n_max < 16:
        raise InputError("n_max must be at least 16")
    his, los = model.upper_means(n_max), model.lower_means(n_max)
    checkpoints = []
    n = 16
    while n <= n_max:
        checkpoints.append(n)
        n *= 2
    if checkpoints[-1] != n_max:
        checkpoints.append(n_max)
    rows, failures = [], []
    for n in checkpoints:
        lo_avg = cesaro_average(los, model.mu_lo, n)
        hi_avg = cesaro_average(his, model.mu_hi, n)
        env = model.cesaro_envelope_c / math.sqrt(n)
        rows.append({"n": n, "cesaro_lo": lo_avg, "cesaro_hi": hi_avg, "envelope": env})
        if lo_avg > env + 1e-12 or hi_avg > env + 1e-12:
            failures.append(f"Cesaro average above envelope {env:.6g} at n={n}: lo={lo_avg:.6g}, hi={hi_avg:.6g}")
    moment = max(s.second_moment_sup() for s in model.steps_upto(n_max))
    if moment > model.moment_bound:
        failures.append(f"sup second moment {moment:.6g} exceeds declared bound {model.moment_bound}")
    return HypothesisReport(rows, moment, model.moment_bound, failures)
