"""Experiment runners behind the command line.

A config is a JSON object::

    {"experiment": "lln", "model": "alternating_sqrt" | {...},
     "parameters": {...}, "output": "out/lln"}

Each experiment validates its parameters against a table of defaults
(unknown keys are rejected), writes CSV metrics, a JSON report and SVG
figures into the output directory, and returns an :class:`ExperimentReport`
whose verdicts compare recorded metrics with thresholds that are themselves
listed in the report.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, plotting
from .errors import InputError
from .finite import (
    FiniteDistribution,
    MeasureFamily,
    capacity,
    check_axioms,
    check_capacity,
    extend_independent,
    markov_bound_check,
)
from .models import (
    LipschitzFn,
    MaximalDistribution,
    SequenceModel,
    StepModel,
    clipped_quadratic,
    identity,
    maximal_expectation,
    neg_abs,
    peak,
    validate_hypotheses,
)
from .montecarlo import Policy, bundled_policies, simulate, slln_statistics, subsequence_check
from .pde import default_problem, error_vs_closed_form, lipschitz_in_time_check, solve
from .recursion import MeanEvent, mean_event_capacity, strategy_count, strategy_oracle, upper_value

EXPERIMENTS = ("axioms", "lln", "slln", "wlln", "pde", "oracle")
CONFIG_KEYS = {"experiment", "model", "parameters", "output"}


class ConfigError(InputError):
    """Invalid config; ``path`` locates the offending key."""

    def __init__(self, message: str, path: tuple = ()):
        super().__init__(message)
        self.path = tuple(path)


# ---------------------------------------------------------------- fixtures

def _fixture_dir():
    return resources.files("sublin") / "data"


def _fixture_json(name: str) -> dict:
    f = _fixture_dir() / f"{name}.json"
    if not f.is_file():
        raise InputError(f"unknown fixture {name!r}; see `sublin fixtures`")
    return json.loads(f.read_text())


def list_fixtures() -> list[tuple[str, str]]:
    """(name, description) for every bundled fixture, sorted by name."""
    out = []
    for f in sorted(_fixture_dir().iterdir(), key=lambda p: p.name):
        if f.name.endswith(".json"):
            d = json.loads(f.read_text())
            out.append((f.name[:-5], d.get("description", "")))
    return out


def load_model(spec) -> SequenceModel:
    if isinstance(spec, str):
        d = _fixture_json(spec)
        if "rule" not in d and "steps" not in d:
            raise InputError(f"fixture {spec!r} is a finite family, not a sequence model")
        return SequenceModel.from_dict(d, name=spec)
    if isinstance(spec, dict):
        return SequenceModel.from_dict(spec)
    raise InputError("model must be a fixture name or a model object")


def load_family_spec(spec) -> MeasureFamily:
    if isinstance(spec, str):
        d = _fixture_json(spec)
        d = {k: d[k] for k in ("outcomes", "measures") if k in d}
        return MeasureFamily.from_dict(d)
    if isinstance(spec, dict):
        return MeasureFamily.from_dict(spec)
    raise InputError("family must be a fixture name or an object")


PHI_BUILDERS: dict[str, Callable[..., LipschitzFn]] = {
    "identity": identity,
    "neg_abs": neg_abs,
    "clipped_quadratic": clipped_quadratic,
    "neg_clipped_quadratic": lambda cap=1.0: -clipped_quadratic(cap),
    "peak": peak,
}


def phi_from_spec(spec) -> LipschitzFn:
    """"neg_abs" or {"kind": "peak", "center": 0.3, "eps": 1.0}."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or spec.get("kind") not in PHI_BUILDERS:
        raise InputError(f"phi must name one of {sorted(PHI_BUILDERS)}")
    args = {k: float(v) for k, v in spec.items() if k != "kind"}
    try:
        return PHI_BUILDERS[spec["kind"]](**args)
    except TypeError as exc:
        raise InputError(f"bad arguments for phi {spec['kind']!r}: {exc}") from None


# ------------------------------------------------------ random instances

def _probs(rng: np.random.Generator, k: int) -> np.ndarray:
    p = rng.dirichlet(np.ones(k))
    p[-1] = 1.0 - math.fsum(p[:-1])
    if p[-1] < 0:
        p = np.full(k, 1.0 / k)
    return p


def random_family(rng: np.random.Generator, max_outcomes: int = 6, max_measures: int = 5) -> MeasureFamily:
    K = int(rng.integers(1, max_outcomes + 1))
    M = int(rng.integers(1, max_measures + 1))
    measures = np.array([_probs(rng, K) for _ in range(M)])
    # sometimes repeat a measure to hit ties
    if M > 1 and rng.random() < 0.2:
        measures[-1] = measures[0]
    return MeasureFamily(tuple(range(K)), measures)


def random_variables(rng: np.random.Generator, K: int, count: int = 4) -> list[np.ndarray]:
    out = []
    for _ in range(count):
        kind = rng.integers(3)
        if kind == 0:
            out.append(rng.normal(size=K) * 3)
        elif kind == 1:
            out.append(rng.integers(-2, 3, size=K).astype(float))
        else:
            out.append(np.full(K, float(rng.normal())))
    return out


def random_step_laws(rng: np.random.Generator, max_laws: int = 3, max_support: int = 3) -> list[FiniteDistribution]:
    pool = np.round(rng.normal(size=max_support + 2), 2)
    laws = []
    for _ in range(int(rng.integers(1, max_laws + 1))):
        k = int(rng.integers(1, max_support + 1))
        pts = np.unique(rng.choice(pool, size=k, replace=False))
        laws.append(FiniteDistribution(pts, _probs(rng, pts.size)))
    return laws


def _zero_mean_noise(rng: np.random.Generator, max_support: int) -> FiniteDistribution:
    k = int(rng.integers(1, max_support + 1))
    pts = np.sort(rng.uniform(-1.5, 1.5, size=k))
    p = _probs(rng, k)
    pts = pts - float(p @ pts)
    if np.unique(pts).size < k:
        return FiniteDistribution.point_mass(0.0)
    return FiniteDistribution(pts, p)


def random_oracle_instance(rng: np.random.Generator, n_max: int = 3, support_max: int = 3,
                           grid_max: int = 3, cap: int = 200_000):
    """A small explicit model, per-step mean grids and a Lipschitz phi."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        steps, grids = [], []
        for _ in range(n):
            lo = float(rng.uniform(-1, 0.5))
            hi = lo + float(rng.uniform(0, 1))
            steps.append(StepModel(lo, hi, _zero_mean_noise(rng, support_max)))
            g = int(rng.integers(1, grid_max + 1))
            grids.append(np.sort(rng.uniform(lo, hi, size=g)) if hi > lo else np.array([lo]))
        lo_c = min(s.mean_lo for s in steps)
        model = SequenceModel(lo_c, max(s.mean_hi for s in steps), steps=tuple(steps))
        if strategy_count(model, n, grids) <= cap:
            break
    a, b, c, d = rng.uniform(-1, 1), rng.uniform(0.5, 4), rng.uniform(-1, 1), rng.uniform(-1, 1)
    phi = LipschitzFn(lambda x: a * np.sin(b * x) + c * np.abs(x - d), abs(a) * b + abs(c), 0, (d,), "random")
    return model, n, grids, phi


# ---------------------------------------------------------------- reports

@dataclass
class ExperimentReport:
    experiment: str
    inputs: dict
    metrics: dict
    thresholds: dict
    verdicts: dict
    artifacts: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment, "version": __version__, "passed": self.passed,
            "inputs": self.inputs, "thresholds": self.thresholds, "verdicts": self.verdicts,
            "metrics": self.metrics, "columns": self.columns, "artifacts": self.artifacts,
            "runtime_s": self.runtime_s,
        }


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows: list) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


# ------------------------------------------------------------ parameters

PARAMETERS: dict[str, dict[str, Any]] = {
    "axioms": {
        "family": "three_coins", "random_families": 500, "product_instances": 100,
        "markov_instances": 200, "max_outcomes": 6, "max_measures": 5, "seed": 11, "tol": 1e-12,
    },
    "lln": {
        "ns": [8, 16, 32, 64, 128], "phi": {"kind": "peak", "center": 0.3, "eps": 1.0},
        "tolerance": 0.05, "mean_points": 33, "nodes": 4096, "grid": "auto",
    },
    "slln": {
        "n": 10000, "paths": 1000, "seed": 20240601, "eps": 0.05, "tail_start": 5000,
        "band_tail_start": 1000, "b": 0.0, "policies": None, "subsequence": "pow2",
        "upper_fraction": 0.99, "band_fraction": 0.99, "target_fraction": 0.95,
    },
    "wlln": {
        "ns": [32, 64, 128], "eps": 0.2, "delta": 0.05, "V_max": 0.05, "v_min": 0.9,
        "mean_points": 33, "nodes": 4096, "grid": "auto",
    },
    "pde": {
        "phis": ["identity", "neg_abs", "clipped_quadratic",
                 {"kind": "neg_clipped_quadratic", "mu_lo": -0.5, "mu_hi": 1.0}],
        "h": 0.1, "dx": 0.01,
        "eval_interval": [-1.0, 1.0], "mu_lo": None, "mu_hi": None, "cfl": 1.0,
        "tolerance": 0.02, "min_ratio": 1.5, "roundoff": 1e-12,
    },
    "oracle": {
        "instances": 200, "seed": 7, "n_max": 3, "support_max": 3, "grid_max": 3, "tol": 1e-10,
    },
}
NEEDS_MODEL = {"lln", "slln", "wlln"}


def validate_config(config: dict) -> dict:
    """Fill defaults and check types; raises :class:`ConfigError`."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(config) - CONFIG_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {k!r}; allowed {sorted(CONFIG_KEYS)}", (k,))
    exp = config.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}", ("experiment",))
    if "output" not in config or not isinstance(config["output"], str):
        raise ConfigError("output must be a directory path string", ("output",))
    params = config.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters must be an object", ("parameters",))
    defaults = PARAMETERS[exp]
    merged = copy.deepcopy(defaults)
    for k, v in params.items():
        if k not in defaults:
            raise ConfigError(f"unknown parameter {k!r} for {exp}; allowed {sorted(defaults)}", ("parameters", k))
        d = defaults[k]
        if isinstance(d, bool) or d is None or isinstance(d, (str, dict, list)):
            pass
        elif isinstance(d, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"parameter {k!r} must be an integer", ("parameters", k))
        elif isinstance(d, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"parameter {k!r} must be a finite number", ("parameters", k))
            v = float(v)
        merged[k] = v
    model = config.get("model")
    if exp in NEEDS_MODEL and model is None:
        model = "iid_peng" if exp == "slln" else "alternating_sqrt"
    try:
        model_obj = load_model(model) if model is not None else None
    except ConfigError:
        raise
    except (InputError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model: {exc}", ("model",)) from None
    return {"experiment": exp, "model": model, "model_obj": model_obj, "parameters": merged,
            "output": config["output"]}


def _param_error(key: str, msg: str):
    return ConfigError(msg, ("parameters", key))


# ------------------------------------------------------------ experiments

def _run_axioms(model, p, out: Path) -> ExperimentReport:
    rng = np.random.default_rng(p["seed"])
    try:
        fam = load_family_spec(p["family"])
    except (InputError, KeyError, TypeError, ValueError) as exc:
        raise _param_error("family", f"invalid family: {exc}") from None
    fixture_violations = check_axioms(fam, random_variables(rng, fam.size)) + check_capacity(fam)
    rows = []
    axiom_viol = product_viol = markov_viol = markov_tight = 0
    worst_product = 0.0
    for i in range(p["random_families"]):
        f = random_family(rng, p["max_outcomes"], p["max_measures"])
        v = check_axioms(f, random_variables(rng, f.size)) + check_capacity(f)
        axiom_viol += len(v)
        rows.append(("axioms", i, f.size, f.n_measures, len(v), ""))
    for i in range(p["product_instances"]):
        f = random_family(rng, 3, 3)
        xv = rng.integers(-1, 2, size=f.size).astype(float)
        laws = random_step_laws(rng)
        ext = extend_independent(f, xv, laws)
        worst, bad = product_rule_gap(f, xv, laws, ext)
        worst_product = max(worst_product, worst)
        product_viol += int(worst > p["tol"])
        rows.append(("product", i, ext.size, ext.n_measures, int(worst > p["tol"]), repr(worst)))
    for i in range(p["markov_instances"]):
        f = random_family(rng, p["max_outcomes"], p["max_measures"])
        a = float(rng.uniform(0.5, 2.0))
        if i % 4 == 0:
            xv = a * rng.integers(-1, 2, size=f.size).astype(float)
        else:
            xv = rng.normal(size=f.size) * 2
        rep = markov_bound_check(f, xv, a, 2)
        markov_viol += len(rep.violations)
        markov_tight += int(rep.checks[0].tight)
        rows.append(("markov", i, f.size, f.n_measures, len(rep.violations), "tight" if rep.checks[0].tight else ""))
    write_csv(out / "axioms.csv", ["suite", "instance", "outcomes", "measures", "violations", "note"], rows)
    metrics = {
        "fixture_violations": fixture_violations, "axiom_violations": axiom_viol,
        "product_violations": product_viol, "product_worst_gap": worst_product,
        "markov_violations": markov_viol, "markov_tight_instances": markov_tight,
    }
    thresholds = {"tol": p["tol"], "max_violations": 0, "min_tight_instances": 1}
    verdicts = {
        "fixture_axioms": not fixture_violations,
        "random_axioms_and_duality": axiom_viol == 0,
        "product_rule": product_viol == 0,
        "markov_chebyshev": markov_viol == 0,
        "markov_equality_reached": markov_tight >= 1,
    }
    columns = {"axioms.csv": ["suite: axioms|product|markov", "instance: index within suite",
                              "outcomes", "measures", "violations: failed checks",
                              "note: worst product gap or tightness flag"]}
    return ExperimentReport("axioms", {}, metrics, thresholds, verdicts, ["axioms.csv"], columns)


def product_rule_gap(family: MeasureFamily, xv, laws, ext: MeasureFamily):
    """Worst |V(X in D, Y in G) - V(X in D) V(Y in G)| and likewise for v, over all D, G."""
    xs = sorted(set(np.asarray(xv).tolist()))
    ys = sorted({y for (_, y) in ext.outcomes})
    x_of = dict(zip(family.outcomes, np.asarray(xv).tolist()))
    worst = 0.0
    bad = []
    for dm in range(1, 2 ** len(xs)):
        D = {x for j, x in enumerate(xs) if dm >> j & 1}
        cap_x = capacity(family, [o for o in family.outcomes if x_of[o] in D])
        for gm in range(1, 2 ** len(ys)):
            G = {y for j, y in enumerate(ys) if gm >> j & 1}
            upper_y = max(sum(p for y, p in zip(d.support, d.probs) if y in G) for d in laws)
            lower_y = min(sum(p for y, p in zip(d.support, d.probs) if y in G) for d in laws)
            joint = capacity(ext, [(o, y) for (o, y) in ext.outcomes if x_of[o] in D and y in G])
            g = max(abs(joint.upper - cap_x.upper * upper_y), abs(joint.lower - cap_x.lower * lower_y))
            if g > worst:
                worst = g
                bad = [sorted(D), sorted(G)]
    return worst, bad


def _recursion_kwargs(p) -> dict:
    return {"mean_points": p["mean_points"], "nodes": p["nodes"], "grid": p["grid"]}


def _check_ns(p, key="ns"):
    ns = p[key]
    if not isinstance(ns, list) or not ns or any(not isinstance(n, int) or n < 1 for n in ns):
        raise _param_error(key, f"{key} must be a non-empty list of positive integers")
    if sorted(set(ns)) != ns:
        raise _param_error(key, f"{key} must be strictly increasing")
    return ns


def _run_lln(model: SequenceModel, p, out: Path) -> ExperimentReport:
    ns = _check_ns(p)
    try:
        phi = phi_from_spec(p["phi"])
    except InputError as exc:
        raise _param_error("phi", str(exc)) from None
    target = maximal_expectation(model.eta, phi)
    hyp = validate_hypotheses(model, max(16, max(ns)))
    rows, results = [], []
    for n in ns:
        r = upper_value(model, n, phi, **_recursion_kwargs(p))
        results.append(r)
        rows.append((n, r.value, r.error_bound, target, abs(r.value - target)))
    write_csv(out / "lln.csv", ["n", "value", "error_bound", "target", "abs_gap"], rows)
    gaps = [row[4] for row in rows]
    errs = [row[2] for row in rows]
    plotting.convergence_plot(out / "lln.svg", ns, gaps, errs, p["tolerance"])
    monotone = all(gaps[k + 1] <= gaps[k] + errs[k] + errs[k + 1] for k in range(len(ns) - 1))
    metrics = {"target": target, "final_gap": gaps[-1], "final_error_bound": errs[-1],
               "hypotheses_passed": hyp.passed, "hypothesis_failures": hyp.failures,
               "grid": [r.grid_report for r in results]}
    thresholds = {"tolerance": p["tolerance"], "monotone_slack": "error_bound[k] + error_bound[k+1]"}
    verdicts = {
        "final_gap_within_tolerance": gaps[-1] <= p["tolerance"] + errs[-1],
        "gap_non_increasing_within_error": monotone,
    }
    columns = {"lln.csv": ["n: horizon", "value: upper expectation of phi(S_n/n)",
                           "error_bound: certified numerical error of value",
                           "target: sup of phi over [mu_lo, mu_hi]", "abs_gap: |value - target|"]}
    return ExperimentReport("lln", {"phi": p["phi"], "ns": ns}, metrics, thresholds, verdicts,
                            ["lln.csv", "lln.svg"], columns)


def _run_slln(model: SequenceModel, p, out: Path) -> ExperimentReport:
    n, b, eps = p["n"], float(p["b"]), float(p["eps"])
    for key in ("tail_start", "band_tail_start"):
        if not 1 <= p[key] < n:
            raise _param_error(key, f"{key} must lie in [1, n)")
    if p["policies"] is None:
        policies = bundled_policies(b)
    else:
        try:
            policies = [Policy.from_dict(d) for d in p["policies"]]
        except (InputError, KeyError, TypeError, ValueError) as exc:
            raise _param_error("policies", f"invalid policy: {exc}") from None
    tails = [p["band_tail_start"], p["tail_start"]]
    rows, batches, stats = [], {}, {}
    for pol in policies:
        batch = simulate(model, pol, n, p["paths"], p["seed"], tail_starts=tails, targets=[b])
        band = slln_statistics(batch, model, eps, p["band_tail_start"], b)
        tail = slln_statistics(batch, model, eps, p["tail_start"], b)
        batches[pol.label] = batch
        stats[pol.label] = (band, tail)
        rows.append((pol.label, batch.paths, band.within_band, tail.reaches_upper, tail.reaches_lower,
                     tail.near_target, float(np.mean(batch.final_means))))
    write_csv(out / "slln.csv", ["policy", "paths", "within_band", "reaches_upper", "reaches_lower",
                                 "near_target", "mean_final"], rows)
    artifacts = ["slln.csv"]
    for kind in ("upper", "target"):
        label = next((pol.label for pol in policies if pol.kind == kind), None)
        if label is None:
            continue
        batch = batches[label]
        t = batch.tail_index(p["tail_start"])
        j = batch.target_index(b)
        write_csv(out / f"paths_{kind}.csv", ["path_id", "tail_max", "tail_min", "closest_approach"],
                  [(i, batch.tail_max[t, i], batch.tail_min[t, i], batch.closest[t, j, i]) for i in range(batch.paths)])
        plotting.path_fan(out / f"paths_{kind}.svg", batch.checkpoints, batch.running_means,
                          bands=(model.mu_lo, model.mu_hi, b), title=label)
        artifacts += [f"paths_{kind}.csv", f"paths_{kind}.svg"]
    upper = next((stats[pol.label][1] for pol in policies if pol.kind == "upper"), None)
    target = next((stats[pol.label][1] for pol in policies if pol.kind == "target" and pol.param == b), None)
    band_min = min(s[0].within_band for s in stats.values()) / p["paths"]
    metrics = {"band_fraction_min": band_min,
               "per_policy": {k: {"band": v[0].to_dict(), "tail": v[1].to_dict()} for k, v in stats.items()}}
    verdicts = {"band_all_policies": band_min >= p["band_fraction"]}
    if upper is not None:
        metrics["upper_fraction"] = upper.reaches_upper / p["paths"]
        verdicts["upper_reaches_mu_hi"] = metrics["upper_fraction"] >= p["upper_fraction"]
    if target is not None:
        metrics["target_fraction"] = target.near_target / p["paths"]
        verdicts["target_cluster_point"] = metrics["target_fraction"] >= p["target_fraction"]
        tb = batches[Policy("target", b).label]
        seq = p["subsequence"]
        try:
            sub = subsequence_check(tb, seq, b, eps)
        except InputError as exc:
            raise _param_error("subsequence", str(exc)) from None
        metrics["subsequence"] = {"rule": seq, "n_k": sub.subsequence, "fraction_within": sub.fraction_within,
                                  "new_share": sub.new_share, "old_share": sub.old_share}
        kk = subsequence_check(tb, "kk", b, eps)
        metrics["subsequence_kk"] = {"n_k": kk.subsequence, "fraction_within": kk.fraction_within,
                                     "new_share": kk.new_share, "old_share": kk.old_share,
                                     "note": "k^k is only feasible up to the horizon; limits 1 and 0 are not reached"}
    thresholds = {"eps": eps, "band": [model.mu_lo - eps, model.mu_hi + eps],
                  "upper_fraction": p["upper_fraction"], "band_fraction": p["band_fraction"],
                  "target_fraction": p["target_fraction"]}
    columns = {
        "slln.csv": ["policy", "paths", "within_band: paths with S_k/k in band for k >= band_tail_start",
                     "reaches_upper: tail max >= mu_hi - eps (k >= tail_start)",
                     "reaches_lower: tail min <= mu_lo + eps", "near_target: tail closest approach to b <= eps",
                     "mean_final: average of S_n/n"],
        "paths_*.csv": ["path_id", "tail_max", "tail_min", "closest_approach: min |S_k/k - b| for k >= tail_start"],
    }
    return ExperimentReport("slln", {"n": n, "paths": p["paths"], "seed": p["seed"],
                                     "policies": [pol.to_dict() for pol in policies]},
                            metrics, thresholds, verdicts, artifacts, columns)


def _run_wlln(model: SequenceModel, p, out: Path) -> ExperimentReport:
    ns = _check_ns(p)
    eps, delta = float(p["eps"]), float(p["delta"])
    low = MeanEvent("le", model.mu_lo - eps)
    band = MeanEvent("between", model.mu_lo - eps, model.mu_hi + eps)
    rows, low_caps, band_caps = [], [], []
    for n in ns:
        lc = mean_event_capacity(model, n, low, delta, **_recursion_kwargs(p))
        bc = mean_event_capacity(model, n, band, delta, **_recursion_kwargs(p))
        low_caps.append(lc)
        band_caps.append(bc)
        rows.append((n, "le", lc.V_lower, lc.V_upper, lc.v_lower, lc.v_upper, lc.error_bound))
        rows.append((n, "between", bc.V_lower, bc.V_upper, bc.v_lower, bc.v_upper, bc.error_bound))
    write_csv(out / "wlln.csv", ["n", "event", "V_lower", "V_upper", "v_lower", "v_upper", "error_bound"], rows)
    plotting.capacity_plot(out / "wlln.svg", ns, {
        "V upper bound (below mu_lo - eps)": [c.V_upper for c in low_caps],
        "v lower bound (inside band)": [c.v_lower for c in band_caps],
    }, {"V_max": p["V_max"], "v_min": p["v_min"]})
    v_lows = [c.v_lower for c in band_caps]
    metrics = {"V_upper_low_final": low_caps[-1].V_upper, "v_lower_band_final": v_lows[-1], "v_lower_band": v_lows}
    thresholds = {"eps": eps, "delta": delta, "V_max": p["V_max"], "v_min": p["v_min"]}
    verdicts = {
        "low_tail_small": low_caps[-1].V_upper <= p["V_max"],
        "band_capacity_large": v_lows[-1] >= p["v_min"],
        "band_capacity_increasing": all(a < b for a, b in zip(v_lows, v_lows[1:])),
    }
    columns = {"wlln.csv": ["n", "event: le (S_n/n <= mu_lo - eps) or between (mu_lo - eps < S_n/n < mu_hi + eps)",
                            "V_lower", "V_upper", "v_lower", "v_upper",
                            "error_bound: summed numerical error of the ramp evaluations"]}
    return ExperimentReport("wlln", {"ns": ns, "eps": eps, "delta": delta}, metrics, thresholds, verdicts,
                            ["wlln.csv", "wlln.svg"], columns)


def _run_pde(model, p, out: Path) -> ExperimentReport:
    lo = p["mu_lo"] if p["mu_lo"] is not None else (model.mu_lo if model else -1.0)
    hi = p["mu_hi"] if p["mu_hi"] is not None else (model.mu_hi if model else 1.0)
    cases = []
    try:
        for spec in p["phis"]:
            spec = {"kind": spec} if isinstance(spec, str) else dict(spec)
            case_eta = MaximalDistribution(float(spec.pop("mu_lo", lo)), float(spec.pop("mu_hi", hi)))
            name = spec["kind"]
            if (case_eta.mu_lo, case_eta.mu_hi) != (lo, hi):
                name += f"[{case_eta.mu_lo:g},{case_eta.mu_hi:g}]"
            cases.append((name, phi_from_spec(spec), case_eta))
    except (InputError, TypeError, ValueError, AttributeError, KeyError) as exc:
        raise _param_error("phis", str(exc)) from None
    interval = tuple(float(v) for v in p["eval_interval"])
    dxs = [p["dx"], p["dx"] / 2]
    rows, errors, verdicts, lip = [], {}, {}, {}
    last = None
    for name, phi, eta in cases:
        errs = []
        for dx in dxs:
            prob = default_problem(eta, p["h"], phi, dx, interval, p["cfl"])
            sol = solve(prob)
            e = error_vs_closed_form(sol, interval)
            errs.append(e)
            C = prob.speed * phi.lipschitz
            lip_rep = lipschitz_in_time_check(sol, C)
            rows.append((name, dx, prob.dt, e, sol.max_residual, sol.residual_bound, lip_rep.ok))
            lip[f"{name}@{dx!r}"] = lip_rep.ok
            if dx == dxs[0]:
                last = (name, sol)
        ratio = errs[0] / errs[1] if errs[1] > 0 else math.inf
        errors[name] = errs
        at_roundoff = max(errs) <= p["roundoff"]
        verdicts[f"{name}_error"] = errs[0] <= p["tolerance"]
        verdicts[f"{name}_refinement"] = at_roundoff or ratio >= p["min_ratio"]
        verdicts[f"{name}_lipschitz_in_time"] = all(v for k, v in lip.items() if k.startswith(name + "@"))
    write_csv(out / "pde.csv", ["phi", "dx", "dt", "max_error", "max_residual", "residual_bound",
                                "lipschitz_in_time_ok"], rows)
    plotting.resolution_plot(out / "pde.svg", dxs, errors)
    name, sol = last
    cols = np.flatnonzero((sol.x >= interval[0] - 1e-12) & (sol.x <= interval[1] + 1e-12))
    ks = np.unique(np.linspace(0, sol.t.size - 1, 12).round().astype(int))
    write_csv(out / "pde_solution.csv", ["t", "x", "V"],
              [(sol.t[k], sol.x[j], sol.V[k, j]) for k in ks for j in cols[::5]])
    plotting.heatmap(out / "pde_heatmap.svg", sol.t[ks], sol.x[cols[::5]], sol.V[np.ix_(ks, cols[::5])], title=name)
    metrics = {"errors": errors, "dx": dxs, "eta": [lo, hi]}
    thresholds = {"tolerance": p["tolerance"], "min_ratio": p["min_ratio"], "roundoff": p["roundoff"]}
    columns = {"pde.csv": ["phi", "dx", "dt", "max_error: vs closed form over eval_interval",
                           "max_residual: centred consistency residual", "residual_bound: max|mu| * L",
                           "lipschitz_in_time_ok"],
               "pde_solution.csv": ["t", "x", "V: solution of the first phi at the coarse dx (subsampled)"]}
    return ExperimentReport("pde", {"phis": p["phis"], "h": p["h"], "dx": p["dx"]}, metrics, thresholds,
                            verdicts, ["pde.csv", "pde.svg", "pde_solution.csv", "pde_heatmap.svg"], columns)


def _run_oracle(model, p, out: Path) -> ExperimentReport:
    rng = np.random.default_rng(p["seed"])
    rows, worst = [], 0.0
    for i in range(p["instances"]):
        m, n, grids, phi = random_oracle_instance(rng, p["n_max"], p["support_max"], p["grid_max"])
        r = upper_value(m, n, phi, mean_grid=grids, grid="exact")
        o = strategy_oracle(m, n, grids, phi)
        d = abs(r.value - o)
        worst = max(worst, d)
        rows.append((i, n, r.value, o, d))
    write_csv(out / "oracle.csv", ["instance", "n", "recursion", "oracle", "abs_diff"], rows)
    metrics = {"worst_abs_diff": worst, "instances": p["instances"]}
    thresholds = {"tol": p["tol"]}
    verdicts = {"recursion_matches_oracle": worst <= p["tol"]}
    columns = {"oracle.csv": ["instance", "n", "recursion: exact-grid upper value",
                              "oracle: brute force over adapted strategies", "abs_diff"]}
    return ExperimentReport("oracle", {"instances": p["instances"], "seed": p["seed"]}, metrics, thresholds,
                            verdicts, ["oracle.csv"], columns)


RUNNERS = {"axioms": _run_axioms, "lln": _run_lln, "slln": _run_slln, "wlln": _run_wlln,
           "pde": _run_pde, "oracle": _run_oracle}


def run(config: dict) -> ExperimentReport:
    """Validate ``config``, run it and write every artifact plus report.json."""
    cfg = validate_config(config)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    report = RUNNERS[cfg["experiment"]](cfg["model_obj"], cfg["parameters"], out)
    report.runtime_s = round(time.perf_counter() - start, 3)
    report.inputs = {"model": cfg["model"], "parameters": cfg["parameters"], **report.inputs}
    report.artifacts.append("report.json")
    (out / "report.json").write_text(json.dumps(_jsonable(report.to_dict()), indent=2) + "\n")
    return report
