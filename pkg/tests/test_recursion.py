import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sublin.errors import InputError, ResourceError
from sublin.finite import FiniteDistribution
from sublin.models import (
    LipschitzFn,
    SequenceModel,
    StepModel,
    clipped_quadratic,
    constant,
    identity,
    neg_abs,
    peak,
    ramp_down,
)
from sublin.recursion import (
    MeanEvent,
    lower_value,
    mean_event_capacity,
    strategy_count,
    strategy_oracle,
    upper_value,
)

COIN = {"support": [-1.0, 1.0], "probs": [0.5, 0.5]}


def alternating():
    return SequenceModel(-1.0, 1.0, rule={"kind": "alternating_sqrt", "params": {"noise": COIN}},
                         cesaro_envelope_c=2.0, moment_bound=4.0)


def nested_max(steps, grids, phi, n, i=0, s=0.0):
    """Plain recursive sup over adapted choices: the definition, with no state merging."""
    if i == n:
        return float(phi(np.array([s / n]))[0])
    z, p = steps[i].noise.support, steps[i].noise.probs
    return max(sum(pk * nested_max(steps, grids, phi, n, i + 1, s + mu + zk) for zk, pk in zip(z, p))
               for mu in grids[i])


@st.composite
def small_instances(draw):
    n = draw(st.integers(1, 3))
    steps, grids = [], []
    for _ in range(n):
        lo = draw(st.floats(-1, 0.5))
        hi = lo + draw(st.floats(0, 1))
        k = draw(st.integers(1, 3))
        pts = np.array(sorted(set(draw(st.lists(st.floats(-1, 1), min_size=k, max_size=k)))))
        w = np.array(draw(st.lists(st.floats(0.05, 1), min_size=pts.size, max_size=pts.size)))
        p = w / w.sum()
        pts = pts - float(p @ pts)
        noise = FiniteDistribution(pts, p) if np.unique(pts).size == pts.size else FiniteDistribution.point_mass(0.0)
        steps.append(StepModel(lo, hi, noise))
        g = draw(st.lists(st.floats(0, 1), min_size=1, max_size=3))
        grids.append(np.array([lo + t * (hi - lo) for t in g]))
    model = SequenceModel(min(s.mean_lo for s in steps), max(s.mean_hi for s in steps), steps=tuple(steps))
    c = draw(st.floats(-1, 1))
    phi = LipschitzFn(lambda x: np.cos(3 * x) - np.abs(x - c), 4.0, 0, (c,))
    return model, steps, grids, phi, n


@settings(max_examples=80, deadline=None)
@given(small_instances())
def test_exact_grid_matches_definition(inst):
    model, steps, grids, phi, n = inst
    r = upper_value(model, n, phi, mean_grid=grids, grid="exact")
    # merged near-duplicate sums are the only source of error in exact mode
    assert r.error_bound <= 1e-10
    assert r.value == pytest.approx(nested_max(steps, grids, phi, n), abs=1e-10)
    if strategy_count(model, n, grids) <= 200_000:
        assert r.value == pytest.approx(strategy_oracle(model, n, grids, phi), abs=1e-10)


def test_identity_gives_average_upper_mean():
    m = alternating()
    for n in (1, 5, 40):
        r = upper_value(m, n, identity())
        assert r.value == pytest.approx(np.mean(m.upper_means(n)), abs=1e-12)
        assert lower_value(m, n, identity()).value == pytest.approx(-1.0, abs=1e-12)


def test_single_step_against_dense_mean_search():
    m = alternating()
    phi = peak(0.3, 1.0)
    step = m.step(1)
    mus = np.linspace(step.mean_lo, step.mean_hi, 100_001)
    ref = max(float(step.noise.probs @ phi(mu + step.noise.support)) for mu in mus[::100])
    ref = max(ref, float(np.max(sum(p * phi(mus + z) for z, p in zip(step.noise.support, step.noise.probs)))))
    r = upper_value(m, 1, phi)
    assert abs(r.value - ref) <= r.error_bound + 1e-9


def test_monotone_shortcut_agrees_with_grid_search():
    m = alternating()
    phi = ramp_down(-0.5, 0.2)
    fast = upper_value(m, 12, phi)
    generic = LipschitzFn(phi.fn, phi.lipschitz, 0, phi.breakpoints)
    slow = upper_value(m, 12, generic, mean_points=9)
    assert abs(fast.value - slow.value) <= fast.error_bound + slow.error_bound + 1e-12
    assert slow.value <= fast.value + slow.error_bound


def test_uniform_grid_within_bound_of_exact():
    m = alternating()
    phi = neg_abs(0.2)
    grids = [np.linspace(s.mean_lo, s.mean_hi, 3) for s in m.steps_upto(6)]
    exact = upper_value(m, 6, phi, mean_grid=grids, grid="exact")
    approx = upper_value(m, 6, phi, mean_grid=grids, grid="uniform", nodes=512)
    assert approx.grid_report["mode"] == "uniform"
    assert abs(exact.value - approx.value) <= approx.error_bound + 1e-12


def test_lower_below_upper_and_constants():
    m = alternating()
    for phi in (neg_abs(0.1), clipped_quadratic(), peak(0.3, 1.0)):
        up, lo = upper_value(m, 16, phi), lower_value(m, 16, phi)
        assert lo.value <= up.value + up.error_bound + lo.error_bound
    assert upper_value(m, 16, constant(2.5)).value == pytest.approx(2.5)


def test_degenerate_model_is_exact():
    m = SequenceModel(0.0, 0.0, rule={"kind": "constant", "params": {"noise": {"support": [0.0], "probs": [1.0]}}})
    r = upper_value(m, 50, peak(0.3, 1.0))
    assert r.value == pytest.approx(peak(0.3, 1.0)(np.array([0.0]))[0])
    assert r.error_bound == 0.0


def test_bad_arguments():
    m = alternating()
    with pytest.raises(InputError):
        upper_value(m, 0, identity())
    with pytest.raises(InputError):
        upper_value(m, 3, lambda x: x)
    with pytest.raises(InputError):
        upper_value(m, 3, identity(), grid="sparse")
    with pytest.raises(InputError):
        upper_value(m, 3, peak(0, 1), grid="exact")
    with pytest.raises(ResourceError):
        upper_value(m, 40, neg_abs(), mean_points=9, refine=False, grid="exact", max_exact_states=100)
    with pytest.raises(InputError):
        upper_value(m, 3, identity(), mean_grid=[[5.0]] * 3)


def test_domain_clamp_and_truncation():
    m = alternating()
    with pytest.raises(InputError):
        upper_value(m, 8, neg_abs(), domain=(-1.0, 1.0))
    r = upper_value(m, 8, neg_abs(), domain=(-1.0, 1.0), clamp=True)
    assert r.grid_report["truncation_error"] > 0


def test_capacity_bounds_are_ordered_and_dual():
    m = alternating()
    ev = MeanEvent("le", -1.1)
    cb = mean_event_capacity(m, 24, ev, 0.05)
    assert 0 <= cb.v_lower <= cb.v_upper <= 1
    assert 0 <= cb.V_lower <= cb.V_upper <= 1
    comp = mean_event_capacity(m, 24, ev.complement(), 0.05)
    assert cb.V_upper == pytest.approx(1 - comp.v_lower, abs=1e-12)


def test_sandwich_brackets_indicator():
    xs = np.linspace(-3, 3, 601)
    for ev in (MeanEvent("le", 0.2), MeanEvent("gt", -0.4), MeanEvent("between", -1.2, 1.2)):
        inner, outer = ev.sandwich(0.1)
        ind = ev.contains(xs).astype(float)
        assert np.all(inner(xs) <= ind + 1e-15) and np.all(ind <= outer(xs) + 1e-15)


def test_strategy_oracle_limits():
    m = alternating()
    grids = [np.array([-1.0, -0.5, 0.0])] * 5
    with pytest.raises(InputError):
        strategy_oracle(m, 5, grids, identity())
    with pytest.raises(ResourceError):
        strategy_oracle(m, 4, grids, identity(), cap=10)
    assert strategy_count(m, 2, grids) == 3 * 3**2
