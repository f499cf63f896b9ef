import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sublin.errors import InputError
from sublin.finite import FiniteDistribution
from sublin.models import (
    LipschitzFn,
    MaximalDistribution,
    SequenceModel,
    StepModel,
    clipped_quadratic,
    g_eval,
    identity,
    maximal_expectation,
    neg_abs,
    peak,
    ramp_down,
    ramp_up,
    validate_hypotheses,
)

COIN = {"support": [-1.0, 1.0], "probs": [0.5, 0.5]}


def alternating():
    return SequenceModel(-1.0, 1.0, rule={"kind": "alternating_sqrt", "params": {"noise": COIN}},
                         cesaro_envelope_c=2.0, moment_bound=4.0)


def test_maximal_expectation_of_peak():
    assert maximal_expectation(MaximalDistribution(-1, 1), peak(0.3, 1.0)) == pytest.approx(1 - math.exp(-1), abs=1e-14)


def test_maximal_expectation_when_peak_outside():
    # sup attained at the endpoint nearest the centre
    val = maximal_expectation(MaximalDistribution(-1, 0), peak(0.5, 1.0))
    assert val == pytest.approx(1 - math.exp(-0.5), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 2), st.floats(-3, 3), st.floats(0.5, 6))
def test_maximal_expectation_against_dense_grid(lo, width, a, b):
    eta = MaximalDistribution(lo, lo + width)
    f = lambda y: np.sin(b * y) + a * np.abs(y - 0.1)  # noqa: E731
    dense = np.linspace(lo, lo + width, 200_001)
    ref = float(np.max(f(dense)))
    L = b + abs(a)
    got = maximal_expectation(eta, f, lipschitz=L)
    assert got >= ref - 1e-12
    assert got <= ref + L * (width / 200_000) / 2 + 1e-12


def test_degenerate_interval():
    assert maximal_expectation(MaximalDistribution(0.4, 0.4), neg_abs()) == pytest.approx(-0.4)


def test_generator():
    eta = MaximalDistribution(-0.5, 2.0)
    assert g_eval(eta, 3.0) == pytest.approx(6.0)
    assert g_eval(eta, -3.0) == pytest.approx(1.5)
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(g_eval(eta, xs), np.maximum(-0.5 * xs, 2.0 * xs))


def test_library_functions():
    x = np.array([-2.0, -1.0, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(clipped_quadratic()(x), [1, 1, 0, 0.25, 1])
    np.testing.assert_allclose(ramp_down(0.0, 1.0)(x), [1, 1, 0, 0, 0])
    np.testing.assert_allclose(ramp_up(0.0, 1.0)(x), [0, 0, 0, 0.5, 1])
    assert (-identity()).monotone == -1
    np.testing.assert_allclose(neg_abs().shifted(1.0)(x), -np.abs(x - 1.0))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([identity(), neg_abs(0.2), clipped_quadratic(), peak(0.3, 1.0), ramp_up(0.1, 0.3)]),
       st.lists(st.floats(-3, 3), min_size=2, max_size=20))
def test_declared_lipschitz_constants(phi, xs):
    xs = np.array(xs)
    v = phi(xs)
    for i in range(len(xs) - 1):
        assert abs(v[i + 1] - v[i]) <= phi.lipschitz * abs(xs[i + 1] - xs[i]) + 1e-12


def test_lipschitz_fn_validation():
    with pytest.raises(InputError):
        LipschitzFn(lambda x: x, -1.0)
    with pytest.raises(InputError):
        LipschitzFn(lambda x: x, 1.0, monotone=2)
    with pytest.raises(InputError):
        MaximalDistribution(1.0, 0.0)


def test_step_model_rejects_biased_noise():
    with pytest.raises(InputError):
        StepModel(-1, 1, FiniteDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.5])))
    with pytest.raises(InputError):
        StepModel(1, -1, FiniteDistribution.point_mass(0.0))


def test_rule_means():
    m = alternating()
    np.testing.assert_allclose(m.upper_means(4), [1 - 1, 1 + 1 / math.sqrt(2), 1 - 1 / math.sqrt(3), 1.5])
    np.testing.assert_allclose(m.lower_means(4), -1.0)
    h = SequenceModel(-1, 1, rule={"kind": "harmonic", "params": {"noise": COIN}})
    np.testing.assert_allclose(h.upper_means(3), [2.0, 1.5, 1 + 1 / 3])
    assert h.horizon == math.inf


def test_model_round_trip_and_unknown_keys():
    m = alternating()
    again = SequenceModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(again.upper_means(50), m.upper_means(50))
    d = m.to_dict()
    d["bogus"] = 1
    with pytest.raises(InputError):
        SequenceModel.from_dict(d)
    with pytest.raises(InputError):
        SequenceModel(-1, 1, rule={"kind": "nope"})
    with pytest.raises(InputError):
        SequenceModel(-1, 1, rule={"kind": "constant", "params": {"speed": 1}})


def test_explicit_steps_are_finite():
    s = StepModel(-1, 1, FiniteDistribution.point_mass(0.0))
    m = SequenceModel(-1, 1, steps=(s, s))
    assert m.horizon == 2
    with pytest.raises(InputError):
        m.step(3)


def test_validate_hypotheses():
    assert validate_hypotheses(alternating(), 4096).passed
    loose = SequenceModel(-1, 1, rule={"kind": "alternating_sqrt", "params": {"noise": COIN}},
                          cesaro_envelope_c=0.5, moment_bound=4.0)
    rep = validate_hypotheses(loose, 1024)
    assert not rep.passed and any("envelope" in f for f in rep.failures)
    low_moment = SequenceModel(-1, 1, rule={"kind": "constant", "params": {"noise": COIN}}, moment_bound=1.5)
    assert any("moment" in f for f in validate_hypotheses(low_moment, 64).failures)


def test_wrong_cesaro_limit_is_caught():
    # declared mu_hi 0.5 while the step means sit at 1
    m = SequenceModel(-1, 0.5, steps=tuple(StepModel(-1, 1, FiniteDistribution.point_mass(0.0)) for _ in range(64)))
    assert not validate_hypotheses(m, 64).passed
