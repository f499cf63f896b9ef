import math

import numpy as np
import pytest

from sublin.errors import InputError
from sublin.models import MaximalDistribution, clipped_quadratic, identity, maximal_expectation, neg_abs, peak
from sublin.pde import PdeProblem, closed_form, default_problem, error_vs_closed_form, lipschitz_in_time_check, solve

ETA = MaximalDistribution(-1.0, 1.0)


def test_closed_form_at_time_h_is_maximal_expectation():
    phi = peak(0.3, 1.0)
    assert closed_form(ETA, 0.1, phi, 0.1, 0.0) == pytest.approx(maximal_expectation(ETA, phi), abs=1e-12)
    assert closed_form(ETA, 0.1, phi, 1.1, 0.25) == pytest.approx(phi(np.array([0.25]))[0])


def test_closed_form_examples():
    eta = MaximalDistribution(-0.5, 2.0)
    # phi(x) = x: V(t, x) = x + (1 + h - t) mu_hi
    assert closed_form(eta, 0.1, identity(), 0.0, 0.3) == pytest.approx(0.3 + 1.1 * 2.0)
    # -|x| is flat zero once the cone reaches the kink
    assert closed_form(eta, 0.1, neg_abs(), 0.0, 0.3) == pytest.approx(0.0, abs=1e-12)
    assert closed_form(eta, 0.1, neg_abs(), 0.6, 0.6) == pytest.approx(-(0.6 - 0.5 * 0.5), abs=1e-9)
    with pytest.raises(InputError):
        closed_form(eta, 0.1, identity(), 2.0, 0.0)


@pytest.mark.parametrize("phi", [identity(), neg_abs(), clipped_quadratic()])
def test_exact_at_unit_cfl_on_symmetric_interval(phi):
    sol = solve(default_problem(ETA, 0.1, phi, 0.02))
    assert error_vs_closed_form(sol, layers=11) <= 1e-12


def test_first_order_convergence_on_convex_kinks():
    eta = MaximalDistribution(-0.5, 1.0)
    phi = -clipped_quadratic()
    errs = [error_vs_closed_form(solve(default_problem(eta, 0.1, phi, dx)), layers=11) for dx in (0.02, 0.01)]
    assert errs[1] < errs[0] and errs[0] / errs[1] >= 1.9


def test_concave_kink_with_fractional_speed_still_converges():
    # known slower rate: the kink of -|x| is smeared when |mu_lo| dt / dx is fractional
    eta = MaximalDistribution(-0.5, 1.0)
    errs = [error_vs_closed_form(solve(default_problem(eta, 0.1, neg_abs(), dx)), layers=11) for dx in (0.02, 0.01)]
    assert errs[1] < errs[0] < 0.05


def test_monotone_scheme_preserves_order():
    p1 = default_problem(ETA, 0.1, neg_abs(), 0.02)
    p2 = PdeProblem(ETA, 0.1, neg_abs().shifted(0.0), p1.x_domain, p1.dx, p1.dt)
    shifted = PdeProblem(ETA, 0.1, clipped_quadratic(), p1.x_domain, p1.dx, p1.dt)
    a, b = solve(p2), solve(shifted)
    # -|x| <= min(x^2, 1) pointwise, so the solutions stay ordered
    assert np.all(a.V <= b.V + 1e-12)


def test_cfl_violation_rejected():
    p = default_problem(ETA, 0.1, identity(), 0.02)
    with pytest.raises(InputError):
        PdeProblem(ETA, 0.1, identity(), p.x_domain, 0.02, 0.03)
    with pytest.raises(InputError):
        PdeProblem(ETA, 0.0, identity(), p.x_domain, 0.02, 0.01)


def test_domain_contains_characteristic_cone():
    p = default_problem(ETA, 0.1, identity(), 0.02)
    assert p.x_domain[0] <= -1 - 1.1 - 1 + 1e-9 and p.x_domain[1] >= 1 + 1.1 + 1 - 1e-9
    assert math.isclose(round(p.horizon / p.dt) * p.dt, p.horizon)


def test_lipschitz_in_time_and_residual():
    sol = solve(default_problem(ETA, 0.1, peak(0.3, 1.0), 0.02))
    assert lipschitz_in_time_check(sol, C=1.0).ok
    assert not sol.flagged
    assert sol.at(0.1, 0.0) == pytest.approx(1 - math.exp(-1), abs=0.02)
