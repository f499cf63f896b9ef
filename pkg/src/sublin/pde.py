"""Finite differences for the maximal-distribution equation.

Terminal-value form on [0, 1 + h]:

    dV/dt + g(dV/dx) = 0,   V(1 + h, x) = phi(x),   g(p) = mu_hi p^+ - mu_lo p^-,

with closed form V(t, x) = sup over y in [mu_lo, mu_hi] of phi(x + (1 + h - t) y).
Reversing time (tau = 1 + h - t) gives the initial-value form
du/dtau - g(du/dx) = 0, u(0, x) = phi(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .finite import BoundCheck, CheckReport
from .models import LipschitzFn, MaximalDistribution, g_eval, maximal_expectation

DEFAULT_CFL = 1.0


@dataclass(frozen=True)
class PdeProblem:
    eta: MaximalDistribution
    h: float
    phi: LipschitzFn
    x_domain: tuple
    dx: float
    dt: float

    def __post_init__(self):
        if not self.h > 0:
            raise InputError("h must be positive")
        if not (self.dx > 0 and self.dt > 0):
            raise InputError("dx and dt must be positive")
        lo, hi = self.x_domain
        if not hi - lo >= 2 * self.dx:
            raise InputError("x_domain must span at least two cells")
        if self.dt > self.dx / self.speed * (1 + 1e-12):
            raise InputError(
                f"CFL violated: dt={self.dt} > dx/max|mu| = {self.dx / self.speed}"
            )

    @property
    def speed(self) -> float:
        return max(abs(self.eta.mu_lo), abs(self.eta.mu_hi), 1e-12)

    @property
    def horizon(self) -> float:
        return 1.0 + self.h


def default_problem(
    eta: MaximalDistribution,
    h: float,
    phi: LipschitzFn,
    dx: float,
    eval_interval: tuple = (-1.0, 1.0),
    cfl: float = DEFAULT_CFL,
) -> PdeProblem:
    """Domain fattened so no characteristic from ``eval_interval`` reaches the boundary.

    dt is the largest value not above ``cfl * dx / max|mu|`` that divides 1 + h.
    """
    speed = max(abs(eta.mu_lo), abs(eta.mu_hi), 1e-12)
    pad = (1.0 + h) * speed + 1.0
    lo, hi = eval_interval[0] - pad, eval_interval[1] + pad
    cells = math.ceil((hi - lo) / dx - 1e-9)
    hi = lo + cells * dx
    steps = math.ceil((1.0 + h) / (cfl * dx / speed) - 1e-9)
    return PdeProblem(eta, h, phi, (lo, hi), dx, (1.0 + h) / steps)


@dataclass
class PdeSolution:
    problem: PdeProblem
    t: np.ndarray
    x: np.ndarray
    V: np.ndarray  # V[k, j] = V(t[k], x[j])
    max_residual: float
    residual_bound: float

    @property
    def flagged(self) -> bool:
        return not (math.isfinite(self.max_residual) and self.max_residual <= 10 * self.residual_bound)

    def layer(self, t: float) -> int:
        return int(np.argmin(np.abs(self.t - t)))

    def at(self, t: float, x):
        return np.interp(x, self.x, self.V[self.layer(t)])


def _one_sided(v: np.ndarray, dx: float):
    d = np.diff(v) / dx
    # linear extrapolation beyond either end repeats the edge slope
    fwd = np.append(d, d[-1])
    bwd = np.insert(d, 0, d[0])
    return fwd, bwd


def _hamiltonian(eta: MaximalDistribution, fwd: np.ndarray, bwd: np.ndarray) -> np.ndarray:
    """Upwind g: max over velocities mu of mu * (D+ if mu > 0 else D-)."""
    speeds = {eta.mu_lo, eta.mu_hi}
    if eta.mu_lo < 0 < eta.mu_hi:
        speeds.add(0.0)
    out = None
    for mu in speeds:
        flux = mu * fwd if mu > 0 else mu * bwd
        out = flux if out is None else np.maximum(out, flux)
    return out


def solve(problem: PdeProblem) -> PdeSolution:
    """Backward explicit upwind time stepping from t = 1 + h to t = 0.

    Each update V_new = V + dt * max_mu flux(mu) is a max of convex
    combinations of neighbouring values under the CFL condition, so the
    scheme is monotone.
    """
    p = problem
    lo, hi = p.x_domain
    cells = int(round((hi - lo) / p.dx))
    x = lo + p.dx * np.arange(cells + 1)
    steps = int(round(p.horizon / p.dt))
    t = p.dt * np.arange(steps + 1)
    t[-1] = p.horizon
    V = np.empty((steps + 1, x.size))
    V[-1] = p.phi(x)
    residual = 0.0
    for k in range(steps - 1, -1, -1):
        fwd, bwd = _one_sided(V[k + 1], p.dx)
        V[k] = V[k + 1] + p.dt * _hamiltonian(p.eta, fwd, bwd)
        central = 0.5 * (fwd + bwd)
        r = (V[k] - V[k + 1]) / p.dt - g_eval(p.eta, central)
        residual = max(residual, float(np.max(np.abs(r[1:-1]))))
        if not np.all(np.isfinite(V[k])):
            residual = math.inf
            break
    bound = p.speed * max(p.phi.lipschitz, 1e-12)
    return PdeSolution(p, t, x, V, residual, bound)


def closed_form(eta: MaximalDistribution, h: float, phi: LipschitzFn, t: float, x: float) -> float:
    """sup over y in [mu_lo, mu_hi] of phi(x + (1 + h - t) y)."""
    if not 0 <= t <= 1 + h + 1e-12:
        raise InputError(f"t must lie in [0, 1 + h], got {t}")
    tau = max(0.0, 1.0 + h - t)
    shifted = LipschitzFn(lambda y: phi(x + tau * np.asarray(y)), phi.lipschitz * tau, 0,
                          tuple((b - x) / tau for b in phi.breakpoints) if tau > 0 else ())
    return maximal_expectation(eta, shifted)


def error_vs_closed_form(solution: PdeSolution, eval_interval: tuple = (-1.0, 1.0), layers: int = 41) -> float:
    """Max-norm gap to the closed form over eval_interval on ``layers`` evenly spread time layers.

    The layers at t = 0 and t = h are always included.
    """
    p = solution.problem
    ks = set(np.linspace(0, solution.t.size - 1, layers).round().astype(int).tolist())
    ks |= {0, solution.layer(p.h)}
    cols = np.flatnonzero((solution.x >= eval_interval[0] - 1e-12) & (solution.x <= eval_interval[1] + 1e-12))
    worst = 0.0
    for k in sorted(ks):
        exact = np.array([closed_form(p.eta, p.h, p.phi, float(solution.t[k]), float(solution.x[j])) for j in cols])
        worst = max(worst, float(np.max(np.abs(solution.V[k, cols] - exact))))
    return worst


def lipschitz_in_time_check(solution: PdeSolution, C: float, slack: float | None = None) -> CheckReport:
    """|V(t_k, x) - V(t_{k+1}, x)| <= C |t_k - t_{k+1}| + slack on interior nodes."""
    p = solution.problem
    if slack is None:
        slack = 2.0 * (p.dx + p.dt) * C
    jumps = np.abs(np.diff(solution.V[:, 1:-1], axis=0))
    dts = np.diff(solution.t)[:, None]
    excess = jumps - C * dts
    report = CheckReport()
    report.checks.append(BoundCheck("max_k,x |dV| - C dt", float(np.max(excess)), slack))
    return report
