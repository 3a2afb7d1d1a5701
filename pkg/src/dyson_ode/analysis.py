"""Explicit error bounds, the error budget, stability and the pure-state distance.

All bounds use the pre-asymptotic closed forms, with ``a_max`` standing in
for sup ||A(t)|| (callers pass lambda_A, which dominates it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problem import MatrixFunction, OdeProblem, TimeGrid
from .propagator import ordered_exponential

# Slack on the a_max * delta_t <= 1 precondition, for T/ceil(lambda T) rounding.
_UNIT_SLACK = 1e-12

# Log-norm threshold for calling a problem stable.
STABLE_TOL = 1e-10


def _power_over_factorial(x: float, p: int, q: int) -> float:
    """x**p / q! without overflow; 0**0 is 1."""
    if p == 0:
        return 1.0 / math.factorial(q) if q < 171 else 0.0
    if x == 0.0:
        return 0.0
    return math.exp(p * math.log(x) - math.lgamma(q + 1))


def _check_unit(x: float) -> None:
    if x > 1.0 + _UNIT_SLACK:
        raise ValueError(f"a_max * delta_t = {x:.6g} exceeds 1")


def logarithmic_norm(a_matrix) -> float:
    """Largest eigenvalue of the Hermitian part (A + A^H) / 2.

    Examples
    --------
    >>> logarithmic_norm([[-1.0, 1.0], [0.0, -1.0]])
    -0.5
    """
    a = np.asarray(a_matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("logarithmic norm needs a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite matrix entries")
    return float(np.linalg.eigvalsh((a + a.conj().T) / 2)[-1])


@dataclass(frozen=True)
class StabilityResult:
    log_norm_max: float
    stable: bool
    propagator_norm_max: Optional[float] = None
    propagator_ok: Optional[bool] = None


def stability_check(a: MatrixFunction, grid: TimeGrid,
                    rng: Optional[np.random.Generator] = None,
                    check_propagators: bool = True) -> StabilityResult:
    """Sample the log norm on the fine grid plus 7 random times per segment.

    When the samples say stable, every segment's exact propagator norm is
    also checked against 1 + 1e-8.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    times = np.concatenate([grid.fine_times(),
                            rng.uniform(0.0, grid.horizon, size=7 * grid.r), [grid.horizon]])
    values = a.many(times)
    hermitian = (values + np.conj(np.swapaxes(values, 1, 2))) / 2
    mu = float(np.max(np.linalg.eigvalsh(hermitian)[:, -1]))
    stable = mu <= STABLE_TOL
    if not (stable and check_propagators):
        return StabilityResult(mu, stable)
    norms = [np.linalg.norm(ordered_exponential(a, t, t + grid.delta_t), 2)
             for t in grid.delta_t * np.arange(grid.r)]
    peak = float(max(norms))
    return StabilityResult(mu, stable, peak, peak <= 1.0 + 1e-8)


def truncation_bound(a_max: float, b_max: float, delta_t: float, order: int,
                     x_norm: float) -> tuple[float, float]:
    """Explicit one-segment truncation bounds ``(w_bound * ||x||, v_bound)``.

    ``w``: (a dt)^(K+1)/(K+1)! e^(a dt) ||x||;
    ``v``: b a^K dt^(K+1)/(K+1)! e^(a dt).

    Examples
    --------
    >>> round(truncation_bound(1.0, 0.0, 1.0, 4, 1.0)[0], 6)
    0.022652
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    x = a_max * delta_t
    _check_unit(x)
    grow = math.exp(x)
    w = _power_over_factorial(x, order + 1, order + 1) * grow * x_norm
    v = b_max * delta_t * _power_over_factorial(x, order, order + 1) * grow
    return w, v


def discretization_bound_w(a_max: float, a_prime_max: float, delta_t: float, m: int) -> float:
    """Left-endpoint sampling error of the truncated propagator over one segment.

    Returns ``dt_small * dt * a' * max(e^x - 1, e^x / 2)`` with ``x = a_max dt``.
    The ``e^x - 1`` branch is the textbook constant; the ``e^x / 2`` branch keeps
    the first-order term ``a' dt dt_small / 2`` covered when ``x`` is small.
    """
    x = a_max * delta_t
    small = delta_t / m
    return small * delta_t * a_prime_max * max(math.expm1(x), math.exp(x) / 2)


def _one_minus_one_minus_x_exp_over_x2(x: float) -> float:
    """[1 - (1 - x) e^x] / x^2 = sum_{k>=2} (k-1) x^(k-2) / k!."""
    if x >= 0.1:
        return (1.0 - (1.0 - x) * math.exp(x)) / (x * x)
    total, term, k = 0.0, 1.0, 2
    while True:
        add = (k - 1) * term / math.factorial(k)
        total += add
        if add < 1e-18 * total:
            return total
        term *= x
        k += 1


def discretization_bound_v(a_max: float, a_prime_max: float, b_max: float,
                           b_prime_max: float, delta_t: float, m: int) -> float:
    """Left-endpoint sampling error of the truncated particular solution.

    ``b (dt_s / 2 a^2) a' [1 - (1 - x) e^x] + (dt_s / 2 a) b' (e^x - 1)``,
    evaluated through the regular series near ``a_max = 0``.
    """
    x = a_max * delta_t
    small = delta_t / m
    first = b_max * small * a_prime_max * delta_t ** 2 / 2 * _one_minus_one_minus_x_exp_over_x2(x)
    ratio = math.expm1(x) / x if x > 0 else 1.0
    second = small * b_prime_max * delta_t / 2 * ratio
    return first + second


@dataclass(frozen=True)
class BudgetComponent:
    name: str
    w_bound: float
    v_bound: float
    target_w: float
    target_v: float
    combined: float
    target_combined: float

    @property
    def passed(self) -> bool:
        return (self.w_bound <= self.target_w and self.v_bound <= self.target_v
                and self.combined <= self.target_combined)

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def error_budget(epsilon: float, problem: OdeProblem, grid: TimeGrid, order: int,
                 x_max: float, *, solver_error: Optional[float] = None,
                 shares: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3),
                 derivative_bounds: Optional[tuple[float, float]] = None) -> dict:
    """Check the per-segment bounds against their shares of ``epsilon``.

    Each of truncation and discretization must satisfy ``w <= share * eps / r``,
    ``v <= share * eps * x_max / r`` and the joint state-error condition
    ``w * x_max + v <= share * eps * x_max / r``. The solver margin passes when
    no solver error is supplied, otherwise it must not exceed
    ``share * eps * x_max``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if derivative_bounds is None:
        da, db, _ = problem.derivative_bounds()
    else:
        da, db = derivative_bounds
    la, lb, r = problem.lambda_a, problem.lambda_b, grid.r

    def component(name, share, w, v):
        return BudgetComponent(name, w, v, share * epsilon / r, share * epsilon * x_max / r,
                               w * x_max + v, share * epsilon * x_max / r)

    tw, tv = truncation_bound(la, lb, grid.delta_t, order, 1.0)
    trunc = component("truncation", shares[0], tw, tv)
    disc = component("discretization", shares[1],
                     discretization_bound_w(la, da, grid.delta_t, grid.m),
                     discretization_bound_v(la, da, lb, db, grid.delta_t, grid.m))
    solver_target = shares[2] * epsilon * x_max
    solver_ok = solver_error is None or solver_error <= solver_target
    return {
        "epsilon": epsilon,
        "shares": list(shares),
        "x_max": x_max,
        "truncation": trunc.as_dict(),
        "discretization": disc.as_dict(),
        "solver": {"error": solver_error, "target": solver_target, "passed": solver_ok},
        "passed": trunc.passed and disc.passed and solver_ok,
    }


def bures_wasserstein_pure(x, y) -> float:
    """||x - e^{i phi} y|| with the phase making <y, x> real and nonnegative."""
    x = np.asarray(x)
    y = np.asarray(y)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite vector entries")
    overlap = np.vdot(y, x)
    if overlap == 0:
        return float(math.hypot(np.linalg.norm(x), np.linalg.norm(y)))
    return float(np.linalg.norm(x - y * (overlap / abs(overlap))))


@dataclass(frozen=True)
class ErrorReport:
    truncation_bound_w: float
    truncation_bound_v: float
    discretization_bound_w: float
    discretization_bound_v: float
    empirical_w_error: float
    empirical_v_error: float
    empirical_final_error: float
    log_norm_max: float
    stable: bool
    epsilon_budget: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)
