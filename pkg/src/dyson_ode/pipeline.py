"""End-to-end orchestration behind the CLI commands."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import (ErrorReport, bures_wasserstein_pure, discretization_bound_v,
                       discretization_bound_w, error_budget, stability_check, truncation_bound)
from .encoding import build_block_system, condition_report
from .problem import OdeProblem, TimeGrid
from .propagator import exact_segment_v, ordered_exponential, reference_trajectory
from .resources import (M_CAP, CostInputs, choose_k, choose_m, choose_time_step,
                        lambda_ledger, theorem1_costs, theorem2_costs)
from .serialize import SCHEMA_VERSION, dumps
from .solver import forward_solve, success_amplitudes
from .specfile import ProblemSpec

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_BUDGET = 3
EXIT_PATHOLOGICAL = 4

X_MAX_SAFETY = 1.05


class UnstableProblemError(RuntimeError):
    """The sampled logarithmic norm is positive and unstable runs were not allowed."""


@dataclass(frozen=True)
class Plan:
    """Everything selected before the linear system is built."""

    grid: TimeGrid
    order: int
    x_max: float
    x_max_measured: bool
    oracle_final: np.ndarray
    a_prime_max: float
    b_prime_max: float
    derivatives_estimated: bool


class Stopwatch:
    def __init__(self):
        self.laps = {}

    def lap(self, name, start):
        self.laps[name] = time.perf_counter() - start
        return time.perf_counter()


def make_plan(problem: OdeProblem, epsilon: float, *, r: Optional[int] = None,
              k: Optional[int] = None, m: Optional[int] = None, share: float = 1 / 3,
              max_m: int = M_CAP) -> Plan:
    """Pick r, K and M (unless overridden) and measure x_max from the oracle."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    oracle_final, peak = reference_trajectory(problem)
    measured = problem.x_max_hint is None
    x_max = X_MAX_SAFETY * peak if measured else problem.x_max_hint
    if x_max <= 0:
        raise ValueError("x_max is zero: the solution vanishes identically")
    if r is None:
        r = choose_time_step(problem.lambda_a, problem.horizon)[1] if problem.lambda_a > 0 else 1
    grid = TimeGrid.uniform(problem.horizon, r)
    da, db, estimated = problem.derivative_bounds()
    if k is None:
        k = max(1, choose_k(problem.lambda_a, grid.delta_t, r, epsilon, x_max,
                            problem.lambda_b, share))
    if m is None:
        m = choose_m(problem.lambda_a, da, problem.lambda_b, db, grid.delta_t, r, epsilon,
                     x_max, share, max_m)
    return Plan(grid.with_m(m), int(k), float(x_max), measured, oracle_final, da, db, estimated)


def _cost_inputs(problem, plan, epsilon, min_v) -> CostInputs:
    return CostInputs(
        epsilon=epsilon, horizon=problem.horizon, delta_t=plan.grid.delta_t, r=plan.grid.r,
        k_order=plan.order, m_points=plan.grid.m, lambda_a=problem.lambda_a,
        lambda_b=problem.lambda_b, lambda_x=problem.lambda_x, x_max=plan.x_max,
        b_max=problem.lambda_b, x_final_norm=float(np.linalg.norm(plan.oracle_final)),
        min_v_norm=min_v, a_prime_max=plan.a_prime_max, b_prime_max=plan.b_prime_max)


def estimate(problem: OdeProblem, plan: Plan, epsilon: float, exact_v=None):
    """Time-independent cost model when A and b are constant, general model otherwise."""
    grid = plan.grid
    if exact_v is None:
        exact_v = [exact_segment_v(problem, (i - 1) * grid.delta_t, i * grid.delta_t)
                   for i in range(1, grid.r + 1)]
    min_v = float(min(np.linalg.norm(v) for v in exact_v))
    costs = theorem2_costs if problem.time_independent else theorem1_costs
    return costs(_cost_inputs(problem, plan, epsilon, min_v))


def grid_dict(grid: TimeGrid) -> dict:
    return {"r": grid.r, "big_r": 2 * grid.r, "delta_t": grid.delta_t, "m": grid.m,
            "delta_t_small": grid.delta_t_small}


@dataclass
class RunResult:
    report: dict
    exit_code: int
    history_csv: str = ""
    bounds_csv: str = ""
    timings: dict = field(default_factory=dict)

    @property
    def report_json(self) -> str:
        return dumps(self.report)


def _complex_list(x) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(x, dtype=complex)]


def run_solve(spec: ProblemSpec, epsilon: float, *, r=None, k=None, m=None, seed: int = 0,
              allow_unstable: bool = False) -> RunResult:
    """Select parameters, build and solve the block system, and audit the result."""
    clock = Stopwatch()
    start = time.perf_counter()
    problem = spec.to_problem()
    rng = np.random.default_rng(seed)
    plan = make_plan(problem, epsilon, r=r, k=k, m=m)
    grid, order = plan.grid, plan.order
    start = clock.lap("plan", start)

    stability = stability_check(problem.a, grid, rng)
    lambdas = problem.validate_lambdas(grid, rng)
    if not stability.stable and not allow_unstable:
        raise UnstableProblemError(
            f"sampled logarithmic norm {stability.log_norm_max:.6g} > 0; "
            "pass --allow-unstable to run anyway")
    start = clock.lap("stability", start)

    system = build_block_system(problem, grid, order)
    history = forward_solve(system)
    start = clock.lap("solve", start)
    condition = condition_report(system)
    amplitudes = success_amplitudes(system, history, problem, grid)
    start = clock.lap("condition", start)

    starts = grid.delta_t * np.arange(grid.r)
    exact_w = [ordered_exponential(problem.a, t, t + grid.delta_t) for t in starts]
    exact_v = [exact_segment_v(problem, t, t + grid.delta_t) for t in starts]
    w_errors = [float(np.linalg.norm(v - w, 2)) for v, w in zip(system.v_blocks, exact_w)]
    v_errors = [float(np.linalg.norm(v - e)) for v, e in zip(system.rhs_v, exact_v)]
    final = history.final_state
    final_error = float(np.linalg.norm(final - plan.oracle_final))
    d_bw = bures_wasserstein_pure(final, plan.oracle_final)
    start = clock.lap("oracles", start)

    la, lb = problem.lambda_a, problem.lambda_b
    tw, tv = truncation_bound(la, lb, grid.delta_t, order, 1.0)
    dw = discretization_bound_w(la, plan.a_prime_max, grid.delta_t, grid.m)
    dv = discretization_bound_v(la, plan.a_prime_max, lb, plan.b_prime_max, grid.delta_t, grid.m)
    budget = error_budget(epsilon, problem, grid, order, plan.x_max,
                          solver_error=history.residual_norm,
                          derivative_bounds=(plan.a_prime_max, plan.b_prime_max))
    errors = ErrorReport(tw, tv, dw, dv, max(w_errors), max(v_errors), final_error,
                         stability.log_norm_max, stability.stable, budget)
    estimate_ = estimate(problem, plan, epsilon, exact_v)
    ledger = lambda_ledger(la, lb, problem.lambda_x, grid.delta_t, grid.r, order)
    start = clock.lap("estimate", start)

    accurate = d_bw <= epsilon * plan.x_max
    pathological = estimate_.r_factor_unbounded
    if not (accurate and budget["passed"]):
        code = EXIT_BUDGET
    elif pathological:
        code = EXIT_PATHOLOGICAL
    else:
        code = EXIT_OK
    report = {
        "schema": SCHEMA_VERSION,
        "command": "solve",
        "parameters": {
            "epsilon": epsilon, "seed": seed, "r": grid.r, "k": order, "m": grid.m,
            "r_override": r, "k_override": k, "m_override": m,
            "allow_unstable": allow_unstable,
        },
        "problem": spec.to_dict(),
        "grid": grid_dict(grid),
        "x_max": {"value": plan.x_max, "measured": plan.x_max_measured,
                  "safety_factor": X_MAX_SAFETY if plan.x_max_measured else None},
        "derivative_bounds": {"a_prime_max": plan.a_prime_max, "b_prime_max": plan.b_prime_max,
                              "estimated": plan.derivatives_estimated},
        "lambda_validation": lambdas,
        "resources": estimate_.as_dict(),
        "lambda_ledger": ledger.as_list(),
        "errors": errors.as_dict(),
        "stability": dict(stability.__dict__),
        "condition": condition.as_dict(),
        "amplitudes": amplitudes.as_dict(),
        "residual_norm": history.residual_norm,
        "final_state": _complex_list(final),
        "oracle_final_state": _complex_list(plan.oracle_final),
        "d_bw": d_bw,
        "checks": {
            "accuracy": accurate,
            "accuracy_target": epsilon * plan.x_max,
            "budget": budget["passed"],
            "pathological_r_factor": pathological,
        },
        "exit_code": code,
    }
    bounds = _bounds_csv(grid, w_errors, v_errors, tw + dw, tv + dv, d_bw,
                         epsilon * plan.x_max)
    return RunResult(report, code, history.to_csv(grid.delta_t), bounds, clock.laps)


def _bounds_csv(grid, w_errors, v_errors, w_bound, v_bound, d_bw, target) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["quantity", "segment", "bound", "measured", "within"])
    for i, (we, ve) in enumerate(zip(w_errors, v_errors), start=1):
        writer.writerow(["w_error", i, "%.17g" % w_bound, "%.17g" % we, int(we <= w_bound)])
        writer.writerow(["v_error", i, "%.17g" % v_bound, "%.17g" % ve, int(ve <= v_bound)])
    writer.writerow(["final_d_bw", "", "%.17g" % target, "%.17g" % d_bw, int(d_bw <= target)])
    return buffer.getvalue()


def run_estimate(spec: ProblemSpec, epsilon: float, *, r=None, k=None, m=None) -> RunResult:
    problem = spec.to_problem()
    plan = make_plan(problem, epsilon, r=r, k=k, m=m)
    est = estimate(problem, plan, epsilon)
    code = EXIT_PATHOLOGICAL if est.r_factor_unbounded else EXIT_OK
    report = {
        "schema": SCHEMA_VERSION,
        "command": "estimate",
        "parameters": {"epsilon": epsilon, "r_override": r, "k_override": k, "m_override": m},
        "problem": spec.to_dict(),
        "grid": grid_dict(plan.grid),
        "x_max": {"value": plan.x_max, "measured": plan.x_max_measured},
        "derivative_bounds": {"a_prime_max": plan.a_prime_max, "b_prime_max": plan.b_prime_max,
                              "estimated": plan.derivatives_estimated},
        "resources": est.as_dict(),
        "lambda_ledger": lambda_ledger(problem.lambda_a, problem.lambda_b, problem.lambda_x,
                                       plan.grid.delta_t, plan.grid.r, plan.order).as_list(),
        "exit_code": code,
    }
    return RunResult(report, code)


def estimate_table(report: dict) -> str:
    """Human-readable rendering of an estimate report."""
    res = report["resources"]
    rows = [("theorem", res["theorem"]), ("epsilon", res["epsilon"]), ("r", res["r"]),
            ("delta_t", res["delta_t"]), ("R", res["big_r"]), ("K", res["k_order"]),
            ("M", res["m_points"]), ("lambda_A", res["lambda_a"]), ("lambda_b", res["lambda_b"]),
            ("lambda_Ax", res["lambda_ax"]), ("lambda_dyson", res["lambda_dyson"]),
            ("lambda_v", res["lambda_v"]), ("x_max", res["x_max"])]
    if res["theorem"] == 1:
        rows.append(("D", res["d_factor"]))
    if res["r_factor_unbounded"]:
        rows.append(("WARNING", "amplification factor unbounded (cancelling drive)"))
    else:
        rows += [("R_factor", res["r_factor"]), ("calls U_b, U_x", res["calls_ub_ux"]),
                 ("calls U_A", res["calls_ua"]), ("extra gates", res["extra_gates"])]
    rows.append(("kappa bound", res["kappa_bound"]))
    width = max(len(name) for name, _ in rows)
    lines = [f"{name.ljust(width)}  {_fmt(value)}" for name, value in rows]
    lines.append("(costs are order estimates with unit constants)")
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def run_encode(spec: ProblemSpec, *, r=None, k=None, m=None, epsilon: float = 1e-6,
               dense: bool = False) -> dict:
    """Block system document; with ``dense`` also the matrix and its inverse."""
    from .encoding import explicit_inverse, materialize
    from .serialize import to_pairs

    problem = spec.to_problem()
    if r is None or k is None or m is None:
        plan = make_plan(problem, epsilon, r=r, k=k, m=m)
        grid, order = plan.grid, plan.order
    else:
        grid, order = TimeGrid.uniform(problem.horizon, r, m), k
    system = build_block_system(problem, grid, order)
    doc = {"grid": grid_dict(grid), "k": order, "system": system.to_dict()}
    if dense:
        doc["matrix"] = to_pairs(materialize(system))
        doc["inverse"] = to_pairs(explicit_inverse(system))
    return doc
