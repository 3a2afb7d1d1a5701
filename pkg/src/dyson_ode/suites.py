"""Property suites behind ``dyson-ode verify``.

Each suite returns measured-versus-bound rows; a suite passes when every
row does. Bound comparisons carry a 1e-12 allowance for floating-point
rounding, since several bounds are exactly zero or far below machine
precision.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .analysis import (discretization_bound_v, discretization_bound_w, stability_check,
                       truncation_bound)
from .encoding import BlockSystem, condition_report, explicit_inverse, materialize
from .library import BUILTINS, DRIVEN, STABLE, builtin_problem
from .problem import MatrixFunction, TimeGrid, VectorFunction
from .propagator import (brute_force_dyson, discretized_dyson,
                         integrate_linear, taylor_propagator, truncated_dyson_exact)
from .resources import choose_time_step, lambda_values
from .solver import forward_solve, success_amplitudes

ROUNDOFF = 1e-12


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    measured: float
    bound: float
    passed: bool


class CheckList(list):
    @property
    def passed(self) -> bool:
        return all(c.passed for c in self)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["suite", "check", "measured", "bound", "passed"])
        for c in self:
            writer.writerow([c.suite, c.name, "%.17g" % c.measured, "%.17g" % c.bound,
                             int(c.passed)])
        return buffer.getvalue()

    def summary(self) -> str:
        failed = [c for c in self if not c.passed]
        lines = [f"{len(self) - len(failed)}/{len(self)} checks passed"]
        lines += [f"FAIL {c.suite}/{c.name}: measured {c.measured:.3e} > {c.bound:.3e}"
                  for c in failed]
        return "\n".join(lines)


def library_grid(problem, m: int = 1) -> TimeGrid:
    r = choose_time_step(problem.lambda_a, problem.horizon)[1] if problem.lambda_a > 0 else 1
    return TimeGrid.uniform(problem.horizon, r, m)


def random_polynomial_problem(rng, n: int, scale: float = 0.5):
    a = MatrixFunction.polynomial(scale * rng.normal(size=(n, n)), scale * rng.normal(size=(n, n)),
                                  mode="linear")
    b = VectorFunction.polynomial(rng.normal(size=n), rng.normal(size=n), mode="linear")
    return a, b


def oracle_suite(seed: int = 0, instances: int = 50) -> CheckList:
    rng = np.random.default_rng(seed)
    out = CheckList()
    for i in range(instances):
        n, k, m = int(rng.integers(1, 4)), int(rng.integers(0, 5)), int(rng.integers(1, 9))
        a, b = random_polynomial_problem(rng, n)
        dt = float(rng.uniform(0.1, 1.0))
        fast = discretized_dyson(a, b, 0.3, dt, m, k)
        slow = brute_force_dyson(a, b, 0.3, dt, m, k)
        diff = max(np.abs(fast.w - slow.w).max(), np.abs(fast.v - slow.v).max())
        out.append(Check("oracle", f"brute-force-{i}", diff, ROUNDOFF, diff <= ROUNDOFF))
    for name in ("decay1d", "oscillator", "heat8", "zero"):
        problem = builtin_problem(name)
        a0, b0 = problem.a(0.0), problem.b(0.0)
        dt = library_grid(problem).delta_t
        for k in (1, 4, 8):
            exact = taylor_propagator(a0, b0, dt, k)
            for m in (1, 3, 8, 64):
                p = discretized_dyson(problem.a, problem.b, 0.0, dt, m, k)
                diff = max(np.abs(p.w - exact.w).max(), np.abs(p.v - exact.v).max())
                out.append(Check("oracle", f"taylor-{name}-K{k}-M{m}", diff, ROUNDOFF,
                                 diff <= ROUNDOFF))
    return out


def inverse_suite(seed: int = 0, instances: int = 50) -> CheckList:
    rng = np.random.default_rng(seed)
    out = CheckList()
    for i in range(instances):
        n = int(rng.integers(1, 5))
        r = int(rng.integers(1, max(2, 512 // (2 * n))))
        r = min(r, (512 // n - 1) // 2)
        v = rng.normal(size=(r, n, n)) / math.sqrt(n)
        system = BlockSystem.from_blocks(v, rng.normal(size=n), rng.normal(size=(r, n)))
        residual = np.abs(materialize(system) @ explicit_inverse(system)
                          - np.eye(system.dimension)).max()
        out.append(Check("inverse", f"random-{i}", residual, 1e-10, residual <= 1e-10))
    return out


def _exact_w(problem, t0, dt):
    if problem.a.is_constant:
        import scipy.linalg
        return scipy.linalg.expm(problem.a(t0) * dt)
    w, _ = integrate_linear(problem.a, None, np.eye(problem.dimension), t0, t0 + dt, 1e-13)
    return w


def truncation_checks(names=STABLE, orders=range(1, 9), m: int = 64) -> CheckList:
    out = CheckList()
    for name in names:
        problem = builtin_problem(name)
        grid = library_grid(problem, m)
        da, _, _ = problem.derivative_bounds()
        disc = discretization_bound_w(problem.lambda_a, da, grid.delta_t, m)
        for index in range(1, grid.r + 1):
            t0 = grid.segment_start(index)
            exact = _exact_w(problem, t0, grid.delta_t)
            for k in orders:
                w = discretized_dyson(problem.a, problem.b, t0, grid.delta_t, m, k).w
                err = float(np.linalg.norm(w - exact, 2))
                bound = truncation_bound(problem.lambda_a, 0.0, grid.delta_t, k, 1.0)[0] + disc
                out.append(Check("bounds", f"truncation-{name}-seg{index}-K{k}", err, bound,
                                 err <= bound + ROUNDOFF))
    return out


TIME_DEPENDENT = ("driven-oscillator", "modulated", "drive-cancel")


def discretization_errors(name: str, order: int = 6, ms=(8, 16, 32, 64)) -> dict:
    """Per segment: measured W and v discretization errors and bounds for each M."""
    problem = builtin_problem(name)
    grid = library_grid(problem)
    da, db, _ = problem.derivative_bounds()
    la, lb = problem.lambda_a, problem.lambda_b
    rows = []
    for index in range(1, grid.r + 1):
        t0 = grid.segment_start(index)
        limit = truncated_dyson_exact(problem.a, problem.b, t0, grid.delta_t, order)
        for m in ms:
            p = discretized_dyson(problem.a, problem.b, t0, grid.delta_t, m, order)
            rows.append({
                "segment": index, "m": m,
                "w_error": float(np.linalg.norm(p.w - limit.w, 2)),
                "v_error": float(np.linalg.norm(p.v - limit.v)),
                "w_bound": discretization_bound_w(la, da, grid.delta_t, m),
                "v_bound": discretization_bound_v(la, da, lb, db, grid.delta_t, m),
            })
    return {"problem": name, "rows": rows}


def halving_ratios(rows, key: str, floor: float = 1e-11) -> list:
    """Ratios e(M)/e(2M) for M >= 16, skipping errors at the oracle's noise floor."""
    by_segment = {}
    for row in rows:
        by_segment.setdefault(row["segment"], {})[row["m"]] = row[key]
    ratios = []
    for segment, errors in by_segment.items():
        for m in sorted(errors):
            if m >= 16 and 2 * m in errors and errors[2 * m] > floor:
                ratios.append((segment, m, errors[m] / errors[2 * m]))
    return ratios


def discretization_checks(names=TIME_DEPENDENT) -> CheckList:
    out = CheckList()
    for name in names:
        data = discretization_errors(name)
        for row in data["rows"]:
            tag = f"{name}-seg{row['segment']}-M{row['m']}"
            for q in ("w", "v"):
                err, bound = row[f"{q}_error"], row[f"{q}_bound"]
                out.append(Check("bounds", f"discretization-{q}-{tag}", err, bound,
                                 err <= bound + ROUNDOFF))
    return out


# drive-cancel samples whole drive periods per segment, so its first-order
# sampling error cancels and it converges faster than 1/M; it is excluded
SMOOTH = ("driven-oscillator", "modulated")


def mscaling_suite(names=SMOOTH) -> CheckList:
    out = CheckList()
    for name in names:
        rows = discretization_errors(name)["rows"]
        for q in ("w", "v"):
            for segment, m, ratio in halving_ratios(rows, f"{q}_error"):
                ok = 1.6 <= ratio <= 2.4
                out.append(Check("mscaling", f"{name}-{q}-seg{segment}-M{m}", ratio, 2.4, ok))
    return out


def condition_checks(names=STABLE, rs=(2, 4, 8), order: int = 16, m: int = 64,
                     c: float = 8.0) -> CheckList:
    from .encoding import build_block_system, max_sub_block_norm

    out = CheckList()
    for name in names:
        problem = builtin_problem(name)
        for r in rs:
            system = build_block_system(problem, TimeGrid.uniform(problem.horizon, r, m), order)
            report = condition_report(system)
            out.append(Check("bounds", f"kappa-{name}-r{r}", report.kappa, c * report.big_r,
                             report.kappa <= c * report.big_r))
            bound = 1.0 + max(max_sub_block_norm(system), 1.0)
            out.append(Check("bounds", f"norm-{name}-r{r}", report.norm_a, bound,
                             report.norm_a <= bound + 1e-9))
    return out


def lambda_checks(names=BUILTINS, orders=range(0, 17)) -> CheckList:
    out = CheckList()
    for name in names:
        problem = builtin_problem(name)
        grid = library_grid(problem)
        for k in orders:
            lam = lambda_values(problem.lambda_a, problem.lambda_b, problem.lambda_x,
                                grid.delta_t, grid.r, k)
            out.append(Check("bounds", f"lambda-dyson-{name}-K{k}", lam["lambda_dyson"], math.e,
                             lam["lambda_dyson"] < math.e))
            if problem.lambda_b > 0:
                cap = (math.e - 1) * problem.lambda_b * grid.delta_t
                out.append(Check("bounds", f"lambda-v-{name}-K{k}", lam["lambda_v"], cap,
                                 lam["lambda_v"] < cap))
    return out


def amplitude_checks(names=DRIVEN, order: int = 12, m: int = 64) -> CheckList:
    from .encoding import build_block_system

    out = CheckList()
    for name in names:
        problem = builtin_problem(name)
        grid = library_grid(problem, m)
        system = build_block_system(problem, grid, order)
        amps = success_amplitudes(system, forward_solve(system), problem, grid)
        out.append(Check("bounds", f"amplitude-{name}", amps.state_prep_lower_bound,
                         amps.state_prep_amplitude,
                         amps.state_prep_amplitude >= amps.state_prep_lower_bound))
    return out


def bounds_suite(seed: int = 0) -> CheckList:
    out = CheckList()
    for part in (truncation_checks(), discretization_checks(), condition_checks(),
                 lambda_checks(), amplitude_checks()):
        out.extend(part)
    return out


def stability_suite(seed: int = 0) -> CheckList:
    """Classify every builtin; only a stable problem with an expanding propagator fails."""
    rng = np.random.default_rng(seed)
    out = CheckList()
    for name in BUILTINS:
        problem = builtin_problem(name)
        result = stability_check(problem.a, library_grid(problem, 8), rng)
        ok = not result.stable or bool(result.propagator_ok)
        measured = result.propagator_norm_max if result.stable else result.log_norm_max
        out.append(Check("stability", f"{name}-{'stable' if result.stable else 'unstable'}",
                         float(measured), 1.0 + 1e-8 if result.stable else math.inf, ok))
    return out


SUITES = {
    "oracle": oracle_suite,
    "inverse": inverse_suite,
    "bounds": bounds_suite,
    "mscaling": lambda seed=0: mscaling_suite(),
    "stability": stability_suite,
}
SUITES["all"] = None


def run_suites(name: str, seed: int = 0) -> CheckList:
    names = [n for n in SUITES if n != "all"] if name == "all" else [name]
    out = CheckList()
    for n in names:
        out.extend(SUITES[n](seed=seed))
    return out
