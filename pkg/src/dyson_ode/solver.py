"""Exact classical solve of the block system and the success amplitudes it implies."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .encoding import MAX_DENSE, BlockSystem, materialize
from .problem import OdeProblem, TimeGrid
from .propagator import taylor_propagator


@dataclass(frozen=True, eq=False)
class SolutionHistory:
    states: np.ndarray
    residual_norm: float
    rhs_norm: float
    r: int

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, delta_t: float) -> str:
        """One row per block: index, time, padding flag, re/im per component, norm."""
        n = self.states.shape[1]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        header = ["block", "time", "padding"]
        for i in range(n):
            header += [f"re_{i}", f"im_{i}"]
        writer.writerow(header + ["norm"])
        for m, x in enumerate(self.states):
            time = min(m, self.r) * delta_t
            row = [m, "%.17g" % time, int(m > self.r)]
            for z in x:
                z = complex(z)
                row += ["%.17g" % z.real, "%.17g" % z.imag]
            writer.writerow(row + ["%.17g" % np.linalg.norm(x)])
        return buffer.getvalue()


def forward_solve(system: BlockSystem) -> SolutionHistory:
    """Block forward substitution; padding rows copy the final state bit for bit."""
    rhs = system.rhs_blocks()
    states = np.zeros_like(rhs)
    states[0] = system.rhs_x0
    for m in range(1, system.r + 1):
        states[m] = system.v_blocks[m - 1] @ states[m - 1] + rhs[m]
    states[system.r + 1:] = states[system.r]
    flat = states.ravel()
    if system.dimension <= MAX_DENSE:
        residual = materialize(system) @ flat - rhs.ravel()
    else:
        residual = system.matvec(flat) - rhs.ravel()
    return SolutionHistory(states, float(np.linalg.norm(residual)),
                           float(np.linalg.norm(rhs)), system.r)


@dataclass(frozen=True)
class AmplitudeReport:
    state_prep_amplitude: float
    state_prep_aa_steps: float
    state_prep_lower_bound: float
    final_time_amplitude: float
    final_time_aa_steps: float
    r_factor: float

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["r_factor_label"] = "product of both amplification step counts"
        return out


def success_amplitudes(system: BlockSystem, history: SolutionHistory, problem: OdeProblem,
                       grid: TimeGrid) -> AmplitudeReport:
    """State-preparation and final-time success amplitudes with their AA step counts.

    The state-preparation amplitude compares the prepared right-hand side
    with its worst-case normalization ``lambda_x^2 + (e-1)^2 r lambda_b^2 dt^2``;
    the final-time amplitude is the weight of the padding blocks in the
    computed history.
    """
    v_norms = np.linalg.norm(system.rhs_v, axis=1)
    lx2 = problem.lambda_x ** 2
    denominator = lx2 + (math.e - 1) ** 2 * grid.r * (problem.lambda_b * grid.delta_t) ** 2
    if denominator == 0:
        raise ValueError("degenerate problem: zero initial state and zero drive")
    prep = math.sqrt((lx2 + float(np.sum(v_norms ** 2))) / denominator)
    lower = 0.0
    if problem.lambda_b > 0:
        lower = float(np.min(v_norms)) / ((math.e - 1) * problem.lambda_b * grid.delta_t)
    norms2 = np.linalg.norm(history.states, axis=1) ** 2
    total = float(np.sum(norms2))
    if total == 0:
        raise ValueError("degenerate problem: the solution history vanishes")
    final = math.sqrt(float(np.sum(norms2[grid.r + 1:])) / total)
    if final == 0:
        raise ValueError("degenerate problem: the final state vanishes")
    return AmplitudeReport(prep, 1 / prep, lower, final, 1 / final, (1 / prep) * (1 / final))


def time_independent_v_bound(problem: OdeProblem, delta_t: float, order: int = 20) -> float:
    """``(3 - e) ||b|| dt``, after checking the Taylor ``v`` actually reaches it."""
    if not problem.time_independent:
        raise ValueError("problem is not time independent")
    a = problem.a(0.0)
    b = problem.b(0.0)
    if np.linalg.norm(a, 2) * delta_t > 1 + 1e-12:
        raise ValueError("needs ||A|| dt <= 1")
    bound = (3 - math.e) * float(np.linalg.norm(b)) * delta_t
    v = taylor_propagator(a, b, delta_t, order).v
    if float(np.linalg.norm(v)) < bound:
        raise AssertionError(f"||v|| = {np.linalg.norm(v):.6g} below (3 - e)||b|| dt = {bound:.6g}")
    return bound
