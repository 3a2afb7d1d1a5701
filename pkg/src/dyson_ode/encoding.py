"""Block-bidiagonal linear system for the whole time history.

Block rows are indexed 0..R with R = 2r. Row 0 pins the initial condition,
rows 1..r advance one segment with ``-V_m`` on the subdiagonal, and rows
r+1..R copy the final state forward with ``-I``::

    [ I                ] [x0 ]   [x0 ]
    [-V1  I            ] [x1 ]   [v1 ]
    [    -V2  I        ] [x2 ] = [v2 ]
    [        -I   I    ] [x2 ]   [0  ]
    [            -I   I] [x2 ]   [0  ]
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, svds

from .problem import OdeProblem, TimeGrid
from .propagator import segment_propagator
from .serialize import SCHEMA_VERSION, from_pairs, to_pairs

# Largest materialized dimension N(R+1) for dense operations.
MAX_DENSE = 4096


def worker_count() -> int:
    """Thread cap from ``DYSON_ODE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DYSON_ODE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class BlockSystem:
    n: int
    r: int
    big_r: int
    v_blocks: np.ndarray
    rhs_x0: np.ndarray
    rhs_v: np.ndarray
    lambda_calc: dict = field(default_factory=dict)

    @classmethod
    def from_blocks(cls, v_blocks, rhs_x0, rhs_v=None, lambda_calc=None) -> BlockSystem:
        v_blocks = np.asarray(v_blocks)
        if v_blocks.ndim != 3 or v_blocks.shape[1] != v_blocks.shape[2]:
            raise ValueError("v_blocks must have shape (r, N, N)")
        r, n, _ = v_blocks.shape
        if r < 1:
            raise ValueError("need at least one evolution step (r >= 1)")
        rhs_x0 = np.asarray(rhs_x0)
        rhs_v = np.zeros((r, n)) if rhs_v is None else np.asarray(rhs_v)
        if rhs_x0.shape != (n,) or rhs_v.shape != (r, n):
            raise ValueError("right-hand side blocks do not match the block size")
        return cls(n, r, 2 * r, v_blocks, rhs_x0, rhs_v, dict(lambda_calc or {}))

    @property
    def dimension(self) -> int:
        return self.n * (self.big_r + 1)

    @property
    def dtype(self):
        return np.result_type(self.v_blocks, self.rhs_x0, self.rhs_v)

    def sub_block(self, row: int) -> np.ndarray:
        """The matrix S_row with block (row, row-1) equal to -S_row, row in 1..R."""
        return self.v_blocks[row - 1] if row <= self.r else np.eye(self.n)

    def rhs_blocks(self) -> np.ndarray:
        out = np.zeros((self.big_r + 1, self.n), dtype=self.dtype)
        out[0] = self.rhs_x0
        out[1:self.r + 1] = self.rhs_v
        return out

    # block-level operator actions, used above the dense cap
    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = x.reshape(self.big_r + 1, self.n)
        y = x.astype(np.result_type(x, self.dtype))
        for m in range(1, self.big_r + 1):
            y[m] -= self.sub_block(m) @ x[m - 1]
        return y.ravel()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        y = y.reshape(self.big_r + 1, self.n)
        x = y.astype(np.result_type(y, self.dtype))
        for m in range(1, self.big_r + 1):
            x[m - 1] -= self.sub_block(m).conj().T @ y[m]
        return x.ravel()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = rhs.reshape(self.big_r + 1, self.n)
        x = rhs.astype(np.result_type(rhs, self.dtype))
        for m in range(1, self.big_r + 1):
            x[m] = x[m] + self.sub_block(m) @ x[m - 1]
        return x.ravel()

    def rsolve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = rhs.reshape(self.big_r + 1, self.n)
        z = rhs.astype(np.result_type(rhs, self.dtype))
        for m in range(self.big_r, 0, -1):
            z[m - 1] = z[m - 1] + self.sub_block(m).conj().T @ z[m]
        return z.ravel()

    def to_dict(self) -> dict:
        """Block-major document; every matrix is row-major ``[re, im]`` pairs."""
        return {
            "schema": SCHEMA_VERSION,
            "n": self.n,
            "r": self.r,
            "big_r": self.big_r,
            "v_blocks": [to_pairs(v) for v in self.v_blocks],
            "rhs_x0": to_pairs(self.rhs_x0),
            "rhs_v": [to_pairs(v) for v in self.rhs_v],
            "lambda_calc": dict(self.lambda_calc),
        }

    @classmethod
    def from_dict(cls, data: dict) -> BlockSystem:
        n, r = int(data["n"]), int(data["r"])
        v_blocks = np.array([from_pairs(v) for v in data["v_blocks"]]).reshape(r, n, n)
        rhs_v = np.array([from_pairs(v) for v in data["rhs_v"]]).reshape(r, n)
        system = cls.from_blocks(v_blocks, from_pairs(data["rhs_x0"]), rhs_v,
                                 data.get("lambda_calc"))
        if int(data.get("big_r", system.big_r)) != system.big_r:
            raise ValueError("only R = 2r systems are supported")
        return system


def build_block_system(problem: OdeProblem, grid: TimeGrid, order: int, *,
                       threads: int | None = None) -> BlockSystem:
    """Assemble V_m = W~_K and v_m = v~_K for every segment of ``grid``."""
    from .resources import lambda_values

    if order < 1:
        raise ValueError("order K must be at least 1")
    if grid.r < 1:
        raise ValueError("r must be positive")
    if abs(grid.horizon - problem.horizon) > 1e-12 * problem.horizon:
        raise ValueError("grid does not cover the problem horizon")
    threads = threads or worker_count()

    def segment(index):
        return segment_propagator(problem, grid, index, order)

    indices = range(1, grid.r + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            props = list(pool.map(segment, indices))
    else:
        props = [segment(i) for i in indices]
    lam = lambda_values(problem.lambda_a, problem.lambda_b, problem.lambda_x,
                        grid.delta_t, grid.r, order)
    return BlockSystem.from_blocks(np.array([p.w for p in props]), problem.x0,
                                   np.array([p.v for p in props]), lam)


def _check_cap(system: BlockSystem) -> None:
    if system.dimension > MAX_DENSE:
        raise ValueError(f"dense size {system.dimension} exceeds cap {MAX_DENSE}")


def materialize(system: BlockSystem) -> np.ndarray:
    """Dense N(R+1) x N(R+1) matrix with the block layout above."""
    _check_cap(system)
    n = system.n
    out = np.eye(system.dimension, dtype=system.dtype)
    for m in range(1, system.big_r + 1):
        out[m * n:(m + 1) * n, (m - 1) * n:m * n] = -system.sub_block(m)
    return out


def inverse_block(system: BlockSystem, row: int, col: int) -> np.ndarray:
    """Block (row, col) of the inverse: V_min(row,r) ... V_(col+1), or I / 0."""
    n = system.n
    if row < col:
        return np.zeros((n, n), dtype=system.dtype)
    out = np.eye(n, dtype=system.dtype)
    for ell in range(col + 1, min(row, system.r) + 1):
        out = system.v_blocks[ell - 1] @ out
    return out


def explicit_inverse(system: BlockSystem) -> np.ndarray:
    """Closed-form inverse; lower block-triangular, saturating after row r."""
    _check_cap(system)
    n, big_r = system.n, system.big_r
    out = np.zeros((system.dimension, system.dimension), dtype=system.dtype)
    for col in range(big_r + 1):
        block = np.eye(n, dtype=system.dtype)
        for row in range(col, big_r + 1):
            if row > col and row <= system.r:
                block = system.v_blocks[row - 1] @ block
            out[row * n:(row + 1) * n, col * n:(col + 1) * n] = block
    return out


@dataclass(frozen=True)
class ConditionReport:
    norm_a: float
    norm_a_inv: float
    kappa: float
    bound_norm_a: float
    bound_norm_a_inv: float
    kappa_bound: float
    sum_diagonal_bound_norm_a_inv: float
    max_inverse_block_norm: float
    big_r: int
    method: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _inverse_block_norms(system: BlockSystem) -> tuple[float, float]:
    """Max block norm of the inverse, and the sum over block diagonals of the max norm."""
    r, big_r = system.r, system.big_r
    diag_max = np.zeros(big_r + 1)
    diag_max[:r + 1] = 1.0             # identity blocks at offsets 0..r
    for col in range(r):
        block = np.eye(system.n, dtype=system.dtype)
        norms = np.empty(r - col)
        for i, row in enumerate(range(col + 1, r + 1)):
            block = system.v_blocks[row - 1] @ block
            norms[i] = np.linalg.norm(block, 2)
        offsets = np.arange(1, r - col + 1)
        diag_max[offsets] = np.maximum(diag_max[offsets], norms)
        # padding rows r+1..R repeat the row-r block at larger offsets
        tail = slice(r - col + 1, big_r - col + 1)
        diag_max[tail] = np.maximum(diag_max[tail], norms[-1])
    return float(diag_max.max()), float(diag_max.sum())


def max_sub_block_norm(system: BlockSystem) -> float:
    return max(float(np.linalg.norm(v, 2)) for v in system.v_blocks)


def _krylov_norm(apply, adjoint, size: int, dtype, tol: float = 1e-8) -> float:
    """Largest singular value of an implicit operator by Lanczos bidiagonalization."""
    op = LinearOperator((size, size), matvec=apply, rmatvec=adjoint, dtype=dtype)
    try:
        value = svds(op, k=1, tol=tol, maxiter=20000, return_singular_vectors=False,
                     random_state=12345)
    except ArpackNoConvergence as exc:
        raise RuntimeError("singular value iteration did not converge") from exc
    return float(value[0])


def condition_report(system: BlockSystem) -> ConditionReport:
    """Exact norms (SVD) under the dense cap, power iteration above it, plus bounds."""
    if system.dimension <= MAX_DENSE:
        norm_a = float(np.linalg.norm(materialize(system), 2))
        norm_a_inv = float(np.linalg.norm(explicit_inverse(system), 2))
        method = "svd"
    else:
        dtype = np.result_type(system.dtype, float)
        norm_a = _krylov_norm(system.matvec, system.rmatvec, system.dimension, dtype)
        norm_a_inv = _krylov_norm(system.solve, system.rsolve, system.dimension, dtype)
        method = "lanczos"
    # the shifted block-diagonal factor holds V_1..V_r and then identities
    bound_norm_a = 1.0 + max(max_sub_block_norm(system), 1.0)
    max_block, diag_sum = _inverse_block_norms(system)
    bound_norm_a_inv = (system.big_r + 1) * max_block
    return ConditionReport(
        norm_a=norm_a,
        norm_a_inv=norm_a_inv,
        kappa=norm_a * norm_a_inv,
        bound_norm_a=bound_norm_a,
        bound_norm_a_inv=bound_norm_a_inv,
        kappa_bound=bound_norm_a * bound_norm_a_inv,
        sum_diagonal_bound_norm_a_inv=diag_sum,
        max_inverse_block_norm=max_block,
        big_r=system.big_r,
        method=method,
    )
