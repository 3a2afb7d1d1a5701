"""Truncated, time-discretized Dyson-series propagators and their oracles.

The production path is :func:`discretized_dyson`. It works on the augmented
matrix ``[[A(t), b(t)], [0, 0]]`` whose k-fold products carry
``A(t_1)...A(t_{k-1}) b(t_k)`` in the top-right column, so the propagator
``W~_K`` and the particular-solution vector ``v~_K`` fall out of one degree-
truncated ordered product of per-point exponentials.

Everything else in this module is an independent check on that path:
explicit tuple enumeration, constant-coefficient Taylor sums, a fine
exponential-midpoint product for the exact time-ordered exponential, and a
step-doubling RK4 integrator for the ODE itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .problem import MatrixFunction, OdeProblem, TimeGrid, VectorFunction

# Element budget for one vectorized chunk of series factors.
_CHUNK_ELEMENTS = 1 << 21


class ConvergenceError(RuntimeError):
    """An oracle failed to reach its tolerance within its refinement cap."""


@dataclass(frozen=True, eq=False)
class TruncatedPropagator:
    w: np.ndarray
    v: np.ndarray
    order: int
    segment_index: int = 1


def augmented(a_values: np.ndarray, b_values: np.ndarray) -> np.ndarray:
    """Stack ``A`` and ``b`` samples into ``[[A, b], [0, 0]]`` of size N+1."""
    count, n = b_values.shape
    dtype = np.result_type(a_values, b_values)
    out = np.zeros((count, n + 1, n + 1), dtype=dtype)
    out[:, :n, :n] = a_values
    out[:, :n, n] = b_values
    return out


def _series_mul(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Degree-truncated product of matrix power series, batched over axis 0.

    Shapes are ``(P, K+1, n, n)``; ``out[d] = sum_i left[i] @ right[d-i]``.
    """
    order1 = left.shape[1]
    out = left[:, :1] @ right
    for i in range(1, order1):
        out[:, i:] += left[:, i:i + 1] @ right[:, :order1 - i]
    return out


def _exp_series(x: np.ndarray, order: int) -> np.ndarray:
    """Coefficients ``x^i / i!`` for i = 0..order, batched over axis 0."""
    count, n, _ = x.shape
    out = np.empty((count, order + 1, n, n), dtype=x.dtype)
    out[:, 0] = np.eye(n)
    for i in range(1, order + 1):
        out[:, i] = x @ out[:, i - 1] / i
    return out


def _reduce_ordered(factors: np.ndarray, combine) -> np.ndarray:
    """Fold ``factors`` (earliest first) into ``f[-1] * ... * f[0]`` pairwise."""
    while len(factors) > 1:
        paired = combine(factors[1::2][: len(factors) // 2], factors[0::2][: len(factors) // 2])
        if len(factors) % 2:
            paired = np.concatenate([paired, factors[-1:]])
        factors = paired
    return factors[0]


def truncated_ordered_product(x_values: np.ndarray, order: int) -> np.ndarray:
    """Degree-``order`` truncation of ``prod_{j=M-1..0} exp(x_j)``.

    ``x_values`` holds the already scaled generators ``x_j = dt * A~(t_j)``,
    earliest first. Returns the series coefficients, shape ``(K+1, n, n)``.
    """
    m, n, _ = x_values.shape
    chunk = max(1, _CHUNK_ELEMENTS // ((order + 1) * n * n))
    total = None
    for start in range(0, m, chunk):
        block = _reduce_ordered(_exp_series(x_values[start:start + chunk], order), _series_mul)
        total = block if total is None else _series_mul(block[None], total[None])[0]
    return total


def sample_times(t0: float, delta_t: float, m: int, midpoint: bool = False) -> np.ndarray:
    offset = 0.5 if midpoint else 0.0
    return t0 + (np.arange(m) + offset) * (delta_t / m)


def discretized_dyson(a: MatrixFunction, b: VectorFunction, t0: float, delta_t: float,
                      m: int, order: int, *, midpoint: bool = False, segment_index: int = 1,
                      method: str = "auto") -> TruncatedPropagator:
    """W~_K and v~_K over ``[t0, t0 + delta_t]`` with ``m`` quadrature points.

    Parameters
    ----------
    a, b : MatrixFunction, VectorFunction
        Coefficient matrix and driving term.
    t0, delta_t : float
        Segment start and width.
    m : int
        Number of sample points; ``dt = delta_t / m`` and ``t_j = t0 + j dt``.
    order : int
        Truncation order K (total degree in ``dt``).
    midpoint : bool
        Sample at ``t0 + (j + 1/2) dt`` instead of left endpoints.
    method : {"auto", "product", "counting"}
        ``"product"`` always runs the augmented truncated product.
        ``"counting"`` requires constant A; it contracts the samples of b
        against the exact tuple counts, which is what the product reduces
        to when the A factors commute. ``"auto"`` picks counting when valid.
    """
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: A is {a.dimension}, b is {b.dimension}")
    if order < 0:
        raise ValueError("order K must be nonnegative")
    if m < 1:
        raise ValueError("number of points M must be positive")
    if method not in ("auto", "product", "counting"):
        raise ValueError(f"unknown method {method!r}")
    if method == "counting" and not a.is_constant:
        raise ValueError("counting method needs a time-independent A")

    if method != "product" and a.is_constant:
        a_const = a(t0)
        if b.is_constant:
            w, v = _taylor_sums(a_const, b(t0), delta_t, order)
        else:
            times = sample_times(t0, delta_t, m, midpoint)
            w, _ = _taylor_sums(a_const, np.zeros(a.dimension), delta_t, order)
            v = _counting_v(a_const, b.many(times), delta_t, m, order)
        return TruncatedPropagator(w, v, order, segment_index)

    times = sample_times(t0, delta_t, m, midpoint)
    x_values = augmented(a.many(times), b.many(times)) * (delta_t / m)
    series = truncated_ordered_product(x_values, order)
    total = series.sum(axis=0)
    n = a.dimension
    return TruncatedPropagator(total[:n, :n].copy(), total[:n, n].copy(), order, segment_index)


def _counting_v(a_const: np.ndarray, b_values: np.ndarray, delta_t: float, m: int,
                order: int) -> np.ndarray:
    # dt^k * #{k-tuples with minimum index j} = s_j^k - (s_j - dt)^k, s_j = (M - j) dt
    dt = delta_t / m
    s = (m - np.arange(m)) * dt
    with np.errstate(divide="ignore"):
        ratio = np.log1p(-np.minimum(dt / s, 1.0))
    n = a_const.shape[0]
    dtype = np.result_type(a_const, b_values)
    if order < 1:
        return np.zeros(n, dtype=dtype)
    coeffs = np.empty((order, m))
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(1, order + 1):
            c = -np.expm1(k * ratio)
            c[~np.isfinite(ratio)] = 1.0
            coeffs[k - 1] = s ** k * c / math.factorial(k)
    sums = coeffs @ b_values
    acc = sums[-1].astype(dtype)
    for k in range(order - 2, -1, -1):
        acc = a_const @ acc + sums[k]
    return acc


def brute_force_dyson(a: MatrixFunction, b: VectorFunction, t0: float, delta_t: float,
                      m: int, order: int) -> TruncatedPropagator:
    """Enumerate every index tuple of the discretized Dyson sums.

    Each k-tuple in ``range(m)**k`` is sorted so the latest time sits on the
    left, multiplied out, and weighted ``dt**k / k!``; b always takes the
    earliest time. Cost is ``m**order`` products, so limits are enforced.
    """
    if order > 4 or m > 8:
        raise ValueError("brute force limited to K <= 4 and M <= 8")
    if order < 0 or m < 1:
        raise ValueError("order must be >= 0 and m >= 1")
    n = a.dimension
    dt = delta_t / m
    times = sample_times(t0, delta_t, m)
    a_vals = [a(t) for t in times]
    b_vals = [b(t) for t in times]
    dtype = np.result_type(a_vals[0], b_vals[0])
    w = np.eye(n, dtype=dtype)
    v = np.zeros(n, dtype=dtype)
    for k in range(1, order + 1):
        weight = dt ** k / math.factorial(k)
        for idx in itertools.product(range(m), repeat=k):
            ordered = sorted(idx, reverse=True)
            prod = np.eye(n, dtype=dtype)
            for j in ordered[:-1]:
                prod = prod @ a_vals[j]
            w = w + weight * (prod @ a_vals[ordered[-1]])
            v = v + weight * (prod @ b_vals[ordered[-1]])
    return TruncatedPropagator(w, v, order)


def _taylor_sums(a_const, b_const, delta_t, order):
    a_const = np.asarray(a_const)
    b_const = np.asarray(b_const)
    n = a_const.shape[0]
    dtype = np.result_type(a_const, b_const, float)
    x = a_const * delta_t
    term = np.eye(n, dtype=dtype)
    w = term.copy()
    for k in range(1, order + 1):
        term = x @ term / k
        w = w + term
    v = np.zeros(n, dtype=dtype)
    if order >= 1:
        vterm = b_const * delta_t
        v = v + vterm
        for k in range(2, order + 1):
            vterm = x @ vterm / k
            v = v + vterm
    return w, v


def taylor_propagator(a_const, b_const, delta_t: float, order: int) -> TruncatedPropagator:
    """Partial sums ``sum_k (A dt)^k / k!`` and ``sum_{k>=1} A^{k-1} dt^k / k! b``."""
    if order < 0 or not delta_t > 0:
        raise ValueError("need order >= 0 and delta_t > 0")
    a_const, b_const = np.asarray(a_const), np.asarray(b_const)
    if not (np.all(np.isfinite(a_const)) and np.all(np.isfinite(b_const))):
        raise ValueError("non-finite input")
    w, v = _taylor_sums(a_const, b_const, delta_t, order)
    return TruncatedPropagator(w, v, order)


def segment_propagator(problem: OdeProblem, grid: TimeGrid, index: int, order: int,
                       **kwargs) -> TruncatedPropagator:
    """:func:`discretized_dyson` on segment ``index`` (1-based) of ``grid``."""
    return discretized_dyson(problem.a, problem.b, grid.segment_start(index), grid.delta_t,
                             grid.m, order, segment_index=index, **kwargs)


# --- exact oracles ---------------------------------------------------------

def _midpoint_product(a: MatrixFunction, t0: float, t1: float, steps: int) -> np.ndarray:
    h = (t1 - t0) / steps
    chunk = max(1, _CHUNK_ELEMENTS // (a.dimension ** 2))
    total = None
    for start in range(0, steps, chunk):
        mids = t0 + (np.arange(start, min(steps, start + chunk)) + 0.5) * h
        block = _reduce_ordered(scipy.linalg.expm(h * a.many(mids)), np.matmul)
        total = block if total is None else block @ total
    return total


def ordered_exponential(a: MatrixFunction, t0: float, t1: float,
                        fine_steps: Optional[int] = None, tol: float = 1e-10,
                        max_steps: int = 1 << 22) -> np.ndarray:
    """Time-ordered exponential W(t1, t0) as a fine product of midpoint exponentials.

    With ``fine_steps`` given the product is returned directly; otherwise the
    step count doubles from 16 until successive products differ by less than
    ``tol`` (relative to max(1, ||W||)) in spectral norm.
    """
    if fine_steps is not None:
        return _midpoint_product(a, t0, t1, fine_steps)
    steps = 16
    previous = _midpoint_product(a, t0, t1, steps)
    while steps < max_steps:
        steps *= 2
        current = _midpoint_product(a, t0, t1, steps)
        if np.linalg.norm(current - previous, 2) < tol * max(1.0, np.linalg.norm(current, 2)):
            return current
        previous = current
    raise ConvergenceError(f"ordered exponential not converged at {steps} steps")


def _rk4(a_many, f_many, x0: np.ndarray, t0: float, t1: float, steps: int):
    """Classical RK4 for x' = A(t) x + f(t); returns final state and max norm along the path."""
    h = (t1 - t0) / steps
    x = np.array(x0, dtype=complex if np.iscomplexobj(x0) else float)
    peak = float(np.linalg.norm(x))
    chunk = 4096
    for start in range(0, steps, chunk):
        stop = min(steps, start + chunk)
        ts = t0 + np.arange(2 * start, 2 * stop + 1) * (h / 2)
        av = a_many(ts)
        fv = f_many(ts) if f_many is not None else None
        if np.iscomplexobj(av) or (fv is not None and np.iscomplexobj(fv)):
            x = x.astype(complex)
        for i in range(stop - start):
            a0, ah, a1 = av[2 * i], av[2 * i + 1], av[2 * i + 2]
            if fv is None:
                f0 = fh = f1 = 0.0
            else:
                f0, fh, f1 = fv[2 * i], fv[2 * i + 1], fv[2 * i + 2]
            k1 = a0 @ x + f0
            k2 = ah @ (x + 0.5 * h * k1) + fh
            k3 = ah @ (x + 0.5 * h * k2) + fh
            k4 = a1 @ (x + h * k3) + f1
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            peak = max(peak, float(np.linalg.norm(x)))
    return x, peak


def integrate_linear(a: MatrixFunction, b: Optional[VectorFunction], x0, t0: float, t1: float,
                     tol: float = 1e-12, max_steps: int = 1 << 22):
    """Step-doubling RK4 with Richardson extrapolation.

    Returns ``(x(t1), peak)`` where ``peak`` is the largest state norm seen on
    the finest accepted step grid. The state may be a vector or a matrix
    (``b`` must then be None).
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    x0 = np.asarray(x0)
    if t1 == t0:
        return x0.copy(), float(np.linalg.norm(x0))
    f_many = None
    if b is not None and not b.is_zero:
        f_many = b.many
    scale = float(np.linalg.norm(a(t0), 2)) * abs(t1 - t0)
    steps = max(8, int(math.ceil(8 * scale)))
    coarse, _ = _rk4(a.many, f_many, x0, t0, t1, steps)
    while steps < max_steps:
        steps *= 2
        fine, peak = _rk4(a.many, f_many, x0, t0, t1, steps)
        diff = float(np.linalg.norm(fine - coarse))
        if diff < tol * max(1.0, float(np.linalg.norm(fine))):
            return fine + (fine - coarse) / 15.0, peak
        coarse = fine
    raise ConvergenceError(
        f"reference integration not converged at {steps} steps; problem may be stiff"
    )


def reference_solution(problem: OdeProblem, t: float, tolerance: float = 1e-12) -> np.ndarray:
    """x(t) for the full problem from the step-doubling RK4 oracle."""
    x, _ = integrate_linear(problem.a, problem.b, problem.x0, 0.0, t, tolerance)
    return x


def reference_trajectory(problem: OdeProblem, tolerance: float = 1e-12) -> tuple[np.ndarray, float]:
    """``(x(T), max_t ||x(t)||)`` with the maximum taken over the oracle's step grid."""
    return integrate_linear(problem.a, problem.b, problem.x0, 0.0, problem.horizon, tolerance)


def exact_segment_v(problem: OdeProblem, t0: float, t1: float,
                    tolerance: float = 1e-12) -> np.ndarray:
    """Particular solution v(t1, t0): the response to b from a zero state at t0."""
    x, _ = integrate_linear(problem.a, problem.b, np.zeros(problem.dimension), t0, t1, tolerance)
    return x


def truncated_dyson_exact(a: MatrixFunction, b: VectorFunction, t0: float, delta_t: float,
                          order: int, tol: float = 1e-13) -> TruncatedPropagator:
    """Continuous-time W_K and v_K (no time discretization).

    The degree-k terms obey ``Y_k' = A~(t) Y_{k-1}``, ``Y_0 = I`` with ``A~``
    the augmented matrix, which is one block-shift linear ODE integrated here
    by :func:`integrate_linear`. Serves as the M -> infinity reference.
    """
    n = a.dimension + 1
    shift = np.eye(order + 1, k=-1)

    def big_many(ts):
        aug = augmented(a.many(ts), b.many(ts))
        out = np.einsum("ij,tab->tiajb", shift, aug)
        return out.reshape(len(ts), (order + 1) * n, (order + 1) * n)

    big = MatrixFunction((order + 1) * n, lambda t: big_many(np.array([t]))[0], batch=big_many)
    z0 = np.zeros(((order + 1) * n, n))
    z0[:n] = np.eye(n)
    z, _ = integrate_linear(big, None, z0, t0, t0 + delta_t, tol)
    total = z.reshape(order + 1, n, n).sum(axis=0)
    m = a.dimension
    return TruncatedPropagator(total[:m, :m], total[:m, m], order)
