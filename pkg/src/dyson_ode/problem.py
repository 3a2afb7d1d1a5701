"""Problem description types: coefficient functions, ODE instances, time grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# Number of uniform samples used when a sup-norm or derivative bound has to be
# measured rather than supplied.
DENSE_SAMPLES = 2048


@dataclass(frozen=True, eq=False)
class _TimeFunction:
    dimension: int
    evaluate: Callable[[float], np.ndarray]
    derivative_norm_bound: Optional[float] = None
    is_constant: bool = False
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    _ndim = 0

    @property
    def shape(self) -> tuple:
        return (self.dimension,) * self._ndim

    def __call__(self, t: float) -> np.ndarray:
        value = np.asarray(self.evaluate(float(t)))
        if value.shape != self.shape:
            raise ValueError(
                f"evaluator returned shape {value.shape} at t={t}, expected {self.shape}"
            )
        if not np.all(np.isfinite(value)):
            raise ValueError(f"non-finite entries from evaluator at t={t}")
        return value

    def many(self, times) -> np.ndarray:
        """Evaluate at every time in ``times``; result has a leading time axis."""
        times = np.asarray(times, dtype=float)
        if self.batch is not None:
            values = np.asarray(self.batch(times))
            if values.shape != (len(times),) + self.shape:
                raise ValueError(f"batch evaluator returned shape {values.shape}")
            if not np.all(np.isfinite(values)):
                raise ValueError("non-finite entries from batch evaluator")
            return values
        if self.is_constant and len(times):
            return np.broadcast_to(self(times[0]), (len(times),) + self.shape).copy()
        return np.stack([self(t) for t in times]) if len(times) else np.zeros((0,) + self.shape)

    def sup_norm(self, t0: float, t1: float, samples: int = DENSE_SAMPLES) -> float:
        """Sampled maximum of the spectral norm on [t0, t1]."""
        if self.is_constant:
            return _norm(self(t0))
        values = self.many(np.linspace(t0, t1, samples + 1))
        return float(np.max(_norms(values)))

    def derivative_bound(self, t0: float, t1: float,
                         samples: int = DENSE_SAMPLES) -> tuple[float, bool]:
        """Return ``(bound, estimated)`` for sup ||f'(t)|| over [t0, t1].

        Supplied bounds are returned as-is; otherwise a forward-difference
        estimate on a uniform grid is returned with ``estimated=True``.
        """
        if self.derivative_norm_bound is not None:
            return float(self.derivative_norm_bound), False
        if self.is_constant:
            return 0.0, False
        ts = np.linspace(t0, t1, samples + 1)
        values = self.many(ts)
        h = ts[1] - ts[0]
        return float(np.max(_norms(np.diff(values, axis=0))) / h), True


class MatrixFunction(_TimeFunction):
    """Map t -> N x N complex matrix, the coefficient A(t)."""

    _ndim = 2

    @classmethod
    def constant(cls, matrix) -> MatrixFunction:
        matrix = np.array(matrix)
        _check_square(matrix)
        return cls(matrix.shape[0], lambda t: matrix, 0.0, True,
                   lambda ts: np.broadcast_to(matrix, (len(ts),) + matrix.shape).copy())

    @classmethod
    def polynomial(cls, a0, a1, mode: str = "sin", omega: float = 1.0,
                   phase: float = 0.0) -> MatrixFunction:
        """A(t) = a0 + a1 * g(t) with g(t) = sin(omega t + phase) or g(t) = t."""
        a0, a1 = np.array(a0), np.array(a1)
        _check_square(a0)
        if a1.shape != a0.shape:
            raise ValueError("a0 and a1 must have the same shape")
        g, dg_max = _modulation(mode, omega, phase)
        if not np.any(a1):
            return cls.constant(a0)
        return cls(a0.shape[0], lambda t: a0 + a1 * g(t), dg_max * _norm(a1), False,
                   lambda ts: a0 + a1 * g(ts)[:, None, None])


class VectorFunction(_TimeFunction):
    """Map t -> N-vector, the driving term b(t)."""

    _ndim = 1

    @classmethod
    def constant(cls, vector) -> VectorFunction:
        vector = np.array(vector)
        if vector.ndim != 1:
            raise ValueError("vector must be one-dimensional")
        return cls(vector.shape[0], lambda t: vector, 0.0, True,
                   lambda ts: np.broadcast_to(vector, (len(ts),) + vector.shape).copy())

    @classmethod
    def zero(cls, dimension: int) -> VectorFunction:
        return cls.constant(np.zeros(dimension))

    @classmethod
    def polynomial(cls, b0, b1, mode: str = "sin", omega: float = 1.0,
                   phase: float = 0.0) -> VectorFunction:
        b0, b1 = np.array(b0), np.array(b1)
        if b0.ndim != 1 or b1.shape != b0.shape:
            raise ValueError("b0 and b1 must be vectors of equal length")
        g, dg_max = _modulation(mode, omega, phase)
        if not np.any(b1):
            return cls.constant(b0)
        return cls(b0.shape[0], lambda t: b0 + b1 * g(t), dg_max * float(np.linalg.norm(b1)),
                   False, lambda ts: b0 + b1 * g(ts)[:, None])

    @property
    def is_zero(self) -> bool:
        return self.is_constant and not np.any(self(0.0))


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """dx/dt = A(t) x + b(t), x(0) = x0 on [0, horizon], with encoding factors.

    Use :meth:`create` to fill in measured defaults for the lambda values.
    """

    a: MatrixFunction
    b: VectorFunction
    x0: np.ndarray
    horizon: float
    lambda_a: float
    lambda_b: float
    lambda_x: float
    x_max_hint: Optional[float] = None
    name: str = "problem"

    def __post_init__(self):
        if not (self.a.dimension == self.b.dimension == len(self.x0)):
            raise ValueError(
                f"dimension mismatch: A is {self.a.dimension}, b is {self.b.dimension}, "
                f"x0 is {len(self.x0)}"
            )
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.lambda_a < 0 or self.lambda_b < 0:
            raise ValueError("lambda values must be nonnegative")
        norm_x0 = float(np.linalg.norm(self.x0))
        if not math.isclose(self.lambda_x, norm_x0, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError(f"lambda_x={self.lambda_x} differs from ||x0||={norm_x0}")

    @classmethod
    def create(cls, a: MatrixFunction, b: Optional[VectorFunction], x0, horizon: float,
               lambda_a: Optional[float] = None, lambda_b: Optional[float] = None,
               x_max_hint: Optional[float] = None, name: str = "problem") -> OdeProblem:
        """Build a problem, measuring lambda_a / lambda_b when not supplied.

        A measured lambda is the dense-sample maximum plus a Lipschitz slack
        ``sup||f'|| * h / 2``, which upper-bounds the true supremum whenever
        the derivative bound does.
        """
        x0 = np.array(x0)
        if b is None:
            b = VectorFunction.zero(len(x0))
        if lambda_a is None:
            lambda_a = _measured_sup(a, horizon)
        if lambda_b is None:
            lambda_b = _measured_sup(b, horizon)
        return cls(a, b, x0, float(horizon), float(lambda_a), float(lambda_b),
                   float(np.linalg.norm(x0)), x_max_hint, name)

    @property
    def dimension(self) -> int:
        return len(self.x0)

    @property
    def time_independent(self) -> bool:
        return self.a.is_constant and self.b.is_constant

    @property
    def driven(self) -> bool:
        return not self.b.is_zero

    def derivative_bounds(self) -> tuple[float, float, bool]:
        """``(max||A'||, max||b'||, estimated)`` over the horizon."""
        da, est_a = self.a.derivative_bound(0.0, self.horizon)
        db, est_b = self.b.derivative_bound(0.0, self.horizon)
        return da, db, est_a or est_b

    def validate_lambdas(self, grid: TimeGrid, rng: np.random.Generator,
                         slack: float = 1e-9) -> dict:
        """Spot-check lambda_a and lambda_b on the fine grid plus 7 random times per segment."""
        times = np.concatenate([grid.fine_times(),
                                rng.uniform(0.0, self.horizon, size=7 * grid.r), [self.horizon]])
        a_max = float(np.max(_norms(self.a.many(times))))
        b_max = float(np.max(np.linalg.norm(self.b.many(times), axis=-1)))
        return {
            "a_max_sampled": a_max,
            "b_max_sampled": b_max,
            "lambda_a_ok": a_max <= self.lambda_a + slack,
            "lambda_b_ok": b_max <= self.lambda_b + slack,
        }


@dataclass(frozen=True)
class TimeGrid:
    """r segments of width delta_t, each split into m left-endpoint points."""

    r: int
    delta_t: float
    m: int
    delta_t_small: float

    @classmethod
    def uniform(cls, horizon: float, r: int, m: int = 1) -> TimeGrid:
        if r < 1 or m < 1:
            raise ValueError("r and m must be positive integers")
        delta_t = horizon / r
        return cls(int(r), delta_t, int(m), delta_t / m)

    @property
    def horizon(self) -> float:
        return self.r * self.delta_t

    def segment_start(self, index: int) -> float:
        """Start time of segment ``index`` in 1..r."""
        if not 1 <= index <= self.r:
            raise IndexError(f"segment index {index} outside 1..{self.r}")
        return (index - 1) * self.delta_t

    def fine_times(self) -> np.ndarray:
        j = np.arange(self.m)
        return (np.arange(self.r)[:, None] * self.delta_t + j * self.delta_t_small).ravel()

    def with_m(self, m: int) -> TimeGrid:
        return TimeGrid(self.r, self.delta_t, int(m), self.delta_t / m)


def _modulation(mode: str, omega: float, phase: float):
    if mode == "sin":
        return (lambda t: np.sin(omega * np.asarray(t) + phase)), abs(omega)
    if mode == "linear":
        return (lambda t: np.asarray(t, dtype=float)), 1.0
    raise ValueError(f"unknown modulation mode {mode!r}")


def _check_square(matrix: np.ndarray) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")


def _norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x, 2)) if np.ndim(x) == 2 else float(np.linalg.norm(x))


def _norms(values: np.ndarray) -> np.ndarray:
    if values.ndim == 3:
        return np.linalg.norm(values, ord=2, axis=(1, 2))
    return np.linalg.norm(values, axis=-1)


def _measured_sup(f: _TimeFunction, horizon: float) -> float:
    if f.is_constant:
        return f.sup_norm(0.0, horizon)
    slope, _ = f.derivative_bound(0.0, horizon)
    return f.sup_norm(0.0, horizon) + slope * horizon / DENSE_SAMPLES / 2
