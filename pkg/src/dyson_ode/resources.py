"""Parameter selection, lambda-value calculus and order-of-magnitude query costs.

Cost formulas set every hidden constant to 1; their outputs are order
estimates. Wherever the formulas contain ``lambda_A T`` the segment count
``r = ceil(lambda_A T)`` is used instead, which equals it for integral
``lambda_A T``, stays positive when ``A = 0``, and matches the count of
blocks the linear system actually has.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import discretization_bound_v, discretization_bound_w, truncation_bound

K_CAP = 200
M_CAP = 1 << 20
E = math.e


def lambda_values(lambda_a: float, lambda_b: float, lambda_x: float, delta_t: float,
                  r: int, order: int) -> dict:
    """Block-encoding normalizations of the Dyson block, v block, composed A and B."""
    x = lambda_a * delta_t
    terms = [x ** k / math.factorial(k) for k in range(order + 1)]
    dyson = math.fsum(terms)
    # lambda_b dt sum_{k=1}^K x^(k-1)/k!, finite at lambda_a = 0
    v_sum = math.fsum(x ** (k - 1) / math.factorial(k) for k in range(1, order + 1))
    return {
        "lambda_dyson": dyson,
        "lambda_v": lambda_b * delta_t * v_sum,
        "lambda_script_a": 1.0 + dyson,
        "lambda_b_prep": math.sqrt(lambda_x ** 2 + (E - 1) ** 2 * r * (lambda_b * delta_t) ** 2),
    }


def choose_time_step(lambda_a: float, t_horizon: float) -> tuple[float, int]:
    """``r = ceil(lambda_A T)`` and ``dt = T / r``, so ``lambda_A dt <= 1``.

    Examples
    --------
    >>> choose_time_step(2.5, 2.0)
    (0.4, 5)
    """
    if not (lambda_a > 0 and t_horizon > 0):
        raise ValueError("lambda_a and the horizon must be positive")
    product = lambda_a * t_horizon
    r = max(1, math.ceil(product))
    # forgive one-ulp overshoot such as 0.1 * 30
    if r > 1 and r - 1 >= product * (1 - 4 * np.finfo(float).eps):
        r -= 1
    return t_horizon / r, r


def choose_k(lambda_a: float, delta_t: float, r: int, epsilon: float, x_max: float = 1.0,
             b_max: float = 0.0, share: float = 1 / 3, cap: int = K_CAP) -> int:
    """Smallest K whose explicit truncation bounds fit the per-segment share.

    The condition is ``w x_max + v <= share eps x_max / r`` with ``(w, v)`` from
    :func:`truncation_bound`; it implies the separate targets
    ``share eps / r`` and ``share eps x_max / r``.
    """
    if not 0 < epsilon:
        raise ValueError("epsilon must be positive")
    if x_max <= 0:
        raise ValueError("x_max must be positive")
    target = share * epsilon * x_max / r
    for k in range(cap + 1):
        w, v = truncation_bound(lambda_a, b_max, delta_t, k, x_max)
        if w + v <= target:
            return k
    raise ValueError(f"no K <= {cap} meets the truncation target {target:.3g}")


def choose_m(lambda_a: float, a_prime_max: float, b_max: float, b_prime_max: float,
             delta_t: float, r: int, epsilon: float, x_max: float = 1.0,
             share: float = 1 / 3, max_m: int = M_CAP) -> int:
    """Smallest power of two M whose discretization bounds fit the per-segment share."""
    if not 0 < epsilon:
        raise ValueError("epsilon must be positive")
    if x_max <= 0:
        raise ValueError("x_max must be positive")
    target = share * epsilon * x_max / r
    m = 1
    while m <= max_m:
        w = discretization_bound_w(lambda_a, a_prime_max, delta_t, m)
        v = discretization_bound_v(lambda_a, a_prime_max, b_max, b_prime_max, delta_t, m)
        if w * x_max + v <= target:
            return m
        m *= 2
    raise ValueError(f"no power-of-two M <= {max_m} meets the discretization target {target:.3g}")


def d_factor(horizon: float, lambda_a: float, b_max: float, x_max: float,
             a_prime_max: float, b_prime_max: float) -> float:
    """(1 + T b_max / (lambda_A x_max)) max||A'|| + max||b'|| / x_max."""
    if x_max <= 0:
        raise ValueError("x_max must be positive")
    first = 0.0
    if a_prime_max > 0:
        first = (1.0 + horizon * b_max / (lambda_a * x_max)) * a_prime_max
    return first + b_prime_max / x_max


def r_factor(x_max: float, x_final_norm: float, lambda_b: float, delta_t: float,
             min_v_norm: float, epsilon: float, r: int) -> Optional[float]:
    """Amplification factor; ``None`` marks the unbounded (cancelling-drive) case.

    ``(x_max / ||x(T)||) (lambda_b dt) / (min_m ||v_m|| - eps x_max / r)``; for a
    zero drive only the final-time factor ``x_max / ||x(T)||`` remains.
    """
    if x_final_norm <= 0:
        return None
    final = x_max / x_final_norm
    if lambda_b == 0:
        return final
    denominator = min_v_norm - epsilon * x_max / r
    if denominator <= 0:
        return None
    return final * lambda_b * delta_t / denominator


def _log1(x: float) -> float:
    """Natural log floored at 1, so a log factor never shrinks a cost."""
    return max(1.0, math.log(x)) if x > 0 else 1.0


@dataclass(frozen=True)
class CostInputs:
    epsilon: float
    horizon: float
    delta_t: float
    r: int
    k_order: int
    m_points: int
    lambda_a: float
    lambda_b: float
    lambda_x: float
    x_max: float
    b_max: float
    x_final_norm: float
    min_v_norm: float
    a_prime_max: float = 0.0
    b_prime_max: float = 0.0


@dataclass(frozen=True)
class ResourceEstimate:
    theorem: int
    epsilon: float
    delta_t: float
    r: int
    big_r: int
    k_order: int
    m_points: int
    lambda_a: float
    lambda_b: float
    lambda_x: float
    lambda_ax: float
    lambda_dyson: float
    lambda_v: float
    lambda_script_a: float
    lambda_b_prep: float
    r_factor: Optional[float]
    r_factor_unbounded: bool
    d_factor: Optional[float]
    x_max: float
    b_max: float
    calls_ub_ux: Optional[float]
    calls_ua: Optional[float]
    extra_gates: Optional[float]
    gate_log_derivative: Optional[float]
    gate_log_time: float
    kappa_bound: float
    order_estimate: bool = True
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _costs(inputs: CostInputs, theorem: int) -> ResourceEstimate:
    eps, T, r = inputs.epsilon, inputs.horizon, inputs.r
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    rate = r / T                       # lambda_A, rounded up to whole segments
    lambda_ax = max(inputs.lambda_a, inputs.b_max / inputs.x_max)
    lam = lambda_values(inputs.lambda_a, inputs.lambda_b, inputs.lambda_x, inputs.delta_t,
                        r, inputs.k_order)
    drive = inputs.lambda_b if theorem == 1 else 0.0
    big_r_factor = r_factor(inputs.x_max, inputs.x_final_norm, drive, inputs.delta_t,
                            inputs.min_v_norm, eps, r)
    log_time = _log1(max(lambda_ax, rate) * T / eps)
    log_gate_time = _log1(rate * T / eps)
    if theorem == 1:
        dfac = d_factor(T, max(inputs.lambda_a, rate), inputs.b_max, inputs.x_max,
                        inputs.a_prime_max, inputs.b_prime_max)
        log_gate_d = _log1(T * dfac / (rate * eps))
    else:
        dfac, log_gate_d = None, None
    notes = ["order estimate: every hidden constant set to 1"]
    if big_r_factor is None:
        notes.append("pathological: amplification factor unbounded")
        calls_b = calls_a = gates = None
    else:
        calls_b = big_r_factor * r * _log1(1 / eps)
        calls_a = calls_b * log_time
        gates = calls_a * (log_gate_time + (log_gate_d or 0.0))
    return ResourceEstimate(
        theorem=theorem,
        epsilon=eps,
        delta_t=inputs.delta_t,
        r=r,
        big_r=2 * r,
        k_order=inputs.k_order,
        m_points=inputs.m_points,
        lambda_a=inputs.lambda_a,
        lambda_b=inputs.lambda_b,
        lambda_x=inputs.lambda_x,
        lambda_ax=lambda_ax,
        lambda_dyson=lam["lambda_dyson"],
        lambda_v=lam["lambda_v"],
        lambda_script_a=lam["lambda_script_a"],
        lambda_b_prep=lam["lambda_b_prep"],
        r_factor=big_r_factor,
        r_factor_unbounded=big_r_factor is None,
        d_factor=dfac,
        x_max=inputs.x_max,
        b_max=inputs.b_max,
        calls_ub_ux=calls_b,
        calls_ua=calls_a,
        extra_gates=gates,
        gate_log_derivative=log_gate_d,
        gate_log_time=log_gate_time,
        kappa_bound=float(2 * r),
        notes=notes,
    )


def theorem1_costs(inputs: CostInputs) -> ResourceEstimate:
    """Time-dependent costs: U_b/U_x calls, U_A calls and extra gates."""
    return _costs(inputs, 1)


def theorem2_costs(inputs: CostInputs) -> ResourceEstimate:
    """Time-independent costs; the amplification factor has no state-prep part."""
    return _costs(inputs, 2)


@dataclass(frozen=True)
class LambdaEntry:
    operation: str
    value: float
    rule: str


@dataclass(frozen=True)
class LambdaLedger:
    entries: tuple

    def value(self, operation: str) -> float:
        for entry in self.entries:
            if entry.operation == operation:
                return entry.value
        raise KeyError(operation)

    def as_list(self) -> list:
        return [dict(e.__dict__) for e in self.entries]


def lambda_ledger(lambda_a: float, lambda_b: float, lambda_x: float, delta_t: float,
                  r: int, order: int) -> LambdaLedger:
    """Itemized lambda-values of every encoding that makes up the linear system."""
    x = lambda_a * delta_t
    if x > 1.0 + 1e-12:
        raise ValueError(f"lambda_A * dt = {x:.6g} exceeds 1")
    lam = lambda_values(lambda_a, lambda_b, lambda_x, delta_t, r, order)
    entries = [
        LambdaEntry("A(t_1)...A(t_K) product", lambda_a ** order, "product"),
        LambdaEntry("dyson series block", lam["lambda_dyson"], "integral-discretization"),
        LambdaEntry("particular solution block", lam["lambda_v"], "integral-discretization"),
        LambdaEntry("identity", 1.0, "weighted-sum"),
        LambdaEntry("shift", 1.0, "product"),
        LambdaEntry("composed system matrix", lam["lambda_script_a"], "weighted-sum"),
        LambdaEntry("right-hand side preparation", lam["lambda_b_prep"], "weighted-sum"),
    ]
    return LambdaLedger(tuple(entries))
