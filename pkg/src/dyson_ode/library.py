"""Built-in problem library."""

from __future__ import annotations

import math

import numpy as np

from .specfile import ProblemSpec

_OSCILLATOR = [[0.0, 1.0], [-1.0, -0.5]]


def _heat(n: int) -> np.ndarray:
    return np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)


def _spec(name, a0, x0, horizon, a1=None, b0=None, b1=None, omega=1.0, phase=0.0):
    a0 = np.array(a0, dtype=float)
    n = len(a0)
    zero_m, zero_v = np.zeros((n, n)), np.zeros(n)
    return ProblemSpec(
        name=name,
        kind="builtin",
        a0=a0,
        a1=zero_m if a1 is None else np.array(a1, dtype=float),
        b0=zero_v if b0 is None else np.array(b0, dtype=float),
        b1=zero_v if b1 is None else np.array(b1, dtype=float),
        mode="sin",
        omega=float(omega),
        phase=float(phase),
        x0=np.array(x0, dtype=float),
        horizon=float(horizon),
    )


def _builders():
    n = 8
    return {
        "decay1d": lambda: _spec("decay1d", [[-1.0]], [1.0], 1.0),
        "oscillator": lambda: _spec("oscillator", _OSCILLATOR, [1.0, 0.0], 2.0),
        # b(t) = (0, cos t) written as sin(t + pi/2)
        "driven-oscillator": lambda: _spec("driven-oscillator", _OSCILLATOR, [1.0, 0.0], 2.0,
                                           b1=[0.0, 1.0], phase=math.pi / 2),
        "heat8": lambda: _spec("heat8", _heat(n), np.sin(np.pi * np.arange(1, n + 1) / (n + 1)),
                               1.0, b0=0.5 * np.ones(n)),
        # a drive that integrates to zero over each unit interval
        "drive-cancel": lambda: _spec("drive-cancel", [[-0.002]], [1.0], 2.0, b1=[1.0],
                                      omega=2 * math.pi),
        "modulated": lambda: _spec("modulated", [[0.0, 1.0], [-1.0, -0.1]], [1.0, 0.0], 2.0,
                                   a1=[[0.0, 1.0], [-1.0, 0.0]], b0=[0.2, 0.0], b1=[0.0, 0.5]),
        "unstable1d": lambda: _spec("unstable1d", [[1.0]], [1.0], 1.0),
        "zero": lambda: _spec("zero", np.zeros((2, 2)), [1.0, 0.5], 1.0),
    }


BUILTINS = tuple(_builders())
# Problems with nonpositive logarithmic norm throughout.
STABLE = ("decay1d", "oscillator", "driven-oscillator", "heat8", "drive-cancel", "modulated")
DRIVEN = ("driven-oscillator", "heat8", "drive-cancel", "modulated")


def builtin_spec(name: str) -> ProblemSpec:
    builders = _builders()
    if name not in builders:
        raise KeyError(f"unknown builtin {name!r}; choose from {', '.join(builders)}")
    return builders[name]()


def builtin_problem(name: str):
    return builtin_spec(name).to_problem()
