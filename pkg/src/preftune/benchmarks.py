"""Analytic 2-D test functions for exercising the optimization loop.

Each benchmark carries its box, a vectorized objective, and the global
minimum (value and location) for convergence checks. Minima below are
exact where trivial and otherwise polished by Newton's method on the
stationarity condition to full double precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ParamSpace, ParamSpec


@dataclass(frozen=True)
class Benchmark:
    name: str
    space: ParamSpace
    fn: Callable
    minimum: float
    argmin: tuple

    def __call__(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        vals = self.fn(theta)
        return float(vals[0]) if vals.shape == (1,) else vals


def _box(lo: float, hi: float) -> ParamSpace:
    return ParamSpace((ParamSpec("x0", lo, hi), ParamSpec("x1", lo, hi)))


def _sphere(x):
    return np.sum(x ** 2, axis=1)


def _two_well(x):
    # double well in x0 tilted so the deeper basin is unique
    return (x[:, 0] ** 2 - 1.0) ** 2 + 0.3 * x[:, 0] + (x[:, 1] - 0.4) ** 2


def _ripple(x):
    return 0.25 * np.sum(x ** 2, axis=1) + np.sin(3.0 * x[:, 0]) + np.sin(3.0 * x[:, 1])


# root of 4t^3 - 4t + 0.3 in the deeper (negative) well
_TWO_WELL_X0 = -1.035578714088854
# root of 0.5t + 3cos(3t) nearest the global basin of 0.25t^2 + sin(3t)
_RIPPLE_T = -0.496011118557535

BENCHMARKS = {
    "sphere": Benchmark("sphere", _box(-2.5, 1.5), _sphere,
                        minimum=0.0, argmin=(0.0, 0.0)),
    "two-well": Benchmark("two-well", _box(-2.0, 2.0), _two_well,
                          minimum=-0.305428483743916,
                          argmin=(_TWO_WELL_X0, 0.4)),
    "ripple": Benchmark("ripple", _box(-2.0, 2.0), _ripple,
                        minimum=-1.870140684728614,
                        argmin=(_RIPPLE_T, _RIPPLE_T)),
}


def benchmark_by_name(name: str) -> Benchmark:
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark: {name!r} "
                       f"(available: {', '.join(sorted(BENCHMARKS))})") from None
