"""Exploration-aware acquisition over the scaled box, minimized by PSO.

The acquisition trades the surrogate (rescaled by its span over the
current samples) against an inverse-distance exploration bonus. Distances
are squared Euclidean, matching the surrogate module, and the IDW weights
use 1/d^2 of that squared distance, i.e. fourth powers of the plain
Euclidean distance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surrogate import SurrogateModel, sq_dists

COINCIDENT = 1e-12


class OptimizationError(RuntimeError):
    """The inner optimizer hit a non-finite objective value."""


@dataclass
class AcquisitionConfig:
    delta: float = 0.3  # exploration weight

    def validate(self):
        if self.delta < 0.0:
            raise ValueError("delta must be non-negative")


@dataclass
class PsoConfig:
    swarm_size: int = 30
    max_iters: int = 200
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    seed: int = 0

    def validate(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be at least 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


def idw_z(theta, samples):
    """Inverse-distance exploration term, zero exactly at the samples.

    Accepts one point (d,) or a batch (m, d); returns float or (m,).
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    d = sq_dists(theta, samples)
    out = np.zeros(d.shape[0])
    coincident = np.any(d < COINCIDENT, axis=1)
    free = ~coincident
    if np.any(free):
        w_sum = np.sum(1.0 / d[free] ** 2, axis=1)
        out[free] = np.arctan(1.0 / w_sum)
    return float(out[0]) if single else out


def surrogate_span(model: SurrogateModel) -> float:
    """Range of the surrogate over its own centers, floored at sigma."""
    vals = np.asarray(model.evaluate(model.centers), dtype=float)
    return max(float(np.max(vals) - np.min(vals)), model.sigma)


def acquisition(theta, model: SurrogateModel, cfg: AcquisitionConfig | None = None):
    """Scaled surrogate minus weighted exploration; batch-aware like idw_z."""
    cfg = cfg or AcquisitionConfig()
    cfg.validate()
    span = surrogate_span(model)
    return model.evaluate(theta) / span - cfg.delta * idw_z(theta, model.centers)


def pso_minimize(f, lower, upper, cfg: PsoConfig | None = None):
    """Particle-swarm minimization over a box.

    Parameters
    ----------
    f : callable
        Batch objective mapping an (m, d) array to (m,) values.
    lower, upper : array_like
        Box bounds, d each.
    cfg : PsoConfig
        Swarm settings; the run is fully determined by cfg.seed.

    Returns
    -------
    (x_best, f_best)
    """
    cfg = cfg or PsoConfig()
    cfg.validate()
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    if lower.shape != upper.shape or np.any(lower >= upper):
        raise ValueError("invalid bounds")
    d = lower.shape[0]
    span = upper - lower
    vmax = 0.5 * span
    rng = np.random.default_rng(cfg.seed)
    s = cfg.swarm_size

    x = lower + rng.random((s, d)) * span
    v = (2.0 * rng.random((s, d)) - 1.0) * vmax

    def batch_eval(pts):
        vals = np.asarray(f(pts), dtype=float).ravel()
        if vals.shape != (pts.shape[0],):
            raise OptimizationError(f"objective returned shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise OptimizationError("objective returned a non-finite value")
        return vals

    fx = batch_eval(x)
    pbest = x.copy()
    fp = fx.copy()
    g = int(np.argmin(fp))
    gbest = pbest[g].copy()
    fg = float(fp[g])

    for _ in range(cfg.max_iters):
        r1 = rng.random((s, d))
        r2 = rng.random((s, d))
        v = (cfg.inertia * v
             + cfg.cognitive * r1 * (pbest - x)
             + cfg.social * r2 * (gbest - x))
        v = np.clip(v, -vmax, vmax)
        x = x + v
        out = (x < lower) | (x > upper)
        if out.any():
            # absorbing walls: clip and kill the offending velocity component
            x = np.clip(x, lower, upper)
            v[out] = 0.0
        fx = batch_eval(x)
        better = fx < fp
        pbest[better] = x[better]
        fp[better] = fx[better]
        g = int(np.argmin(fp))
        if fp[g] < fg:
            gbest = pbest[g].copy()
            fg = float(fp[g])
    return gbest, fg
