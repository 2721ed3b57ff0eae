"""Radial-basis surrogates of a latent objective, fitted from preferences.

All geometry lives in the [-1, 1]-scaled candidate space. Distances are
*squared* Euclidean throughout: an RBF is evaluated at s = shape * d where
d = ||theta1 - theta2||^2, so e.g. the inverse-quadratic basis reads
1 / (1 + (shape * d)^2).

The preference fit solves a convex QP: slack variables absorb comparisons
the surrogate cannot reproduce with margin sigma, an L2 penalty on the
coefficients keeps the solution unique. The value fit (used by the
value-based baseline loop) is a plain ridge regression on the Gram matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PreferenceRecord, preference_from_values
from .qp import QpProblem, solve_qp

RBF_KINDS = ("inverse_quadratic", "gaussian", "thin_plate_spline")


class FitError(RuntimeError):
    """Surrogate fitting failed (singular system or QP breakdown)."""


def rbf_phi(kind: str, s):
    """Evaluate the basis at s = shape * squared_distance (s >= 0)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("rbf argument must be non-negative")
    if kind == "inverse_quadratic":
        return 1.0 / (1.0 + s * s)
    if kind == "gaussian":
        return np.exp(-(s * s))
    if kind == "thin_plate_spline":
        out = np.zeros_like(s)
        pos = s > 0.0
        sp = s[pos]
        out[pos] = sp * sp * np.log(sp)
        return out
    raise ValueError(f"unknown rbf kind {kind!r}, expected one of {RBF_KINDS}")


def sq_dists(X, C) -> np.ndarray:
    """Pairwise squared Euclidean distances, (m, d) x (N, d) -> (m, N)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("mnd,mnd->mn", diff, diff)


@dataclass
class SurrogateModel:
    kind: str
    shape: float
    centers: np.ndarray  # (N, d), scaled space
    coeffs: np.ndarray   # (N,)
    sigma: float = 1e-6

    def evaluate(self, theta) -> np.ndarray | float:
        """Surrogate value at one point (d,) or a batch (m, d)."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        vals = rbf_phi(self.kind, self.shape * sq_dists(theta, self.centers)) @ self.coeffs
        return float(vals[0]) if single else vals


def eval_surrogate(model: SurrogateModel, theta):
    return model.evaluate(theta)


@dataclass
class FitConfig:
    lam: float = 1e-6
    sigma: float = 1e-6
    weights: np.ndarray | None = None  # per-preference slack penalties, default ones

    def validate(self, n_prefs: int) -> np.ndarray:
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.weights is None:
            return np.ones(n_prefs)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape != (n_prefs,) or np.any(w <= 0.0):
            raise ValueError("weights must be positive, one per preference")
        return w


def gram_matrix(kind: str, shape: float, samples: np.ndarray) -> np.ndarray:
    if shape <= 0.0:
        raise ValueError("shape must be positive")
    return rbf_phi(kind, shape * sq_dists(samples, samples))


def fit_preference_surrogate(samples, prefs: Sequence[PreferenceRecord], kind: str,
                             shape: float, cfg: FitConfig | None = None):
    """Fit coefficients so the surrogate honors the recorded comparisons.

    Variables are the N coefficients plus one slack per preference. Each
    comparison contributes its inequality with margin sigma (ties get the
    two-sided pair sharing a slack); the objective trades weighted slack
    against 0.5 * lam * ||coeffs||^2.

    Returns (model, slacks).
    """
    cfg = cfg or FitConfig()
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if n < 1:
        raise ValueError("need at least one sample")
    m = len(prefs)
    w = cfg.validate(m)
    if m == 0:
        model = SurrogateModel(kind, float(shape), samples.copy(), np.zeros(n), cfg.sigma)
        return model, np.zeros(0)

    phi = gram_matrix(kind, shape, samples)
    rows, rhs = [], []
    for h, rec in enumerate(prefs):
        if not (0 <= rec.i < n and 0 <= rec.j < n):
            raise ValueError(f"preference ({rec.i}, {rec.j}) out of range")
        dphi = phi[rec.i] - phi[rec.j]
        slack = np.zeros(m)
        slack[h] = -1.0
        if rec.b == -1:
            rows.append(np.concatenate([dphi, slack]))
            rhs.append(-cfg.sigma)
        elif rec.b == 1:
            rows.append(np.concatenate([-dphi, slack]))
            rhs.append(-cfg.sigma)
        else:
            rows.append(np.concatenate([dphi, slack]))
            rhs.append(cfg.sigma)
            rows.append(np.concatenate([-dphi, slack]))
            rhs.append(cfg.sigma)

    n_var = n + m
    H = np.zeros((n_var, n_var))
    H[:n, :n] = cfg.lam * np.eye(n)
    f = np.concatenate([np.zeros(n), w])
    lower = np.concatenate([np.full(n, -np.inf), np.zeros(m)])
    prob = QpProblem(H=H, f=f, A_ineq=np.array(rows), b_ineq=np.array(rhs), lower=lower)
    sol = solve_qp(prob, tol=1e-8)
    if sol.status != "optimal":
        raise FitError(f"preference QP ended with status {sol.status} "
                       f"(residual {sol.kkt_residual:.2e})")
    coeffs = sol.x[:n]
    slacks = np.maximum(sol.x[n:], 0.0)
    return SurrogateModel(kind, float(shape), samples.copy(), coeffs, cfg.sigma), slacks


def fit_value_surrogate(samples, values, kind: str, shape: float,
                        lam: float = 1e-6, sigma: float = 1e-6) -> SurrogateModel:
    """Ridge-regularized interpolation of observed objective values."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    n = samples.shape[0]
    if values.shape != (n,):
        raise ValueError("values length must match the number of samples")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    phi = gram_matrix(kind, shape, samples)
    if lam == 0.0:
        try:
            coeffs = np.linalg.solve(phi, values)
        except np.linalg.LinAlgError as exc:
            raise FitError("gram matrix is singular; use lam > 0") from exc
        cond = np.linalg.cond(phi)
        if not np.isfinite(cond) or cond > 1e14:
            raise FitError("gram matrix is numerically singular; use lam > 0")
    else:
        stacked = np.vstack([phi, np.sqrt(lam) * np.eye(n)])
        target = np.concatenate([values, np.zeros(n)])
        coeffs = np.linalg.lstsq(stacked, target, rcond=None)[0]
    return SurrogateModel(kind, float(shape), samples.copy(), coeffs, sigma)


def _fold_indices(m: int, k_folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(m)
    return [fold for fold in np.array_split(perm, k_folds) if fold.size]


def cross_validate_shape(samples, prefs: Sequence[PreferenceRecord], kind: str,
                         grid, k_folds: int, cfg: FitConfig | None = None,
                         seed: int = 0) -> float:
    """Pick the shape that reproduces the most held-out preferences.

    Preferences are shuffled (seeded) into k folds; each candidate shape is
    scored by fitting on k-1 folds and counting held-out comparisons whose
    sign the surrogate reproduces (sigma-tolerant for ties). Ties between
    shapes resolve toward the smallest.
    """
    cfg = cfg or FitConfig()
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    prefs = list(prefs)
    m = len(prefs)
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    if m < k_folds:
        raise ValueError(f"need at least {k_folds} preferences, have {m}")
    grid = sorted({float(e) for e in grid})
    if not grid or grid[0] <= 0.0:
        raise ValueError("shape grid must be positive")

    folds = _fold_indices(m, k_folds, seed)
    weights = cfg.validate(m)
    best_shape, best_count = grid[0], -1
    for shape in grid:
        total = 0
        for fold in folds:
            held = set(int(h) for h in fold)
            train = [prefs[h] for h in range(m) if h not in held]
            w_train = np.array([weights[h] for h in range(m) if h not in held])
            sub_cfg = FitConfig(lam=cfg.lam, sigma=cfg.sigma, weights=w_train)
            try:
                model, _ = fit_preference_surrogate(samples, train, kind, shape, sub_cfg)
            except FitError:
                continue
            vals = model.evaluate(samples)
            for h in held:
                rec = prefs[h]
                pred = preference_from_values(float(vals[rec.i]), float(vals[rec.j]),
                                              tol=cfg.sigma)
                if pred == rec.b:
                    total += 1
        if total > best_count:
            best_shape, best_count = shape, total
    return best_shape


def cross_validate_shape_values(samples, values, kind: str, grid, k_folds: int,
                                lam: float = 1e-6, seed: int = 0) -> float:
    """Value-based analogue: smallest held-out squared prediction error."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    n = samples.shape[0]
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    if n < k_folds:
        raise ValueError(f"need at least {k_folds} samples, have {n}")
    grid = sorted({float(e) for e in grid})
    if not grid or grid[0] <= 0.0:
        raise ValueError("shape grid must be positive")

    folds = _fold_indices(n, k_folds, seed)
    best_shape, best_err = grid[0], np.inf
    for shape in grid:
        err = 0.0
        for fold in folds:
            held = np.zeros(n, dtype=bool)
            held[fold] = True
            try:
                model = fit_value_surrogate(samples[~held], values[~held], kind, shape, lam)
            except FitError:
                err = np.inf
                break
            pred = model.evaluate(samples[held])
            err += float(np.sum((pred - values[held]) ** 2))
        if err < best_err:
            best_shape, best_err = shape, err
    return best_shape


def default_shape_grid(current: float, factors=(0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0),
                       lo: float = 1e-3, hi: float = 1e3) -> list[float]:
    """Multiplicative grid around the current shape, clipped to [lo, hi]."""
    if current <= 0.0:
        raise ValueError("current shape must be positive")
    return sorted({min(max(current * f, lo), hi) for f in factors})
