"""Dense convex quadratic programming with a dual active-set method.

solve_qp minimizes 0.5 x'Hx + f'x over A_ineq x <= b_ineq, A_eq x = b_eq
and box bounds. Equality constraints are eliminated up front through an SVD
null-space reduction; the inequality part is then handled dual-style:
start at the unconstrained minimum, repeatedly add the most violated
constraint, dropping active ones as their multipliers hit zero. Problems
here are small (tens of variables), so every step re-solves its dense
subproblem instead of updating factorizations.

H must be positive semidefinite; if its smallest eigenvalue is below 1e-9
the solver adds 1e-9 * I and reports the shift, making the problem
strictly convex and the minimizer unique.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

EIG_FLOOR = 1e-9


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    status: str  # "optimal" | "max_iter" | "infeasible"
    kkt_residual: float
    iterations: int
    solve_time: float
    hessian_shift: float = 0.0
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _as_matrix(A, n, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"{name} must be 2-D with {n} columns, got shape {A.shape}")
    return A


def _gather_rows(prob: QpProblem, n: int):
    """Stack general inequalities and finite box bounds into G x <= g."""
    rows, rhs = [], []
    if prob.A_ineq is not None:
        A = _as_matrix(prob.A_ineq, n, "A_ineq")
        b = np.asarray(prob.b_ineq, dtype=float).ravel()
        if b.shape != (A.shape[0],):
            raise ValueError("b_ineq length does not match A_ineq rows")
        if np.any(np.isnan(b)) or np.any(np.isnan(A)):
            raise ValueError("inequality data contains NaN")
        rows.append(A)
        rhs.append(b)
    eye = np.eye(n)
    if prob.lower is not None:
        lo = np.asarray(prob.lower, dtype=float).ravel()
        keep = np.isfinite(lo)
        if keep.any():
            rows.append(-eye[keep])
            rhs.append(-lo[keep])
    if prob.upper is not None:
        hi = np.asarray(prob.upper, dtype=float).ravel()
        keep = np.isfinite(hi)
        if keep.any():
            rows.append(eye[keep])
            rhs.append(hi[keep])
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def _refined_solve(cho, H, B):
    """Cholesky solve with one step of iterative refinement."""
    X = cho_solve(cho, B)
    R = B - H @ X
    return X + cho_solve(cho, R)


def _scatter(u, active, m):
    lam = np.zeros(m)
    for val, idx in zip(u, active):
        lam[idx] = max(float(val), 0.0)
    return lam


def _polish(H, cho, f, G, g, active):
    """Re-solve the KKT equality system at a fixed active set."""
    if not active:
        return -_refined_solve(cho, H, f), np.zeros(0)
    Na = G[active]
    Hi_f = _refined_solve(cho, H, f)
    Hi_Nt = _refined_solve(cho, H, Na.T)
    S = Na @ Hi_Nt
    rhs = -(g[active] + Na @ Hi_f)
    try:
        u = np.linalg.solve(S, rhs)
    except np.linalg.LinAlgError:
        u = np.linalg.lstsq(S, rhs, rcond=None)[0]
    x = -_refined_solve(cho, H, f + Na.T @ u)
    return x, u


def _active_set_solve(H, cho, f, G, g, tol, max_iter):
    """Dual active-set iteration on G x <= g with H strictly convex.

    Returns (x, lambdas, active, status, iterations, certificate); the
    certificate is the remaining violation when status is not optimal.
    """
    m = G.shape[0]
    x = -_refined_solve(cho, H, f)
    active: list[int] = []
    u = np.zeros(0)
    iters = 0
    feas_tol = 0.5 * tol * (max(1.0, float(np.max(np.abs(g)))) if m else 1.0)

    while True:
        s = G @ x - g if m else np.zeros(0)
        worst = float(np.max(s)) if m else 0.0
        if worst <= feas_tol:
            return x, _scatter(u, active, m), active, "optimal", iters, 0.0
        if iters >= max_iter:
            return x, _scatter(u, active, m), active, "max_iter", iters, worst
        p = int(np.argmax(s))
        a = G[p]
        if float(a @ a) == 0.0:
            # zero row with positive violation can never be satisfied
            return x, _scatter(u, active, m), active, "infeasible", iters, worst
        u_plus = 0.0

        while iters < max_iter:
            iters += 1
            Ha = _refined_solve(cho, H, a)
            if active:
                Na = G[active]
                Hi_Nt = _refined_solve(cho, H, Na.T)
                S = Na @ Hi_Nt
                try:
                    r = np.linalg.solve(S, Na @ Ha)
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(S, Na @ Ha, rcond=None)[0]
                z = Ha - Hi_Nt @ r
            else:
                r = np.zeros(0)
                z = Ha
            denom = float(a @ z)
            viol = float(a @ x - g[p])
            has_direction = denom > 1e-12 * max(1.0, float(a @ Ha))

            if r.size:
                pos = r > 1e-12
                if pos.any():
                    ratios = u[pos] / r[pos]
                    k_local = int(np.argmin(ratios))
                    t1 = float(ratios[k_local])
                    k_drop = int(np.nonzero(pos)[0][k_local])
                else:
                    t1, k_drop = np.inf, -1
            else:
                t1, k_drop = np.inf, -1

            if not has_direction and not np.isfinite(t1):
                # violated row is a nonnegative combination of active rows
                return x, _scatter(u, active, m), active, "infeasible", iters, viol

            t2 = viol / denom if has_direction else np.inf
            t = min(t1, t2)
            if has_direction:
                x = x - t * z
            if r.size:
                u = u - t * r
            u_plus += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_plus)
                break
            del active[k_drop]
            u = np.delete(u, k_drop)
        else:
            s = G @ x - g
            return x, _scatter(u, active, m), active, "max_iter", iters, float(np.max(s))


def kkt_residual(H, f, G, g, A_eq, b_eq, x, lam, nu):
    """Worst violation among stationarity, feasibility and complementarity."""
    grad = H @ x + f
    if G.shape[0]:
        grad = grad + G.T @ lam
    if A_eq is not None and A_eq.shape[0]:
        grad = grad + A_eq.T @ nu
    res = float(np.max(np.abs(grad)))
    if G.shape[0]:
        s = G @ x - g
        res = max(res, float(np.max(s)))
        res = max(res, float(np.max(np.abs(lam * s))))
        res = max(res, float(max(0.0, -np.min(lam))))
    if A_eq is not None and A_eq.shape[0]:
        res = max(res, float(np.max(np.abs(A_eq @ x - b_eq))))
    return res


def _objective(H, f, x):
    return float(0.5 * x @ H @ x + f @ x)


def _eq_duals(H, f, G, lam, A_eq, x):
    if A_eq is None or A_eq.shape[0] == 0:
        return np.zeros(0)
    grad = H @ x + f
    if G.shape[0]:
        grad = grad + G.T @ lam
    return np.linalg.lstsq(A_eq.T, -grad, rcond=None)[0]


def solve_qp(prob: QpProblem, tol: float = 1e-8, max_iter: int | None = None) -> QpSolution:
    """Solve a dense convex QP.

    Parameters
    ----------
    prob : QpProblem
        H must be symmetric positive semidefinite.
    tol : float
        KKT tolerance; also governs the feasibility threshold.
    max_iter : int, optional
        Active-set iteration cap, default 50 + 10 * (number of rows).

    Returns
    -------
    QpSolution
        status is "optimal", "max_iter" (best iterate so far) or
        "infeasible" (kkt_residual then carries the remaining violation).
    """
    t0 = time.perf_counter()
    H = np.asarray(prob.H, dtype=float)
    f = np.asarray(prob.f, dtype=float).ravel()
    n = f.shape[0]
    if H.shape != (n, n):
        raise ValueError(f"H must be {n}x{n}, got {H.shape}")
    if not np.all(np.isfinite(H)) or not np.all(np.isfinite(f)):
        raise ValueError("H and f must be finite")
    if np.max(np.abs(H - H.T)) > 1e-10 * max(1.0, float(np.max(np.abs(H)))):
        raise ValueError("H must be symmetric")
    H = 0.5 * (H + H.T)
    H_orig = H

    # Cholesky of (H - floor*I) succeeding certifies min eig > floor,
    # which is much cheaper than an eigendecomposition in the MPC loop.
    shift = 0.0
    try:
        cho_factor(H - EIG_FLOOR * np.eye(n))
    except LinAlgError:
        # Slow path: PSD-within-roundoff Hessians get whatever loading
        # makes Cholesky accept (badly scaled ones need more than the
        # bare floor); indefiniteness beyond roundoff is the caller's
        # bug and is rejected outright.
        eig_min = float(np.linalg.eigvalsh(H)[0])
        scale = float(np.max(np.abs(H)))
        if eig_min < -1e-6 * max(1.0, scale):
            raise ValueError("H is not positive semidefinite") from None
        shift = EIG_FLOOR - min(eig_min, 0.0)
        eye = np.eye(n)
        for _ in range(32):
            try:
                cho_factor(H + shift * eye)
                break
            except LinAlgError:
                shift = max(10.0 * shift, 10.0 * np.finfo(float).eps * scale)
        else:
            raise ValueError("H is not positive semidefinite") from None
        H = H + shift * eye

    G, g = _gather_rows(prob, n)
    if np.any(np.isneginf(g)):
        return QpSolution(np.zeros(n), np.nan, "infeasible", np.inf, 0,
                          time.perf_counter() - t0, shift)
    keep = ~np.isposinf(g)
    G, g = G[keep], g[keep]
    m = G.shape[0]
    if max_iter is None:
        max_iter = 50 + 10 * m

    A_eq = b_eq = None
    x_part = np.zeros(n)
    Z = np.eye(n)
    if prob.A_eq is not None and np.asarray(prob.A_eq).size:
        A_eq = _as_matrix(prob.A_eq, n, "A_eq")
        b_eq = np.asarray(prob.b_eq, dtype=float).ravel()
        if b_eq.shape != (A_eq.shape[0],):
            raise ValueError("b_eq length does not match A_eq rows")
        x_part = np.linalg.lstsq(A_eq, b_eq, rcond=None)[0]
        eq_res = float(np.max(np.abs(A_eq @ x_part - b_eq)))
        if eq_res > 1e-8 * (1.0 + float(np.max(np.abs(b_eq)))):
            return QpSolution(x_part, np.nan, "infeasible", eq_res, 0,
                              time.perf_counter() - t0, shift)
        _, sv, Vt = np.linalg.svd(A_eq)
        cutoff = max(A_eq.shape) * np.finfo(float).eps * (float(sv[0]) if sv.size else 1.0)
        rank = int(np.sum(sv > cutoff))
        Z = Vt[rank:].T

    if Z.shape[1] == 0:
        # equality constraints pin x completely
        x = x_part
        lam = np.zeros(m)
        feas = float(np.max(G @ x - g)) if m else 0.0
        nu = _eq_duals(H, f, G, lam, A_eq, x)
        if feas > tol * max(1.0, float(np.max(np.abs(g))) if m else 1.0):
            return QpSolution(x, _objective(H_orig, f, x), "infeasible", feas, 0,
                              time.perf_counter() - t0, shift, lam, nu)
        res = kkt_residual(H, f, G, g, A_eq, b_eq, x, lam, nu)
        return QpSolution(x, _objective(H_orig, f, x), "optimal", res, 0,
                          time.perf_counter() - t0, shift, lam, nu)

    Hr = Z.T @ H @ Z if A_eq is not None else H
    fr = Z.T @ (H @ x_part + f) if A_eq is not None else f
    Gr = G @ Z if A_eq is not None else G
    gr = g - G @ x_part if A_eq is not None else g
    try:
        cho = cho_factor(Hr)
    except LinAlgError as exc:
        raise ValueError("H is not positive semidefinite") from exc

    v, lam_r, active, status, iters, certificate = _active_set_solve(
        Hr, cho, fr, Gr, gr, tol, max_iter)
    if status == "optimal" and active:
        v2, u2 = _polish(Hr, cho, fr, Gr, gr, active)
        ok_dual = np.all(u2 >= -1e-9 * max(1.0, float(np.max(np.abs(u2))) if u2.size else 1.0))
        feas2 = float(np.max(Gr @ v2 - gr))
        if ok_dual and feas2 <= tol * max(1.0, float(np.max(np.abs(gr)))):
            v = v2
            lam_r = _scatter(u2, active, m)

    x = x_part + Z @ v if A_eq is not None else v
    lam = lam_r
    nu = _eq_duals(H, f, G, lam, A_eq, x)
    res = kkt_residual(H, f, G, g, A_eq, b_eq, x, lam, nu)
    if status != "optimal":
        res = max(res, certificate) if status == "max_iter" else certificate
    return QpSolution(x, _objective(H_orig, f, x), status, res, iters,
                      time.perf_counter() - t0, shift, lam, nu)
