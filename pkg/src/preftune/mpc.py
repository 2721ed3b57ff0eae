"""Linear time-varying MPC built on successive linearization.

Each closed-loop step linearizes the plant at the current state and
previous input, discretizes with zero-order hold at the tuned sampling
time, condenses the predictions into a dense QP over the blocked input
sequence plus one shared output-slack variable, and applies the first
move.

Decision vector layout: z = [u_0, ..., u_{Nu-1}, eps] with absolute
(not deviation) inputs; move blocking holds u_k = u_{Nu-1} for k >= Nu.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .qp import QpProblem, solve_qp

MPC_QP_TOL = 1e-6


class LinearizationError(RuntimeError):
    """Finite differencing produced a non-finite derivative."""


class MpcError(RuntimeError):
    """The per-step QP could not be solved."""


@dataclass
class LinearModel:
    """Discrete-time model around an operating point (x_bar, u_bar, y_bar).

    Deviations follow x~_{k+1} = A x~_k + B u~_k + drift; the drift term
    carries the zero-order-hold propagation of f(x_bar, u_bar), which is
    nonzero whenever the operating point is not an equilibrium.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    x_bar: np.ndarray
    u_bar: np.ndarray
    y_bar: np.ndarray
    drift: np.ndarray | None = None

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("x_bar", "u_bar", "y_bar"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if self.drift is None:
            self.drift = np.zeros(self.nx)
        else:
            self.drift = np.asarray(self.drift, dtype=float).ravel()
        nx, nu, ny = self.nx, self.nu, self.ny
        ok = (self.A.shape == (nx, nx) and self.B.shape == (nx, nu)
              and self.C.shape == (ny, nx) and self.D.shape == (ny, nu)
              and self.x_bar.shape == (nx,) and self.u_bar.shape == (nu,)
              and self.drift.shape == (nx,))
        if not ok:
            raise ValueError("inconsistent model dimensions")

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    @property
    def ny(self) -> int:
        return self.C.shape[0]


def _jacobian(fn, at):
    at = np.asarray(at, dtype=float)
    cols = []
    for j in range(at.shape[0]):
        h = max(1e-6, 1e-6 * abs(at[j]))
        hi = at.copy()
        lo = at.copy()
        hi[j] += h
        lo[j] -= h
        cols.append((np.asarray(fn(hi), dtype=float)
                     - np.asarray(fn(lo), dtype=float)) / (2.0 * h))
    J = np.column_stack(cols)
    if not np.all(np.isfinite(J)):
        raise LinearizationError("non-finite derivative in finite differencing")
    return J


def linearize(f, g, x_bar, u_bar):
    """Central-difference Jacobians of f(x, u) and g(x, u).

    Returns continuous-time (A_c, B_c, C, D) at the operating point.
    Steps are per-component: h = max(1e-6, 1e-6 * |value|).
    """
    x_bar = np.asarray(x_bar, dtype=float).ravel()
    u_bar = np.asarray(u_bar, dtype=float).ravel()
    Ac = _jacobian(lambda x: f(x, u_bar), x_bar)
    Bc = _jacobian(lambda u: f(x_bar, u), u_bar)
    C = _jacobian(lambda x: g(x, u_bar), x_bar)
    D = _jacobian(lambda u: g(x_bar, u), u_bar)
    return Ac, Bc, C, D


def expm(M, tol: float = 1e-12) -> np.ndarray:
    """Matrix exponential by scaling and squaring of the Taylor series."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("expm needs a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("expm needs finite entries")
    n = M.shape[0]
    nrm = np.linalg.norm(M, 1)
    s = 0 if nrm <= 0.5 else int(math.ceil(math.log2(nrm / 0.5)))
    A = M / (2.0 ** s)
    E = np.eye(n)
    term = np.eye(n)
    for k in range(1, 64):
        term = term @ A / k
        E = E + term
        if np.linalg.norm(term, 1) <= tol * max(1.0, np.linalg.norm(E, 1)):
            break
    else:
        raise RuntimeError("expm series failed to converge")
    for _ in range(s):
        E = E @ E
    return E


def discretize(Ac, Bc, Ts: float):
    """Exact zero-order hold: exponential of the augmented [[Ac, Bc], [0, 0]]."""
    if Ts <= 0.0:
        raise ValueError("Ts must be positive")
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    Bc = np.atleast_2d(np.asarray(Bc, dtype=float))
    nx, nu = Bc.shape
    aug = np.zeros((nx + nu, nx + nu))
    aug[:nx, :nx] = Ac
    aug[:nx, nx:] = Bc
    E = expm(aug * Ts)
    return E[:nx, :nx], E[:nx, nx:]


def linearize_discretize(f, g, x_bar, u_bar, Ts: float) -> LinearModel:
    """Model for one MPC step: Jacobians, ZOH, and the drift f(x_bar, u_bar).

    The drift column rides through the same augmented exponential as B, so
    holding u_bar predicts motion along the nominal flow instead of rest.
    """
    x_bar = np.asarray(x_bar, dtype=float).ravel()
    u_bar = np.asarray(u_bar, dtype=float).ravel()
    Ac, Bc, C, D = linearize(f, g, x_bar, u_bar)
    f0 = np.asarray(f(x_bar, u_bar), dtype=float).ravel()
    nx, nu = Bc.shape
    aug = np.zeros((nx + nu + 1, nx + nu + 1))
    aug[:nx, :nx] = Ac
    aug[:nx, nx:nx + nu] = Bc
    aug[:nx, -1] = f0
    E = expm(aug * Ts)
    A = E[:nx, :nx]
    B = E[:nx, nx:nx + nu]
    drift = E[:nx, -1]
    y_bar = np.asarray(g(x_bar, u_bar), dtype=float).ravel()
    return LinearModel(A=A, B=B, C=C, D=D, x_bar=x_bar, u_bar=u_bar,
                       y_bar=y_bar, drift=drift)


def _check_weight(name: str, M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(M - M.T)) > 1e-10 * (1.0 + np.max(np.abs(M))):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) < -1e-10:
        raise ValueError(f"{name} must be positive semidefinite")
    return 0.5 * (M + M.T)


def _bound_vec(val, n: int, default: float) -> np.ndarray:
    if val is None:
        return np.full(n, default)
    v = np.asarray(val, dtype=float).ravel()
    if v.shape == (1,) and n > 1:
        v = np.full(n, v[0])
    if v.shape != (n,):
        raise ValueError("bound vector has wrong length")
    return v


@dataclass
class MpcConfig:
    Ts: float
    Np: int
    Nu: int
    Qy: np.ndarray
    Qu: np.ndarray
    Qdu: np.ndarray
    Qeps: float = 1e5
    y_min: np.ndarray | None = None
    y_max: np.ndarray | None = None
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    du_min: np.ndarray | None = None
    du_max: np.ndarray | None = None

    def __post_init__(self):
        if self.Ts <= 0.0:
            raise ValueError("Ts must be positive")
        self.Np = int(self.Np)
        self.Nu = int(self.Nu)
        if not 1 <= self.Nu <= self.Np:
            raise ValueError("need 1 <= Nu <= Np")
        if self.Qeps <= 0.0:
            raise ValueError("Qeps must be positive")
        self.Qy = _check_weight("Qy", self.Qy)
        self.Qu = _check_weight("Qu", self.Qu)
        self.Qdu = _check_weight("Qdu", self.Qdu)

    def bounds(self, ny: int, nu: int):
        """Normalized bound vectors, infinities where unset."""
        b = (_bound_vec(self.y_min, ny, -np.inf), _bound_vec(self.y_max, ny, np.inf),
             _bound_vec(self.u_min, nu, -np.inf), _bound_vec(self.u_max, nu, np.inf),
             _bound_vec(self.du_min, nu, -np.inf), _bound_vec(self.du_max, nu, np.inf))
        for lo, hi in ((b[0], b[1]), (b[2], b[3]), (b[4], b[5])):
            if np.any(lo > hi):
                raise ValueError("bounds must satisfy min <= max")
        return b


def prediction_matrices(model: LinearModel, Np: int, Nu: int):
    """Condensed output prediction over k = 0..Np.

    Returns (Sx, Su, y_off) with stacked outputs
      Y = Sx (x_t - x_bar) + Su U + y_off,
    U the blocked absolute input sequence [u_0 ... u_{Nu-1}].
    """
    A, B, C, D = model.A, model.B, model.C, model.D
    nx, nu, ny = model.nx, model.nu, model.ny
    rows = (Np + 1) * ny

    # powers of A up front
    Ak = [np.eye(nx)]
    for _ in range(Np):
        Ak.append(A @ Ak[-1])

    Sx = np.vstack([C @ Ak[k] for k in range(Np + 1)])

    # unblocked input-to-output map, then fold columns j >= Nu-1 together
    Su0 = np.zeros((rows, (Np + 1) * nu))
    for k in range(Np + 1):
        r = slice(k * ny, (k + 1) * ny)
        for j in range(k):
            Su0[r, j * nu:(j + 1) * nu] = C @ Ak[k - 1 - j] @ B
        Su0[r, k * nu:(k + 1) * nu] += D

    T = _blocking_map(Np, Nu, nu)
    Su = Su0 @ T
    u_bar_rep = np.tile(model.u_bar, Np + 1)
    y_off = -Su0 @ u_bar_rep + np.tile(model.y_bar, Np + 1)

    # drift accumulates as s_{k+1} = A s_k + w, entering outputs through C
    s = np.zeros(nx)
    for k in range(1, Np + 1):
        s = A @ s + model.drift
        y_off[k * ny:(k + 1) * ny] += C @ s
    return Sx, Su, y_off


def _blocking_map(Np: int, Nu: int, nu: int) -> np.ndarray:
    T = np.zeros(((Np + 1) * nu, Nu * nu))
    eye = np.eye(nu)
    for k in range(Np + 1):
        j = min(k, Nu - 1)
        T[k * nu:(k + 1) * nu, j * nu:(j + 1) * nu] = eye
    return T


def _expand_ref(ref, n: int, width: int) -> np.ndarray:
    r = np.asarray(ref, dtype=float)
    if r.ndim == 1:
        if r.shape != (width,):
            raise ValueError("reference row has wrong width")
        return np.tile(r, (n, 1))
    if r.ndim != 2 or r.shape[1] != width:
        raise ValueError("reference must be (m, width)")
    if r.shape[0] >= n:
        return r[:n]
    pad = np.tile(r[-1], (n - r.shape[0], 1))
    return np.vstack([r, pad])


def build_mpc_qp(model: LinearModel, x_t, u_prev, y_ref, u_ref,
                 cfg: MpcConfig) -> QpProblem:
    """Condense the tracking problem into a strictly convex dense QP."""
    nx, nu, ny = model.nx, model.nu, model.ny
    x_t = np.asarray(x_t, dtype=float).ravel()
    u_prev = np.asarray(u_prev, dtype=float).ravel()
    if x_t.shape != (nx,) or u_prev.shape != (nu,):
        raise ValueError("state or previous input has wrong dimension")
    if cfg.Qy.shape != (ny, ny) or cfg.Qu.shape != (nu, nu) or cfg.Qdu.shape != (nu, nu):
        raise ValueError("weight dimensions do not match the model")
    Np, Nu = cfg.Np, cfg.Nu
    y_min, y_max, u_min, u_max, du_min, du_max = cfg.bounds(ny, nu)

    yr = _expand_ref(y_ref, Np, ny).ravel()
    ur = _expand_ref(u_ref, Np, nu).ravel()

    Sx, Su, y_off = prediction_matrices(model, Np, Nu)
    c_full = Sx @ (x_t - model.x_bar) + y_off

    # cost rows k = 0..Np-1
    Ey = Su[:Np * ny]
    e0 = c_full[:Np * ny] - yr
    Tu = _blocking_map(Np, Nu, nu)[:Np * nu]

    nz = Nu * nu
    Dm = np.eye(nz) - np.eye(nz, k=-nu)
    d0 = np.zeros(nz)
    d0[:nu] = u_prev

    Qy_bar = np.kron(np.eye(Np), cfg.Qy)
    Qu_bar = np.kron(np.eye(Np), cfg.Qu)
    Qdu_bar = np.kron(np.eye(Nu), cfg.Qdu)

    H_uu = 2.0 * (Ey.T @ Qy_bar @ Ey + Tu.T @ Qu_bar @ Tu + Dm.T @ Qdu_bar @ Dm)
    f_u = 2.0 * (Ey.T @ (Qy_bar @ e0) - Tu.T @ (Qu_bar @ ur) - Dm.T @ (Qdu_bar @ d0))

    H = np.zeros((nz + 1, nz + 1))
    H[:nz, :nz] = H_uu
    H[nz, nz] = 2.0 * cfg.Qeps
    f = np.append(f_u, 0.0)

    # soft output bounds for k = 1..Np, finite rows only
    G_rows, g_vals = [], []
    for k in range(1, Np + 1):
        r = slice(k * ny, (k + 1) * ny)
        Sr = Su[r]
        cr = c_full[r]
        for i in range(ny):
            if np.isfinite(y_max[i]):
                row = np.append(Sr[i], -1.0)
                G_rows.append(row)
                g_vals.append(y_max[i] - cr[i])
            if np.isfinite(y_min[i]):
                row = np.append(-Sr[i], -1.0)
                G_rows.append(row)
                g_vals.append(cr[i] - y_min[i])

    # hard rate bounds for k = 0..Nu-1 (blocking zeroes the rest)
    for i in range(nz):
        if np.isfinite(du_max[i % nu]):
            G_rows.append(np.append(Dm[i], 0.0))
            g_vals.append(du_max[i % nu] + d0[i])
        if np.isfinite(du_min[i % nu]):
            G_rows.append(np.append(-Dm[i], 0.0))
            g_vals.append(-du_min[i % nu] - d0[i])

    A_ineq = np.vstack(G_rows) if G_rows else None
    b_ineq = np.asarray(g_vals) if g_vals else None

    lower = np.append(np.tile(u_min, Nu), 0.0)
    upper = np.append(np.tile(u_max, Nu), np.inf)
    return QpProblem(H=H, f=f, A_ineq=A_ineq, b_ineq=b_ineq,
                     lower=lower, upper=upper)


@dataclass
class MpcStepStats:
    solve_time: float
    status: str
    objective: float
    eps: float
    hessian_shift: float = 0.0


@dataclass
class MpcController:
    config: MpcConfig
    u_prev: np.ndarray
    last_stats: MpcStepStats | None = field(default=None, repr=False)

    def __post_init__(self):
        self.u_prev = np.asarray(self.u_prev, dtype=float).ravel()


def mpc_step(ctrl: MpcController, model: LinearModel, x_t, y_ref, u_ref):
    """Build and solve the per-step QP; apply and remember the first move.

    Timing covers condensation plus the solve, since both repeat every
    sample. Infeasibility is a hard error (output bounds are soft, so it
    indicates contradictory hard input/rate bounds). On max_iter the best
    iterate is applied and flagged in the stats.
    """
    t0 = time.perf_counter()
    problem = build_mpc_qp(model, x_t, ctrl.u_prev, y_ref, u_ref, ctrl.config)
    sol = solve_qp(problem, tol=MPC_QP_TOL)
    elapsed = time.perf_counter() - t0

    if sol.status == "infeasible":
        raise MpcError(
            f"MPC QP infeasible (kkt={sol.kkt_residual:.3e}); "
            "check input and rate bounds for contradiction")

    nu = model.nu
    u = sol.x[:nu].copy()
    _, _, u_min, u_max, du_min, du_max = ctrl.config.bounds(model.ny, nu)
    # The QP is solved to MPC_QP_TOL, so the raw first move can sit a hair
    # outside the hard boxes; the applied input must not. Clamp into the
    # intersection of the input box and the rate window around u_prev
    # (non-empty whenever the QP was feasible).
    lo = np.maximum(u_min, ctrl.u_prev + du_min)
    hi = np.minimum(u_max, ctrl.u_prev + du_max)
    u = np.clip(u, np.minimum(lo, hi), hi)

    stats = MpcStepStats(solve_time=elapsed, status=sol.status,
                         objective=sol.objective, eps=float(sol.x[-1]),
                         hessian_shift=sol.hessian_shift)
    ctrl.u_prev = u.copy()
    ctrl.last_stats = stats
    return u, stats
