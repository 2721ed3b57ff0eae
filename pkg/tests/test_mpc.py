import math

import numpy as np
import pytest

from preftune.mpc import (
    LinearizationError,
    LinearModel,
    MpcConfig,
    MpcController,
    MpcError,
    build_mpc_qp,
    discretize,
    expm,
    linearize,
    linearize_discretize,
    mpc_step,
    prediction_matrices,
)
from preftune.plants import CstrInputs, CstrParams, cstr_derivatives, cstr_equilibrium
from preftune.qp import solve_qp

P = CstrParams()


def cstr_f(x, u):
    return cstr_derivatives(x, CstrInputs(Tc=float(u[0])), P)


def full_state(x, u):
    return np.asarray(x, dtype=float)


def random_model(rng, nx=3, nu=2, ny=2, with_drift=False):
    A = rng.uniform(-0.6, 0.6, (nx, nx))
    B = rng.uniform(-1, 1, (nx, nu))
    C = rng.uniform(-1, 1, (ny, nx))
    D = np.zeros((ny, nu))
    drift = rng.uniform(-0.5, 0.5, nx) if with_drift else None
    return LinearModel(A=A, B=B, C=C, D=D,
                       x_bar=rng.uniform(-1, 1, nx),
                       u_bar=rng.uniform(-1, 1, nu),
                       y_bar=rng.uniform(-1, 1, ny),
                       drift=drift)


class TestLinearize:
    def test_linear_plant_exact(self):
        M = np.array([[0.3, -1.2], [0.7, 0.1]])
        N = np.array([[0.5], [-0.4]])

        def f(x, u):
            return M @ x + N @ u

        Ac, Bc, C, D = linearize(f, lambda x, u: x, [0.2, -0.3], [0.1])
        np.testing.assert_allclose(Ac, M, atol=1e-8)
        np.testing.assert_allclose(Bc, N, atol=1e-8)
        np.testing.assert_allclose(C, np.eye(2), atol=1e-8)
        np.testing.assert_allclose(D, np.zeros((2, 1)), atol=1e-10)

    def test_cstr_jacobian_step_refinement(self):
        T_eq, Tc_eq = cstr_equilibrium(8.56, CstrInputs(Tc=P.Tc0), P)
        x0 = np.array([T_eq, 8.56])
        u0 = np.array([Tc_eq])
        Ac, Bc, _, _ = linearize(cstr_f, full_state, x0, u0)

        def fine_jac(fn, at):
            cols = []
            for j in range(at.shape[0]):
                h = max(1e-6, 1e-6 * abs(at[j])) / 10.0
                hi, lo = at.copy(), at.copy()
                hi[j] += h
                lo[j] -= h
                cols.append((fn(hi) - fn(lo)) / (2 * h))
            return np.column_stack(cols)

        A_fine = fine_jac(lambda x: cstr_f(x, u0), x0)
        B_fine = fine_jac(lambda u: cstr_f(x0, u), u0)
        np.testing.assert_allclose(Ac, A_fine, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(Bc, B_fine, rtol=1e-5, atol=1e-8)

    def test_bicycle_hand_derivatives(self):
        from preftune.plants import BicycleInputs, BicycleParams, bicycle_derivatives
        bp = BicycleParams()

        def f(x, u):
            return bicycle_derivatives(x, BicycleInputs(v=float(u[0]), delta_s=float(u[1])), bp)

        v = 13.89
        _, Bc, _, _ = linearize(f, full_state, [0.0, 0.0, 0.0], [v, 0.0])
        assert Bc[0, 0] == pytest.approx(1.0, abs=1e-6)   # dxdot/dv at yaw=0
        assert Bc[2, 1] == pytest.approx(v / bp.L, rel=1e-6)  # dyawdot/ddelta

    def test_nonfinite_raises(self):
        def f(x, u):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.array([1.0 / x[0]])

        with pytest.raises(LinearizationError):
            with np.errstate(invalid="ignore"):
                linearize(f, lambda x, u: x, [0.0], [0.0])


class TestDiscretize:
    def test_integrator(self):
        A, B = discretize(np.zeros((2, 2)), np.eye(2), Ts=0.7)
        np.testing.assert_allclose(A, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(B, 0.7 * np.eye(2), atol=1e-12)

    def test_scalar_decay(self):
        A, _ = discretize([[-1.0]], [[0.0]], Ts=1.0)
        assert A[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_rotation_exponential(self):
        w = 1.3
        R = expm(np.array([[0.0, -w], [w, 0.0]]) * 0.5)
        expected = np.array([[math.cos(0.5 * w), -math.sin(0.5 * w)],
                             [math.sin(0.5 * w), math.cos(0.5 * w)]])
        np.testing.assert_allclose(R, expected, atol=1e-12)

    def test_against_dense_rk4(self):
        rng = np.random.default_rng(8)
        Ac = rng.uniform(-1, 1, (3, 3)) - 1.5 * np.eye(3)
        Bc = rng.uniform(-1, 1, (3, 2))
        Ts = 0.8
        A, B = discretize(Ac, Bc, Ts)

        # fundamental solution and forced response by brute-force RK4
        n_steps = 10_000
        h = Ts / n_steps
        Phi = np.eye(3)
        Psi = np.zeros((3, 2))
        for _ in range(n_steps):
            def fP(M):
                return Ac @ M

            def fp(M):
                return Ac @ M + Bc

            k1 = fP(Phi)
            k2 = fP(Phi + 0.5 * h * k1)
            k3 = fP(Phi + 0.5 * h * k2)
            k4 = fP(Phi + h * k3)
            Phi = Phi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            m1 = fp(Psi)
            m2 = fp(Psi + 0.5 * h * m1)
            m3 = fp(Psi + 0.5 * h * m2)
            m4 = fp(Psi + h * m3)
            Psi = Psi + (h / 6) * (m1 + 2 * m2 + 2 * m3 + m4)
        np.testing.assert_allclose(A, Phi, atol=1e-8)
        np.testing.assert_allclose(B, Psi, atol=1e-8)

    def test_bad_ts(self):
        with pytest.raises(ValueError):
            discretize([[0.0]], [[1.0]], Ts=0.0)


class TestConfig:
    def test_horizon_ordering(self):
        with pytest.raises(ValueError):
            MpcConfig(Ts=0.1, Np=3, Nu=4, Qy=[[1.0]], Qu=[[0.0]], Qdu=[[1.0]])

    def test_psd_enforced(self):
        with pytest.raises(ValueError):
            MpcConfig(Ts=0.1, Np=3, Nu=1, Qy=[[-1.0]], Qu=[[0.0]], Qdu=[[1.0]])

    def test_qeps_positive(self):
        with pytest.raises(ValueError):
            MpcConfig(Ts=0.1, Np=3, Nu=1, Qy=[[1.0]], Qu=[[0.0]], Qdu=[[1.0]], Qeps=0.0)

    def test_bound_ordering_checked(self):
        cfg = MpcConfig(Ts=0.1, Np=3, Nu=1, Qy=[[1.0]], Qu=[[0.0]], Qdu=[[1.0]],
                        u_min=[1.0], u_max=[-1.0])
        with pytest.raises(ValueError):
            cfg.bounds(1, 1)


class TestPrediction:
    def test_condensed_matches_rollout(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            model = random_model(rng, with_drift=trial % 2 == 0)
            Np, Nu = 7, 3
            U = rng.uniform(-2, 2, Nu * model.nu)
            x_t = rng.uniform(-1, 1, model.nx)

            Sx, Su, y_off = prediction_matrices(model, Np, Nu)
            Y = Sx @ (x_t - model.x_bar) + Su @ U + y_off

            x_til = x_t - model.x_bar
            blocks = U.reshape(Nu, model.nu)
            y_roll = []
            for k in range(Np + 1):
                u_k = blocks[min(k, Nu - 1)]
                u_til = u_k - model.u_bar
                y_roll.append(model.C @ x_til + model.D @ u_til + model.y_bar)
                x_til = model.A @ x_til + model.B @ u_til + model.drift
            np.testing.assert_allclose(Y, np.concatenate(y_roll), atol=1e-10)

    def test_drift_advances_output_under_held_input(self):
        # A = I with pure drift: holding u at u_bar must predict y_bar + C*k*drift.
        drift = np.array([0.3, -0.1])
        model = LinearModel(A=np.eye(2), B=[[1.0], [0.0]], C=np.eye(2),
                            D=np.zeros((2, 1)), x_bar=[1.0, 2.0], u_bar=[0.5],
                            y_bar=[1.0, 2.0], drift=drift)
        Np, Nu = 5, 2
        Sx, Su, y_off = prediction_matrices(model, Np, Nu)
        U = np.full(Nu, 0.5)
        Y = (Sx @ np.zeros(2) + Su @ U + y_off).reshape(Np + 1, 2)
        for k in range(Np + 1):
            np.testing.assert_allclose(Y[k], model.y_bar + k * drift, atol=1e-12)


class TestBuildQp:
    def scalar_model(self):
        return LinearModel(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]],
                           x_bar=[0.0], u_bar=[0.0], y_bar=[0.0])

    def test_one_step_analytic(self):
        model = self.scalar_model()
        cfg = MpcConfig(Ts=0.1, Np=1, Nu=1, Qy=[[3.0]], Qu=[[2.0]], Qdu=[[4.0]])
        u_prev, u_ref = 0.6, 1.8
        prob = build_mpc_qp(model, [0.3], [u_prev], [[0.0]], [[u_ref]], cfg)
        sol = solve_qp(prob, tol=1e-8)
        expected = (2.0 * u_ref + 4.0 * u_prev) / 6.0
        assert sol.x[0] == pytest.approx(expected, abs=1e-8)

    def test_zero_weight_output_ignores_its_reference(self):
        rng = np.random.default_rng(1)
        model = random_model(rng, nx=2, nu=1, ny=2)
        cfg = MpcConfig(Ts=0.1, Np=4, Nu=2, Qy=np.diag([0.0, 1.0]),
                        Qu=[[0.0]], Qdu=[[1.0]])
        x_t = [0.3, -0.2]
        ref_a = np.array([[5.0, 1.0]])
        ref_b = np.array([[-7.0, 1.0]])
        pa = build_mpc_qp(model, x_t, [0.0], ref_a, [[0.0]], cfg)
        pb = build_mpc_qp(model, x_t, [0.0], ref_b, [[0.0]], cfg)
        np.testing.assert_array_equal(pa.f, pb.f)
        np.testing.assert_array_equal(pa.H, pb.H)

    def test_equilibrium_rest_is_optimal(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, nx=2, nu=1, ny=2)
        cfg = MpcConfig(Ts=0.1, Np=5, Nu=2, Qy=np.eye(2), Qu=[[1.0]], Qdu=[[1.0]])
        prob = build_mpc_qp(model, model.x_bar, model.u_bar,
                            model.y_bar, model.u_bar, cfg)
        sol = solve_qp(prob, tol=1e-8)
        np.testing.assert_allclose(sol.x[:1], model.u_bar, atol=1e-6)
        assert sol.objective < 1e-9

    def test_reference_padding(self):
        model = self.scalar_model()
        cfg = MpcConfig(Ts=0.1, Np=4, Nu=2, Qy=[[1.0]], Qu=[[0.0]], Qdu=[[1.0]])
        short = build_mpc_qp(model, [0.0], [0.0], np.array([[1.0], [2.0]]), [[0.0]], cfg)
        full = build_mpc_qp(model, [0.0], [0.0],
                            np.array([[1.0], [2.0], [2.0], [2.0]]), [[0.0]], cfg)
        np.testing.assert_array_equal(short.f, full.f)

    def test_dimension_mismatch(self):
        model = self.scalar_model()
        cfg = MpcConfig(Ts=0.1, Np=2, Nu=1, Qy=np.eye(2), Qu=[[0.0]], Qdu=[[1.0]])
        with pytest.raises(ValueError):
            build_mpc_qp(model, [0.0], [0.0], [[0.0, 0.0]], [[0.0]], cfg)


class TestMpcStep:
    def scalar_controller(self, **kw):
        model = LinearModel(A=[[1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]],
                            x_bar=[0.0], u_bar=[0.0], y_bar=[0.0])
        defaults = dict(Ts=0.1, Np=4, Nu=2, Qy=[[1.0]], Qu=[[0.0]], Qdu=[[0.01]])
        defaults.update(kw)
        cfg = MpcConfig(**defaults)
        return MpcController(config=cfg, u_prev=np.zeros(1)), model

    def test_input_bound_clips_optimum(self):
        ctrl, model = self.scalar_controller(u_max=[1.0], u_min=[-1.0])
        u, stats = mpc_step(ctrl, model, [0.0], [[25.0]], [[0.0]])
        assert u[0] == pytest.approx(1.0, abs=1e-7)
        assert stats.status == "optimal"

    def test_rate_bound_clips_optimum(self):
        ctrl, model = self.scalar_controller(du_max=[10.0], du_min=[-10.0])
        u, _ = mpc_step(ctrl, model, [0.0], [[25.0]], [[25.0]])
        assert u[0] == pytest.approx(10.0, abs=1e-7)

    def test_u_prev_updates(self):
        ctrl, model = self.scalar_controller(du_max=[1.0], du_min=[-1.0])
        u1, _ = mpc_step(ctrl, model, [0.0], [[25.0]], [[25.0]])
        u2, _ = mpc_step(ctrl, model, [0.0], [[25.0]], [[25.0]])
        assert u1[0] == pytest.approx(1.0, abs=1e-7)
        assert u2[0] == pytest.approx(2.0, abs=1e-7)

    def test_infeasible_bounds_raise(self):
        ctrl, model = self.scalar_controller(u_min=[5.0], u_max=[10.0],
                                             du_min=[-1.0], du_max=[1.0])
        with pytest.raises(MpcError):
            mpc_step(ctrl, model, [0.0], [[5.0]], [[5.0]])

    def test_soft_bound_slack_covers_violation(self):
        ctrl, model = self.scalar_controller(y_max=[0.5], Qdu=[[100.0]])
        prob = build_mpc_qp(model, [2.0], [0.0], [[2.0]], [[0.0]], ctrl.config)
        sol = solve_qp(prob, tol=1e-8)
        Sx, Su, y_off = prediction_matrices(model, ctrl.config.Np, ctrl.config.Nu)
        Y = Sx @ np.array([2.0]) + Su @ sol.x[:-1] + y_off
        worst = np.max(Y[1:] - 0.5)
        assert worst > 0.0  # the bound really is pressed
        assert sol.x[-1] >= worst - 1e-6

    def test_cstr_regulation_to_equilibrium(self):
        T_eq, Tc_eq = cstr_equilibrium(8.56, CstrInputs(Tc=P.Tc0), P)
        x_eq = np.array([T_eq, 8.56])
        u_eq = np.array([Tc_eq])
        model = linearize_discretize(cstr_f, full_state, x_eq, u_eq, Ts=0.25)
        cfg = MpcConfig(Ts=0.25, Np=8, Nu=3, Qy=np.diag([0.0, 1.0]),
                        Qu=[[0.0]], Qdu=[[0.1]],
                        u_min=[284.0], u_max=[310.0],
                        du_min=[-10.0], du_max=[10.0])
        ctrl = MpcController(config=cfg, u_prev=u_eq.copy())

        x_til = np.array([1.0, -0.5])  # start off the equilibrium
        u = u_eq.copy()
        for _ in range(150):
            x_t = x_eq + x_til
            u, _ = mpc_step(ctrl, model, x_t, x_eq, u_eq)
            x_til = model.A @ x_til + model.B @ (u - u_eq)
        assert abs(u[0] - Tc_eq) <= 1e-3
        assert np.max(np.abs(x_til)) <= 1e-2

    def test_hard_bounds_never_violated_random(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            model = random_model(rng, nx=2, nu=1, ny=1)
            u_lo = float(rng.uniform(-2, -0.5))
            u_hi = float(rng.uniform(0.5, 2))
            du = float(rng.uniform(0.1, 1.5))
            cfg = MpcConfig(Ts=0.1, Np=5, Nu=2, Qy=[[1.0]], Qu=[[0.0]],
                            Qdu=[[0.5]], u_min=[u_lo], u_max=[u_hi],
                            du_min=[-du], du_max=[du])
            u_prev = np.array([rng.uniform(u_lo, u_hi)])
            ctrl = MpcController(config=cfg, u_prev=u_prev.copy())
            u, stats = mpc_step(ctrl, model, rng.uniform(-3, 3, 2),
                                rng.uniform(-3, 3, 1), [0.0])
            assert u_lo - 1e-9 <= u[0] <= u_hi + 1e-9
            assert abs(u[0] - u_prev[0]) <= du + 1e-6
            assert stats.solve_time > 0.0
