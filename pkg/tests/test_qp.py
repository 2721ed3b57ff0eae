import numpy as np
import pytest

from preftune.qp import QpProblem, kkt_residual, solve_qp

from oracles import qp_by_enumeration, random_strictly_convex_qp


def test_unconstrained_scalar():
    sol = solve_qp(QpProblem(H=np.array([[1.0]]), f=np.array([-1.0])))
    assert sol.status == "optimal"
    assert abs(sol.x[0] - 1.0) <= 1e-10
    assert abs(sol.objective - (-0.5)) <= 1e-10


def test_single_active_bound_and_multiplier():
    prob = QpProblem(H=np.array([[1.0]]), f=np.array([-1.0]),
                     A_ineq=np.array([[1.0]]), b_ineq=np.array([0.5]))
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert abs(sol.x[0] - 0.5) <= 1e-9
    assert abs(sol.ineq_multipliers[0] - 0.5) <= 1e-8


def test_infeasible_pair_detected():
    prob = QpProblem(H=np.eye(1), f=np.zeros(1),
                     A_ineq=np.array([[1.0], [-1.0]]), b_ineq=np.array([-1.0, -1.0]))
    sol = solve_qp(prob)
    assert sol.status == "infeasible"
    assert sol.kkt_residual > 0.1


def test_equality_constraint():
    prob = QpProblem(H=np.eye(2), f=np.zeros(2),
                     A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [0.5, 0.5], atol=1e-9)


def test_equality_infeasible():
    prob = QpProblem(H=np.eye(2), f=np.zeros(2),
                     A_eq=np.array([[1.0, 0.0], [1.0, 0.0]]), b_eq=np.array([0.0, 1.0]))
    sol = solve_qp(prob)
    assert sol.status == "infeasible"


def test_equality_pins_solution():
    prob = QpProblem(H=np.eye(2), f=np.array([3.0, -2.0]),
                     A_eq=np.eye(2), b_eq=np.array([0.3, -0.7]))
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [0.3, -0.7], atol=1e-10)


def test_box_bounds():
    prob = QpProblem(H=np.eye(2), f=np.array([-10.0, 10.0]),
                     lower=np.array([-1.0, -1.0]), upper=np.array([1.0, 1.0]))
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [1.0, -1.0], atol=1e-9)


def test_partial_box_with_infinities():
    prob = QpProblem(H=np.eye(2), f=np.array([-10.0, -1.0]),
                     lower=np.array([-np.inf, -np.inf]),
                     upper=np.array([2.0, np.inf]))
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [2.0, 1.0], atol=1e-9)


def test_redundant_duplicate_row_harmless():
    rng = np.random.default_rng(1)
    H, f, G, g = random_strictly_convex_qp(rng, n_max=4, m_max=5)
    base = solve_qp(QpProblem(H=H, f=f, A_ineq=G, b_ineq=g))
    dup = solve_qp(QpProblem(H=H, f=f,
                             A_ineq=np.vstack([G, G[:1]]) if G.shape[0] else G,
                             b_ineq=np.concatenate([g, g[:1]]) if G.shape[0] else g))
    assert np.max(np.abs(base.x - dup.x)) <= 1e-8


def test_semidefinite_hessian_gets_shift():
    H = np.array([[1.0, 0.0], [0.0, 0.0]])
    prob = QpProblem(H=H, f=np.array([0.0, 1.0]),
                     lower=np.array([-np.inf, 0.0]), upper=None)
    sol = solve_qp(prob)
    assert sol.hessian_shift == pytest.approx(1e-9)
    assert sol.status == "optimal"
    assert abs(sol.x[1]) <= 1e-8


def test_indefinite_hessian_rejected():
    H = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        solve_qp(QpProblem(H=H, f=np.zeros(2)))


def test_asymmetric_hessian_rejected():
    H = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        solve_qp(QpProblem(H=H, f=np.zeros(2)))


def test_nan_rejected():
    with pytest.raises(ValueError):
        solve_qp(QpProblem(H=np.eye(1), f=np.array([np.nan])))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        solve_qp(QpProblem(H=np.eye(2), f=np.zeros(3)))
    with pytest.raises(ValueError):
        solve_qp(QpProblem(H=np.eye(2), f=np.zeros(2),
                           A_ineq=np.ones((1, 3)), b_ineq=np.ones(1)))


def test_max_iter_status():
    rng = np.random.default_rng(3)
    H, f, G, g = random_strictly_convex_qp(rng, n_max=6, m_max=8)
    while G.shape[0] < 4:
        H, f, G, g = random_strictly_convex_qp(rng, n_max=6, m_max=8)
    sol = solve_qp(QpProblem(H=H, f=f, A_ineq=G, b_ineq=g - 5.0), max_iter=1)
    assert sol.status in ("max_iter", "infeasible", "optimal")
    assert np.all(np.isfinite(sol.x))


def test_matches_enumeration_oracle():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(60):
        H, f, G, g = random_strictly_convex_qp(rng)
        sol = solve_qp(QpProblem(H=H, f=f, A_ineq=G, b_ineq=g))
        ref = qp_by_enumeration(H, f, G, g)
        assert ref is not None
        assert sol.status == "optimal"
        assert np.max(np.abs(sol.x - ref[0])) <= 1e-5
        assert sol.kkt_residual <= 1e-6
        checked += 1
    assert checked == 60


def test_kkt_contract_on_optimal_solutions():
    rng = np.random.default_rng(7)
    for _ in range(40):
        H, f, G, g = random_strictly_convex_qp(rng)
        sol = solve_qp(QpProblem(H=H, f=f, A_ineq=G, b_ineq=g), tol=1e-8)
        assert sol.status == "optimal"
        res = kkt_residual(H, f, G, g, None, None, sol.x, sol.ineq_multipliers, np.zeros(0))
        assert res <= 1e-6
        # multipliers nonnegative, complementary slackness tight
        assert np.min(sol.ineq_multipliers, initial=0.0) >= -1e-9
        if G.shape[0]:
            s = G @ sol.x - g
            assert np.max(np.abs(sol.ineq_multipliers * s)) <= 1e-6


def test_resolve_is_deterministic():
    rng = np.random.default_rng(9)
    H, f, G, g = random_strictly_convex_qp(rng)
    a = solve_qp(QpProblem(H=H, f=f, A_ineq=G, b_ineq=g))
    b = solve_qp(QpProblem(H=H, f=f, A_ineq=G, b_ineq=g))
    assert np.array_equal(a.x, b.x)


def test_mixed_equality_inequality():
    # minimize distance to (2, 2) on the simplex x1 + x2 = 1, x >= 0
    prob = QpProblem(H=2.0 * np.eye(2), f=np.array([-4.0, -4.0]),
                     A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]),
                     lower=np.zeros(2))
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [0.5, 0.5], atol=1e-8)
    # asymmetric target pushes to a vertex
    prob = QpProblem(H=2.0 * np.eye(2), f=np.array([-8.0, 0.0]),
                     A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]),
                     lower=np.zeros(2))
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [1.0, 0.0], atol=1e-8)
