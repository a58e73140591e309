import numpy as np

from duio.sdp import FAILED, INFEASIBLE, OPTIMAL, AffineLmi, lmi_violation, solve_lmi_program


def test_from_function_recovers_affine_map():
    fn = lambda x: np.array([[x[0] + 1.0, x[1]], [x[1], 2.0 - x[0]]])
    lmi = AffineLmi.from_function(fn, 2)
    x = np.array([0.3, -0.7])
    np.testing.assert_allclose(lmi.evaluate(x), fn(x))


def test_scalar_program():
    # minimize t subject to t >= 2 and [[t, 1], [1, t]] >= 0  ->  t = 2
    lmis = [
        AffineLmi.from_function(lambda x: np.array([[x[0] - 2.0]]), 1),
        AffineLmi.from_function(lambda x: np.array([[x[0], 1.0], [1.0, x[0]]]), 1),
    ]
    sol = solve_lmi_program([1.0], lmis)
    assert sol.status == OPTIMAL
    assert abs(sol.x[0] - 2.0) < 1e-6
    assert lmi_violation(lmis, sol.x) <= 1e-7


def test_max_eigenvalue_program():
    # min t s.t. t I - S >= 0 gives the largest eigenvalue of S
    S = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]])
    lmi = AffineLmi.from_function(lambda x: x[0] * np.eye(3) - S, 1)
    sol = solve_lmi_program([1.0], [lmi])
    assert abs(sol.x[0] - np.linalg.eigvalsh(S)[-1]) < 1e-6


def test_infeasible_program():
    lmis = [
        AffineLmi.from_function(lambda x: np.array([[x[0] - 1.0]]), 1),
        AffineLmi.from_function(lambda x: np.array([[-x[0]]]), 1),
    ]
    assert solve_lmi_program([0.0], lmis).status == INFEASIBLE


def test_unavailable_solver_list():
    lmi = AffineLmi.from_function(lambda x: np.array([[x[0]]]), 1)
    assert solve_lmi_program([1.0], [lmi], solvers=("NOT_A_SOLVER",)).status == FAILED
