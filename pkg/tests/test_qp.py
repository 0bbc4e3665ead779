import numpy as np
import pytest

from backup_shield.errors import QpStallError
from backup_shield.qp import QpProblem, Status, brute_force_oracle, least_violation, phase_one, solve


def random_feasible(rng, m):
    """Random rows around a known interior point so the problem is feasible by construction."""
    k = int(rng.integers(1, 8))
    G = rng.normal(size=(k, m))
    anchor = rng.uniform(-0.5, 0.5, m)
    w = G @ anchor + rng.uniform(0.0, 0.5, k)
    return QpProblem(rng.uniform(-1.5, 1.5, m), G, w)


def test_unconstrained():
    sol = solve(QpProblem([0.3], np.zeros((0, 1)), []))
    assert sol.status is Status.OPTIMAL
    assert sol.u_star[0] == 0.3
    assert sol.active_set == []


def test_interval_intersection():
    sol = solve(QpProblem([0.0], [[1.0], [-1.0], [-1.0]], [1.2, 1.1, -0.5]))
    assert sol.status is Status.OPTIMAL
    assert sol.u_star[0] == pytest.approx(0.5, abs=1e-14)
    assert sol.active_set == [2]


def test_halfspace_projection():
    sol = solve(QpProblem([1.0, 1.0], [[1.0, 1.0]], [1.0]))
    np.testing.assert_allclose(sol.u_star, [0.5, 0.5], atol=1e-14)
    assert sol.kkt_residual < 1e-12


def test_oracle_agreement_on_random_problems(rng):
    box = (-2.0, 2.0)
    for _ in range(40):
        m = int(rng.integers(1, 3))
        p = random_feasible(rng, m)
        sol = solve(p)
        assert sol.status is Status.OPTIMAL
        ref = brute_force_oracle(p, box, 201)
        assert ref is not None
        slack = 2 * (box[1] - box[0]) / 201
        obj, obj_ref = np.sum((sol.u_star - p.u_d) ** 2), np.sum((ref - p.u_d) ** 2)
        assert obj <= obj_ref + 1e-12
        assert np.linalg.norm(sol.u_star - ref) <= slack * np.sqrt(m) + 1e-9 or obj_ref - obj < 4 * slack


def test_infeasible_verdicts_agree():
    p = QpProblem([0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    assert solve(p).status is Status.INFEASIBLE
    assert brute_force_oracle(p, (-0.5, 0.5)) is None
    sol = solve(p)
    assert np.all(np.isnan(sol.u_star)) and sol.max_violation == pytest.approx(1.0)


def test_infeasible_zero_row():
    p = QpProblem([0.0, 0.0], [[0.0, 0.0]], [-1.0])
    assert solve(p).status is Status.INFEASIBLE


def test_certificates(rng):
    for _ in range(50):
        p = random_feasible(rng, int(rng.integers(1, 3)))
        sol = solve(p)
        assert np.all(p.G @ sol.u_star <= p.w + 1e-8)
        assert sol.kkt_residual < 1e-8
        for j in sol.active_set:
            assert p.G[j] @ sol.u_star == pytest.approx(p.w[j], abs=1e-8)


def test_redundant_and_duplicate_rows():
    G = np.array([[1.0], [1.0], [2.0], [-1.0]])
    w = np.array([0.5, 0.5, 1.0, 0.0])
    sol = solve(QpProblem([3.0], G, w))
    assert sol.status is Status.OPTIMAL
    assert sol.u_star[0] == pytest.approx(0.5)


def test_determinism(rng):
    p = random_feasible(rng, 2)
    a, b = solve(p), solve(p)
    assert a.u_star.tobytes() == b.u_star.tobytes()
    assert a.active_set == b.active_set


def test_phase_one_and_least_violation():
    p = QpProblem([0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    _, v = phase_one(p)
    assert v == pytest.approx(1.0)
    u, v = least_violation(p)
    assert u[0] == pytest.approx(0.0, abs=1e-9) and v == pytest.approx(1.0)
    u, v = least_violation(QpProblem([2.0], [[1.0]], [1.0]))
    assert v == 0.0 and u[0] == pytest.approx(1.0, abs=1e-8)


def test_problem_validation():
    with pytest.raises(ValueError):
        QpProblem([0.0], [[1.0], [2.0]], [1.0])
    with pytest.raises(ValueError):
        QpProblem([0.0], [[np.inf]], [1.0])


def test_oracle_preconditions():
    p = QpProblem([0.0, 0.0, 0.0], np.zeros((0, 3)), [])
    with pytest.raises(ValueError):
        brute_force_oracle(p, (-1, 1))
    with pytest.raises(ValueError):
        brute_force_oracle(QpProblem([0.0], [[1.0]], [1.0]), (-1, 1), grid_points=50)
    u = brute_force_oracle(QpProblem([0.013], np.zeros((0, 1)), []), (-1, 1), 201)
    assert u[0] == pytest.approx(0.01)


def test_stall_error_is_runtime_error():
    assert issubclass(QpStallError, RuntimeError)
