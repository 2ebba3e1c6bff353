import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from dsfas.conic import (
    Cone,
    ConicError,
    ConicProblem,
    hermitian_embed,
    hermitian_from_embedding,
    smat,
    solve,
    svec,
    svec_dim,
)


def test_one_dimensional_lp():
    sol = solve(ConicProblem([1.0], [[1.0]], [1.0], [Cone("l", 1)]))
    assert sol.ok
    assert sol.x[0] == pytest.approx(1.0, abs=1e-8)


def _min_eig_problem(C):
    n = C.shape[0]
    return ConicProblem(svec(C), svec(np.eye(n))[None, :], [1.0], [Cone("s", n)])


def test_min_trace_is_smallest_eigenvalue():
    rng = np.random.default_rng(0)
    for n in (2, 5, 9):
        C = rng.standard_normal((n, n))
        C = C + C.T
        sol = solve(_min_eig_problem(C))
        assert sol.ok
        assert sol.primal_objective == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-7)


def test_disk_projection():
    rng = np.random.default_rng(1)
    for _ in range(10):
        p = rng.uniform(-3, 3, 2)
        if np.linalg.norm(p) < 1.1:
            continue
        # variables (t, w) and (r, z): w = z - p, r = 1, minimize t
        c = np.zeros(6)
        c[0] = 1.0
        A = np.zeros((3, 6))
        A[0, 1], A[0, 4] = 1.0, -1.0
        A[1, 2], A[1, 5] = 1.0, -1.0
        A[2, 3] = 1.0
        sol = solve(ConicProblem(c, A, [-p[0], -p[1], 1.0], [Cone("q", 3), Cone("q", 3)]))
        assert sol.ok
        assert np.allclose(sol.x[4:], p / np.linalg.norm(p), atol=1e-8)


def test_infeasible_and_unbounded_detection():
    assert solve(ConicProblem([1.0], [[1.0]], [-1.0], [Cone("l", 1)])).status == "infeasible"
    assert solve(ConicProblem([-1.0, 0.0], [[0.0, 1.0]], [1.0], [Cone("l", 2)])).status == "unbounded"


def test_iteration_cap_reports_max_iter():
    rng = np.random.default_rng(2)
    C = rng.standard_normal((6, 6))
    sol = solve(_min_eig_problem(C + C.T), max_iter=2)
    assert sol.status == "max_iter"
    assert np.isfinite(sol.primal_residual)


def test_random_lps_match_linprog():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m, n = 4, 9
        A = rng.standard_normal((m, n))
        x0 = rng.uniform(0.1, 1.0, n)
        b = A @ x0
        c = rng.uniform(0.1, 2.0, n)  # bounded below on x >= 0
        ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        sol = solve(ConicProblem(c, A, b, [Cone("l", n)]))
        assert sol.ok
        assert sol.primal_objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-8)


def test_optimal_certificate_properties():
    rng = np.random.default_rng(4)
    C = rng.standard_normal((5, 5))
    sol = solve(_min_eig_problem(C + C.T))
    assert max(sol.primal_residual, sol.dual_residual, sol.gap) <= 1e-7
    assert abs(sol.x @ sol.s) <= 1e-7 * (1 + abs(sol.primal_objective))
    assert sol.primal_objective == pytest.approx(sol.dual_objective, abs=1e-7 * (1 + abs(sol.primal_objective)))


def _mixed_problem(rng):
    # min c.x over x in R^3_+ x Q^3 x S^3 with two random equality rows
    cones = [Cone("l", 3), Cone("q", 3), Cone("s", 3)]
    n = 3 + 3 + svec_dim(3)
    interior = np.concatenate([np.ones(3), [2.0, 0.3, -0.4], svec(np.eye(3))])
    A = rng.standard_normal((2, n))
    b = A @ interior
    # objective in the dual interior keeps the problem bounded
    c = np.concatenate([rng.uniform(0.5, 1.5, 3), [2.0, 0.2, 0.1], svec(2 * np.eye(3))])
    return ConicProblem(c, A, b, cones)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_objective_scaling_keeps_argmin(seed, scale):
    prob = _mixed_problem(np.random.default_rng(seed))
    base = solve(prob)
    scaled = solve(ConicProblem(prob.c * scale, prob.A, prob.b, prob.cones))
    assert base.ok and scaled.ok
    assert np.allclose(base.x, scaled.x, atol=1e-7)
    assert scaled.primal_objective == pytest.approx(scale * base.primal_objective, rel=1e-6, abs=1e-6)


def test_solver_is_deterministic():
    prob = _mixed_problem(np.random.default_rng(5))
    a, b = solve(prob), solve(prob)
    assert a.x.tobytes() == b.x.tobytes()


def test_svec_roundtrip_and_inner_product():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((5, 5))
    X = X + X.T
    Y = rng.standard_normal((5, 5))
    Y = Y + Y.T
    assert np.allclose(smat(svec(X)), X)
    assert svec(X) @ svec(Y) == pytest.approx(np.trace(X @ Y))


def test_hermitian_embedding_half_factor():
    rng = np.random.default_rng(7)
    B = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    H = B @ B.conj().T
    C = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    C = C + C.conj().T
    E = hermitian_embed(H)
    # eigenvalues double up and traces double
    assert np.allclose(np.sort(np.linalg.eigvalsh(E)), np.sort(np.repeat(np.linalg.eigvalsh(H), 2)))
    assert np.trace(E) == pytest.approx(2 * np.trace(H).real)
    assert np.trace(0.5 * hermitian_embed(C) @ E) == pytest.approx(np.trace(C @ H).real)
    assert np.allclose(hermitian_from_embedding(E), H)


def test_hermitian_psd_problem_through_embedding():
    # max Re tr(C X) over Hermitian X >= 0 with tr X = 1 -> largest eigenvalue of C
    rng = np.random.default_rng(8)
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    C = B + B.conj().T
    c = -svec(0.5 * hermitian_embed(C))
    a = svec(0.5 * hermitian_embed(np.eye(3)))
    sol = solve(ConicProblem(c, a[None, :], [1.0], [Cone("s", 6, embedded=True)]))
    assert sol.ok
    X = hermitian_from_embedding(smat(sol.x, 6))
    assert -sol.primal_objective == pytest.approx(np.linalg.eigvalsh(C)[-1], abs=1e-7)
    assert np.trace(X).real == pytest.approx(1.0, abs=1e-7)


def test_malformed_problems_rejected():
    with pytest.raises(ConicError):
        Cone("x", 2)
    with pytest.raises(ConicError):
        Cone("s", 65)
    with pytest.raises(ConicError):
        Cone("q", 3, embedded=True)
    with pytest.raises(ConicError):
        ConicProblem([1.0, 2.0], [[1.0]], [1.0], [Cone("l", 1)])
    with pytest.raises(ConicError):
        ConicProblem([1.0], [[1.0, 0.0]], [1.0], [Cone("l", 1)])


def test_polish_sharpens_rank_deficient_optimum():
    # without the Newton polish x sits about sqrt(gap) away on this face
    prob = _mixed_problem(np.random.default_rng(141))
    ref = solve(prob, tol=1e-13)
    loose = solve(prob, tol=1e-8)
    assert loose.ok and np.abs(loose.x - ref.x).max() <= 1e-9
    assert loose.gap <= 1e-12
