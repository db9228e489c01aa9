import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import solve_continuous_lyapunov

from lpv_lanekeep.lmi_solver import (FEASIBLE, NOT_FOUND, LmiProblem, check_solution, eig_extreme,
                                     schur_negdef_check, solve, spectral_project,
                                     symmetric_eigenvalues, tridiagonalize, violation)


def sturm_count(d, e, x):
    """Number of eigenvalues of the tridiagonal (d, e) below x."""
    count, q = 0, 1.0
    for i in range(len(d)):
        q = d[i] - x - (e[i - 1] ** 2 / q if i > 0 else 0.0)
        if q == 0.0:
            q = 1e-300
        count += q < 0
    return count


def bisection_eigenvalues(M, tol=1e-13):
    """Oracle: Sturm-sequence bisection on the Householder tridiagonal form."""
    d, e = tridiagonalize(M)
    radius = np.max(np.abs(d)) + 2 * (np.max(np.abs(e)) if e.size else 0.0) + 1.0
    out = []
    for k in range(len(d)):
        lo, hi = -radius, radius
        while hi - lo > tol * radius:
            mid = 0.5 * (lo + hi)
            if sturm_count(d, e, mid) > k:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.array(out)


def random_symmetric(n, seed, scale=1.0):
    A = np.random.default_rng(seed).standard_normal((n, n)) * scale
    return 0.5 * (A + A.T)


@given(st.integers(1, 9), st.integers(0, 10_000), st.sampled_from([1e-3, 1.0, 1e4]))
def test_eigenvalues_match_lapack(n, seed, scale):
    M = random_symmetric(n, seed, scale)
    ours = symmetric_eigenvalues(M)
    ref = np.linalg.eigvalsh(M)
    np.testing.assert_allclose(ours, ref, atol=1e-12 * scale * n)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_eigenvalues_match_bisection_oracle(n):
    for seed in range(5):
        M = random_symmetric(n, 100 + seed)
        np.testing.assert_allclose(symmetric_eigenvalues(M), bisection_eigenvalues(M), atol=1e-10)


def test_tridiagonalization_preserves_spectrum():
    M = random_symmetric(7, 3)
    d, e = tridiagonalize(M)
    T = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    np.testing.assert_allclose(np.linalg.eigvalsh(T), np.linalg.eigvalsh(M), atol=1e-12)


def test_eigenvalues_of_special_matrices():
    np.testing.assert_allclose(symmetric_eigenvalues(np.diag([3.0, -1.0, 2.0])), [-1, 2, 3])
    np.testing.assert_allclose(symmetric_eigenvalues(np.zeros((3, 3))), 0.0)
    np.testing.assert_allclose(symmetric_eigenvalues(np.ones((4, 4))), [0, 0, 0, 4], atol=1e-14)
    # repeated eigenvalues
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 5)))[0]
    M = Q @ np.diag([1, 1, 1, 2, 2.0]) @ Q.T
    np.testing.assert_allclose(symmetric_eigenvalues(M), [1, 1, 1, 2, 2], atol=1e-13)
    assert eig_extreme(np.array([[5.0]])) == (5.0, 5.0)


def test_eigenvalues_reject_bad_input():
    with pytest.raises(ValueError):
        symmetric_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        symmetric_eigenvalues(np.ones((2, 3)))


@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_schur_check_agrees_with_full_eigenvalues(seed, margin):
    rng = np.random.default_rng(seed)
    n, k = 3, 2
    M = random_symmetric(n + k, seed) - rng.uniform(0, 4) * np.eye(n + k)
    X, Y, Z = M[:n, :n], M[:n, n:], M[n:, n:]
    full = np.linalg.eigvalsh(M)[-1] < -margin
    lam = np.linalg.eigvalsh(M)[-1]
    if abs(lam + margin) > 1e-9:
        assert schur_negdef_check(X, Y, Z, margin) == full


def test_spectral_projection_and_violation():
    S = np.diag([1.0, -2.0, 0.5])
    P = spectral_project(S, 0.1)
    np.testing.assert_allclose(P, np.diag([-0.1, -2.0, -0.1]))
    assert violation(np.array([1.0, -2.0, 0.5]), 0.0) == pytest.approx(1.25)
    assert violation(np.array([-1.0, -2.0]), 0.0) == 0.0


def lyapunov_problem(A):
    n = A.shape[0]
    prob = LmiProblem()
    prob.symmetric("P", n)
    prob.add("P>=I", lambda v: v["P"] - np.eye(n), "pos")
    prob.add("lyap", lambda v: A.T @ v["P"] + v["P"] @ A)
    return prob


def test_lyapunov_lmi_feasible_for_stable_matrix():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((4, 4))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(4)
    prob = lyapunov_problem(A)
    sol = solve(prob)
    assert sol.status == FEASIBLE
    slack = check_solution(prob, sol.z)
    assert all(v >= 0 for v in slack.values())
    # oracle: the solution certifies stability like the Lyapunov-equation one does
    P_ref = solve_continuous_lyapunov(A.T, -np.eye(4))
    assert np.all(np.linalg.eigvalsh(P_ref) > 0)
    P = sol.values["P"]
    assert np.linalg.eigvalsh(A.T @ P + P @ A)[-1] < 0


def test_lyapunov_lmi_not_found_for_unstable_matrix():
    A = np.diag([0.3, -1.0, -2.0])
    sol = solve(lyapunov_problem(A), budget=3000)
    assert sol.status == NOT_FOUND
    assert not sol.feasible
    assert sol.worst[1] > 0


def test_scalar_examples():
    prob = LmiProblem()
    prob.scalar("p")
    prob.add("p>0", lambda v: np.array([[v["p"]]]), "pos")
    prob.add("3p<0", lambda v: np.array([[3 * v["p"]]]))
    assert solve(prob, budget=2000).status == NOT_FOUND

    prob = LmiProblem()
    prob.scalar("p")
    prob.add("p>0", lambda v: np.array([[v["p"]]]), "pos")
    prob.add("-p<0", lambda v: np.array([[-2 * v["p"] + v["p"]]]))
    sol = solve(prob)
    assert sol.feasible and sol.values["p"] > 0


def test_solver_is_deterministic():
    A = np.array([[-1.0, 2.0], [0.0, -0.5]])
    a, b = solve(lyapunov_problem(A)), solve(lyapunov_problem(A))
    np.testing.assert_array_equal(a.z, b.z)
    assert a.iterations == b.iterations


def test_alternating_projection_variant_also_solves_easy_problem():
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    assert solve(lyapunov_problem(A), method="ap").feasible
    with pytest.raises(ValueError):
        solve(lyapunov_problem(A), method="newton")


def test_pack_unpack_and_dump_roundtrip():
    prob = LmiProblem()
    prob.symmetric("Y", 3)
    prob.matrix("M", 1, 3)
    prob.scalar("t")
    prob.add("c", lambda v: v["Y"] + v["t"] * np.eye(3))
    vals = {"Y": random_symmetric(3, 1), "M": np.array([[1.0, 2.0, 3.0]]), "t": 0.5}
    got = prob.unpack(prob.pack(vals))
    np.testing.assert_allclose(got["Y"], vals["Y"])
    np.testing.assert_array_equal(got["M"], vals["M"])
    assert got["t"] == 0.5
    back = LmiProblem.load(prob.dump())
    assert back.n_dof == prob.n_dof
    z = np.arange(prob.n_dof, dtype=float)
    np.testing.assert_array_equal(back.constraints[0].evaluate(z), prob.constraints[0].evaluate(z))


def test_constraint_validation():
    prob = LmiProblem()
    prob.matrix("M", 2, 2)
    with pytest.raises(ValueError):
        prob.add("asym", lambda v: v["M"])
    with pytest.raises(ValueError):
        prob.add("bad", lambda v: np.zeros((2, 2)), "indefinite")
