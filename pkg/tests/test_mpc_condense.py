import math

import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

from apgm.dual_pgm import SolverOptions, min_eigenvalue, solve
from apgm.mpc_condense import (
    DareError,
    MpcSpec,
    SlaterViolation,
    condense,
    constant_term,
    dare,
    dare_residual,
    first_input,
    prediction_matrices,
    simulate,
)
from apgm.randgen import InstanceConfig, random_instance


def scalar_spec(P=4.0 / 3.0, **kw):
    base = dict(A=[[0.5]], B=[[1.0]], F=[[1.0]], Gc=[[1.0]], Q=[[1.0]], R=[[10.0]], N=2, P=P,
                Phi=np.zeros((0, 1)))
    base.update(kw)
    return MpcSpec(**base)


def brute_cost(spec, x, u):
    """Independent stage-by-stage cost written from the definition."""
    u = np.asarray(u).reshape(spec.N, spec.m)
    xk = np.asarray(x, float)
    total = 0.0
    for k in range(spec.N):
        total += 0.5 * xk @ spec.Q @ xk + 0.5 * u[k] @ spec.R @ u[k]
        xk = spec.A @ xk + spec.B @ u[k]
    return total + 0.5 * xk @ spec.P @ xk


class TestPrediction:
    def test_scalar(self):
        pm = prediction_matrices([[0.5]], [[1.0]], 2)
        np.testing.assert_allclose(pm.A1, [[0.5], [0.25]])
        np.testing.assert_allclose(pm.A2, [[1.0, 0.0], [0.5, 1.0]])

    def test_single_step(self, rng):
        A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
        pm = prediction_matrices(A, B, 1)
        np.testing.assert_allclose(pm.A1, A)
        np.testing.assert_allclose(pm.A2, B)

    def test_nilpotent(self, rng):
        B = rng.standard_normal((2, 1))
        pm = prediction_matrices(np.zeros((2, 2)), B, 3)
        assert not pm.A1.any()
        np.testing.assert_allclose(pm.A2, np.kron(np.eye(3), B))

    def test_block_structure(self, rng):
        A, B, N = rng.standard_normal((3, 3)), rng.standard_normal((3, 2)), 4
        pm = prediction_matrices(A, B, N)
        for i in range(N):
            np.testing.assert_allclose(pm.A1[3 * i:3 * i + 3], np.linalg.matrix_power(A, i + 1))
            for j in range(N):
                blk = pm.A2[3 * i:3 * i + 3, 2 * j:2 * j + 2]
                expect = np.linalg.matrix_power(A, i - j) @ B if i >= j else np.zeros((3, 2))
                np.testing.assert_allclose(blk, expect, atol=1e-14)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            prediction_matrices(np.eye(2), np.ones((3, 1)), 2)
        with pytest.raises(ValueError):
            prediction_matrices(np.eye(2), np.ones((2, 1)), 0)


class TestDare:
    def test_scalar_quadratic_root(self):
        # P = 1 + P/4 - (P/2)^2 / (10 + P)  <=>  P^2 + 6.5 P - 10 = 0
        root = (-6.5 + math.sqrt(6.5**2 + 40.0)) / 2.0
        P = dare([[0.5]], [[1.0]], [[1.0]], [[10.0]])
        assert P[0, 0] == pytest.approx(root, rel=1e-10)
        assert P[0, 0] == pytest.approx(solve_discrete_are(0.5, 1.0, 1.0, 10.0)[0, 0], rel=1e-10)

    def test_zero_A(self, rng):
        Q = np.diag(rng.uniform(1, 3, 3))
        np.testing.assert_allclose(dare(np.zeros((3, 3)), rng.standard_normal((3, 2)), Q, np.eye(2)), Q)

    def test_lyapunov_series(self, rng):
        A = rng.uniform(-1, 1, (3, 3))
        A *= 0.8 / np.max(np.abs(np.linalg.eigvals(A)))
        Q = np.eye(3)
        series = sum(np.linalg.matrix_power(A.T, k) @ Q @ np.linalg.matrix_power(A, k) for k in range(400))
        P = dare(A, np.zeros((3, 1)), Q, np.eye(1))
        np.testing.assert_allclose(P, series, rtol=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_plants(self, seed):
        spec, _ = random_instance(InstanceConfig(4, 3, seed=seed))
        assert dare_residual(spec.A, spec.B, spec.Q, spec.R, spec.P) <= 1e-8
        np.testing.assert_allclose(spec.P, solve_discrete_are(spec.A, spec.B, spec.Q, spec.R), rtol=1e-8)
        assert np.all(np.linalg.eigvalsh(spec.P) > 0)

    def test_non_convergence_names_seed(self):
        with pytest.raises(DareError, match="seed 42"):
            dare([[2.0]], [[1.0]], [[1.0]], [[1.0]], max_iter=2, seed=42)

    def test_spec_defaults_to_dare(self):
        spec = scalar_spec(P=None)
        assert spec.P_from_dare
        assert dare_residual(spec.A, spec.B, spec.Q, spec.R, spec.P) <= 1e-8


class TestCondense:
    def test_scalar_hand_example(self):
        qp = condense(scalar_spec(), [0.0])
        np.testing.assert_allclose(qp.H, [[34 / 3, 2 / 3], [2 / 3, 34 / 3]], rtol=1e-14)
        np.testing.assert_array_equal(qp.G, [0.0, 0.0])
        np.testing.assert_array_equal(qp.B, np.ones(4))
        assert (qp.n_v, qp.n_c) == (2, 4)

    def test_zero_state(self, rng):
        spec, _ = random_instance(InstanceConfig(3, 2, seed=4, terminal=False))
        qp = condense(spec, np.zeros(3))
        assert not qp.G.any()
        np.testing.assert_array_equal(qp.B, np.ones(qp.n_c))

    def test_dimensions(self):
        for terminal, n_c in ((True, 44), (False, 40)):
            spec, x0 = random_instance(InstanceConfig(2, 2, N=5, seed=1, terminal=terminal))
            qp = condense(spec, x0)
            assert qp.n_v == 10 and qp.n_c == n_c == spec.n_c

    @pytest.mark.parametrize("seed", range(5))
    def test_objective_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        spec, x0 = random_instance(InstanceConfig(2, 2, N=4, seed=seed))
        qp = condense(spec, x0)
        c = constant_term(spec, x0)
        for _ in range(20):
            u = rng.uniform(-1, 1, qp.n_v)
            got = 0.5 * u @ qp.H @ u + qp.G @ u + c
            assert got == pytest.approx(brute_cost(spec, x0, u), rel=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_constraint_equivalence(self, seed):
        rng = np.random.default_rng(100 + seed)
        spec, x0 = random_instance(InstanceConfig(2, 2, N=3, seed=seed))
        qp = condense(spec, x0)
        inside = outside = 0
        for _ in range(200):
            u = rng.uniform(-1, 1, qp.n_v) * rng.uniform(0.05, 6.0)
            xs = simulate(spec, x0, u)[1:]
            us = u.reshape(spec.N, spec.m)
            traj_ok = (np.all(xs @ spec.F.T <= 1) and np.all(us @ spec.Gc.T <= 1)
                       and np.all(spec.Phi @ xs[-1] <= 1))
            qp_ok = bool(np.all(qp.A @ u <= qp.B))
            margin = np.min(np.abs(qp.A @ u - qp.B))
            if margin > 1e-9:
                assert qp_ok == traj_ok
            inside += qp_ok
            outside += not qp_ok
        assert inside and outside

    def test_curvature_dominates_R(self):
        spec, x0 = random_instance(InstanceConfig(3, 2, seed=9))
        qp = condense(spec, x0)
        assert min_eigenvalue(qp) >= np.linalg.eigvalsh(spec.R)[0] - 1e-9

    def test_slater_violation_names_row(self):
        # x_1 = 5 + u <= 1 needs u <= -4, while the input box needs u >= -1
        spec = scalar_spec(F=[[1.0], [-1.0]], Gc=[[1.0], [-1.0]], N=1)
        with pytest.raises(SlaterViolation) as exc:
            condense(spec, [10.0])
        assert exc.value.row is not None and "row" in str(exc.value)

    def test_wrong_state_length(self):
        with pytest.raises(ValueError):
            condense(scalar_spec(), [0.0, 1.0])

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            scalar_spec(Q=[[-1.0]])

    def test_to_dict_round_trip(self):
        spec = scalar_spec()
        again = MpcSpec(**spec.to_dict())
        np.testing.assert_array_equal(condense(again, [0.3]).H, condense(spec, [0.3]).H)


class TestFirstInput:
    def test_scalar(self):
        assert first_input(np.array([0.7, -0.2]), 1) == pytest.approx([0.7])

    def test_whole_vector(self):
        np.testing.assert_array_equal(first_input(np.array([1.0, 2.0]), 2), [1.0, 2.0])

    def test_bad_m(self):
        with pytest.raises(ValueError):
            first_input(np.zeros(5), 2)

    def test_lqr_equivalence(self):
        spec, _ = random_instance(InstanceConfig(3, 2, N=5, seed=3, terminal=False))
        # tiny state keeps every constraint inactive
        x0 = np.array([0.01, -0.02, 0.015])
        qp = condense(spec, x0)
        res = solve(qp, opts=SolverOptions(stop_tol=1e-9))
        assert np.all(qp.A @ res.xi_star < qp.B)
        K = np.linalg.solve(spec.R + spec.B.T @ spec.P @ spec.B, spec.B.T @ spec.P @ spec.A)
        np.testing.assert_allclose(first_input(res, spec.m), -K @ x0, atol=1e-3 * 0.01)
