"""Acceptance criteria.

Each test prints one ``PASS``/``FAIL`` line (visible even without ``-s``) and
then asserts at the stated tolerance. Run on its own with::

    pytest tests/test_acceptance.py -v
"""

from decimal import Decimal, getcontext

import numpy as np
import pytest

from apgm.bench_stats import bound_violations, run_suite
from apgm.dual_pgm import SolverOptions, solve
from apgm.mpc_condense import MpcSpec, condense, constant_term, dare, dare_residual, simulate
from apgm.oracle import active_set_solve
from apgm.param_table import build_table, envelope, residual
from apgm.precondition import cholesky, recover, transform
from apgm.randgen import InstanceConfig, instance_seed, random_instance

from instances import oracle_suite

RESULTS = []
ALPHAS = (2, 5, 10, 20)


@pytest.fixture
def verdict(capsys):
    def emit(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        RESULTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


@pytest.fixture(scope="module")
def suite():
    problems = oracle_suite(200, seed=11)
    return [(p, active_set_solve(p)) for p in problems]


@pytest.fixture(scope="module")
def suite_runs(suite):
    runs = {}
    for alpha in ALPHAS:
        table = build_table(alpha, 4096)
        opts = SolverOptions(alpha=alpha, record_history=True)
        runs[alpha] = [solve(p, table, opts) for p, _ in suite]
    return runs


@pytest.fixture(scope="module")
def bench():
    return run_suite(scales=(2, 4, 6, 8), alphas=(2, 20), instances_per_scale=100, seed=0,
                     reference="none", check_bounds=False)


def test_criterion_1_parameter_table(verdict):
    worst_res, lb_ok, mono_ok = 0.0, True, True
    for alpha in range(2, 21):
        t = build_table(alpha, 10_000).taus
        p = np.arange(1, t.size + 1)
        worst_res = max(worst_res, max(residual(alpha, t[i], t[i + 1]) for i in range(t.size - 1)))
        lb_ok &= bool(np.all(t >= (p + alpha - 1) / alpha))
        mono_ok &= bool(np.all(np.diff(t) > 0))
    # closed-form recurrence evaluated in 50-digit decimal arithmetic
    getcontext().prec = 50
    exact = [Decimal(1)]
    for _ in range(9_999):
        exact.append((1 + (1 + 4 * exact[-1] ** 2).sqrt()) / 2)
    gap = float(np.max(np.abs(build_table(2, 10_000).taus - np.array([float(x) for x in exact]))))
    ok = worst_res <= 1e-10 and lb_ok and mono_ok and gap <= 1e-10
    verdict(1, ok, f"max residual {worst_res:.2e}, lower bound {lb_ok}, monotone {mono_ok}, "
                   f"alpha=2 vs closed form {gap:.2e} (tol 1e-10)")
    assert ok


def test_criterion_2_oracle_equivalence(verdict, suite, suite_runs):
    tol = 5e-3
    fails, worst = {}, {}
    for alpha in ALPHAS:
        errs = [np.max(np.abs(r.xi_star - ref.xi)) for (_, ref), r in zip(suite, suite_runs[alpha])]
        fails[alpha] = int(np.sum(np.array(errs) > tol))
        worst[alpha] = float(np.max(errs))
    ok = not any(fails.values())
    detail = ", ".join(f"alpha={a}: {fails[a]}/{len(suite)} over tol (max {worst[a]:.2e})" for a in ALPHAS)
    verdict(2, ok, f"{detail}; tol {tol:g} at stop_tol 1e-3")
    assert ok


def test_criterion_3_fista_bounds(verdict, suite, suite_runs):
    counts = {}
    for alpha in ALPHAS:
        dual = primal = instances = 0
        for (p, ref), r in zip(suite, suite_runs[alpha]):
            d, q = bound_violations(p, r, ref.mu, ref.xi, alpha)
            dual += d
            primal += q
            instances += bool(d or q)
        counts[alpha] = (dual, primal, instances)
    ok = counts[2] == (0, 0, 0)
    reported = ", ".join(f"alpha={a}: {counts[a][2]} instances / {counts[a][0]} dual / {counts[a][1]} primal "
                         f"iterations over bound" for a in ALPHAS[1:])
    verdict(3, ok, f"alpha=2 violations {counts[2][0]} dual, {counts[2][1]} primal over {len(suite)} instances "
                   f"(asserted); reported only: {reported}")
    assert ok


def test_criterion_4_table_trend(verdict, bench):
    rows, ok = [], True
    for s in (2, 4, 6, 8):
        a2, a20 = bench.ave_iter(s, 2), bench.ave_iter(s, 20)
        ok &= a20 <= a2
        rows.append(f"n=m={s}: {a2:.2f} vs {a20:.2f}")
    cut = 1.0 - bench.ave_iter(8, 20) / bench.ave_iter(8, 2)
    ok &= cut >= 0.20
    verdict(4, ok, f"ave_iter alpha=2 vs alpha=20 ({'; '.join(rows)}); reduction at n=m=8 {100 * cut:.1f}% "
                   f"(need >= 20%)")
    assert ok


def test_criterion_5_paired_t(verdict, bench):
    row = bench.ttest(8, "2-20", "iterations")
    wall = bench.ttest(8, "2-20", "time")
    ok = row["M"] == 100 and row["t"] > 3.1
    verdict(5, ok, f"iteration t = {row['t']:.4f} with M = {row['M']} (need > 3.1); "
                   f"wall-time t = {wall['t']:.4f} (reported)")
    assert ok


def _brute_cost(spec, x, u):
    u = u.reshape(spec.N, spec.m)
    xk, total = x.copy(), 0.0
    for k in range(spec.N):
        total += 0.5 * (xk @ spec.Q @ xk + u[k] @ spec.R @ u[k])
        xk = spec.A @ xk + spec.B @ u[k]
    return total + 0.5 * xk @ spec.P @ xk


def test_criterion_6_condensation(verdict):
    rng = np.random.default_rng(6)
    obj_err, cons_mismatch, dare_worst = 0.0, 0, 0.0
    for i in range(50):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        cfg = InstanceConfig(n, m, N=int(rng.integers(1, 7)), seed=instance_seed(6, i), terminal=bool(i % 2))
        spec, x0 = random_instance(cfg)
        dare_worst = max(dare_worst, dare_residual(spec.A, spec.B, spec.Q, spec.R, spec.P))
        qp = condense(spec, x0)
        c = constant_term(spec, x0)
        for _ in range(20):
            u = rng.uniform(-1, 1, qp.n_v) * rng.uniform(0.05, 4.0)
            ref = _brute_cost(spec, x0, u)
            obj_err = max(obj_err, abs(0.5 * u @ qp.H @ u + qp.G @ u + c - ref) / abs(ref))
            xs = simulate(spec, x0, u)[1:]
            us = u.reshape(spec.N, spec.m)
            traj = (np.all(xs @ spec.F.T <= 1) and np.all(us @ spec.Gc.T <= 1)
                    and np.all(spec.Phi @ xs[-1] <= 1))
            if np.min(np.abs(qp.A @ u - qp.B)) > 1e-9:
                cons_mismatch += bool(np.all(qp.A @ u <= qp.B)) != bool(traj)
    spec, x0 = random_instance(InstanceConfig(2, 2, N=5, seed=0, terminal=False))
    qp = condense(spec, x0)
    ok = obj_err <= 1e-8 and cons_mismatch == 0 and dare_worst <= 1e-8 and (qp.n_v, qp.n_c) == (10, 40)
    verdict("6a", ok, f"objective rel. error {obj_err:.2e}, constraint mismatches {cons_mismatch}, "
                      f"max DARE residual {dare_worst:.2e}, vars/cons {qp.n_v}/{qp.n_c}")
    assert ok


def test_criterion_6_scalar_dare(verdict):
    P = dare([[0.5]], [[1.0]], [[1.0]], [[10.0]])[0, 0]
    ok = abs(P - 4.0 / 3.0) <= 1e-10
    verdict("6b", ok, f"scalar DARE P = {P:.15g}, expected 4/3 within 1e-10 "
                      f"(residual of computed P {dare_residual([[0.5]], [[1.0]], [[1.0]], [[10.0]], [[P]]):.1e}; "
                      f"residual of 4/3 {dare_residual([[0.5]], [[1.0]], [[1.0]], [[10.0]], [[4 / 3]]):.1e})")
    assert ok


def test_criterion_7_preconditioning(verdict):
    rng = np.random.default_rng(7)
    worst, rt_worst = 0.0, 0.0
    for i in range(50):
        n = (2, 4, 6, 8)[i % 4]
        spec, x0 = random_instance(InstanceConfig(n, n, seed=instance_seed(7, i), terminal=False,
                                                  x0_radius=1.0, slater="lp"))
        qp = condense(spec, x0)
        t, factor = transform(qp)
        a = solve(qp).xi_star
        b = recover(factor, solve(t).xi_star)
        worst = max(worst, float(np.max(np.abs(a - b))))
        xi = rng.standard_normal(qp.n_v)
        rt_worst = max(rt_worst, float(np.max(np.abs(recover(cholesky(qp.H), cholesky(qp.H).Z @ xi) - xi))))
    ok = worst <= 5e-3 and rt_worst <= 1e-12
    verdict(7, ok, f"max solution gap {worst:.2e} (tol 5e-3), round-trip error {rt_worst:.2e} (tol 1e-12)")
    assert ok


def test_criterion_8_envelope(verdict):
    decreasing = all(
        all(envelope(b, p) < envelope(a, p) for a, b in zip(range(2, 20), range(3, 21))) for p in range(2, 11))
    flat = all(envelope(a, 1) == 1.0 for a in range(2, 21))
    ok = decreasing and flat
    verdict(8, ok, f"strictly decreasing in alpha for p=2..10: {decreasing}; U_1 = 1 for all alpha: {flat}")
    assert ok
