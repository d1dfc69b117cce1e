"""Benchmark suites over random MPC instances and their summary statistics."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import precondition as pre
from .dual_pgm import (
    SolverOptions,
    StopReason,
    dual_objective,
    solve,
    theoretical_dual_gap_bound,
    theoretical_primal_bound,
)
from .mpc_condense import condense
from .oracle import MAX_CONSTRAINTS, OracleError, active_set_solve
from .param_table import build_table, envelope
from .randgen import InstanceConfig, instance_seed, random_instance

__all__ = [
    "BenchRecord",
    "BenchReport",
    "DegenerateSample",
    "PairedT",
    "SuiteConfig",
    "bound_violations",
    "error_profile",
    "paired_t",
    "reference_solution",
    "run_suite",
    "write_report",
]

ORACLE_LIMIT = 14
REFERENCE_TOL = 1e-10
BOUND_SLACK = 1e-9


class DegenerateSample(ValueError):
    """All paired differences identical; the t statistic is undefined."""


@dataclass(frozen=True)
class PairedT:
    t: float
    mean: float
    sd: float
    M: int


def paired_t(differences):
    """Paired t statistic ``mean / (sd / sqrt(M))`` under a zero-mean null.

    ``sd`` uses the ``M - 1`` divisor. Positive ``t`` means the first method
    of each pair produced the larger values.
    """
    d = np.asarray(differences, dtype=float)
    M = d.size
    if M < 2:
        raise ValueError(f"need at least 2 differences, got {M}")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateSample(f"all {M} differences equal {mean!r}; sd = 0")
    return PairedT(t=mean / (sd / math.sqrt(M)), mean=mean, sd=sd, M=M)


def error_profile(problem, xi, reference_xi):
    """Componentwise ``xi - reference_xi`` and its inf-norm."""
    diff = np.asarray(xi, dtype=float) - np.asarray(reference_xi, dtype=float)
    if diff.shape != (problem.n_v,):
        raise ValueError(f"expected vectors of length {problem.n_v}, got {diff.shape}")
    return diff, float(np.abs(diff).max(initial=0.0))


@dataclass(frozen=True)
class Reference:
    xi: np.ndarray
    mu: np.ndarray
    kind: str  # "oracle" or "high-accuracy"


def reference_solution(problem, mode="auto"):
    """Exact oracle for ``n_c <= 14``, otherwise a tight-tolerance FISTA solve."""
    if mode == "none":
        return None
    if mode == "oracle" or (mode == "auto" and problem.n_c <= ORACLE_LIMIT):
        try:
            sol = active_set_solve(problem, max_constraints=max(MAX_CONSTRAINTS, ORACLE_LIMIT))
            return Reference(sol.xi, sol.mu, "oracle")
        except OracleError:
            if mode == "oracle":
                raise
    res = solve(problem, None, SolverOptions(alpha=2, stop_tol=REFERENCE_TOL))
    return Reference(res.xi_star, res.mu_star, "high-accuracy")


def bound_violations(problem, result, mu_star, xi_star, alpha, mu0=None):
    """Count iterations breaking the dual-gap and primal convergence bounds.

    ``result`` must carry a history. Returns ``(dual, primal)`` counts; both
    are zero when ``mu0`` already equals ``mu_star`` (the bounds collapse to
    zero and are not evaluated).
    """
    hist = result.history
    if hist is None:
        raise ValueError("result has no history; solve with record_history=True")
    mu0 = np.zeros(problem.n_c) if mu0 is None else np.asarray(mu0, dtype=float)
    dist0 = float(np.sum((mu0 - mu_star) ** 2))
    if dist0 == 0.0:
        return 0, 0
    L, sigma = problem.L, problem.sigma_min
    f_star = dual_objective(problem, mu_star)
    scale = 1.0 + abs(f_star)
    dual_bad = primal_bad = 0
    for p in range(1, len(hist["dual_obj"]) + 1):
        gap = hist["dual_obj"][p - 1] - f_star
        if gap > theoretical_dual_gap_bound(alpha, L, dist0, p) * (1 + BOUND_SLACK) + BOUND_SLACK * scale:
            dual_bad += 1
        err = float(np.sum((hist["xi"][p] - xi_star) ** 2))
        bound = theoretical_primal_bound(alpha, L, dist0, sigma, p)
        if err > bound * (1 + BOUND_SLACK) + BOUND_SLACK * (1.0 + float(xi_star @ xi_star)):
            primal_bad += 1
    return dual_bad, primal_bad


@dataclass(frozen=True)
class BenchRecord:
    instance_id: str
    scale: int
    alpha: int
    iterations: int
    elapsed: float
    stop_reason: str
    error: float
    reference: str
    dual_bound_violations: int
    primal_bound_violations: int
    seed: int
    n_v: int
    n_c: int


@dataclass(frozen=True)
class SuiteConfig:
    scales: tuple = (2, 4, 6, 8)
    alphas: tuple = (2, 20)
    count: int = 100
    seed: int = 0
    N: int = 5
    stop_tol: float = 1e-3
    max_iters: int = 100_000
    precondition: bool = False
    terminal: bool = False
    x0_radius: float = 1.0
    slater: str = "lp"
    reference: str = "auto"
    check_bounds: bool = True

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not self.scales or not self.alphas:
            raise ValueError("need at least one scale and one alpha")
        if self.reference not in ("auto", "oracle", "none"):
            raise ValueError(f"unknown reference mode {self.reference!r}")


@dataclass
class BenchReport:
    records: list
    config: SuiteConfig
    aggregates: dict = field(default_factory=dict)
    ttests: list = field(default_factory=list)
    profiles: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)

    def ave_iter(self, scale, alpha):
        return self.aggregates[(scale, alpha)]["ave_iter"]

    def ave_time(self, scale, alpha):
        return self.aggregates[(scale, alpha)]["ave_time"]

    def ttest(self, scale, pair, metric="iterations"):
        for row in self.ttests:
            if row["scale"] == scale and row["alpha_pair"] == pair and row["metric"] == metric:
                return row
        raise KeyError((scale, pair, metric))


def _instance_config(cfg, scale, index):
    return InstanceConfig(
        n=scale, m=scale, N=cfg.N, seed=instance_seed(cfg.seed, scale, index),
        terminal=cfg.terminal, x0_radius=cfg.x0_radius, slater=cfg.slater,
    )


def _run_instance(args):
    cfg, scale, index = args
    icfg = _instance_config(cfg, scale, index)
    spec, x0 = random_instance(icfg)
    problem = condense(spec, x0)
    instance_id = f"s{scale}-{index:04d}"
    ref = reference_solution(problem, cfg.reference)

    target, factor = problem, None
    if cfg.precondition:
        target, factor = pre.transform(problem)

    records, profile = [], {}
    for alpha in cfg.alphas:
        table = build_table(alpha, min(cfg.max_iters + 1, 1024))
        opts = SolverOptions(alpha=alpha, stop_tol=cfg.stop_tol, max_iters=cfg.max_iters)
        res = solve(target, table, opts)
        xi = pre.recover(factor, res.xi_star) if factor is not None else res.xi_star
        err, dual_bad, primal_bad = float("nan"), -1, -1
        if ref is not None:
            diff, err = error_profile(problem, xi, ref.xi)
            profile[alpha] = diff
            if cfg.check_bounds:
                hist_res = solve(problem, table, SolverOptions(
                    alpha=alpha, stop_tol=cfg.stop_tol, max_iters=cfg.max_iters,
                    record_history=True))
                dual_bad, primal_bad = bound_violations(problem, hist_res, ref.mu, ref.xi, alpha)
        records.append(BenchRecord(
            instance_id=instance_id, scale=scale, alpha=alpha, iterations=res.iterations,
            elapsed=res.elapsed, stop_reason=res.stop_reason, error=err,
            reference=ref.kind if ref is not None else "none",
            dual_bound_violations=dual_bad, primal_bound_violations=primal_bad,
            seed=icfg.seed, n_v=problem.n_v, n_c=problem.n_c,
        ))
    manifest = (instance_id, icfg.seed, spec.n, spec.m, problem.n_v, problem.n_c)
    return records, profile, manifest


def _summarize(report):
    cfg = report.config
    by_key = {}
    for r in report.records:
        by_key.setdefault((r.scale, r.alpha), []).append(r)
    report.aggregates = {
        key: {
            "ave_iter": float(np.mean([r.iterations for r in recs])),
            "ave_time": float(np.mean([r.elapsed for r in recs])),
            "count": len(recs),
        }
        for key, recs in sorted(by_key.items())
    }
    base = min(cfg.alphas)
    report.ttests = []
    for scale in cfg.scales:
        base_recs = {r.instance_id: r for r in by_key.get((scale, base), [])}
        for alpha in cfg.alphas:
            if alpha == base:
                continue
            other = {r.instance_id: r for r in by_key.get((scale, alpha), [])}
            ids = sorted(set(base_recs) & set(other))
            for metric, attr in (("iterations", "iterations"), ("time", "elapsed")):
                diffs = [getattr(base_recs[i], attr) - getattr(other[i], attr) for i in ids]
                row = {"scale": scale, "alpha_pair": f"{base}-{alpha}", "metric": metric, "M": len(ids)}
                try:
                    res = paired_t(diffs)
                    row.update(mean_diff=res.mean, sd=res.sd, t=res.t, note="")
                except DegenerateSample:
                    row.update(mean_diff=float(np.mean(diffs)), sd=0.0, t=float("nan"), note="degenerate sd=0")
                except ValueError as exc:
                    row.update(mean_diff=float("nan"), sd=float("nan"), t=float("nan"), note=str(exc))
                report.ttests.append(row)
    return report


def run_suite(scales=(2, 4, 6, 8), alphas=(2, 20), instances_per_scale=100, seed=0, jobs=1, **options):
    """Generate, condense and solve ``instances_per_scale`` MPC problems per scale.

    Every instance is solved once per ``alpha`` from ``mu0 = 0``. Remaining
    keyword arguments populate :class:`SuiteConfig`.
    """
    cfg = SuiteConfig(scales=tuple(scales), alphas=tuple(alphas), count=instances_per_scale,
                      seed=seed, **options)
    tasks = [(cfg, s, i) for s in cfg.scales for i in range(cfg.count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outputs = list(ex.map(_run_instance, tasks, chunksize=4))
    else:
        outputs = [_run_instance(t) for t in tasks]
    report = BenchReport(records=[], config=cfg)
    for (c, scale, index), (recs, profile, manifest) in zip(tasks, outputs):
        report.records.extend(recs)
        report.manifest.append(manifest)
        if profile:
            report.profiles[manifest[0]] = profile
    report.records.sort(key=lambda r: (r.scale, r.instance_id, r.alpha))
    return _summarize(report)


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_report(report, outdir, envelope_alphas=range(2, 21), pmax=10):
    """Write ``records.csv``, ``aggregates.csv``, ``ttests.csv``, ``manifest.csv``
    and the plot-data CSVs into ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    fields = list(BenchRecord.__dataclass_fields__)
    _write_csv(out / "records.csv", fields, [[asdict(r)[f] for f in fields] for r in report.records])
    _write_csv(out / "aggregates.csv", ["scale", "alpha", "ave_iter", "ave_time_s"],
               [[s, a, v["ave_iter"], v["ave_time"]] for (s, a), v in report.aggregates.items()])
    _write_csv(out / "ttests.csv", ["scale", "alpha_pair", "metric", "M", "mean_diff", "sd", "t", "note"],
               [[r["scale"], r["alpha_pair"], r["metric"], r["M"], r["mean_diff"], r["sd"], r["t"], r["note"]]
                for r in report.ttests])
    _write_csv(out / "manifest.csv", ["instance_id", "seed", "n", "m", "n_v", "n_c"], report.manifest)
    _write_csv(out / "envelope.csv", ["p", "alpha", "U_p"],
               [[p, a, envelope(a, p)] for a in envelope_alphas for p in range(1, pmax + 1)])
    largest = max(report.config.scales)
    _write_csv(out / "time_vs_alpha.csv", ["scale", "alpha", "ave_time_s", "ave_iter"],
               [[largest, a, report.ave_time(largest, a), report.ave_iter(largest, a)]
                for a in report.config.alphas])
    profile_rows = []
    picked = sorted(k for k in report.profiles if k.startswith(f"s{largest}-"))
    if picked:
        for alpha, diff in sorted(report.profiles[picked[0]].items()):
            profile_rows.extend([picked[0], alpha, j, d] for j, d in enumerate(diff))
    _write_csv(out / "error_profile.csv", ["instance_id", "alpha", "component", "error"], profile_rows)
    _write_csv(out / "time_vs_scale.csv", ["scale", "alpha", "ave_time_s"],
               [[s, a, v["ave_time"]] for (s, a), v in report.aggregates.items()])
    return out
