"""Train/test error metrics and the multi-replication benchmark harness.

Errors are pooled mean squared errors over target-series points: the
training error averages over the observed target points, the testing error
over the held-out ones, matching the denominators used when the test set is
the complement of the observed grid.  The benchmark runs R replications of
(generate, fit each method, score), aggregates mean and standard error per
method, and emits a CSV plus a Markdown summary table.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baseline import fit_spline_auto, predict_spline
from .bspline import make_basis, design_matrix
from .data import ObservationPanel, fmt_float
from .model import ModelParams
from .optim import DivergenceError, FitConfig, fit
from .simgen import GroundTruth, ScenarioSpec, generate

__all__ = [
    "METHODS",
    "mse",
    "SplitScores",
    "score_predictor",
    "model_scores",
    "mise_against_truth",
    "BenchmarkRow",
    "MethodAggregate",
    "EvalReport",
    "run_benchmark",
    "write_benchmark_csv",
    "write_summary_markdown",
]

METHODS = ("idlfm", "spline-baseline", "mean-fill")


def mse(predictions, targets) -> float:
    """Mean of squared differences; inputs must be equal-length and non-empty."""
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("mse of empty inputs is undefined")
    d = p - y
    return float(np.mean(d * d))


@dataclass(frozen=True)
class SplitScores:
    """Pooled target-series errors plus the per-subject breakdown."""

    train_mse: float
    test_mse: float
    per_subject: tuple  # (subject_id, train_mse | nan, test_mse | nan)


def score_predictor(
    predictor,
    train: ObservationPanel,
    test: ObservationPanel,
    target: int | None = None,
) -> SplitScores:
    """Score any callable predictor(subject_index, times) -> values.

    Pooled errors use every target point across subjects (the §-style
    denominators); empty pools give nan.
    """
    target = train.target_series if target is None else target
    tr_sq, tr_n = 0.0, 0
    te_sq, te_n = 0.0, 0
    rows = []
    for i, sub in enumerate(train.subject_ids):
        t_tr, y_tr = train.cell(i, target)
        t_te, y_te = test.cell(i, target)
        r_tr = r_te = float("nan")
        if t_tr.size:
            d = predictor(i, t_tr) - y_tr
            tr_sq += float(d @ d)
            tr_n += d.size
            r_tr = float(np.mean(d * d))
        if t_te.size:
            d = predictor(i, t_te) - y_te
            te_sq += float(d @ d)
            te_n += d.size
            r_te = float(np.mean(d * d))
        rows.append((sub, r_tr, r_te))
    train_mse = tr_sq / tr_n if tr_n else float("nan")
    test_mse = te_sq / te_n if te_n else float("nan")
    return SplitScores(train_mse=train_mse, test_mse=test_mse, per_subject=tuple(rows))


def model_scores(
    params: ModelParams,
    train: ObservationPanel,
    test: ObservationPanel,
    target: int | None = None,
) -> SplitScores:
    """SplitScores for a fitted factor model."""
    target = train.target_series if target is None else target
    coeff = np.einsum("r,irm->im", params.factors[target], params.weights)

    def predictor(i, times):
        return design_matrix(params.basis, times) @ coeff[i]

    return score_predictor(predictor, train, test, target)


def mise_against_truth(params: ModelParams, truth: GroundTruth, target: int) -> float:
    """Mean integrated squared error vs the noiseless surface on the full grid."""
    G = design_matrix(params.basis, truth.grid)
    total = 0.0
    I = params.num_subjects
    for i in range(I):
        pred = G @ (params.weights[i].T @ params.factors[target])
        d = pred - truth.noiseless[i, target]
        total += float(np.mean(d * d))
    return total / I


@dataclass(frozen=True)
class BenchmarkRow:
    scenario: str
    method: str
    seed: int
    train_mse: float
    test_mse: float
    converged: bool
    iters: int
    wall_ms: float
    per_subject: tuple = ()


@dataclass(frozen=True)
class MethodAggregate:
    method: str
    train_mean: float
    train_se: float
    test_mean: float
    test_se: float
    replications: int


@dataclass(frozen=True)
class EvalReport:
    scenario: str
    rows: tuple
    aggregates: tuple

    def aggregate(self, method: str) -> MethodAggregate:
        for agg in self.aggregates:
            if agg.method == method:
                return agg
        raise KeyError(method)


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def _run_one_replication(args) -> list[BenchmarkRow]:
    spec, methods, config, baseline_num_basis = args
    train, test, truth = generate(spec)
    target = train.target_series
    rows = []
    for method in methods:
        started = time.perf_counter()
        if method == "idlfm":
            try:
                params, report = fit(train, config)
                scores = model_scores(params, train, test, target)
                converged, iters = report.converged, report.iterations_run
            except DivergenceError as exc:
                scores = SplitScores(float("nan"), float("nan"), ())
                converged, iters = False, exc.iterations
        elif method == "spline-baseline":
            basis = make_basis(train.domain_end, baseline_num_basis, 3)
            fits = {}
            for i in range(train.num_subjects):
                t, y = train.cell(i, target)
                fits[i] = fit_spline_auto(t, y, basis, seed=spec.seed * 1000 + i)
            scores = score_predictor(
                lambda i, ts: predict_spline(fits[i], ts), train, test, target
            )
            converged, iters = True, 0
        elif method == "mean-fill":
            means = {}
            for i in range(train.num_subjects):
                _, y = train.cell(i, target)
                means[i] = float(y.mean()) if y.size else 0.0
            scores = score_predictor(
                lambda i, ts: np.full(np.asarray(ts).size, means[i]), train, test, target
            )
            converged, iters = True, 0
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        rows.append(
            BenchmarkRow(
                scenario=spec.scenario_id,
                method=method,
                seed=spec.seed,
                train_mse=scores.train_mse,
                test_mse=scores.test_mse,
                converged=converged,
                iters=iters,
                wall_ms=(time.perf_counter() - started) * 1000.0,
                per_subject=scores.per_subject,
            )
        )
    return rows


def run_benchmark(
    scenario: ScenarioSpec,
    methods,
    replications: int,
    config: FitConfig,
    baseline_num_basis: int | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Fit and score each method on `replications` fresh draws of a scenario.

    Replication r uses seed scenario.seed + r.  Diverged fits become flagged
    rows (nan errors), not crashes.  Rows are ordered by (seed, method)
    regardless of how many workers ran them.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    if baseline_num_basis is None:
        baseline_num_basis = config.num_basis
    tasks = [
        (replace(scenario, seed=scenario.seed + r), methods, config, baseline_num_basis)
        for r in range(1, replications + 1)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_one_replication, tasks))
    else:
        chunks = [_run_one_replication(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]

    aggregates = []
    for method in methods:
        sub = [r for r in rows if r.method == method]
        train_mean, train_se = _mean_se([r.train_mse for r in sub])
        test_mean, test_se = _mean_se([r.test_mse for r in sub])
        aggregates.append(
            MethodAggregate(
                method=method,
                train_mean=train_mean,
                train_se=train_se,
                test_mean=test_mean,
                test_se=test_se,
                replications=len(sub),
            )
        )
    return EvalReport(scenario=scenario.scenario_id, rows=tuple(rows), aggregates=tuple(aggregates))


def write_benchmark_csv(report: EvalReport, path, header_comments=()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write("scenario,method,seed,train_mse,test_mse,converged,iters,wall_ms\n")
        for r in report.rows:
            fh.write(
                f"{r.scenario},{r.method},{r.seed},{fmt_float(r.train_mse)},{fmt_float(r.test_mse)},"
                f"{str(r.converged).lower()},{r.iters},{r.wall_ms:.3f}\n"
            )


def write_summary_markdown(report: EvalReport, path, header_comments=()) -> None:
    """Markdown table of per-method mean (SE), mirroring the benchmark layout."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# Benchmark: {report.scenario}\n\n")
        for comment in header_comments:
            fh.write(f"{comment}\n\n")
        fh.write("| Method | Training MSE | Testing MSE |\n")
        fh.write("|---|---|---|\n")
        for agg in report.aggregates:
            fh.write(
                f"| {agg.method} | {agg.train_mean:.3f} ({agg.train_se:.3f}) "
                f"| {agg.test_mean:.3f} ({agg.test_se:.3f}) |\n"
            )
