"""Two-phase hyperparameter search on a validation split.

The penalty weight barely moves the numbers compared to the rank and step
size, so it is tuned first on its own (rank and step held at the base
config), and the (rank, step) pair is grid-searched afterwards at the chosen
penalty.  Candidates are scored by validation MSE on held-out target-series
points; diverged fits score +inf.  Ties within 1e-12 break toward the
smaller rank, then smaller penalty, then smaller step (parsimony).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import ObservationPanel, SplitSpec, fmt_float, split
from .evaluation import model_scores
from .optim import DivergenceError, FitConfig, fit

__all__ = [
    "TuneGrid",
    "TuneRow",
    "TuneResult",
    "AllCandidatesDivergedError",
    "tune",
    "write_tune_csv",
]

TIE_TOL = 1e-12


class AllCandidatesDivergedError(RuntimeError):
    """Every candidate in a tuning phase diverged."""


@dataclass(frozen=True)
class TuneGrid:
    """Candidate lists plus the validation split definition."""

    lambda_candidates: tuple = (0.01, 0.1, 1.0, 10.0)
    rank_candidates: tuple = (1, 2, 3, 4, 5, 6)
    step_candidates: tuple = (1e-6, 1e-5, 1e-4, 1e-3)
    validation_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not (self.lambda_candidates and self.rank_candidates and self.step_candidates):
            raise ValueError("candidate lists must be non-empty")
        if any(l < 0 for l in self.lambda_candidates):
            raise ValueError("lambda candidates must be non-negative")
        if any(r < 1 for r in self.rank_candidates):
            raise ValueError("rank candidates must be positive")
        if any(s <= 0 for s in self.step_candidates):
            raise ValueError("step candidates must be positive")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must be in (0, 1)")


@dataclass(frozen=True)
class TuneRow:
    phase: int
    lam: float
    rank: int
    step: float
    converged: bool
    val_mse: float


@dataclass(frozen=True)
class TuneResult:
    best_lambda: float
    best_rank: int
    best_step: float
    best_val_mse: float
    rows: tuple

    def best_config(self, base: FitConfig) -> FitConfig:
        return replace(
            base, penalty=self.best_lambda, rank=self.best_rank, step_size=self.best_step
        )


def _evaluate(train, val, config: FitConfig) -> tuple[bool, float]:
    try:
        params, report = fit(train, config)
    except DivergenceError:
        return False, math.inf
    scores = model_scores(params, train, val)
    return report.converged, scores.test_mse


def _pick(rows: list[TuneRow]):
    """Lowest validation MSE; converged rows are preferred over max-iter ones."""
    finite = [r for r in rows if math.isfinite(r.val_mse)]
    if not finite:
        raise AllCandidatesDivergedError("every candidate diverged")
    pool = [r for r in finite if r.converged] or finite
    best = pool[0]
    for row in pool[1:]:
        if row.val_mse < best.val_mse - TIE_TOL:
            best = row
    return best


def tune(panel: ObservationPanel, grid: TuneGrid, base_config: FitConfig) -> TuneResult:
    """Phase 1 picks the penalty, phase 2 the (rank, step) pair.

    Deterministic given grid.seed, which controls both the validation split
    and is reused as the fit seed for every candidate.
    """
    train, val = split(
        panel,
        SplitSpec(
            mode="random-fraction",
            test_fraction=grid.validation_fraction,
            seed=grid.seed,
        ),
    )
    rows: list[TuneRow] = []

    phase1: list[TuneRow] = []
    for lam in sorted(grid.lambda_candidates):
        config = replace(base_config, penalty=lam, seed=grid.seed)
        converged, val_mse = _evaluate(train, val, config)
        phase1.append(
            TuneRow(1, lam, base_config.rank, base_config.step_size, converged, val_mse)
        )
    rows.extend(phase1)
    best_lambda = _pick(phase1).lam

    phase2: list[TuneRow] = []
    for rank in sorted(grid.rank_candidates):
        for step in sorted(grid.step_candidates):
            config = replace(
                base_config, penalty=best_lambda, rank=rank, step_size=step, seed=grid.seed
            )
            converged, val_mse = _evaluate(train, val, config)
            phase2.append(TuneRow(2, best_lambda, rank, step, converged, val_mse))
    rows.extend(phase2)
    winner = _pick(phase2)

    return TuneResult(
        best_lambda=best_lambda,
        best_rank=winner.rank,
        best_step=winner.step,
        best_val_mse=winner.val_mse,
        rows=tuple(rows),
    )


def write_tune_csv(result: TuneResult, path, header_comments=()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write("phase,lambda,rank,step,converged,val_mse\n")
        for r in result.rows:
            fh.write(
                f"{r.phase},{fmt_float(r.lam)},{r.rank},{fmt_float(r.step)},"
                f"{str(r.converged).lower()},{fmt_float(r.val_mse)}\n"
            )
