"""Penalized square loss, its block gradients, and alternating gradient descent.

The objective is the unnormalized sum over observed points

    sum_{i,j,t} (y_ij(t) - f_j . W_i B(t))^2 + penalty * (|F|_F^2 + |W|_F^2),

so gradient magnitudes (and hence the stable step size) scale with the
number of observations; the step size is a tuned hyperparameter.  One sweep
updates the loading matrix and every subject's weight block simultaneously
from the previous iterate (Jacobi-style), then checks the relative change of
the loss against the stopping tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bspline import make_basis, design_matrix
from .data import ObservationPanel
from .model import ModelParams

__all__ = [
    "FitConfig",
    "FitReport",
    "DivergenceError",
    "loss",
    "grad_factors",
    "grad_weights",
    "fit",
]


class DivergenceError(RuntimeError):
    """Loss became non-finite or exploded; the step size is too large."""

    def __init__(self, message, iterations=0, loss_trace=None):
        super().__init__(message)
        self.iterations = iterations
        self.loss_trace = loss_trace or []


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of the alternating gradient descent fit."""

    rank: int = 3
    penalty: float = 1.0          # weight of the L2 penalty on both blocks
    step_size: float = 1e-4      # shared by the loading and weight updates
    stop_tol: float = 1e-6       # relative loss change threshold
    max_iters: int = 5000
    num_basis: int = 300
    degree: int = 3
    init_scale: float = 0.1      # std of the Normal(0, .) initialization
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "penalty": self.penalty,
            "step_size": self.step_size,
            "stop_tol": self.stop_tol,
            "max_iters": self.max_iters,
            "num_basis": self.num_basis,
            "degree": self.degree,
            "init_scale": self.init_scale,
            "seed": self.seed,
        }


@dataclass
class FitReport:
    """Optimization trace: loss_trace[0] is the loss at initialization."""

    loss_trace: list[float]
    iterations_run: int
    converged: bool
    final_loss: float
    wall_time: float


class _Workspace:
    """Precomputed design rows and cell bookkeeping for one (panel, basis) pair.

    Basis functions are evaluated once per unique time; each cell keeps row
    indices into that table.  A residual pass returns both the data-fit value
    and the per-cell correlation vectors v_ij = G_ij^T r_ij from which both
    block gradients assemble.
    """

    def __init__(self, panel: ObservationPanel, basis):
        self.panel = panel
        self.basis = basis
        all_times = [
            panel.times[i][j]
            for i in range(panel.num_subjects)
            for j in range(panel.num_series)
        ]
        concat = np.concatenate(all_times) if all_times else np.empty(0)
        self.unique_times = np.unique(concat)
        self.design = design_matrix(basis, self.unique_times)
        self.cells = []
        for i in range(panel.num_subjects):
            for j in range(panel.num_series):
                t, v = panel.cell(i, j)
                if t.size == 0:
                    continue
                idx = np.searchsorted(self.unique_times, t)
                self.cells.append((i, j, idx, v))

    def residual_pass(self, factors: np.ndarray, weights: np.ndarray):
        """Returns (data_fit, corr) with corr[i, j] = G_ij^T (y_ij - G_ij c_ij)."""
        I, R, M = weights.shape
        J = factors.shape[0]
        coeff = np.einsum("jr,irm->ijm", factors, weights)
        corr = np.zeros((I, J, M))
        data_fit = 0.0
        for i, j, idx, y in self.cells:
            G = self.design[idx]
            r = y - G @ coeff[i, j]
            data_fit += float(r @ r)
            corr[i, j] = r @ G
        return data_fit, corr


def _penalty_term(factors: np.ndarray, weights: np.ndarray, penalty: float) -> float:
    if penalty == 0.0:
        return 0.0
    return penalty * (float(np.sum(factors**2)) + float(np.sum(weights**2)))


def loss(panel: ObservationPanel, params: ModelParams, penalty: float) -> float:
    """Penalized square loss, the unnormalized sum over all observed points."""
    ws = _Workspace(panel, params.basis)
    data_fit, _ = ws.residual_pass(params.factors, params.weights)
    return data_fit + _penalty_term(params.factors, params.weights, penalty)


def grad_factors(panel: ObservationPanel, params: ModelParams, penalty: float) -> np.ndarray:
    """Gradient of the loss w.r.t. the loading matrix, shape (J, R)."""
    ws = _Workspace(panel, params.basis)
    _, corr = ws.residual_pass(params.factors, params.weights)
    return -2.0 * np.einsum("irm,ijm->jr", params.weights, corr) + 2.0 * penalty * params.factors


def grad_weights(
    panel: ObservationPanel, params: ModelParams, penalty: float, subject: int
) -> np.ndarray:
    """Gradient of the loss w.r.t. one subject's weight block, shape (R, M)."""
    if not 0 <= subject < params.num_subjects:
        raise IndexError(f"subject index {subject} out of range")
    ws = _Workspace(panel, params.basis)
    _, corr = ws.residual_pass(params.factors, params.weights)
    return (
        -2.0 * np.einsum("jr,jm->rm", params.factors, corr[subject])
        + 2.0 * penalty * params.weights[subject]
    )


def fit(panel: ObservationPanel, config: FitConfig) -> tuple[ModelParams, FitReport]:
    """Alternating gradient descent from a seeded Normal(0, init_scale^2) start.

    Each sweep moves the loading matrix and all weight blocks along their
    partial gradients evaluated at the previous iterate, with a shared step
    size.  Stops when the relative loss change drops below stop_tol, or hits
    max_iters (converged=False).  Raises DivergenceError if the loss becomes
    non-finite or grows by more than 10x in one sweep.
    """
    if panel.num_observations == 0:
        raise ValueError("cannot fit an empty panel")
    basis = make_basis(panel.domain_end, config.num_basis, config.degree)
    ws = _Workspace(panel, basis)

    rng = np.random.default_rng(config.seed)
    factors = rng.normal(0.0, config.init_scale, size=(panel.num_series, config.rank))
    weights = rng.normal(
        0.0, config.init_scale, size=(panel.num_subjects, config.rank, config.num_basis)
    )

    started = time.perf_counter()
    lam = config.penalty
    alpha = config.step_size
    data_fit, corr = ws.residual_pass(factors, weights)
    current = data_fit + _penalty_term(factors, weights, lam)
    trace = [current]
    converged = False
    iterations = 0
    for _ in range(config.max_iters):
        if current == 0.0:
            converged = True
            break
        g_factors = -2.0 * np.einsum("irm,ijm->jr", weights, corr) + 2.0 * lam * factors
        g_weights = -2.0 * np.einsum("jr,ijm->irm", factors, corr) + 2.0 * lam * weights
        factors = factors - alpha * g_factors
        weights = weights - alpha * g_weights
        iterations += 1
        data_fit, corr = ws.residual_pass(factors, weights)
        new = data_fit + _penalty_term(factors, weights, lam)
        trace.append(new)
        if not np.isfinite(new) or new > 10.0 * current:
            raise DivergenceError(
                f"loss diverged at iteration {iterations} "
                f"(step_size {alpha} too large): {current} -> {new}",
                iterations=iterations,
                loss_trace=trace,
            )
        if abs(new - current) / current < config.stop_tol:
            current = new
            converged = True
            break
        current = new

    params = ModelParams(factors=factors, weights=weights, basis=basis)
    report = FitReport(
        loss_trace=trace,
        iterations_run=iterations,
        converged=converged,
        final_loss=current,
        wall_time=time.perf_counter() - started,
    )
    return params, report
