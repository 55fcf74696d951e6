"""Per-series smoothing baseline: ridge-penalized B-spline regression.

Fits one curve per (subject, series) cell from that cell's points alone,
minimizing sum_k (y_k - c . B(t_k))^2 + penalty * |c|^2 via the normal
equations.  A small validation split picks the ridge penalty when asked to.
Unlike the factor model this borrows nothing across series or subjects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bspline import BSplineBasis, design_matrix

__all__ = ["SplineFit", "SingularSystemError", "fit_spline", "fit_spline_auto", "predict_spline"]

DEFAULT_PENALTY_GRID = (1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2)


class SingularSystemError(RuntimeError):
    """Normal equations were singular (possible only with a zero penalty)."""


@dataclass(frozen=True)
class SplineFit:
    basis: BSplineBasis
    coefficients: np.ndarray
    penalty: float


def fit_spline(times, values, basis: BSplineBasis, penalty: float) -> SplineFit:
    """Solve (G'G + penalty I) c = G'y for the spline coefficients."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 2:
        raise ValueError("need at least 2 points to fit a spline")
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    G = design_matrix(basis, t)
    A = G.T @ G + penalty * np.eye(basis.num_basis)
    b = G.T @ y
    try:
        coef = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"normal equations singular at penalty={penalty}; use a positive penalty"
        ) from exc
    if not np.all(np.isfinite(coef)):
        raise SingularSystemError(f"non-finite coefficients at penalty={penalty}")
    return SplineFit(basis=basis, coefficients=coef, penalty=float(penalty))


def predict_spline(fit: SplineFit, times):
    """Evaluate the fitted curve; scalar in, scalar out."""
    scalar = np.isscalar(times)
    out = design_matrix(fit.basis, np.atleast_1d(np.asarray(times, dtype=float))) @ fit.coefficients
    return float(out[0]) if scalar else out


def fit_spline_auto(
    times,
    values,
    basis: BSplineBasis,
    penalty_grid=DEFAULT_PENALTY_GRID,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> SplineFit:
    """Pick the ridge penalty on a held-out fraction, then refit on all points.

    Falls back to the full-data fit per candidate when the cell is too small
    to split (fewer than 4 points).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 2:
        raise ValueError("need at least 2 points to fit a spline")
    use_split = t.size >= 4
    if use_split:
        rng = np.random.default_rng(seed)
        n_val = max(1, int(math.floor(val_fraction * t.size)))
        val_idx = np.sort(rng.choice(t.size, size=n_val, replace=False))
        val_mask = np.zeros(t.size, dtype=bool)
        val_mask[val_idx] = True

    best_penalty = None
    best_score = math.inf
    for penalty in penalty_grid:
        try:
            if use_split:
                cand = fit_spline(t[~val_mask], y[~val_mask], basis, penalty)
                resid = y[val_mask] - predict_spline(cand, t[val_mask])
            else:
                cand = fit_spline(t, y, basis, penalty)
                resid = y - predict_spline(cand, t)
        except SingularSystemError:
            continue
        score = float(np.mean(resid**2))
        if score < best_score - 1e-12:
            best_score = score
            best_penalty = penalty
    if best_penalty is None:
        raise SingularSystemError("every candidate penalty produced a singular system")
    return fit_spline(t, y, basis, best_penalty)
