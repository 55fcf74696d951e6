"""Factorized interpolation model: prediction is factors_j . (weights_i @ B(t)).

Parameters couple a population loading matrix (one row per series) with a
per-subject tensor of spline weights; the product with the basis vector at t
yields the interpolated value for any (subject, series, time) in [0, T].
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bspline import BSplineBasis, design_matrix, eval_basis
from .data import StandardizationStats

__all__ = [
    "ModelParams",
    "predict",
    "predict_curve",
    "dynamic_factors",
    "save_model",
    "load_model",
    "LoadedModel",
]

MODEL_FORMAT = "idlfm-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    """Fitted parameters: factors (J, R), weights (I, R, M), and the basis."""

    factors: np.ndarray
    weights: np.ndarray
    basis: BSplineBasis

    def __post_init__(self):
        f = np.asarray(self.factors, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if f.ndim != 2 or w.ndim != 3:
            raise ValueError("factors must be (J, R) and weights (I, R, M)")
        if f.shape[1] != w.shape[1]:
            raise ValueError(
                f"rank mismatch: factors have {f.shape[1]} columns, weights {w.shape[1]}"
            )
        if w.shape[2] != self.basis.num_basis:
            raise ValueError(
                f"weights last axis {w.shape[2]} != basis size {self.basis.num_basis}"
            )
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(w))):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "factors", f)
        object.__setattr__(self, "weights", w)

    @property
    def rank(self) -> int:
        return self.factors.shape[1]

    @property
    def num_subjects(self) -> int:
        return self.weights.shape[0]

    @property
    def num_series(self) -> int:
        return self.factors.shape[0]


def _check_indices(params: ModelParams, subject: int, series: int) -> None:
    if not 0 <= subject < params.num_subjects:
        raise IndexError(f"subject index {subject} out of range")
    if not 0 <= series < params.num_series:
        raise IndexError(f"series index {series} out of range")


def dynamic_factors(params: ModelParams, subject: int, t: float) -> np.ndarray:
    """Subject trajectory value weights_i @ B(t), a length-R vector."""
    if not 0 <= subject < params.num_subjects:
        raise IndexError(f"subject index {subject} out of range")
    return params.weights[subject] @ eval_basis(params.basis, t)


def predict(params: ModelParams, subject: int, series: int, t: float) -> float:
    """Interpolated value for one (subject, series) at time t in [0, T]."""
    _check_indices(params, subject, series)
    coeff = params.weights[subject].T @ params.factors[series]
    # multiply-then-pairwise-sum so the reduction matches predict_curve exactly
    return float((eval_basis(params.basis, t) * coeff).sum())


def predict_curve(params: ModelParams, subject: int, series: int, times) -> np.ndarray:
    """Vectorized predict over a grid of times (one basis pass for the grid).

    The per-point reduction tree is independent of the grid size, so entries
    agree exactly with pointwise predict.
    """
    _check_indices(params, subject, series)
    G = design_matrix(params.basis, np.asarray(times, dtype=float))
    coeff = params.weights[subject].T @ params.factors[series]  # (M,)
    return (G * coeff).sum(axis=1)


def save_model(
    path,
    params: ModelParams,
    subject_ids,
    series_ids,
    stats: StandardizationStats | None = None,
    seed: int | None = None,
    config: dict | None = None,
) -> None:
    """Write a self-describing JSON model document.

    Parameter arrays are stored flat in row-major order; the document also
    carries knots, id labels, standardization stats and a config echo so a
    reload reproduces predictions bit-for-bit.
    """
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "degree": params.basis.degree,
        "num_basis": params.basis.num_basis,
        "domain_end": params.basis.domain_end,
        "knots": [float(x) for x in params.basis.knots],
        "num_subjects": params.num_subjects,
        "num_series": params.num_series,
        "rank": params.rank,
        "subject_ids": list(subject_ids),
        "series_ids": list(series_ids),
        "factors": [float(x) for x in params.factors.ravel()],
        "weights": [float(x) for x in params.weights.ravel()],
        "standardization": None
        if stats is None
        else {
            "convention": stats.convention,
            "means": [float(x) for x in stats.means.ravel()],
            "stds": [float(x) for x in stats.stds.ravel()],
            "degenerate": [bool(x) for x in stats.degenerate.ravel()],
        },
        "seed": seed,
        "config": config,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class LoadedModel:
    params: ModelParams
    subject_ids: tuple[str, ...]
    series_ids: tuple[str, ...]
    stats: StandardizationStats | None
    seed: int | None
    config: dict | None


def load_model(path) -> LoadedModel:
    """Load a model document written by save_model."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not an {MODEL_FORMAT} document")
    knots = np.asarray(doc["knots"], dtype=float)
    knots.flags.writeable = False
    basis = BSplineBasis(
        degree=int(doc["degree"]),
        num_basis=int(doc["num_basis"]),
        domain_end=float(doc["domain_end"]),
        knots=knots,
    )
    I, J, R, M = (
        int(doc["num_subjects"]),
        int(doc["num_series"]),
        int(doc["rank"]),
        int(doc["num_basis"]),
    )
    params = ModelParams(
        factors=np.asarray(doc["factors"], dtype=float).reshape(J, R),
        weights=np.asarray(doc["weights"], dtype=float).reshape(I, R, M),
        basis=basis,
    )
    stats = None
    if doc.get("standardization") is not None:
        raw = doc["standardization"]
        stats = StandardizationStats(
            means=np.asarray(raw["means"], dtype=float).reshape(I, J),
            stds=np.asarray(raw["stds"], dtype=float).reshape(I, J),
            degenerate=np.asarray(raw["degenerate"], dtype=bool).reshape(I, J),
            convention=raw.get("convention", "population"),
        )
    return LoadedModel(
        params=params,
        subject_ids=tuple(doc["subject_ids"]),
        series_ids=tuple(doc["series_ids"]),
        stats=stats,
        seed=doc.get("seed"),
        config=doc.get("config"),
    )
