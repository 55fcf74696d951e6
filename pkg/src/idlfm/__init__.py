"""Individualized dynamic latent factor interpolation for irregular panels.

A shared loading vector per series and a per-subject smooth latent
trajectory (B-spline expansion) jointly explain every observed point; their
product interpolates any series of any subject at any time in the observed
window.  Fitting alternates gradient steps on the loading matrix and the
per-subject spline weights under an L2 penalty.
"""

from .bspline import BSplineBasis, design_matrix, eval_basis, make_basis
from .data import (
    ObservationPanel,
    PanelFormatError,
    SplitSpec,
    StandardizationStats,
    UnknownCellError,
    build_panel,
    destandardize,
    read_panel_csv,
    split,
    standardize,
    write_panel_csv,
)
from .model import (
    LoadedModel,
    ModelParams,
    dynamic_factors,
    load_model,
    predict,
    predict_curve,
    save_model,
)
from .optim import DivergenceError, FitConfig, FitReport, fit, grad_factors, grad_weights, loss
from .baseline import SingularSystemError, SplineFit, fit_spline, fit_spline_auto, predict_spline
from .simgen import SCENARIOS, GroundTruth, ScenarioSpec, desk_scale, generate, make_theta
from .evaluation import EvalReport, mise_against_truth, mse, run_benchmark
from .tuning import AllCandidatesDivergedError, TuneGrid, TuneResult, tune

__version__ = "0.1.0"

__all__ = [
    "BSplineBasis",
    "make_basis",
    "eval_basis",
    "design_matrix",
    "ObservationPanel",
    "StandardizationStats",
    "SplitSpec",
    "PanelFormatError",
    "UnknownCellError",
    "build_panel",
    "read_panel_csv",
    "write_panel_csv",
    "standardize",
    "destandardize",
    "split",
    "ModelParams",
    "LoadedModel",
    "predict",
    "predict_curve",
    "dynamic_factors",
    "save_model",
    "load_model",
    "FitConfig",
    "FitReport",
    "DivergenceError",
    "loss",
    "grad_factors",
    "grad_weights",
    "fit",
    "SplineFit",
    "SingularSystemError",
    "fit_spline",
    "fit_spline_auto",
    "predict_spline",
    "SCENARIOS",
    "ScenarioSpec",
    "GroundTruth",
    "make_theta",
    "generate",
    "desk_scale",
    "mse",
    "mise_against_truth",
    "run_benchmark",
    "EvalReport",
    "TuneGrid",
    "TuneResult",
    "AllCandidatesDivergedError",
    "tune",
    "__version__",
]
