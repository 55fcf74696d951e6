"""Synthetic multi-resolution panel generator for the benchmark scenarios.

Each scenario shares the same generative core: population loadings drawn
standard normal, three smooth subject trajectories (two Gaussian pulses, a
log time trend, a cosine seasonal term), and i.i.d. Gaussian noise on the
integer grid t = 1..T.  Scenarios differ only in which grid points each
(subject, series) cell observes:

  S1.1  per-point Bernoulli, rate 0.8 for all but the last series, 0.2 for it
  S1.2  fixed grids: full / every 2nd point / every 4th point
  S1.3  per-point Bernoulli 0.7 everywhere (identical to MCAR)
  S2.x  one shared Bernoulli-0.7 time set for every cell
  S3.x  the S1.x schemes widened to a 101-series panel
  MCAR / MAR / MNAR  missingness mechanisms for the target series

The test set is always the unobserved grid points of the target (last)
series, carrying the realized noisy values, which is also what the reported
test error compares against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import ObservationPanel, build_panel, fmt_float

__all__ = [
    "SCENARIOS",
    "ScenarioSpec",
    "GroundTruth",
    "make_theta",
    "generate",
    "desk_scale",
    "write_truth_csv",
]

SCENARIOS = (
    "S1.1",
    "S1.2",
    "S1.3",
    "S2.1",
    "S2.2",
    "S2.3",
    "S3.1",
    "S3.2",
    "S3.3",
    "MCAR",
    "MAR",
    "MNAR",
)

# Scenarios whose trajectories use the shared pulse centers 60/70 instead of
# the subject-shifted 60+10i/70+10i, or the homogeneous log trend.
_SHARED_PULSES = {"S2.1"}
_SHARED_TREND = {"S2.1", "S2.2"}

_WIDE = {"S3.1", "S3.2", "S3.3"}

TRUE_RANK = 3


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario identity plus size/noise overrides (desk-scale shrinking)."""

    scenario_id: str
    num_subjects: int = 30
    num_series: int | None = None   # default 5, or 101 for the wide scenarios
    grid_length: int = 1000          # integer grid 1..T; domain_end = T
    noise_sd: float = 0.5
    seed: int = 0
    observe_prob: float | None = None  # overrides every Bernoulli rate when set

    def __post_init__(self):
        if self.scenario_id not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario_id!r}")
        if self.num_subjects < 1 or self.grid_length < 2:
            raise ValueError("need at least 1 subject and a grid of length >= 2")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.observe_prob is not None and not (0.0 < self.observe_prob <= 1.0):
            raise ValueError("observe_prob must lie in (0, 1]")

    @property
    def effective_num_series(self) -> int:
        if self.num_series is not None:
            return self.num_series
        return 101 if self.scenario_id in _WIDE else 5

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "num_subjects": self.num_subjects,
            "num_series": self.effective_num_series,
            "grid_length": self.grid_length,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
            "observe_prob": self.observe_prob,
        }


def desk_scale(spec: ScenarioSpec) -> ScenarioSpec:
    """Shrink a scenario so a full benchmark runs in minutes: I=10, T=200."""
    return replace(spec, num_subjects=10, grid_length=200)


def make_theta(scenario_id: str, subject: int):
    """The three latent trajectories for a 1-based subject index.

    Returns callables (pulses, trend, seasonal) accepting scalar or array t.
    The pulse centers sit at 60+10i and 70+10i except in S2.1 where every
    subject shares centers 60 and 70; the log trend is subject-scaled
    (i * 0.02) except in S2.1/S2.2 where it is the common 0.2 log(t+1).
    """
    if scenario_id not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario_id!r}")
    if subject < 1:
        raise ValueError("subject index is 1-based")
    c1, c2 = (60.0, 70.0) if scenario_id in _SHARED_PULSES else (
        60.0 + 10.0 * subject,
        70.0 + 10.0 * subject,
    )
    trend_scale = 0.2 if scenario_id in _SHARED_TREND else 0.02 * subject

    def pulses(t):
        t = np.asarray(t, dtype=float)
        return 2.0 * np.exp(-((t - c1) ** 2) / 50.0) + 4.0 * np.exp(
            -((t - c2) ** 2) / 20.0
        )

    def trend(t):
        return trend_scale * np.log(np.asarray(t, dtype=float) + 1.0)

    def seasonal(t):
        return np.cos(0.12 * np.pi * np.asarray(t, dtype=float) + 1.0)

    return pulses, trend, seasonal


@dataclass(frozen=True)
class GroundTruth:
    """Noiseless surfaces and the draw underlying one generated replication."""

    scenario_id: str
    factors_true: np.ndarray      # (J, TRUE_RANK)
    theta_fns: tuple               # per subject: (pulses, trend, seasonal)
    grid: np.ndarray               # integer grid 1..T as floats
    noiseless: np.ndarray          # psi, shape (I, J, T)
    noisy: np.ndarray              # psi + drawn noise, shape (I, J, T)
    observed_mask: np.ndarray      # bool (I, J, T)
    noise_sd: float


def _fixed_grid_mask(num_subjects: int, steps: list[int], grid_length: int) -> np.ndarray:
    """Deterministic grids: series j observes t = 1, 1+step, 1+2*step, ..."""
    mask = np.zeros((num_subjects, len(steps), grid_length), dtype=bool)
    for j, step in enumerate(steps):
        mask[:, j, ::step] = True
    return mask


def _bernoulli_mask(rng, probs: np.ndarray, num_subjects: int, grid_length: int) -> np.ndarray:
    u = rng.random((num_subjects, probs.size, grid_length))
    return u < probs[None, :, None]


def _observation_mask(spec: ScenarioSpec, noisy: np.ndarray, rng) -> np.ndarray:
    """Scenario observation scheme; consumes rng in a fixed order."""
    I, J, T = noisy.shape
    sid = spec.scenario_id
    p_override = spec.observe_prob

    def rates(values: np.ndarray) -> np.ndarray:
        if p_override is not None:
            return np.full(J, p_override)
        return values

    if sid == "S1.1":
        probs = np.full(J, 0.8)
        probs[-1] = 0.2
        return _bernoulli_mask(rng, rates(probs), I, T)
    if sid == "S3.1":
        # First ~80/101 of the series dense (0.8), the rest sparse (0.2).
        cut = int(round(J * 80 / 101))
        probs = np.where(np.arange(J) < cut, 0.8, 0.2)
        return _bernoulli_mask(rng, rates(probs), I, T)
    if sid in ("S1.3", "MCAR", "S3.3"):
        return _bernoulli_mask(rng, rates(np.full(J, 0.7)), I, T)
    if sid == "S1.2":
        steps = [1] * (J - 2) + [2, 4]
        return _fixed_grid_mask(I, steps, T)
    if sid == "S3.2":
        cut1 = int(round(J * 60 / 101))
        cut2 = int(round(J * 80 / 101))
        steps = [1] * cut1 + [2] * (cut2 - cut1) + [4] * (J - cut2)
        return _fixed_grid_mask(I, steps, T)
    if sid in ("S2.1", "S2.2", "S2.3"):
        p = 0.7 if p_override is None else p_override
        shared = rng.random(T) < p
        return np.broadcast_to(shared, (I, J, T)).copy()
    if sid in ("MAR", "MNAR"):
        # Same Bernoulli-0.7 base as MCAR; the mechanism removes, on top of
        # that, every target point in the driver's per-subject top decile.
        # Quantiles are taken over the full realized series before masking.
        p = 0.7 if p_override is None else p_override
        mask = rng.random((I, J, T)) < p
        if sid == "MAR":
            mask[:, 0, :] = True  # the driving series is fully observed
            driver = noisy[:, 0, :]
        else:
            driver = noisy[:, -1, :]
        threshold = np.quantile(driver, 0.9, axis=1, keepdims=True)
        mask[:, -1, :] &= driver <= threshold
        return mask
    raise ValueError(f"unknown scenario {sid!r}")


def generate(spec: ScenarioSpec) -> tuple[ObservationPanel, ObservationPanel, GroundTruth]:
    """Draw one replication: (train panel, test panel, ground truth).

    Deterministic given the spec (including its seed).  The draw order is
    fixed: loadings, then the noise field, then the observation scheme.
    """
    I = spec.num_subjects
    J = spec.effective_num_series
    T = spec.grid_length
    rng = np.random.default_rng(spec.seed)

    factors_true = rng.standard_normal((J, TRUE_RANK))
    grid = np.arange(1, T + 1, dtype=float)
    theta_fns = tuple(make_theta(spec.scenario_id, i + 1) for i in range(I))
    theta = np.empty((I, TRUE_RANK, T))
    for i, fns in enumerate(theta_fns):
        for r, fn in enumerate(fns):
            theta[i, r] = fn(grid)
    noiseless = np.einsum("jr,irt->ijt", factors_true, theta)
    noisy = noiseless + spec.noise_sd * rng.standard_normal((I, J, T))
    mask = _observation_mask(spec, noisy, rng)

    subject_ids = [f"s{i + 1:0{len(str(I))}d}" for i in range(I)]
    series_ids = [f"y{j + 1:0{len(str(J))}d}" for j in range(J)]

    train_cells = []
    test_cells = []
    empty = (np.empty(0), np.empty(0))
    for i in range(I):
        train_row = []
        test_row = []
        for j in range(J):
            obs = mask[i, j]
            train_row.append((grid[obs], noisy[i, j, obs]))
            if j == J - 1:
                test_row.append((grid[~obs], noisy[i, j, ~obs]))
            else:
                test_row.append(empty)
        train_cells.append(train_row)
        test_cells.append(test_row)

    train = build_panel(subject_ids, series_ids, train_cells, domain_end=float(T))
    test = build_panel(subject_ids, series_ids, test_cells, domain_end=float(T))
    truth = GroundTruth(
        scenario_id=spec.scenario_id,
        factors_true=factors_true,
        theta_fns=theta_fns,
        grid=grid,
        noiseless=noiseless,
        noisy=noisy,
        observed_mask=mask,
        noise_sd=spec.noise_sd,
    )
    return train, test, truth


def write_truth_csv(truth: GroundTruth, panel: ObservationPanel, path, header_comments=()) -> None:
    """Noiseless surface on the full grid: columns subject,series,time,psi."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write("subject,series,time,psi\n")
        for i, sub in enumerate(panel.subject_ids):
            for j, ser in enumerate(panel.series_ids):
                for k, t in enumerate(truth.grid):
                    fh.write(
                        f"{sub},{ser},{fmt_float(t)},"
                        f"{fmt_float(truth.noiseless[i, j, k])}\n"
                    )
