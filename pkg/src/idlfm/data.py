"""Irregular multi-resolution observation panels.

A panel holds, for each (subject, series) cell, the observed (time, value)
pairs over [0, T].  Cells may be empty and counts may differ arbitrarily
across cells; per-cell times are kept sorted ascending.  This module also
owns CSV ingestion, per-cell standardization, and train/test splitting.

CSV interchange format: long-format UTF-8 with the exact header
``subject,series,time,value``; lines starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
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
]

CSV_HEADER = ["subject", "series", "time", "value"]


def fmt_float(x) -> str:
    """Shortest round-trip decimal form of a float (plain, not numpy repr)."""
    return repr(float(x))


class PanelFormatError(ValueError):
    """Malformed panel CSV (message carries the offending line number)."""


class UnknownCellError(KeyError):
    """A (subject, series) cell that does not exist in the panel."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ObservationPanel:
    """Immutable irregular panel: per-cell sorted (times, values) arrays."""

    subject_ids: tuple[str, ...]
    series_ids: tuple[str, ...]
    domain_end: float
    times: tuple[tuple[np.ndarray, ...], ...]
    values: tuple[tuple[np.ndarray, ...], ...]

    @property
    def num_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def num_series(self) -> int:
        return len(self.series_ids)

    @property
    def target_series(self) -> int:
        """Index of the series of interest; by convention the last one."""
        return self.num_series - 1

    @property
    def num_observations(self) -> int:
        return sum(t.size for row in self.times for t in row)

    def cell(self, subject: int, series: int) -> tuple[np.ndarray, np.ndarray]:
        if not (0 <= subject < self.num_subjects and 0 <= series < self.num_series):
            raise UnknownCellError((subject, series))
        return self.times[subject][series], self.values[subject][series]

    def counts(self) -> np.ndarray:
        """Per-cell observation counts, shape (num_subjects, num_series)."""
        return np.array(
            [[t.size for t in row] for row in self.times], dtype=int
        )


def build_panel(
    subject_ids,
    series_ids,
    cells,
    domain_end: float | None = None,
) -> ObservationPanel:
    """Assemble a panel from per-cell observations.

    `cells[i][j]` is a pair of array-likes (times, values); entries may be
    empty.  Times are sorted per cell; duplicates are kept.  If domain_end is
    None it defaults to the maximum observed time.
    """
    subject_ids = tuple(str(s) for s in subject_ids)
    series_ids = tuple(str(s) for s in series_ids)
    all_times: list[tuple[np.ndarray, ...]] = []
    all_values: list[tuple[np.ndarray, ...]] = []
    t_max = 0.0
    total = 0
    for i in range(len(subject_ids)):
        row_t: list[np.ndarray] = []
        row_v: list[np.ndarray] = []
        for j in range(len(series_ids)):
            t, v = cells[i][j]
            t = np.asarray(t, dtype=float)
            v = np.asarray(v, dtype=float)
            if t.shape != v.shape or t.ndim != 1:
                raise ValueError(f"cell ({i}, {j}): times and values must be equal-length 1-d")
            if t.size and np.any(t < 0.0):
                raise ValueError(f"cell ({i}, {j}): negative time")
            order = np.argsort(t, kind="stable")
            row_t.append(_frozen(t[order]))
            row_v.append(_frozen(v[order]))
            if t.size:
                t_max = max(t_max, float(t.max()))
            total += t.size
        all_times.append(tuple(row_t))
        all_values.append(tuple(row_v))
    if domain_end is None:
        if total == 0:
            raise ValueError("empty panel needs an explicit domain_end")
        domain_end = t_max
    domain_end = float(domain_end)
    if domain_end <= 0 or not math.isfinite(domain_end):
        raise ValueError(f"domain_end must be positive and finite, got {domain_end}")
    if t_max > domain_end:
        raise ValueError(f"observation at t={t_max} beyond domain_end={domain_end}")
    return ObservationPanel(
        subject_ids=subject_ids,
        series_ids=series_ids,
        domain_end=domain_end,
        times=tuple(all_times),
        values=tuple(all_values),
    )


def read_panel_csv(path, domain_end: float | None = None) -> ObservationPanel:
    """Load a long-format panel CSV.

    Subjects and series are ordered by first appearance.  Raises
    PanelFormatError with the line number on malformed rows, and on a file
    with no data rows.
    """
    subjects: dict[str, int] = {}
    series: dict[str, int] = {}
    rows: list[tuple[int, int, float, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if [f.strip() for f in fields] != CSV_HEADER:
                    raise PanelFormatError(
                        f"line {lineno}: expected header {','.join(CSV_HEADER)!r}"
                    )
                header_seen = True
                continue
            if len(fields) != 4:
                raise PanelFormatError(f"line {lineno}: expected 4 fields, got {len(fields)}")
            sub, ser, t_raw, v_raw = (f.strip() for f in fields)
            try:
                t = float(t_raw)
                v = float(v_raw)
            except ValueError as exc:
                raise PanelFormatError(f"line {lineno}: {exc}") from None
            if not math.isfinite(t) or t < 0.0:
                raise PanelFormatError(f"line {lineno}: invalid time {t_raw}")
            i = subjects.setdefault(sub, len(subjects))
            j = series.setdefault(ser, len(series))
            rows.append((i, j, t, v))
    if not header_seen:
        raise PanelFormatError("line 1: missing header")
    if not rows:
        raise PanelFormatError("no observations")
    cells = [
        [([], []) for _ in range(len(series))] for _ in range(len(subjects))
    ]
    for i, j, t, v in rows:
        cells[i][j][0].append(t)
        cells[i][j][1].append(v)
    return build_panel(list(subjects), list(series), cells, domain_end=domain_end)


def write_panel_csv(panel: ObservationPanel, path, header_comments=()) -> None:
    """Write a panel in the long CSV format, rows ordered (subject, series, time)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write(",".join(CSV_HEADER) + "\n")
        for i, sub in enumerate(panel.subject_ids):
            for j, ser in enumerate(panel.series_ids):
                t, v = panel.cell(i, j)
                for k in range(t.size):
                    fh.write(f"{sub},{ser},{fmt_float(t[k])},{fmt_float(v[k])}\n")


@dataclass(frozen=True)
class StandardizationStats:
    """Applied per-cell affine transform y -> (y - mean) / std.

    Degenerate cells (fewer than 2 observations or zero variance) are passed
    through unscaled: their applied mean is 0 and std is 1, with the flag set.
    The std convention is the population one (divide by n).
    """

    means: np.ndarray
    stds: np.ndarray
    degenerate: np.ndarray
    convention: str = "population"

    def cell(self, subject: int, series: int) -> tuple[float, float]:
        shape = self.means.shape
        if not (0 <= subject < shape[0] and 0 <= series < shape[1]):
            raise UnknownCellError((subject, series))
        return float(self.means[subject, series]), float(self.stds[subject, series])


def standardize(panel: ObservationPanel) -> tuple[ObservationPanel, StandardizationStats]:
    """Center and scale each cell to mean 0, population std 1.

    Degenerate cells are flagged and left untouched rather than failed;
    wearable-style data routinely contains constant or singleton cells.
    """
    shape = (panel.num_subjects, panel.num_series)
    means = np.zeros(shape)
    stds = np.ones(shape)
    degenerate = np.zeros(shape, dtype=bool)
    cells = []
    for i in range(panel.num_subjects):
        row = []
        for j in range(panel.num_series):
            t, v = panel.cell(i, j)
            if v.size < 2:
                degenerate[i, j] = True
                row.append((t, v))
                continue
            mean = float(v.mean())
            std = float(v.std())  # population convention (ddof=0)
            if std <= 0.0:
                degenerate[i, j] = True
                row.append((t, v))
                continue
            means[i, j] = mean
            stds[i, j] = std
            row.append((t, (v - mean) / std))
        cells.append(row)
    out = build_panel(
        panel.subject_ids, panel.series_ids, cells, domain_end=panel.domain_end
    )
    return out, StandardizationStats(
        means=_frozen(means), stds=_frozen(stds), degenerate=degenerate
    )


def destandardize(values, stats: StandardizationStats, subject: int, series: int):
    """Invert the standardization transform for one cell."""
    mean, std = stats.cell(subject, series)
    return np.asarray(values, dtype=float) * std + mean


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a test set out of the target series.

    random-fraction: per subject, floor(test_fraction * K) target points are
    held out at random.  explicit-timepoints: target points whose times fall
    in `test_times` (one array for all subjects, or a mapping keyed by
    subject id) are held out.  Non-target series always stay in training.
    """

    mode: str = "random-fraction"
    test_fraction: float = 0.3
    target_series: int | None = None
    seed: int = 0
    test_times: object = None


def split(panel: ObservationPanel, spec: SplitSpec) -> tuple[ObservationPanel, ObservationPanel]:
    """Partition the target series into train/test panels per the spec.

    Deterministic given the seed.  The returned panels share subject/series
    ids and domain_end; the test panel has empty non-target cells.
    """
    target = panel.target_series if spec.target_series is None else spec.target_series
    if not (0 <= target < panel.num_series):
        raise ValueError(f"target_series {target} out of range")

    test_index: list[np.ndarray] = []
    if spec.mode == "random-fraction":
        if not (0.0 < spec.test_fraction < 1.0):
            raise ValueError(f"test_fraction must be in (0, 1), got {spec.test_fraction}")
        rng = np.random.default_rng(spec.seed)
        for i in range(panel.num_subjects):
            t, _ = panel.cell(i, target)
            if t.size < 2:
                raise ValueError(
                    f"subject {panel.subject_ids[i]!r}: need >= 2 target observations "
                    "for a random-fraction split"
                )
            n_test = int(math.floor(spec.test_fraction * t.size))
            chosen = rng.choice(t.size, size=n_test, replace=False)
            test_index.append(np.sort(chosen))
    elif spec.mode == "explicit-timepoints":
        if spec.test_times is None:
            raise ValueError("explicit-timepoints mode needs test_times")
        for i, sub in enumerate(panel.subject_ids):
            t, _ = panel.cell(i, target)
            wanted = spec.test_times[sub] if isinstance(spec.test_times, dict) else spec.test_times
            mask = np.isin(t, np.asarray(wanted, dtype=float))
            test_index.append(np.nonzero(mask)[0])
    else:
        raise ValueError(f"unknown split mode {spec.mode!r}")

    train_cells = []
    test_cells = []
    empty = (np.empty(0), np.empty(0))
    for i in range(panel.num_subjects):
        train_row = []
        test_row = []
        for j in range(panel.num_series):
            t, v = panel.cell(i, j)
            if j != target:
                train_row.append((t, v))
                test_row.append(empty)
                continue
            mask = np.zeros(t.size, dtype=bool)
            mask[test_index[i]] = True
            train_row.append((t[~mask], v[~mask]))
            test_row.append((t[mask], v[mask]))
        train_cells.append(train_row)
        test_cells.append(test_row)
    train = build_panel(
        panel.subject_ids, panel.series_ids, train_cells, domain_end=panel.domain_end
    )
    test = build_panel(
        panel.subject_ids, panel.series_ids, test_cells, domain_end=panel.domain_end
    )
    return train, test
