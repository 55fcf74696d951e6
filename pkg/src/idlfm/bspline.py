"""Clamped uniform B-spline bases on a closed interval [0, T].

The basis is defined by a polynomial degree, the number of basis functions
M, and a clamped knot vector whose interior knots are evenly spaced.  With
``a`` interior knots, M = a + degree + 1.  Evaluation uses the Cox-de Boor
recurrence in its triangular (de Boor) form, so values are exact to double
precision and at most degree+1 entries are nonzero at any point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BSplineBasis", "make_basis", "eval_basis", "design_matrix"]


@dataclass(frozen=True)
class BSplineBasis:
    """Clamped B-spline basis of `num_basis` functions on [0, domain_end].

    The knot vector has length num_basis + degree + 1: the first and last
    degree+1 knots sit at 0 and domain_end respectively, interior knots are
    evenly spaced.  Instances are immutable and safe to share across threads.
    """

    degree: int
    num_basis: int
    domain_end: float
    knots: np.ndarray

    @property
    def interior_knot_count(self) -> int:
        return self.num_basis - self.degree - 1


def make_basis(domain_end: float, num_basis: int, degree: int = 3) -> BSplineBasis:
    """Build a clamped basis with evenly spaced interior knots.

    Requires domain_end > 0, degree >= 0 and num_basis >= degree + 1 (the
    minimal clamped basis has no interior knots).
    """
    if not np.isfinite(domain_end) or domain_end <= 0:
        raise ValueError(f"domain_end must be positive and finite, got {domain_end}")
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    if num_basis < degree + 1:
        raise ValueError(
            f"num_basis must be at least degree + 1 = {degree + 1}, got {num_basis}"
        )
    domain_end = float(domain_end)
    n_interior = num_basis - degree - 1
    interior = np.arange(1, n_interior + 1) * (domain_end / (n_interior + 1))
    knots = np.concatenate(
        [
            np.zeros(degree + 1),
            interior,
            np.full(degree + 1, domain_end),
        ]
    )
    knots.flags.writeable = False
    return BSplineBasis(
        degree=int(degree),
        num_basis=int(num_basis),
        domain_end=domain_end,
        knots=knots,
    )


def design_matrix(basis: BSplineBasis, times: np.ndarray) -> np.ndarray:
    """Evaluate all basis functions at each time; returns shape (len(times), M).

    Times must lie in [0, domain_end].  At the right endpoint the last basis
    function evaluates to 1 (right-limit convention), so the closed interval
    is covered.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if t.size == 0:
        return np.zeros((0, basis.num_basis))
    if np.any(t < 0.0) or np.any(t > basis.domain_end):
        bad = t[(t < 0.0) | (t > basis.domain_end)][0]
        raise ValueError(f"time {bad} outside domain [0, {basis.domain_end}]")

    p = basis.degree
    m = basis.num_basis
    knots = basis.knots

    # Knot span per point; t == domain_end maps to the last span so the
    # clamped endpoint evaluates to (0, ..., 0, 1).
    span = np.searchsorted(knots, t, side="right") - 1
    span = np.clip(span, p, m - 1)

    n = t.size
    tri = np.zeros((n, p + 1))
    tri[:, 0] = 1.0
    left = np.empty((n, p))
    right = np.empty((n, p))
    for j in range(1, p + 1):
        left[:, j - 1] = t - knots[span + 1 - j]
        right[:, j - 1] = knots[span + j] - t
        saved = np.zeros(n)
        for r in range(j):
            # Denominators are knot differences across a nonempty span and
            # cannot vanish for a clamped vector with distinct interior knots.
            tmp = tri[:, r] / (right[:, r] + left[:, j - 1 - r])
            tri[:, r] = saved + right[:, r] * tmp
            saved = left[:, j - 1 - r] * tmp
        tri[:, j] = saved

    out = np.zeros((n, m))
    cols = span[:, None] - p + np.arange(p + 1)[None, :]
    out[np.arange(n)[:, None], cols] = tri
    return out


def eval_basis(basis: BSplineBasis, t: float) -> np.ndarray:
    """Vector (B_1(t), ..., B_M(t)) at a single time point."""
    return design_matrix(basis, np.asarray([t], dtype=float))[0]
