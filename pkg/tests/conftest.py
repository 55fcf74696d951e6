import numpy as np
import pytest

from idlfm import build_panel, make_basis, ModelParams


def random_panel(rng, num_subjects, num_series, domain_end=5.0, max_points=6, min_points=0):
    """Small irregular panel with random per-cell counts."""
    cells = []
    for i in range(num_subjects):
        row = []
        for j in range(num_series):
            k = int(rng.integers(min_points, max_points + 1))
            t = np.sort(rng.uniform(0.0, domain_end, size=k))
            y = rng.normal(0.0, 1.0, size=k)
            row.append((t, y))
        cells.append(row)
    return build_panel(
        [f"s{i + 1}" for i in range(num_subjects)],
        [f"y{j + 1}" for j in range(num_series)],
        cells,
        domain_end=domain_end,
    )


def random_params(rng, num_subjects, num_series, rank, num_basis, degree=3, domain_end=5.0, scale=1.0):
    basis = make_basis(domain_end, num_basis, degree)
    return ModelParams(
        factors=rng.normal(0.0, scale, size=(num_series, rank)),
        weights=rng.normal(0.0, scale, size=(num_subjects, rank, num_basis)),
        basis=basis,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
