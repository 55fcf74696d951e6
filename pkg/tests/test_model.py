import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idlfm import (
    ModelParams,
    StandardizationStats,
    dynamic_factors,
    load_model,
    make_basis,
    predict,
    predict_curve,
    save_model,
)
from conftest import random_params


def test_zero_weights_predict_zero(rng):
    params = random_params(rng, 2, 3, 2, 6)
    params = ModelParams(
        factors=params.factors, weights=np.zeros_like(params.weights), basis=params.basis
    )
    for t in (0.0, 1.3, 5.0):
        assert predict(params, 0, 1, t) == 0.0


def test_hand_computed_constant_basis():
    basis = make_basis(1.0, 1, 0)
    params = ModelParams(factors=np.array([[2.0]]), weights=np.array([[[3.0]]]), basis=basis)
    assert predict(params, 0, 0, 0.5) == 6.0


@given(c=st.sampled_from([-2.0, 0.5, 10.0]), seed=st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_scale_indeterminacy(c, seed):
    r = np.random.default_rng(seed)
    params = random_params(r, 2, 3, 2, 7)
    scaled = ModelParams(
        factors=c * params.factors, weights=params.weights / c, basis=params.basis
    )
    ts = r.uniform(0, 5.0, 20)
    for i in range(2):
        for j in range(3):
            a = predict_curve(params, i, j, ts)
            b = predict_curve(scaled, i, j, ts)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_predict_curve_matches_pointwise(rng):
    params = random_params(rng, 3, 2, 3, 8)
    ts = rng.uniform(0, 5.0, 100)
    for i in range(3):
        for j in range(2):
            curve = predict_curve(params, i, j, ts)
            pointwise = np.array([predict(params, i, j, t) for t in ts])
            np.testing.assert_array_equal(curve, pointwise)


def test_dynamic_factors_consistency(rng):
    params = random_params(rng, 2, 4, 3, 6)
    for t in rng.uniform(0, 5.0, 25):
        theta = dynamic_factors(params, 1, t)
        for j in range(4):
            assert abs(predict(params, 1, j, t) - params.factors[j] @ theta) < 1e-12


def test_index_and_domain_errors(rng):
    params = random_params(rng, 2, 2, 2, 6)
    with pytest.raises(IndexError):
        predict(params, 2, 0, 1.0)
    with pytest.raises(IndexError):
        predict(params, 0, 5, 1.0)
    with pytest.raises(ValueError):
        predict(params, 0, 0, 5.5)
    with pytest.raises(ValueError):
        predict(params, 0, 0, -0.1)


def test_shape_validation(rng):
    basis = make_basis(5.0, 6, 3)
    with pytest.raises(ValueError):
        ModelParams(factors=np.zeros((2, 3)), weights=np.zeros((2, 2, 6)), basis=basis)
    with pytest.raises(ValueError):
        ModelParams(factors=np.zeros((2, 2)), weights=np.zeros((2, 2, 5)), basis=basis)
    bad = np.zeros((2, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        ModelParams(factors=bad, weights=np.zeros((2, 2, 6)), basis=basis)


def test_model_json_round_trip(rng, tmp_path):
    params = random_params(rng, 3, 4, 2, 9)
    stats = StandardizationStats(
        means=rng.normal(size=(3, 4)),
        stds=np.abs(rng.normal(size=(3, 4))) + 0.5,
        degenerate=rng.random((3, 4)) < 0.2,
    )
    path = tmp_path / "model.json"
    save_model(
        path,
        params,
        subject_ids=["s1", "s2", "s3"],
        series_ids=["a", "b", "c", "d"],
        stats=stats,
        seed=42,
        config={"rank": 2},
    )
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.params.factors, params.factors)
    np.testing.assert_array_equal(loaded.params.weights, params.weights)
    np.testing.assert_array_equal(loaded.params.basis.knots, params.basis.knots)
    np.testing.assert_array_equal(loaded.stats.means, stats.means)
    np.testing.assert_array_equal(loaded.stats.degenerate, stats.degenerate)
    assert loaded.seed == 42
    assert loaded.subject_ids == ("s1", "s2", "s3")

    # Bit-for-bit: a second save of the loaded model is byte-identical.
    path2 = tmp_path / "model2.json"
    save_model(
        path2,
        loaded.params,
        subject_ids=loaded.subject_ids,
        series_ids=loaded.series_ids,
        stats=loaded.stats,
        seed=loaded.seed,
        config=loaded.config,
    )
    assert path.read_bytes() == path2.read_bytes()

    # Predictions from the reloaded model are bitwise identical.
    ts = rng.uniform(0, 5.0, 50)
    for i in range(3):
        for j in range(4):
            np.testing.assert_array_equal(
                predict_curve(params, i, j, ts), predict_curve(loaded.params, i, j, ts)
            )
