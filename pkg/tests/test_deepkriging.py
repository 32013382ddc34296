#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
DeepKriging 模型、基线 DNN 与非线性探针的测试
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.covariance.covariance_model import CovarianceModel
from app.deepkriging.deepkriging_model import (
    SIM1D_CONFIG, SIM2D_CONFIG, DeepKriging, DeepKrigingConfig, baseline_dnn, build_default,
    classify_threshold, default_layers,
)
from app.deepkriging.deepkriging_probe import affine_residual, nonlinearity_probe
from app.errors import ConfigError, DataError
from app.spatial.spatial_data import SpatialDataset

SMALL = DeepKrigingConfig(hidden_layers=2, width=12, dropout=0.2, epochs=5, batch_size=16, seed=1)


def _kinds(specs):
    return [s.kind for s in specs]


class TestArchitecture:
    def test_default_layer_counts(self):
        kinds = _kinds(default_layers(DeepKrigingConfig(), "regression", 1))
        assert kinds.count("dense") == 4
        assert kinds.count("dropout") == 2
        assert kinds.count("batchnorm") == 2
        assert kinds[-1] == "identity"

    def test_classification_head(self):
        specs = default_layers(DeepKrigingConfig(), "classification", 3)
        assert specs[-2].width == 3
        assert specs[-1].kind == "softmax"

    def test_single_hidden_layer_has_one_batchnorm(self):
        kinds = _kinds(default_layers(DeepKrigingConfig(hidden_layers=1), "regression", 1))
        assert kinds.count("batchnorm") == 1

    def test_design_overrides(self):
        sim1d = _kinds(default_layers(SIM1D_CONFIG, "regression", 1))
        assert sim1d.count("dense") == 8 and "dropout" not in sim1d
        assert SIM1D_CONFIG.levels == 4
        assert SIM2D_CONFIG.hidden_layers == 4 and SIM2D_CONFIG.batch_size == 64

    def test_build_default_input_width(self):
        net = build_default(2, 30, "distribution", 5, SMALL)
        assert net.input_width == 32
        assert net.output_width == 5

    def test_build_default_rejects_one_class(self):
        with pytest.raises(ConfigError):
            build_default(0, 10, "classification", 1)

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            DeepKrigingConfig().with_overrides(depth=3)


class TestClassifyThreshold:
    def test_strict_inequality(self):
        assert classify_threshold(12.0, 12.0) == 0
        assert_array_equal(classify_threshold([5.0, 20.0], 12.0), [0, 1])

    def test_non_finite(self):
        with pytest.raises(DataError):
            classify_threshold([np.nan], 0.0)


class TestRegression:
    def test_constant_response(self):
        s = np.linspace(0.0, 1.0, 40)
        data = SpatialDataset(s, np.full(40, 5.0))
        config = DeepKrigingConfig(hidden_layers=1, width=8, dropout=0.0, batchnorm=False,
                                   epochs=1000, batch_size=40, learning_rate=0.02)
        model = DeepKriging(config=config)
        model.fit(data)
        assert_allclose(model.predict(s), 5.0, rtol=0.01)

    def test_deterministic(self, smooth_1d):
        first = DeepKriging(config=SMALL)
        second = DeepKriging(config=SMALL)
        first.fit(smooth_1d)
        second.fit(smooth_1d)
        grid = np.linspace(0.0, 1.0, 7)
        assert_array_equal(first.predict(grid), second.predict(grid))

    def test_test_rows_are_independent(self, smooth_1d, rng):
        model = DeepKriging(config=SMALL)
        model.fit(smooth_1d)
        grid = np.linspace(0.0, 1.0, 11)
        order = rng.permutation(11)
        assert_allclose(model.predict(grid[order]), model.predict(grid)[order], rtol=1e-12, atol=1e-12)

    def test_frozen_embedding(self, smooth_1d):
        model = DeepKriging(config=SMALL)
        model.fit(smooth_1d)
        assert model.features_for(np.array([0.2, 0.4])).shape[1] == len(model.kept_columns)

    def test_covariate_width_mismatch(self, rng):
        s = np.linspace(0.0, 1.0, 30)
        data = SpatialDataset(s, rng.normal(size=30), rng.random((30, 1)))
        model = DeepKriging(config=SMALL)
        model.fit(data)
        with pytest.raises(DataError):
            model.predict(np.array([0.5]), np.ones((1, 2)))

    def test_predict_proba_on_regression(self, smooth_1d):
        model = DeepKriging(config=SMALL)
        model.fit(smooth_1d)
        with pytest.raises(ConfigError):
            model.predict_proba(np.array([0.5]))

    def test_predict_before_fit(self):
        with pytest.raises(DataError):
            DeepKriging().predict(np.array([0.5]))

    def test_save_and_load(self, smooth_1d, tmp_path, rng):
        data = SpatialDataset(smooth_1d.locations, smooth_1d.responses, rng.random((60, 2)))
        model = DeepKriging(config=SMALL)
        model.fit(data)
        loaded = DeepKriging.load(model.save(tmp_path / "model"))
        grid = np.linspace(0.0, 1.0, 9)
        covariates = rng.random((9, 2))
        assert_array_equal(loaded.predict(grid, covariates), model.predict(grid, covariates))
        assert_array_equal(loaded.kept_columns, model.kept_columns)


class TestClassification:
    def test_probabilities_are_simplex(self, smooth_1d):
        labels = classify_threshold(smooth_1d.responses, 0.5)
        model = DeepKriging("classification", 2, SMALL)
        model.fit(smooth_1d, labels)
        proba = model.predict_proba(np.linspace(0.0, 1.0, 13))
        assert proba.shape == (13, 2)
        assert_allclose(proba.sum(axis=1), 1.0)
        assert set(model.predict_labels(np.array([0.1, 0.9]))) <= {0, 1}

    def test_rejects_fractional_labels(self, smooth_1d):
        model = DeepKriging("classification", 2, SMALL)
        with pytest.raises(DataError):
            model.fit(smooth_1d, np.full(60, 0.5))


class TestBaseline:
    def test_intercept_only_is_constant(self, smooth_1d):
        model = baseline_dnn("intercept_only", config=SMALL)
        model.fit(smooth_1d)
        pred = model.predict(np.linspace(0.0, 1.0, 10))
        assert_allclose(pred, pred[0], rtol=1e-12, atol=1e-12)

    def test_with_coords_inputs(self, smooth_1d):
        model = baseline_dnn("with_coords", config=SMALL)
        model.fit(smooth_1d)
        assert_allclose(model.features_for(np.array([0.25])), [[1.0, 0.25]])

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            baseline_dnn("bigger")


class TestNonlinearityProbe:
    def test_affine_residual(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        assert affine_residual(x, 2 * x + 1) < 1e-12
        assert affine_residual(x, x ** 2) > 0.1

    def test_kriging_is_linear(self):
        s = np.linspace(0.0, 1.0, 30)
        data = SpatialDataset(s, np.sin(6 * s))
        model = CovarianceModel("exponential", 1.0, 0.1, 0.01)
        result = nonlinearity_probe(data, 10, 11, np.linspace(-3.0, 3.0, 5), "kriging", model)
        assert result.score < 1e-6
        assert len(result.rows()) == 5

    def test_validation(self, smooth_1d):
        model = CovarianceModel("exponential", 1.0, 0.1, 0.01)
        with pytest.raises(DataError):
            nonlinearity_probe(smooth_1d, 3, 4, [0.0, 1.0], "kriging", model)
        with pytest.raises(DataError):
            nonlinearity_probe(smooth_1d, 3, 3, [0.0, 1.0, 2.0], "kriging", model)
        with pytest.raises(ConfigError):
            nonlinearity_probe(smooth_1d, 3, 4, [0.0, 1.0, 2.0], "spline", model)

    def test_deepkriging_curve_shape(self, smooth_1d):
        config = SMALL.with_overrides(epochs=2)
        result = nonlinearity_probe(smooth_1d, 20, 21, [-1.0, 0.0, 1.0], "deepkriging", config=config)
        assert result.predictions.shape == (3,)
        assert np.all(np.isfinite(result.predictions))
