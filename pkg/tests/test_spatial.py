#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
空间数据集、归一化、交叉验证划分、网格匹配与评估指标的测试
"""

import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.errors import DataError, DataIOError, SchemaError
from app.spatial.spatial_data import (
    CsvSchema, SpatialDataset, assign_cells, grid_match, kfold_split, load_csv, load_grid_csv,
    min_max_normalize, save_csv,
)
from app.spatial.spatial_metrics import mae_and_accuracy, mape, mse, rmse

PM25_COVARS = "tmp2m,rh2m,apcp,pres,ugrd,vgrd"


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("s,z\n0.0,1.5\n0.5,2.5\n1.0,3.5\n", encoding="utf-8")
        data = load_csv(path, CsvSchema.from_flags("s", "z"))
        assert (data.n, data.dim, data.n_covariates) == (3, 1, 0)
        assert_allclose(data.responses, [1.5, 2.5, 3.5])

    def test_missing_column_is_named(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("s,z\n0.0,1.5\n", encoding="utf-8")
        with pytest.raises(SchemaError, match="elev"):
            load_csv(path, CsvSchema.from_flags("s", "z", "elev"))

    def test_blank_cell_reports_row(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("s,z\n0.0,1.5\n0.5,\n", encoding="utf-8")
        with pytest.raises(DataError) as info:
            load_csv(path, CsvSchema.from_flags("s", "z"))
        assert info.value.row == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            load_csv(tmp_path / "absent.csv", CsvSchema.from_flags("s", "z"))

    def test_pm25_fixture_shape(self, fixture_dir):
        data = load_csv(os.path.join(fixture_dir, "pm25_fixture.csv"),
                        CsvSchema.from_flags("lon,lat", "pm25", PM25_COVARS))
        assert data.n == 841
        assert data.dim == 2
        assert data.n_covariates == 6
        assert data.names == tuple(PM25_COVARS.split(","))

    def test_save_then_load_keeps_values(self, tmp_path, rng):
        data = SpatialDataset(rng.random((5, 2)), rng.normal(size=5), rng.random((5, 1)), ("x1",))
        path = save_csv(tmp_path / "out.csv", data)
        again = load_csv(path, CsvSchema.from_flags("s1,s2", "z", "x1"))
        assert_array_equal(again.locations, data.locations)
        assert_array_equal(again.responses, data.responses)


class TestSpatialDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError) as info:
            SpatialDataset(np.arange(3.0), [1.0, np.nan, 2.0])
        assert info.value.row == 1

    def test_rejects_length_mismatch(self):
        with pytest.raises(DataError):
            SpatialDataset(np.arange(3.0), [1.0, 2.0])

    def test_arrays_are_read_only(self):
        data = SpatialDataset(np.arange(3.0), [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            data.responses[0] = 5.0

    def test_subset_and_with_responses(self):
        data = SpatialDataset(np.arange(4.0), [1.0, 2.0, 3.0, 4.0])
        sub = data.subset([3, 0])
        assert_allclose(sub.locations[:, 0], [3.0, 0.0])
        assert_allclose(data.with_responses(np.zeros(4)).responses, 0.0)


class TestMinMaxNormalize:
    def test_linear_rescale(self):
        scaled, _ = min_max_normalize(np.array([[0.0], [5.0], [10.0]]))
        assert_allclose(scaled[:, 0], [0.0, 0.5, 1.0])

    def test_constant_column_maps_to_zero(self):
        scaled, _ = min_max_normalize(np.array([[7.0], [7.0], [7.0]]))
        assert_allclose(scaled[:, 0], 0.0)

    def test_inverse_transform(self, rng):
        m = rng.normal(size=(20, 3))
        scaled, scaler = min_max_normalize(m)
        assert scaled.min() >= 0.0 and scaled.max() <= 1.0
        assert_allclose(scaler.inverse_transform(scaled), m, atol=1e-12)

    def test_rejects_nan(self):
        with pytest.raises(DataError):
            min_max_normalize(np.array([[1.0], [np.nan]]))


class TestKfoldSplit:
    def test_exhaustive_partition(self):
        folds = kfold_split(10, 10, seed=3)
        assert_array_equal(folds.sizes(), np.ones(10))

    def test_size_rule(self):
        assert sorted(kfold_split(9, 2, seed=1).sizes().tolist()) == [4, 5]

    def test_deterministic(self):
        assert_array_equal(kfold_split(50, 7, seed=11).fold_of, kfold_split(50, 7, seed=11).fold_of)

    def test_folds_cover_each_index_once(self):
        folds = kfold_split(23, 5, seed=2)
        tested = np.concatenate([test for _, test in folds.folds()])
        assert_array_equal(np.sort(tested), np.arange(23))
        for train, test in folds.folds():
            assert not set(train) & set(test)

    def test_invalid_k(self):
        with pytest.raises(DataError):
            kfold_split(5, 1, seed=0)
        with pytest.raises(DataError):
            kfold_split(5, 6, seed=0)


class TestGridMatch:
    grid = np.array([[x, y] for x in (0.0, 1.0, 2.0) for y in (0.0, 1.0)])

    def test_two_stations_in_one_cell_are_averaged(self):
        stations = SpatialDataset(np.array([[0.9, 0.1], [1.1, -0.1], [2.0, 1.0]]), [4.0, 6.0, 9.0])
        cells = grid_match(stations, self.grid)
        assert cells.n == 2
        assert_allclose(cells.locations, [[1.0, 0.0], [2.0, 1.0]])
        assert_allclose(cells.responses, [5.0, 9.0])

    def test_boundary_goes_to_smaller_index(self):
        cells = assign_cells(np.array([[0.5, 0.5]]), self.grid)
        assert cells[0] == 0

    def test_grid_covariates_replace_station_covariates(self):
        stations = SpatialDataset(np.array([[0.0, 1.0]]), [3.0], np.array([[100.0]]), ("t",))
        grid_cov = np.arange(6.0)[:, None]
        cells = grid_match(stations, self.grid, grid_cov, ("t",))
        assert_allclose(cells.covariates, [[1.0]])

    def test_fixture_cells(self, fixture_dir):
        stations = load_csv(os.path.join(fixture_dir, "pm25_fixture.csv"),
                            CsvSchema.from_flags("lon,lat", "pm25", PM25_COVARS))
        grid, grid_cov = load_grid_csv(os.path.join(fixture_dir, "pm25_grid.csv"),
                                       ("lon", "lat"), PM25_COVARS.split(","))
        assert grid.shape == (1536, 2)
        cells = grid_match(stations, grid, grid_cov, PM25_COVARS.split(","))
        assert cells.n == 604
        assert cells.n_covariates == 6


class TestMetrics:
    def test_rmse(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert_allclose(rmse([3.0, -4.0], [0.0, 0.0]), np.sqrt(12.5))

    def test_mse(self):
        assert_allclose(mse([3.0, -4.0], [0.0, 0.0]), 12.5)

    def test_mape(self):
        assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert_allclose(mape([2.0], [1.0]), 1.0)
        assert_allclose(mape([1.1, 0.9], [1.0, 1.0]), 0.1)

    def test_mape_uses_absolute_truth(self):
        assert_allclose(mape([-1.1], [-1.0]), 0.1)

    def test_mape_rejects_zero_truth(self):
        with pytest.raises(DataError):
            mape([1.0], [0.0])

    def test_mae_and_accuracy(self):
        assert mae_and_accuracy([1.0, 2.0], [1.0, 2.0], ([1, 0], [1, 0])) == (0.0, 1.0)
        mae, acc = mae_and_accuracy([1.0, 3.0], [0.0, 0.0], ([1, 0, 1, 1], [1, 1, 1, 1]))
        assert mae == 2.0
        assert acc == 0.75

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            rmse([1.0, 2.0], [1.0])
