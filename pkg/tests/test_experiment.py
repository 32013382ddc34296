#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置合并、结果输出、实验运行与命令行的测试

标记为 slow 的用例按完整设置复现各实验，默认不运行：pytest -m slow
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from app.errors import ConfigError, DataError, DataIOError
from app.experiment.experiment_config import (
    check_config, echo_config, load_preset, parse_config, read_config, validate_config,
)
from app.experiment.experiment_constants import DEFAULT_METHODS, EXIT_CONFIG, EXIT_IO, EXIT_OK
from app.experiment.experiment_results import emit_plot_data, summarize, write_manifest, write_table
from app.experiment.experiment_runner import (
    ExperimentSpec, loglog_slopes, make_predictor, run_experiment, worker_pool,
)
from app.simulate.simulate_data import SimConfig, sample_gp_1d
from app.spatial.spatial_data import save_csv
from main import main


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


class TestReadConfig:
    def test_comments_and_blanks(self, tmp_path):
        path = _write(tmp_path / "run.conf", "# 注释\n\nnet.epochs = 12  # 行尾注释\nrun.seed=4\n")
        assert read_config(path) == {"net.epochs": "12", "run.seed": "4"}

    def test_missing_equals(self, tmp_path):
        path = _write(tmp_path / "bad.conf", "net.epochs 12\n")
        with pytest.raises(ConfigError):
            read_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            read_config(tmp_path / "none.conf")


class TestParseConfig:
    def test_defaults(self):
        config = parse_config()
        assert config["net.width"] == 100
        assert config.sources["net.width"] == "default"

    def test_precedence(self, tmp_path):
        path = _write(tmp_path / "run.conf", "net.epochs = 50\nnet.width = 16\n")
        assert load_preset("sim1d")["net.epochs"] == 100
        config = parse_config(path, {"net.epochs": 7, "run.seed": None}, preset="sim1d")
        assert config["net.epochs"] == 7
        assert config["net.width"] == 16
        assert config["net.hidden_layers"] == 7
        assert config["run.seed"] == 0
        assert config.sources["net.width"] == "配置文件"

    def test_unknown_key_suggests_nearest(self):
        with pytest.raises(ConfigError, match="net.epochs"):
            parse_config(flags={"net.epoch": 5})

    def test_type_coercion(self):
        config = parse_config(flags={"net.dropout": "0.25", "net.batchnorm": "no", "run.seed": "9"})
        assert config["net.dropout"] == 0.25
        assert config["net.batchnorm"] is False
        assert config["run.seed"] == 9
        with pytest.raises(ConfigError):
            parse_config(flags={"net.epochs": "ten"})
        with pytest.raises(ConfigError):
            parse_config(flags={"net.epochs": "1.5"})

    def test_with_values(self):
        config = parse_config().with_values(net__epochs="3")
        assert config["net.epochs"] == 3
        assert config.sources["net.epochs"] == "override"

    def test_methods(self):
        assert parse_config().methods("sim2d") == DEFAULT_METHODS["sim2d"]
        config = parse_config(flags={"run.methods": "frk, kriging-true"})
        assert config.methods("sim1d") == ("frk", "kriging-true")

    def test_deepkriging_config(self):
        config = parse_config(flags={"basis.domain": "0,1", "basis.levels": "4", "net.width": 8})
        dk = config.deepkriging_config(seed=3)
        assert dk.domain == (0.0, 1.0) and dk.levels == 4
        assert dk.width == 8 and dk.seed == 3

    def test_echo(self, tmp_path):
        path = echo_config(parse_config(flags={"run.seed": 5}), tmp_path)
        assert json.loads(path.read_text(encoding="utf-8"))["run.seed"] == 5


class TestValidateConfig:
    def test_defaults_are_valid(self):
        assert validate_config(parse_config())["valid"]

    def test_errors(self):
        config = parse_config(flags={"cv.folds": 1, "net.dropout": 1.0, "basis.levels": "many",
                                     "probe.values": 2, "basis.kernel": "cubic"})
        result = validate_config(config)
        assert not result["valid"]
        assert len(result["errors"]) == 5

    def test_split_sizes_checked_for_split_experiments(self):
        config = parse_config(flags={"sim.n": 50})
        assert validate_config(config)["valid"]
        assert not validate_config(config, "sim1d")["valid"]

    def test_unknown_method(self):
        config = parse_config(flags={"run.methods": "deepkriging,svm"})
        assert not validate_config(config, "sim1d")["valid"]

    def test_warnings(self):
        result = validate_config(parse_config(flags={"run.replicates": 101}))
        assert result["valid"] and result["warnings"]

    def test_check_config_raises(self):
        with pytest.raises(ConfigError):
            check_config(parse_config(flags={"net.width": 0}))


class TestExperimentSpec:
    def test_from_config(self, tmp_path):
        config = parse_config(flags={"run.seed": 10, "run.replicates": 3, "run.output": str(tmp_path)})
        spec = ExperimentSpec.from_config("probe", config)
        assert spec.seeds == (10, 11, 12)
        assert spec.output == tmp_path / "probe"

    def test_rejects_unsupported_method(self):
        config = parse_config(flags={"run.methods": "frk"})
        with pytest.raises(ConfigError):
            ExperimentSpec.from_config("sim2d", config)

    def test_make_predictor_needs_truth(self):
        with pytest.raises(ConfigError):
            make_predictor("frk", parse_config(), 0)
        with pytest.raises(ConfigError):
            make_predictor("kriging-mle", parse_config(), 0, task="classification", n_classes=2)

    def test_worker_pool_serial(self):
        with worker_pool(1) as map_fn:
            assert map_fn is map


class TestResults:
    def test_plot_kinds(self, tmp_path):
        x = np.linspace(0.0, 1.0, 4)
        curve = emit_plot_data({"a": (x, x ** 2)}, "curve", tmp_path / "curve.csv")
        assert list(curve.columns) == ["series", "x", "y"] and len(curve) == 4
        surface = emit_plot_data({"s": (np.ones((3, 2)), [1.0, 2.0, 3.0])}, "surface", tmp_path / "s.csv")
        assert list(surface.columns) == ["series", "x", "y", "value"]
        box = emit_plot_data({"m1": [0.1, 0.2], "m2": [0.3]}, "boxplot", tmp_path / "b.csv")
        assert len(box) == 3
        density = emit_plot_data({"0": (x, np.ones(4))}, "density", tmp_path / "d.csv")
        assert_allclose(pd.read_csv(tmp_path / "d.csv")["y"], density["y"])

    def test_plot_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_plot_data({"a": [1.0]}, "heatmap", tmp_path / "x.csv")
        with pytest.raises(DataError):
            emit_plot_data({}, "curve", tmp_path / "x.csv")
        with pytest.raises(DataError):
            emit_plot_data({"a": ([0.0, 1.0], [1.0])}, "curve", tmp_path / "x.csv")

    def test_summary_single_replicate(self):
        frame = pd.DataFrame([{"method": "a", "metric": "rmse", "split": "test", "value": 0.3}])
        summary = summarize(frame)
        assert summary.loc[0, "mean"] == 0.3
        assert summary.loc[0, "sd"] == 0.0

    def test_summary_statistics(self):
        frame = pd.DataFrame([{"method": "a", "metric": "rmse", "split": "test", "value": v}
                              for v in (1.0, 2.0, 3.0)])
        summary = summarize(frame)
        assert summary.loc[0, "mean"] == 2.0
        assert_allclose(summary.loc[0, "sd"], 1.0)
        assert summary.loc[0, "count"] == 3

    def test_empty_table(self, tmp_path):
        with pytest.raises(DataError):
            write_table([], tmp_path / "empty.csv")

    def test_manifest(self, tmp_path):
        path = write_manifest(tmp_path, "sim1d", {"run.seed": 0}, [0, 1], {"total": 1.5}, ["b.csv", "a.csv"])
        manifest = json.loads(path.read_text(encoding="utf-8"))
        assert manifest["experiment"] == "sim1d"
        assert manifest["seeds"] == [0, 1]
        assert manifest["outputs"] == ["a.csv", "b.csv"]
        assert {"numpy", "scipy", "pandas", "python"} <= set(manifest["versions"])

    def test_loglog_slopes(self):
        n = np.array([400, 1600, 6400])
        frame = pd.DataFrame({"n": np.r_[n, n, [100]],
                              "method": ["cubic"] * 3 + ["linear"] * 3 + ["single"],
                              "seconds": np.r_[1e-9 * n ** 3, 2e-4 * n, [1.0]]})
        slopes = loglog_slopes(frame).set_index("method")["slope"]
        assert_allclose(slopes["cubic"], 3.0)
        assert_allclose(slopes["linear"], 1.0)
        assert "single" not in slopes.index


class TestRunExperiment:
    def test_probe_with_kriging(self, tmp_path):
        config = parse_config(flags={"run.output": str(tmp_path), "run.workers": 1, "run.methods": "kriging-mle",
                                     "probe.n": 30, "probe.index": 9, "probe.dropped": 10,
                                     "probe.values": 5}, preset="probe")
        result = run_experiment(ExperimentSpec.from_config("probe", config))
        out = tmp_path / "probe"
        assert (out / "manifest.json").exists() and (out / "config.json").exists()
        assert set(result.tables) >= {"curves", "replicates", "summary"}
        assert result.tables["replicates"]["value"].iloc[0] < 1e-6

    def test_sim1d_small(self, tmp_path):
        config = parse_config(flags={"run.output": str(tmp_path), "run.workers": 1, "run.replicates": 1,
                                     "run.methods": "kriging-true,frk,dnn-intercept",
                                     "sim.n": 60, "sim.n_train": 40, "net.epochs": 2,
                                     "net.width": 8}, preset="sim1d")
        result = run_experiment(ExperimentSpec.from_config("sim1d", config))
        summary = result.tables["summary"]
        assert set(summary["method"]) == {"kriging-true", "frk", "dnn-intercept"}
        test_rmse = summary[(summary["split"] == "test") & (summary["metric"] == "rmse")]
        rmse = test_rmse.set_index("method")["mean"]
        # FRK 在并集上与真实协方差的 Kriging 一致
        assert_allclose(rmse["frk"], rmse["kriging-true"], rtol=1e-4)


@pytest.fixture
def gp_csv(tmp_path):
    return save_csv(tmp_path / "gp.csv", sample_gp_1d(SimConfig(n=40, seed=2)))


class TestCli:
    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert "deepkriging" in capsys.readouterr().out

    def test_simulate(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert main(["--seed", "3", "simulate", "gp1d", "--out", str(out), "--n", "50"]) == EXIT_OK
        assert len(pd.read_csv(out)) == 50
        assert json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))["config"]["seed"] == 3

    def test_unknown_set_key(self, tmp_path):
        argv = ["--set", "net.epoch=5", "simulate", "gp1d", "--out", str(tmp_path / "x.csv")]
        assert main(argv) == EXIT_CONFIG

    def test_missing_input(self, tmp_path):
        argv = ["train", "--input", str(tmp_path / "none.csv"), "--model-dir", str(tmp_path / "m")]
        assert main(argv) == EXIT_IO

    def test_missing_column(self, gp_csv, tmp_path):
        argv = ["train", "--input", str(gp_csv), "--response", "pm25", "--model-dir", str(tmp_path / "m")]
        assert main(argv) == EXIT_CONFIG

    def test_train_and_predict(self, gp_csv, tmp_path):
        model_dir = tmp_path / "model"
        out = tmp_path / "pred.csv"
        argv = ["--epochs", "2", "--set", "net.width=8", "--set", "net.hidden_layers=2",
                "train", "--input", str(gp_csv), "--model-dir", str(model_dir)]
        assert main(argv) == EXIT_OK
        assert (model_dir / "model.json").exists() and (model_dir / "network.json").exists()
        assert (model_dir / "config.json").exists()
        assert main(["predict", "--model-dir", str(model_dir), "--input", str(gp_csv),
                     "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["s1", "prediction"] and len(frame) == 40

    def test_embed(self, gp_csv, tmp_path):
        out = tmp_path / "phi.csv"
        assert main(["embed", "--input", str(gp_csv), "--levels", "2", "--out", str(out)]) == EXIT_OK
        assert pd.read_csv(out).shape[0] == 40

    def test_crossval(self, gp_csv, tmp_path):
        argv = ["--output", str(tmp_path), "--workers", "1", "crossval", "--input", str(gp_csv), "--methods", "kriging-mle",
                "--folds", "2", "--replicates", "1"]
        assert main(argv) == EXIT_OK
        summary = pd.read_csv(tmp_path / "crossval" / "crossval_summary.csv")
        assert set(summary["method"]) == {"kriging-mle"}

    def test_probe(self, tmp_path):
        out = tmp_path / "curve.csv"
        argv = ["--set", "probe.n=30", "--set", "probe.index=9", "--set", "probe.dropped=10",
                "probe", "--values", "5", "--out", str(out)]
        assert main(argv) == EXIT_OK
        assert len(pd.read_csv(out)) == 5

    def test_nngp_gram(self, gp_csv, tmp_path):
        out = tmp_path / "gram.csv"
        argv = ["nngp-gram", "--input", str(gp_csv), "--levels", "2", "--depth", "2", "--nearfield",
                "--out", str(out)]
        assert main(argv) == EXIT_OK
        gram = pd.read_csv(out).to_numpy()
        assert gram.shape == (40, 40)
        assert_allclose(gram, gram.T)

    def test_density_echoes_config(self, gp_csv, tmp_path):
        argv = ["--output", str(tmp_path), "--epochs", "2", "--workers", "1", "--set", "net.width=8",
                "density", "--input", str(gp_csv), "--ensemble", "2", "--cuts", "3"]
        assert main(argv) == EXIT_OK
        output = tmp_path / "density"
        assert (output / "density_quantiles.csv").exists()
        echoed = json.loads((output / "config.json").read_text(encoding="utf-8"))
        assert echoed["ddsp.ensemble"] == 2 and echoed["net.width"] == 8


def _summary_means(result, metric, split="test"):
    summary = result.tables["summary"]
    rows = summary[(summary["metric"] == metric) & (summary["split"] == split)]
    return rows.set_index("method")["mean"]


@pytest.mark.slow
class TestAcceptance:
    def _run(self, name, tmp_path, **flags):
        config = parse_config(flags={"run.output": str(tmp_path), **flags}, preset=name)
        return run_experiment(ExperimentSpec.from_config(name, check_config(config, name)))

    def test_sim1d(self, tmp_path):
        rmse = _summary_means(self._run("sim1d", tmp_path), "rmse")
        assert 0.14 <= rmse["kriging-true"] <= 0.18
        assert rmse["deepkriging"] <= 0.40
        assert rmse["deepkriging"] < rmse["dnn-intercept"]
        assert rmse["deepkriging"] < rmse["dnn-coords"]

    def test_sim2d(self, tmp_path):
        rmse = _summary_means(self._run("sim2d", tmp_path), "rmse")
        assert rmse["deepkriging"] < rmse["dnn-coords"] < rmse["kriging-mle"]

    def test_mixture(self, tmp_path):
        result = self._run("mixture-uq", tmp_path)
        scores = _summary_means(result, "aqtl")
        assert scores["deepkriging"] * 10 <= scores["kriging-mle"]
        quantiles = result.tables["quantiles"]
        levels = [c for c in quantiles.columns if c.startswith("q")]
        assert np.all(np.diff(quantiles[levels].to_numpy(), axis=1) >= 0)

    def test_probe(self, tmp_path):
        scores = _summary_means(self._run("probe", tmp_path), "affine_residual", split="probe")
        assert scores["kriging-mle"] < 1e-6
        assert scores["deepkriging"] > 10 * scores["kriging-mle"]

    def test_scaling(self, tmp_path):
        result = self._run("scaling", tmp_path)
        times = result.tables["times"]
        largest = times[times["n"] == times["n"].max()].set_index("method")["seconds"]
        assert largest["deepkriging"] < largest["kriging-mle"]
        slopes = result.tables["slopes"].set_index("method")["slope"]
        assert slopes["kriging-mle"] > slopes["deepkriging"]

    def test_pm25(self, tmp_path):
        result = self._run("pm25-fixture", tmp_path)
        mse = _summary_means(result, "mse")
        assert mse["deepkriging"] <= mse["dnn-coords"]
        assert {"maps", "quantiles"} <= set(result.tables)
        assert len(result.tables["quantiles"]) == 1536
