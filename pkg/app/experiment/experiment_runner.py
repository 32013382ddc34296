#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验运行模块
按实验名称模拟或读取数据、拟合各方法、计算指标并写出结果表、绘图数据与运行清单
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.covariance.covariance_mle import fit_mle
from app.covariance.covariance_model import CovarianceModel
from app.ddsp.ddsp_density import DEFAULT_LEVELS, aqtl, ensemble_density
from app.deepkriging.deepkriging_model import DeepKriging, baseline_dnn, classify_threshold
from app.deepkriging.deepkriging_probe import nonlinearity_probe
from app.errors import ConfigError
from app.kriging.kriging_predict import FrkPredictor, KrigingPredictor, gaussian_quantiles
from app.predictor.base_predictor import SpatialPredictor
from app.simulate.simulate_data import (
    SimConfig, gaussian_mixture_1d, nonstat_2d, sample_gp_1d, sample_probe_1d, train_test_split,
)
from app.spatial.spatial_data import (
    CsvSchema, SpatialDataset, grid_match, kfold_split, load_csv, load_grid_csv,
)
from app.spatial.spatial_metrics import mae_and_accuracy, mse, rmse

from .experiment_config import RunConfig, echo_config
from .experiment_constants import EXPERIMENTS, SUPPORTED_METHODS
from .experiment_results import emit_plot_data, write_manifest, write_summary, write_table

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parents[2]
# 输出预测密度曲线的测试位置个数
DENSITY_LOCATIONS = 5
# PM2.5 风险分位数水平
RISK_LEVELS = (0.05, 0.5, 0.95)


@dataclass(frozen=True)
class ExperimentSpec:
    """一次实验运行的描述"""

    name: str
    replicates: int
    seeds: Tuple[int, ...]
    output: Path
    methods: Tuple[str, ...]
    config: RunConfig = field(repr=False, compare=False)
    workers: int = 1

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"未知的实验: {self.name}，可选 {', '.join(EXPERIMENTS)}")
        if self.replicates < 1:
            raise ConfigError(f"重复次数必须 >= 1，当前为 {self.replicates}")
        if len(self.seeds) != self.replicates:
            raise ConfigError(f"种子个数 {len(self.seeds)} 与重复次数 {self.replicates} 不一致")
        if not self.methods:
            raise ConfigError(f"实验 {self.name} 没有指定方法")
        unsupported = [m for m in self.methods if m not in SUPPORTED_METHODS[self.name]]
        if unsupported:
            raise ConfigError(f"实验 {self.name} 不支持方法: {', '.join(unsupported)}，"
                              f"可选 {', '.join(SUPPORTED_METHODS[self.name])}")

    @classmethod
    def from_config(cls, name: str, config: RunConfig) -> "ExperimentSpec":
        replicates = config["run.replicates"]
        seeds = tuple(config["run.seed"] + r for r in range(replicates))
        return cls(name, replicates, seeds, Path(config["run.output"]) / name,
                   config.methods(name), config, config.workers)


@dataclass
class ExperimentResult:
    name: str
    output: Path
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    wall_seconds: Dict[str, float] = field(default_factory=dict)

    def add_table(self, key: str, frame: pd.DataFrame, path: Path):
        self.tables[key] = frame
        self.files.append(path.name)


@contextmanager
def worker_pool(workers: int) -> Iterator[Callable]:
    """workers > 1 时给出进程池的 map，否则给出内置 map"""
    if workers <= 1:
        yield map
        return
    logger.info(f"使用 {workers} 个工作进程")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map


def _progress(iterable, total: int, desc: str, config: RunConfig):
    return tqdm(iterable, total=total, desc=desc, disable=not config["run.verbose"])


def resolve_path(path) -> Path:
    """相对路径先按当前目录查找，不存在时按项目根目录查找"""
    path = Path(path)
    if path.is_absolute() or path.exists():
        return path
    return PROJECT_ROOT / path


def sim_config(config: RunConfig, seed: int, **overrides) -> SimConfig:
    values = dict(n=config["sim.n"], seed=seed, mu=config["sim.mu"], sigma2=config["sim.sigma2"],
                  rho=config["sim.rho"], tau2=config["sim.tau2"])
    values.update(overrides)
    return SimConfig(**values)


def make_predictor(method: str, config: RunConfig, seed: int,
                   true_model: Optional[CovarianceModel] = None,
                   task: str = "regression", n_classes: int = 1, **overrides) -> SpatialPredictor:
    """
    按方法名构造预测器

    Args:
        method: 方法名称
        config: 运行配置
        seed: 本次重复的种子（网络初始化、dropout 与打乱）
        true_model: 真实协方差（kriging-true 与 frk 需要）
        task: DeepKriging 的任务类型
        n_classes: 分类任务的类别数
        overrides: DeepKriging 设置覆盖项
    """
    dk_config = config.deepkriging_config(seed=seed, progress=False, **overrides)
    if method == "deepkriging":
        return DeepKriging(task, n_classes, dk_config, name=method)
    if method == "deepkriging-gaussian":
        return DeepKriging(task, n_classes, dk_config.with_overrides(kernel="gaussian"), name=method)
    if method == "dnn-intercept":
        return baseline_dnn("intercept_only", task, n_classes, dk_config)
    if method == "dnn-coords":
        return baseline_dnn("with_coords", task, n_classes, dk_config)
    if task != "regression":
        raise ConfigError(f"方法 {method} 只支持回归")
    if method == "kriging-mle":
        return KrigingPredictor(family=config["kriging.family"], mean=config["kriging.mean"],
                                max_iter=config["kriging.max_iter"], name=method)
    if method in ("kriging-true", "frk"):
        if true_model is None:
            raise ConfigError(f"方法 {method} 需要已知的真实协方差")
        if method == "frk":
            return FrkPredictor(true_model, config["basis.kernel"], name=method)
        return KrigingPredictor(model=true_model, name=method)
    raise ConfigError(f"未知的方法: {method}")


def _score_methods(config: RunConfig, methods: Sequence[str], train: SpatialDataset,
                   test: SpatialDataset, replicate: int, seed: int,
                   true_model: Optional[CovarianceModel] = None) -> List[dict]:
    rows = []
    for method in methods:
        predictor = make_predictor(method, config, seed, true_model)
        predictor.timed_fit(train)
        base = {"replicate": replicate, "seed": seed, "method": method}
        for split, data in (("train", train), ("test", test)):
            metrics = predictor.evaluate(data)
            for metric in ("rmse", "mape"):
                rows.append({**base, "split": split, "metric": metric, "value": metrics[metric]})
        rows.append({**base, "split": "fit", "metric": "seconds", "value": predictor.fit_seconds})
    return rows


def _sim1d_replicate(args) -> List[dict]:
    config, methods, replicate, seed = args
    sim = sim_config(config, seed)
    data = sample_gp_1d(sim)
    train_idx, test_idx = train_test_split(data.n, config["sim.n_train"], seed)
    true_model = CovarianceModel("exponential", sim.sigma2, sim.rho, sim.tau2)
    return _score_methods(config, methods, data.subset(train_idx), data.subset(test_idx),
                          replicate, seed, true_model)


def _cv_fold(args) -> List[dict]:
    config, methods, data, replicate, seed, fold = args
    train_idx, test_idx = list(kfold_split(data.n, config["cv.folds"], seed).folds())[fold]
    rows = _score_methods(config, methods, data.subset(train_idx), data.subset(test_idx),
                          replicate, seed)
    for row in rows:
        row["fold"] = fold
    return rows


def crossval(config: RunConfig, data: SpatialDataset, methods: Sequence[str],
             seeds: Sequence[int], map_fn: Callable = map) -> List[dict]:
    """
    k 折交叉验证，每个种子一次划分，(种子, 折) 为并行单元

    Returns:
        每个 (重复, 折, 方法, 划分, 指标) 一行
    """
    tasks = [(config, methods, data, r, seed, fold)
             for r, seed in enumerate(seeds) for fold in range(config["cv.folds"])]
    rows = []
    for fold_rows in _progress(map_fn(_cv_fold, tasks), len(tasks), "crossval", config):
        rows.extend(fold_rows)
    return rows


def _write_replicate_tables(result: ExperimentResult, rows: List[dict]) -> pd.DataFrame:
    frame_path = result.output / f"{result.name}_replicates.csv"
    frame = write_table(rows, frame_path)
    result.add_table("replicates", frame, frame_path)
    summary_path = result.output / f"{result.name}_summary.csv"
    result.add_table("summary", write_summary(frame, summary_path), summary_path)
    return frame


def _run_sim1d(spec: ExperimentSpec, result: ExperimentResult, map_fn: Callable):
    tasks = [(spec.config, spec.methods, r, seed) for r, seed in enumerate(spec.seeds)]
    rows = []
    for replicate_rows in _progress(map_fn(_sim1d_replicate, tasks), len(tasks), "sim1d", spec.config):
        rows.extend(replicate_rows)
    _write_replicate_tables(result, rows)


def _run_sim2d(spec: ExperimentSpec, result: ExperimentResult, map_fn: Callable):
    data = nonstat_2d(spec.config["sim.side"])
    frame = _write_replicate_tables(result, crossval(spec.config, data, spec.methods, spec.seeds, map_fn))

    test_rmse = frame[(frame["split"] == "test") & (frame["metric"] == "rmse")]
    boxplot = {method: group["value"].to_numpy() for method, group in test_rmse.groupby("method", sort=False)}
    path = result.output / "sim2d_boxplot.csv"
    result.add_table("boxplot", emit_plot_data(boxplot, "boxplot", path), path)

    # 全数据上的 DeepKriging 曲面
    if "deepkriging" in spec.methods:
        model = make_predictor("deepkriging", spec.config, spec.seeds[0])
        model.fit(data)
        surface = {"truth": (data.locations, data.responses),
                   "deepkriging": (data.locations, model.predict(data.locations))}
        path = result.output / "sim2d_surface.csv"
        result.add_table("surface", emit_plot_data(surface, "surface", path), path)


def _mixture_replicate(spec: ExperimentSpec, replicate: int, seed: int, map_fn: Callable):
    config = spec.config
    data = gaussian_mixture_1d(sim_config(config, seed))
    train_idx, test_idx = train_test_split(data.n, config["sim.n_train"], seed)
    train, test = data.subset(train_idx), data.subset(test_idx)
    levels = DEFAULT_LEVELS
    base = {"replicate": replicate, "seed": seed, "split": "test"}
    rows, densities, quantiles = [], {}, {}

    if "deepkriging" in spec.methods:
        cuts = config.int_or_auto("ddsp.cuts")
        start = time.perf_counter()
        estimate = ensemble_density(
            train, test.locations, test.covariates,
            ensemble_size=config["ddsp.ensemble"],
            n_cuts=None if cuts == "auto" else cuts,
            config=config.deepkriging_config(seed=seed, progress=False),
            seed=seed, map_fn=map_fn)
        seconds = time.perf_counter() - start
        table = estimate.quantile_table(levels)
        score = aqtl(table, test.responses, levels)
        quantiles["deepkriging"] = table
        rows += [
            {**base, "method": "deepkriging", "metric": "aqtl", "value": score.raw},
            {**base, "method": "deepkriging", "metric": "aqtl_per_obs", "value": score.per_observation},
            {**base, "method": "deepkriging", "metric": "rmse", "value": rmse(estimate.mean(), test.responses)},
            {**base, "split": "fit", "method": "deepkriging", "metric": "seconds", "value": seconds},
        ]
        grid, pdfs = estimate.pdf_grid(config["ddsp.pdf_points"])
        for i in range(min(DENSITY_LOCATIONS, test.n)):
            densities[f"s={test.locations[i, 0]:.4f}"] = (grid, pdfs[i])

    if "kriging-mle" in spec.methods:
        predictor = make_predictor("kriging-mle", config, seed)
        predictor.timed_fit(train)
        prediction = predictor.predict_full(test.locations, test.covariates)
        table = gaussian_quantiles(prediction, levels, nugget=predictor.model.tau2)
        score = aqtl(table, test.responses, levels)
        quantiles["kriging-mle"] = table
        rows += [
            {**base, "method": "kriging-mle", "metric": "aqtl", "value": score.raw},
            {**base, "method": "kriging-mle", "metric": "aqtl_per_obs", "value": score.per_observation},
            {**base, "method": "kriging-mle", "metric": "rmse", "value": rmse(prediction.mean, test.responses)},
            {**base, "split": "fit", "method": "kriging-mle", "metric": "seconds",
             "value": predictor.fit_seconds},
        ]
    return rows, densities, quantiles, test


def _quantile_frame(quantiles: Dict[str, np.ndarray], test: SpatialDataset) -> pd.DataFrame:
    frames = []
    for method, table in quantiles.items():
        frame = pd.DataFrame(table, columns=[f"q{int(round(t * 100)):02d}" for t in DEFAULT_LEVELS])
        frame.insert(0, "z", test.responses)
        frame.insert(0, "s", test.locations[:, 0])
        frame.insert(0, "method", method)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def _run_mixture(spec: ExperimentSpec, result: ExperimentResult, map_fn: Callable):
    rows = []
    for replicate, seed in enumerate(spec.seeds):
        replicate_rows, densities, quantiles, test = _mixture_replicate(spec, replicate, seed, map_fn)
        rows.extend(replicate_rows)
        if replicate == 0:
            if densities:
                path = result.output / "mixture_density.csv"
                result.add_table("density", emit_plot_data(densities, "density", path), path)
            path = result.output / "mixture_quantiles.csv"
            result.add_table("quantiles", write_table(
                _quantile_frame(quantiles, test).to_dict("records"), path), path)
    _write_replicate_tables(result, rows)


def _run_probe(spec: ExperimentSpec, result: ExperimentResult, map_fn: Callable):
    config = spec.config
    rows, curves = [], {}
    for replicate, seed in enumerate(spec.seeds):
        data = sample_probe_1d(sim_config(config, seed, n=config["probe.n"]))
        values = np.linspace(data.responses.min(), data.responses.max(), config["probe.values"])
        for method in spec.methods:
            if method == "kriging-mle":
                model = fit_mle(data, config["kriging.family"], max_iter=config["kriging.max_iter"]).model
                probe = nonlinearity_probe(data, config["probe.index"], config["probe.dropped"],
                                           values, "kriging", model=model)
            else:
                dk_config = config.deepkriging_config(seed=seed, epochs=config["probe.epochs"])
                probe = nonlinearity_probe(data, config["probe.index"], config["probe.dropped"],
                                           values, "deepkriging", config=dk_config, map_fn=map_fn)
            rows.append({"replicate": replicate, "seed": seed, "method": method, "split": "probe",
                         "metric": "affine_residual", "value": probe.score})
            if replicate == 0:
                curves[probe.method] = (probe.values, probe.predictions)
    path = result.output / "probe_curves.csv"
    result.add_table("curves", emit_plot_data(curves, "curve", path), path)
    _write_replicate_tables(result, rows)


def time_methods(config: RunConfig, sizes: Sequence[int], methods: Sequence[str], seed: int) -> List[dict]:
    """
    在不同样本量上计时拟合

    数据为非线性探针设计；DeepKriging 使用较少的训练轮数与固定的基函数层数。

    Returns:
        (n, method, seconds) 行
    """
    rows = []
    for n in sizes:
        data = sample_probe_1d(sim_config(config, seed, n=int(n)))
        for method in methods:
            if method == "kriging-mle":
                predictor = KrigingPredictor(family=config["kriging.family"],
                                             max_iter=config["scaling.max_iter"], name=method)
            else:
                predictor = make_predictor(method, config, seed, epochs=config["scaling.epochs"],
                                           levels=config["scaling.levels"], domain=(0.0, 1.0))
            predictor.timed_fit(data)
            logger.info(f"N={n} {method}: {predictor.fit_seconds:.2f}s")
            rows.append({"n": int(n), "method": method, "seconds": predictor.fit_seconds})
    return rows


def loglog_slopes(frame: pd.DataFrame) -> pd.DataFrame:
    """每个方法 log(耗时) 对 log(N) 的最小二乘斜率"""
    rows = []
    for method, group in frame.groupby("method", sort=False):
        if group["n"].nunique() < 2:
            continue
        slope, _ = np.polyfit(np.log(group["n"]), np.log(np.maximum(group["seconds"], 1e-9)), 1)
        rows.append({"method": method, "slope": float(slope)})
    return pd.DataFrame(rows, columns=["method", "slope"])


def scaling_sizes(config: RunConfig) -> List[int]:
    return [int(s) for s in config["scaling.sizes"].split(",") if s.strip()]


def _run_scaling(spec: ExperimentSpec, result: ExperimentResult, map_fn: Callable):
    # 计时在主进程中串行进行
    rows = time_methods(spec.config, scaling_sizes(spec.config), spec.methods, spec.seeds[0])
    path = result.output / "scaling_times.csv"
    frame = write_table(rows, path)
    result.add_table("times", frame, path)
    slopes = loglog_slopes(frame)
    path = result.output / "scaling_slopes.csv"
    result.add_table("slopes", write_table(slopes.to_dict("records"), path), path)
    curves = {method: (group["n"].to_numpy(), group["seconds"].to_numpy())
              for method, group in frame.groupby("method", sort=False)}
    path = result.output / "scaling_curves.csv"
    result.add_table("curves", emit_plot_data(curves, "curve", path), path)


def load_pm25(config: RunConfig) -> Tuple[SpatialDataset, np.ndarray, np.ndarray]:
    """
    读取站点与网格并做网格匹配

    Returns:
        (每个被占用网格单元一行的数据集, 网格中心, 网格协变量)
    """
    covars = tuple(c.strip() for c in config["pm25.covars"].split(",") if c.strip())
    stations = load_csv(resolve_path(config["pm25.stations"]), CsvSchema(("lon", "lat"), "pm25", covars))
    grid, grid_covariates = load_grid_csv(resolve_path(config["pm25.grid"]), ("lon", "lat"), covars)
    cells = grid_match(stations, grid, grid_covariates, covars)
    return cells, grid, grid_covariates


def _pm25_fold(args) -> List[dict]:
    config, methods, cells, replicate, seed, fold = args
    train_idx, test_idx = list(kfold_split(cells.n, config["cv.folds"], seed).folds())[fold]
    train, test = cells.subset(train_idx), cells.subset(test_idx)
    threshold = config["pm25.threshold"]
    true_labels = classify_threshold(test.responses, threshold)
    rows = []
    for method in methods:
        base = {"replicate": replicate, "seed": seed, "fold": fold, "method": method}
        predictor = make_predictor(method, config, seed)
        predictor.timed_fit(train)
        for split, data in (("train", train), ("test", test)):
            pred = predictor.predict(data.locations, data.covariates)
            mae, _ = mae_and_accuracy(pred, data.responses)
            rows.append({**base, "split": split, "metric": "mse", "value": mse(pred, data.responses)})
            rows.append({**base, "split": split, "metric": "mae", "value": mae})
        if method.startswith("kriging"):
            pred_labels = classify_threshold(predictor.predict(test.locations, test.covariates), threshold)
        else:
            classifier = make_predictor(method, config, seed, task="classification", n_classes=2)
            classifier.fit(train, classify_threshold(train.responses, threshold))
            pred_labels = classifier.predict_labels(test.locations, test.covariates)
        _, acc = mae_and_accuracy(pred_labels, true_labels, (pred_labels, true_labels))
        rows.append({**base, "split": "test", "metric": "acc", "value": acc})
    return rows


def _run_pm25(spec: ExperimentSpec, result: ExperimentResult, map_fn: Callable):
    config = spec.config
    cells, grid, grid_covariates = load_pm25(config)
    folds = config["cv.folds"]
    tasks = [(config, spec.methods, cells, r, seed, fold)
             for r, seed in enumerate(spec.seeds) for fold in range(folds)]
    rows = []
    for fold_rows in _progress(map_fn(_pm25_fold, tasks), len(tasks), "pm25", config):
        rows.extend(fold_rows)
    _write_replicate_tables(result, rows)

    if "deepkriging" not in spec.methods:
        return
    seed = spec.seeds[0]
    threshold = config["pm25.threshold"]
    regression = make_predictor("deepkriging", config, seed)
    regression.fit(cells)
    classifier = make_predictor("deepkriging", config, seed, task="classification", n_classes=2)
    classifier.fit(cells, classify_threshold(cells.responses, threshold))
    cuts = config.int_or_auto("ddsp.cuts")
    estimate = ensemble_density(cells, grid, grid_covariates,
                                ensemble_size=config["ddsp.ensemble"],
                                n_cuts=None if cuts == "auto" else cuts,
                                config=config.deepkriging_config(seed=seed, progress=False),
                                seed=seed, map_fn=map_fn)
    maps = {
        "pm25": (grid, regression.predict(grid, grid_covariates)),
        "p_class": (grid, classifier.predict_proba(grid, grid_covariates)[:, 1]),
        "p_exceed": (grid, estimate.exceedance(threshold)),
    }
    path = result.output / "pm25_maps.csv"
    result.add_table("maps", emit_plot_data(maps, "surface", path), path)

    table = estimate.quantile_table(RISK_LEVELS)
    frame = pd.DataFrame(grid, columns=["lon", "lat"])
    for k, level in enumerate(RISK_LEVELS):
        frame[f"q{int(round(level * 100)):02d}"] = table[:, k]
    path = result.output / "pm25_quantiles.csv"
    result.add_table("quantiles", write_table(frame.to_dict("records"), path), path)


_RUNNERS = {
    "sim1d": _run_sim1d,
    "sim2d": _run_sim2d,
    "mixture-uq": _run_mixture,
    "probe": _run_probe,
    "scaling": _run_scaling,
    "pm25-fixture": _run_pm25,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """
    端到端运行一个实验

    Args:
        spec: 实验描述

    Returns:
        ExperimentResult，包含写出的各表
    """
    logger.info(f"开始实验 {spec.name}: 重复 {spec.replicates} 次, 方法 {', '.join(spec.methods)}")
    result = ExperimentResult(spec.name, spec.output)
    start = time.perf_counter()
    echo_config(spec.config, spec.output)
    with worker_pool(spec.workers) as map_fn:
        _RUNNERS[spec.name](spec, result, map_fn)
    result.wall_seconds["total"] = time.perf_counter() - start
    write_manifest(spec.output, spec.name, spec.config.to_dict(), spec.seeds,
                   result.wall_seconds, result.files)
    logger.info(f"实验 {spec.name} 完成, 用时 {result.wall_seconds['total']:.1f}s, 输出目录 {spec.output}")
    return result
