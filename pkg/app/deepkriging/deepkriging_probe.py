#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非线性探针
替换某个观测值、删除另一个位置的观测，记录该位置的预测如何随替换值变化
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

import numpy as np

from app.covariance.covariance_mle import fit_mle
from app.covariance.covariance_model import CovarianceModel
from app.errors import ConfigError, DataError
from app.kriging.kriging_predict import universal_kriging
from app.spatial.spatial_data import SpatialDataset

from .deepkriging_model import DeepKriging, DeepKrigingConfig

logger = logging.getLogger(__name__)

PROBE_METHODS = ("kriging", "deepkriging")
# 每个探针值都要重新训练一次，轮数相应减少
PROBE_EPOCHS = 50


@dataclass(frozen=True)
class ProbeResult:
    """响应曲线 (探针值, 预测值) 与最优仿射拟合的最大绝对残差"""

    method: str
    values: np.ndarray
    predictions: np.ndarray
    score: float

    def rows(self):
        return [(self.method, float(v), float(p)) for v, p in zip(self.values, self.predictions)]


def affine_residual(x: np.ndarray, y: np.ndarray) -> float:
    """y 对 x 做一次最小二乘拟合后的最大绝对残差"""
    slope, intercept = np.polyfit(x, y, 1)
    return float(np.max(np.abs(y - (slope * x + intercept))))


def _probe_one(args):
    data, target, target_covariates, config = args
    model = DeepKriging(config=config)
    model.fit(data)
    return float(model.predict(target, target_covariates)[0])


def nonlinearity_probe(train: SpatialDataset, probe_index: int, dropped_index: int,
                       values: Iterable[float], method: str = "kriging",
                       model: Optional[CovarianceModel] = None,
                       config: DeepKrigingConfig = DeepKrigingConfig(epochs=PROBE_EPOCHS),
                       map_fn: Callable = map) -> ProbeResult:
    """
    计算非线性探针的响应曲线

    Args:
        train: 原始数据
        probe_index: 被替换观测的下标 i
        dropped_index: 被删除并作为预测目标的下标 j
        values: 替换值序列（至少 3 个）
        method: "kriging" 或 "deepkriging"
        model: Kriging 使用的协方差模型；为 None 时在原始数据上做 MLE 并固定
        config: DeepKriging 设置；每个探针值使用相同种子重新训练
        map_fn: 映射函数，可传入进程池的 map 以并行

    Returns:
        ProbeResult
    """
    if method not in PROBE_METHODS:
        raise ConfigError(f"未知的探针方法: {method}，可选 {', '.join(PROBE_METHODS)}")
    values = np.asarray(list(values), dtype=np.float64)
    if values.shape[0] < 3:
        raise DataError(f"探针值至少需要 3 个，当前为 {values.shape[0]}")
    n = train.n
    if probe_index == dropped_index or not (0 <= probe_index < n and 0 <= dropped_index < n):
        raise DataError(f"探针下标 i={probe_index}, j={dropped_index} 非法")

    keep = np.delete(np.arange(n), dropped_index)
    target = train.locations[dropped_index:dropped_index + 1]
    target_covariates = train.covariates[dropped_index:dropped_index + 1]
    datasets = []
    for v in values:
        z = train.responses.copy()
        z[probe_index] = v
        datasets.append(train.with_responses(z).subset(keep))

    if method == "kriging":
        if model is None:
            model = fit_mle(train).model
        logger.info(f"Kriging 探针使用固定协方差: {model}")
        predictions = np.array([universal_kriging(d, target, model, target_covariates).mean[0]
                                for d in datasets])
    else:
        config = replace(config, progress=False)
        tasks = [(d, target, target_covariates, config) for d in datasets]
        predictions = np.array(list(map_fn(_probe_one, tasks)))

    score = affine_residual(values, predictions)
    logger.info(f"{method} 探针完成: {len(values)} 个探针值, 非线性分数 {score:.3e}")
    return ProbeResult(method, values, predictions, score)
