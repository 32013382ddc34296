#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
空间预测器的基类
提供统一的拟合、预测、评估接口
"""

import logging
import time
from abc import ABC, abstractmethod
from typing import Dict, Optional

import numpy as np

from app.spatial.spatial_data import SpatialDataset
from app.spatial.spatial_metrics import mae_and_accuracy, mape, mse, rmse

logger = logging.getLogger(__name__)


class SpatialPredictor(ABC):
    """
    空间预测器的基类
    子类实现 fit 与 predict，评估与计时由基类提供
    """

    def __init__(self, name: str):
        """
        初始化预测器

        Args:
            name: 方法名称（用于结果表和日志）
        """
        self.name = name
        self.fit_seconds = 0.0

    @abstractmethod
    def fit(self, train: SpatialDataset):
        """
        在训练集上拟合（子类必须实现）

        Args:
            train: 训练数据集
        """
        pass

    @abstractmethod
    def predict(self, locations: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        """
        在给定位置预测（子类必须实现）

        Args:
            locations: 预测位置 M×d
            covariates: 预测位置的协变量 M×P

        Returns:
            长度 M 的预测值
        """
        pass

    def timed_fit(self, train: SpatialDataset):
        """拟合并记录耗时"""
        start = time.perf_counter()
        result = self.fit(train)
        self.fit_seconds = time.perf_counter() - start
        logger.debug(f"{self.name} 拟合耗时 {self.fit_seconds:.2f}s")
        return result

    def evaluate(self, data: SpatialDataset) -> Dict[str, float]:
        """
        在数据集上计算 RMSE、MSE、MAE，以及真值全非零时的 MAPE

        Returns:
            指标字典
        """
        pred = self.predict(data.locations, data.covariates)
        truth = data.responses
        mae, _ = mae_and_accuracy(pred, truth)
        metrics = {"rmse": rmse(pred, truth), "mse": mse(pred, truth), "mae": mae}
        metrics["mape"] = mape(pred, truth) if np.all(truth != 0) else float("nan")
        return metrics
