#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评估指标模块
RMSE、MAPE、MSE、MAE 与分类准确率
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from app.errors import DataError


def _pair(pred, truth) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise DataError(f"预测长度 {pred.shape[0]} 与真值长度 {truth.shape[0]} 不一致")
    if pred.size == 0:
        raise DataError("评估至少需要一个样本")
    return pred, truth


def rmse(pred, truth) -> float:
    """均方根误差"""
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mse(pred, truth) -> float:
    """均方误差"""
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mape(pred, truth) -> float:
    """
    平均绝对百分比误差 mean(|pred - truth| / |truth|)

    分子分母都取绝对值，避免符号相互抵消。
    """
    pred, truth = _pair(pred, truth)
    if np.any(truth == 0):
        raise DataError("MAPE 要求真值中不含 0", row=int(np.flatnonzero(truth == 0)[0]))
    return float(np.mean(np.abs(pred - truth) / np.abs(truth)))


def mae_and_accuracy(pred, truth, labels: Optional[Tuple[Sequence, Sequence]] = None
                     ) -> Tuple[float, Optional[float]]:
    """
    平均绝对误差，以及给定类别标签时的分类准确率

    Args:
        pred: 预测值
        truth: 真值
        labels: (预测类别, 真实类别)，可选

    Returns:
        (MAE, ACC)，未给标签时 ACC 为 None
    """
    pred, truth = _pair(pred, truth)
    mae = float(np.mean(np.abs(pred - truth)))
    if labels is None:
        return mae, None
    pred_labels = np.asarray(labels[0]).reshape(-1)
    true_labels = np.asarray(labels[1]).reshape(-1)
    if pred_labels.shape != true_labels.shape or pred_labels.size == 0:
        raise DataError("类别标签长度不一致")
    return mae, float(np.mean(pred_labels == true_labels))
