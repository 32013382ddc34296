#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
损失函数模块
MSE、交叉熵与联合二元交叉熵 (JBCE)，均按样本平均，并提供对网络输出的梯度
"""

import numpy as np

from app.errors import ConfigError, DataError

LOSSES = ("mse", "cross_entropy", "jbce")

# 所有对数损失中的概率截断界
PROB_CLIP = 1e-12
# 概率行和的容差
ROW_SUM_TOLERANCE = 1e-6


def _check_probabilities(output: np.ndarray):
    if np.any(output < 0) or np.any(np.abs(output.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
        bad = np.flatnonzero((output < 0).any(axis=1)
                             | (np.abs(output.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE))
        raise DataError("概率行非法（存在负值或行和不为 1）", row=int(bad[0]))


def _labels(target, n: int, n_classes: int) -> np.ndarray:
    labels = np.asarray(target).reshape(-1).astype(np.int64)
    if labels.shape[0] != n:
        raise DataError(f"标签个数 {labels.shape[0]} 与输出行数 {n} 不一致")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise DataError(f"标签必须在 [0, {n_classes}) 内")
    return labels


def _cumulative(output: np.ndarray, labels: np.ndarray):
    """JBCE 的累积概率 F(c_m) 与指示量 1{z <= c_m}，m = 1..M"""
    m = output.shape[1] - 1
    cdf = np.cumsum(output, axis=1)[:, :m]
    indicator = labels[:, None] < np.arange(1, m + 1)[None, :]
    return cdf, indicator


def loss_value(loss: str, output: np.ndarray, target) -> float:
    """
    计算平均损失

    Args:
        loss: "mse"、"cross_entropy" 或 "jbce"
        output: 网络输出（分类损失要求为概率行）
        target: 回归目标，或类别 / 分箱标签

    Returns:
        按样本平均的损失
    """
    output = np.asarray(output, dtype=np.float64)
    n = output.shape[0]
    if loss == "mse":
        target = np.asarray(target, dtype=np.float64).reshape(output.shape)
        return float(np.mean((output - target) ** 2))
    if loss == "cross_entropy":
        _check_probabilities(output)
        labels = _labels(target, n, output.shape[1])
        p = np.clip(output[np.arange(n), labels], PROB_CLIP, 1.0)
        return float(-np.mean(np.log(p)))
    if loss == "jbce":
        _check_probabilities(output)
        labels = _labels(target, n, output.shape[1])
        cdf, indicator = _cumulative(output, labels)
        cdf = np.clip(cdf, PROB_CLIP, 1.0 - PROB_CLIP)
        terms = np.where(indicator, np.log(cdf), np.log(1.0 - cdf))
        return float(-terms.sum() / n)
    raise ConfigError(f"未知的损失函数: {loss}")


def loss_gradient(loss: str, output: np.ndarray, target) -> np.ndarray:
    """平均损失对网络输出的梯度，形状与 output 相同"""
    output = np.asarray(output, dtype=np.float64)
    n = output.shape[0]
    if loss == "mse":
        target = np.asarray(target, dtype=np.float64).reshape(output.shape)
        return 2.0 * (output - target) / output.size
    if loss == "cross_entropy":
        labels = _labels(target, n, output.shape[1])
        grad = np.zeros_like(output)
        p = output[np.arange(n), labels]
        grad[np.arange(n), labels] = np.where(p > PROB_CLIP, -1.0 / (n * np.maximum(p, PROB_CLIP)), 0.0)
        return grad
    if loss == "jbce":
        labels = _labels(target, n, output.shape[1])
        cdf, indicator = _cumulative(output, labels)
        inside = (cdf > PROB_CLIP) & (cdf < 1.0 - PROB_CLIP)
        safe = np.clip(cdf, PROB_CLIP, 1.0 - PROB_CLIP)
        d_cdf = np.where(indicator, -1.0 / safe, 1.0 / (1.0 - safe)) / n
        d_cdf = np.where(inside, d_cdf, 0.0)
        grad = np.zeros_like(output)
        # F(c_m) 含第 0..m-1 个分箱，反向累加
        grad[:, :-1] = np.cumsum(d_cdf[:, ::-1], axis=1)[:, ::-1]
        return grad
    raise ConfigError(f"未知的损失函数: {loss}")
