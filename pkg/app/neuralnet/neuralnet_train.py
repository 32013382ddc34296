#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
训练模块
Adam 优化器与小批量训练循环
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Sequence

import numpy as np
from tqdm import tqdm

from app.errors import ConfigError, DataError, NumericalError
from app.simulate.simulate_rng import make_stream

from .neuralnet_losses import LOSSES
from .neuralnet_network import NetworkState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "mse"
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"未知的损失函数: {self.loss}，可选 {', '.join(LOSSES)}")
        if self.epochs < 1:
            raise ConfigError(f"训练轮数必须 >= 1，当前为 {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"批大小必须 >= 1，当前为 {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"学习率必须为正，当前为 {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam 的 beta1、beta2 必须在 [0, 1) 内")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    """每轮的样本加权平均训练损失"""

    losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def adam_step(net: NetworkState, grads: Sequence[np.ndarray], learning_rate: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> NetworkState:
    """
    带偏差校正的 Adam 更新，原地修改参数与矩估计

    Returns:
        同一个 net，便于链式调用
    """
    net.step += 1
    t = net.step
    for k, ((_, _, param), grad) in enumerate(zip(net.parameters(), grads)):
        m = net.first_moment[k]
        v = net.second_moment[k]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        param -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return net


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """
    打乱后切分小批量；不足的最后一批保留，
    但只有 1 个样本时并入前一批
    """
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def train(net: NetworkState, x, target, config: TrainConfig) -> TrainHistory:
    """
    小批量 Adam 训练

    Args:
        net: 待训练网络（原地修改）
        x: 输入矩阵 N×P
        target: 回归目标或类别标签
        config: 训练设置

    Returns:
        TrainHistory

    Raises:
        NumericalError: 某一轮损失出现 NaN/Inf
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target)
    n = x.shape[0]
    if target.shape[0] != n:
        raise DataError(f"目标行数 {target.shape[0]} 与输入行数 {n} 不一致")
    if n < 2:
        raise DataError("训练样本数至少为 2")
    shuffle = make_stream(config.seed, "shuffle")
    history = TrainHistory()
    epochs = range(config.epochs)
    if config.progress:
        epochs = tqdm(epochs, desc="训练", leave=False)
    for epoch in epochs:
        total = 0.0
        for batch in minibatches(n, config.batch_size, shuffle):
            value, grads = net.loss_and_gradients(x[batch], target[batch], config.loss)
            if not np.isfinite(value):
                raise NumericalError(f"第 {epoch} 轮训练损失出现非有限值 ({value})")
            adam_step(net, grads, config.learning_rate, config.beta1, config.beta2, config.eps)
            total += value * len(batch)
        history.losses.append(total / n)
        if config.progress:
            epochs.set_postfix(loss=f"{history.losses[-1]:.4g}")
    logger.debug(f"训练完成: {config.epochs} 轮, 最终损失 {history.final_loss:.6g}")
    return history
