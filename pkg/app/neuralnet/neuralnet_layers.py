#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
网络层模块
全连接、ReLU、恒等、Softmax、Dropout、批归一化，每层提供前向与反向传播
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from app.errors import ConfigError, DataError

LAYER_KINDS = ("dense", "relu", "identity", "softmax", "dropout", "batchnorm")

BN_MOMENTUM = 0.99
BN_EPSILON = 1e-3


@dataclass(frozen=True)
class LayerSpec:
    """层声明：kind 为层类型，width 用于 dense，rate 用于 dropout"""

    kind: str
    width: int = 0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"未知的层类型: {self.kind}")
        if self.kind == "dense" and self.width < 1:
            raise ConfigError(f"全连接层宽度必须 >= 1，当前为 {self.width}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout 比例必须在 [0, 1) 内，当前为 {self.rate}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "width": self.width, "rate": self.rate}

    @classmethod
    def from_dict(cls, data: dict) -> "LayerSpec":
        return cls(data["kind"], int(data.get("width", 0)), float(data.get("rate", 0.0)))


class Layer(ABC):
    """
    网络层的基类
    forward 缓存反向传播需要的中间量，backward 计算参数梯度并返回对输入的梯度
    """

    def __init__(self, spec: LayerSpec, input_width: int):
        self.spec = spec
        self.input_width = input_width
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    @property
    def output_width(self) -> int:
        return self.input_width

    @abstractmethod
    def forward(self, x: np.ndarray, training: bool, reuse_mask: bool = False) -> np.ndarray:
        pass

    @abstractmethod
    def backward(self, grad: np.ndarray) -> np.ndarray:
        pass


class Dense(Layer):
    """全连接层 y = xW + b，W 形状为 (输入宽度, 输出宽度)"""

    def __init__(self, spec: LayerSpec, input_width: int, rng: np.random.Generator):
        super().__init__(spec, input_width)
        # ReLU 校准的均匀初始化 ±sqrt(6/fan_in)
        limit = np.sqrt(6.0 / input_width)
        self.params["W"] = rng.uniform(-limit, limit, size=(input_width, spec.width))
        self.params["b"] = np.zeros(spec.width)
        self._x = None

    @property
    def output_width(self) -> int:
        return self.spec.width

    def forward(self, x, training, reuse_mask=False):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        self.grads["W"] = self._x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x, training, reuse_mask=False):
        self._active = x > 0
        return np.where(self._active, x, 0.0)

    def backward(self, grad):
        return grad * self._active


class Identity(Layer):
    def forward(self, x, training, reuse_mask=False):
        return x

    def backward(self, grad):
        return grad


class Softmax(Layer):
    """按行 Softmax"""

    def forward(self, x, training, reuse_mask=False):
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        self._out = e / e.sum(axis=1, keepdims=True)
        return self._out

    def backward(self, grad):
        s = self._out
        return s * (grad - np.sum(grad * s, axis=1, keepdims=True))


class Dropout(Layer):
    """倒置 dropout：训练时按 1/(1-rate) 放大保留的单元，推断时不做任何处理"""

    def __init__(self, spec: LayerSpec, input_width: int, rng: np.random.Generator):
        super().__init__(spec, input_width)
        self.rng = rng
        self._mask: Optional[np.ndarray] = None

    def forward(self, x, training, reuse_mask=False):
        if not training or self.spec.rate == 0.0:
            self._mask = None
            return x
        if not (reuse_mask and self._mask is not None and self._mask.shape == x.shape):
            keep = 1.0 - self.spec.rate
            self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class BatchNorm(Layer):
    """
    批归一化
    训练时用批均值/方差并以动量更新滑动统计量，推断时只用滑动统计量
    """

    def __init__(self, spec: LayerSpec, input_width: int,
                 momentum: float = BN_MOMENTUM, epsilon: float = BN_EPSILON):
        super().__init__(spec, input_width)
        self.momentum = momentum
        self.epsilon = epsilon
        self.params["gamma"] = np.ones(input_width)
        self.params["beta"] = np.zeros(input_width)
        self.buffers["running_mean"] = np.zeros(input_width)
        self.buffers["running_var"] = np.ones(input_width)

    def forward(self, x, training, reuse_mask=False):
        if training:
            if x.shape[0] < 2:
                raise DataError("训练模式下批归一化要求批大小 >= 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1.0 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1.0 - m) * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        self._inv_std = 1.0 / np.sqrt(var + self.epsilon)
        self._xhat = (x - mean) * self._inv_std
        return self.params["gamma"] * self._xhat + self.params["beta"]

    def backward(self, grad):
        xhat = self._xhat
        n = grad.shape[0]
        self.grads["gamma"] = np.sum(grad * xhat, axis=0)
        self.grads["beta"] = grad.sum(axis=0)
        dxhat = grad * self.params["gamma"]
        return (self._inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                                      - xhat * np.sum(dxhat * xhat, axis=0))


def batchnorm_update(layer: BatchNorm, batch: np.ndarray, training: bool = True) -> np.ndarray:
    """对一个批做批归一化，训练模式下同时更新滑动统计量"""
    return layer.forward(np.asarray(batch, dtype=np.float64), training)


def build_layer(spec: LayerSpec, input_width: int, rng: np.random.Generator) -> Layer:
    if spec.kind == "dense":
        return Dense(spec, input_width, rng)
    if spec.kind == "relu":
        return ReLU(spec, input_width)
    if spec.kind == "identity":
        return Identity(spec, input_width)
    if spec.kind == "softmax":
        return Softmax(spec, input_width)
    if spec.kind == "dropout":
        return Dropout(spec, input_width, rng)
    return BatchNorm(spec, input_width)
