#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
网络状态模块
按层声明构建网络，负责前向/反向传播、梯度检查与 JSON 检查点
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.errors import DataError, DataIOError, SchemaError
from app.simulate.simulate_rng import make_stream

from .neuralnet_layers import Layer, LayerSpec, build_layer
from .neuralnet_losses import loss_gradient, loss_value

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "deepkriging-network"
CHECKPOINT_VERSION = 1


class NetworkState:
    """
    前馈网络的完整状态：层、参数、批归一化滑动统计量与 Adam 矩估计

    前向时 mode 为 "train" 或 "infer"；只有 train 会启用 dropout 与批统计。
    """

    def __init__(self, input_width: int, specs: Sequence[LayerSpec], seed: int = 0):
        if input_width < 1:
            raise DataError(f"输入宽度必须 >= 1，当前为 {input_width}")
        self.input_width = int(input_width)
        self.seed = int(seed)
        self.specs: List[LayerSpec] = list(specs)
        self.layers: List[Layer] = []
        dropout_stream = make_stream(seed, "dropout")
        width = self.input_width
        for index, spec in enumerate(self.specs):
            rng = dropout_stream if spec.kind == "dropout" else make_stream(seed, "init", index)
            layer = build_layer(spec, width, rng)
            self.layers.append(layer)
            width = layer.output_width
        self.output_width = width
        # Adam 状态
        self.step = 0
        self.first_moment = [np.zeros_like(p) for _, _, p in self.parameters()]
        self.second_moment = [np.zeros_like(p) for _, _, p in self.parameters()]

    def parameters(self) -> List[Tuple[int, str, np.ndarray]]:
        """(层序号, 参数名, 数组)，顺序固定"""
        result = []
        for index, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                result.append((index, name, layer.params[name]))
        return result

    def gradients(self) -> List[np.ndarray]:
        return [self.layers[i].grads[name] for i, name, _ in self.parameters()]

    def forward(self, x: np.ndarray, mode: str = "infer", reuse_masks: bool = False) -> np.ndarray:
        if mode not in ("train", "infer"):
            raise DataError(f"未知的前向模式: {mode}")
        out = np.asarray(x, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.input_width:
            raise DataError(f"输入形状 {out.shape} 与网络输入宽度 {self.input_width} 不一致")
        training = mode == "train"
        for layer in self.layers:
            out = layer.forward(out, training, reuse_masks)
        return out

    def backward(self, grad_output: np.ndarray) -> List[np.ndarray]:
        """从损失对输出的梯度反传，返回与 parameters() 对齐的梯度列表"""
        grad = grad_output
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return self.gradients()

    def loss_and_gradients(self, x, target, loss: str,
                           reuse_masks: bool = False) -> Tuple[float, List[np.ndarray]]:
        output = self.forward(x, "train", reuse_masks)
        value = loss_value(loss, output, target)
        return value, self.backward(loss_gradient(loss, output, target))

    def snapshot_buffers(self) -> Dict[int, Dict[str, np.ndarray]]:
        return {i: {k: v.copy() for k, v in layer.buffers.items()}
                for i, layer in enumerate(self.layers) if layer.buffers}

    def restore_buffers(self, buffers: Dict[int, Dict[str, np.ndarray]]):
        for i, values in buffers.items():
            self.layers[i].buffers.update({k: v.copy() for k, v in values.items()})


def init_weights(input_width: int, specs: Sequence[LayerSpec], seed: int = 0) -> NetworkState:
    """按层声明初始化网络：全连接权重 Uniform(±√(6/fan_in))，偏置为 0"""
    return NetworkState(input_width, specs, seed)


def gradient_check(net: NetworkState, x, target, loss: str, step: float = 1e-6) -> float:
    """
    以中心差分检查反向传播梯度

    dropout 掩码在所有前向之间复用；批归一化的滑动统计量检查后恢复。

    Returns:
        最大相对误差 |解析-数值| / max(|解析|, |数值|, 1e-3)
    """
    buffers = net.snapshot_buffers()
    try:
        # 第一次前向生成掩码
        _, analytic = net.loss_and_gradients(x, target, loss, reuse_masks=False)
        analytic = [g.copy() for g in analytic]
        worst = 0.0
        for (_, _, param), grad in zip(net.parameters(), analytic):
            flat = param.reshape(-1)
            grad_flat = grad.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + step
                plus = loss_value(loss, net.forward(x, "train", reuse_masks=True), target)
                flat[j] = original - step
                minus = loss_value(loss, net.forward(x, "train", reuse_masks=True), target)
                flat[j] = original
                numeric = (plus - minus) / (2.0 * step)
                scale = max(abs(grad_flat[j]), abs(numeric), 1e-3)
                worst = max(worst, abs(grad_flat[j] - numeric) / scale)
        return worst
    finally:
        net.restore_buffers(buffers)


def save_checkpoint(net: NetworkState, path) -> Path:
    """网络状态写为 JSON"""
    path = Path(path)
    params = {f"{i}.{name}": p.tolist() for i, name, p in net.parameters()}
    buffers = {f"{i}.{k}": v.tolist() for i, values in net.snapshot_buffers().items()
               for k, v in values.items()}
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_width": net.input_width,
        "seed": net.seed,
        "layers": [s.to_dict() for s in net.specs],
        "parameters": params,
        "buffers": buffers,
        "optimizer": {"step": net.step,
                      "m": [m.tolist() for m in net.first_moment],
                      "v": [v.tolist() for v in net.second_moment]},
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload), encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"无法写入检查点 {path}: {e}") from e
    logger.debug(f"检查点已保存: {path}")
    return path


def load_checkpoint(path) -> NetworkState:
    """从 JSON 检查点恢复网络，参数形状不符时抛出 SchemaError"""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise DataIOError(f"检查点不存在: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise DataIOError(f"无法读取检查点 {path}: {e}") from e
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError(f"不是网络检查点: {path}")
    specs = [LayerSpec.from_dict(d) for d in payload["layers"]]
    net = NetworkState(payload["input_width"], specs, payload.get("seed", 0))
    for i, name, param in net.parameters():
        stored = np.asarray(payload["parameters"][f"{i}.{name}"], dtype=np.float64)
        if stored.shape != param.shape:
            raise SchemaError(f"参数 {i}.{name} 形状 {stored.shape} 与声明 {param.shape} 不一致")
        param[...] = stored
    for key, value in payload.get("buffers", {}).items():
        index, name = key.split(".", 1)
        net.layers[int(index)].buffers[name] = np.asarray(value, dtype=np.float64)
    optimizer = payload.get("optimizer", {})
    net.step = int(optimizer.get("step", 0))
    if optimizer.get("m"):
        net.first_moment = [np.asarray(m, dtype=np.float64) for m in optimizer["m"]]
        net.second_moment = [np.asarray(v, dtype=np.float64) for v in optimizer["v"]]
    return net
