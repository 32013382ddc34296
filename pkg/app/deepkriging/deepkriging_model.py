#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
DeepKriging 模型模块
坐标经多分辨率基函数嵌入后与协变量拼接，输入前馈网络做回归或分类
"""

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from app.basis.basis_embed import BasisSystem, build_basis_system, concat_features, embed
from app.errors import ConfigError, DataError, DataIOError, SchemaError
from app.neuralnet.neuralnet_layers import LayerSpec
from app.neuralnet.neuralnet_network import (
    NetworkState, init_weights, load_checkpoint, save_checkpoint,
)
from app.neuralnet.neuralnet_train import TrainConfig, TrainHistory
from app.neuralnet.neuralnet_train import train as train_network
from app.predictor.base_predictor import SpatialPredictor
from app.spatial.spatial_data import Scaler, SpatialDataset, min_max_normalize

logger = logging.getLogger(__name__)

# 任务类型与对应的损失、输出层
TASKS = {
    "regression": ("mse", "identity"),
    "classification": ("cross_entropy", "softmax"),
    "distribution": ("jbce", "softmax"),
}
# 特征方式：basis 为 DeepKriging，intercept / coords 为基线 DNN
FEATURES = ("basis", "intercept", "coords")

MODEL_FILE = "model.json"
NETWORK_FILE = "network.json"


@dataclass(frozen=True)
class DeepKrigingConfig:
    """网络结构、训练与基函数设置"""

    hidden_layers: int = 3
    width: int = 100
    dropout: float = 0.5
    batchnorm: bool = True
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    kernel: str = "wendland"
    levels: Union[int, str] = "auto"
    domain: Union[str, tuple] = "auto"
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ConfigError(f"隐藏层数必须 >= 1，当前为 {self.hidden_layers}")
        if self.width < 1:
            raise ConfigError(f"隐藏层宽度必须 >= 1，当前为 {self.width}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout 比例必须在 [0, 1) 内，当前为 {self.dropout}")

    def with_overrides(self, **overrides) -> "DeepKrigingConfig":
        unknown = set(overrides) - set(self.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"未知的 DeepKriging 设置: {', '.join(sorted(unknown))}")
        return replace(self, **overrides)

    def train_config(self, loss: str) -> TrainConfig:
        return TrainConfig(loss=loss, epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, seed=self.seed, progress=self.progress)

    def to_dict(self) -> dict:
        data = asdict(self)
        if isinstance(self.domain, tuple):
            data["domain"] = list(self.domain)
        return data


# 一维高斯过程设计：7 个隐藏层、不用 dropout、4 层基函数
SIM1D_CONFIG = DeepKrigingConfig(hidden_layers=7, dropout=0.0, epochs=100, batch_size=32,
                                 levels=4, domain=(0.0, 1.0))
# 二维非平稳设计：4 个隐藏层、批大小 64、3 层基函数
SIM2D_CONFIG = DeepKrigingConfig(hidden_layers=4, batch_size=64, levels=3)


def default_layers(config: DeepKrigingConfig, task: str, n_outputs: int) -> List[LayerSpec]:
    """
    默认网络结构：
    第 1 个隐藏层后接 dropout 与批归一化，第 2 个后接 dropout，
    最后一个隐藏层后接批归一化，再接输出层
    """
    if task not in TASKS:
        raise ConfigError(f"未知的任务类型: {task}，可选 {', '.join(TASKS)}")
    specs = []
    last = config.hidden_layers - 1
    for i in range(config.hidden_layers):
        specs += [LayerSpec("dense", config.width), LayerSpec("relu")]
        if i in (0, 1) and config.dropout > 0:
            specs.append(LayerSpec("dropout", rate=config.dropout))
        if config.batchnorm and (i == 0 or i == last):
            specs.append(LayerSpec("batchnorm"))
    specs += [LayerSpec("dense", n_outputs), LayerSpec(TASKS[task][1])]
    return specs


def build_default(p: int, k_prime: int, task: str = "regression", n_classes: int = 1,
                  config: DeepKrigingConfig = DeepKrigingConfig()) -> NetworkState:
    """
    按默认结构构建网络

    Args:
        p: 协变量个数
        k_prime: 剪枝后的基函数个数
        task: "regression"、"classification" 或 "distribution"
        n_classes: 分类任务的类别数（分布任务为分箱数）
        config: 结构覆盖项
    """
    if p < 0 or k_prime < 0 or p + k_prime < 1:
        raise ConfigError(f"输入宽度非法: P={p}, K'={k_prime}")
    n_outputs = 1 if task == "regression" else n_classes
    if task != "regression" and n_classes < 2:
        raise ConfigError(f"分类任务至少需要 2 类，当前为 {n_classes}")
    return init_weights(p + k_prime, default_layers(config, task, n_outputs), config.seed)


def classify_threshold(z, threshold: float) -> np.ndarray:
    """z > threshold 时标为 1（严格不等号）"""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DataError("阈值分类的输入包含非有限值")
    return (z > threshold).astype(np.int64)


class DeepKriging(SpatialPredictor):
    """
    DeepKriging 预测器

    基函数系统、剪枝列与协变量缩放器只在训练数据上确定，之后冻结供预测复用。
    features 为 intercept / coords 时不做基函数嵌入，即基线 DNN。
    """

    def __init__(self, task: str = "regression", n_classes: int = 1,
                 config: DeepKrigingConfig = DeepKrigingConfig(),
                 features: str = "basis", name: str = "deepkriging"):
        super().__init__(name)
        if task not in TASKS:
            raise ConfigError(f"未知的任务类型: {task}，可选 {', '.join(TASKS)}")
        if features not in FEATURES:
            raise ConfigError(f"未知的特征方式: {features}，可选 {', '.join(FEATURES)}")
        self.task = task
        self.n_classes = n_classes if task != "regression" else 1
        self.config = config
        self.features = features
        self.system: Optional[BasisSystem] = None
        self.kept_columns: Optional[np.ndarray] = None
        self.scaler: Optional[Scaler] = None
        self.net: Optional[NetworkState] = None
        self.history: Optional[TrainHistory] = None

    @property
    def fitted(self) -> bool:
        return self.net is not None

    def _feature_matrix(self, locations: np.ndarray, covariates: Optional[np.ndarray]) -> np.ndarray:
        locations = np.asarray(locations, dtype=np.float64)
        if locations.ndim == 1:
            locations = locations[:, None]
        n = locations.shape[0]
        p = self.scaler.minimum.shape[0]
        if covariates is None:
            covariates = np.empty((n, 0))
        covariates = np.asarray(covariates, dtype=np.float64)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if covariates.shape[1] != p:
            raise DataError(f"协变量列数 {covariates.shape[1]} 与训练时的 {p} 不一致")
        x = self.scaler.transform(covariates) if p else covariates
        if self.features == "basis":
            return concat_features(x, embed(locations, self.system, self.kept_columns))
        parts = [x, np.ones((n, 1))]
        if self.features == "coords":
            parts.append(locations)
        return np.hstack(parts)

    def features_for(self, locations: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        """按冻结的嵌入与缩放器计算网络输入"""
        if not self.fitted:
            raise DataError(f"{self.name} 尚未拟合")
        return self._feature_matrix(locations, covariates)

    def fit(self, train: SpatialDataset, targets=None) -> TrainHistory:
        """
        在训练集上拟合

        Args:
            train: 训练数据集
            targets: 分类/分布任务的整数标签；回归任务默认使用 train.responses

        Returns:
            每轮损失记录
        """
        if train.n < 2:
            raise DataError("训练集至少需要 2 个样本")
        if targets is None:
            targets = train.responses
        targets = np.asarray(targets)
        if self.task != "regression":
            if not np.all(targets == np.round(targets)):
                raise DataError("分类任务的标签必须为整数")
            targets = targets.astype(np.int64)

        _, self.scaler = min_max_normalize(train.covariates)
        k_prime = 0
        if self.features == "basis":
            domain = self.config.domain
            if not isinstance(domain, str):
                domain = np.asarray(domain, dtype=np.float64)
            self.system = build_basis_system(train.locations, self.config.levels,
                                             self.config.kernel, domain)
            self.kept_columns = embed(train.locations, self.system).kept_columns
            k_prime = len(self.kept_columns)
        else:
            k_prime = 1 + (train.dim if self.features == "coords" else 0)
        self.net = build_default(train.n_covariates, k_prime, self.task, self.n_classes, self.config)
        features = self._feature_matrix(train.locations, train.covariates)
        loss = TASKS[self.task][0]
        logger.info(f"{self.name} 开始训练: N={train.n}, 输入宽度={features.shape[1]}, 损失={loss}")
        self.history = train_network(self.net, features, targets, self.config.train_config(loss))
        return self.history

    def predict(self, locations: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        """回归任务返回长度 M 的预测值，分类/分布任务返回 M×类别数 的概率矩阵"""
        features = self.features_for(locations, covariates)
        out = self.net.forward(features, "infer")
        return out[:, 0] if self.task == "regression" else out

    def predict_proba(self, locations: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        if self.task == "regression":
            raise ConfigError("回归模型不提供类别概率")
        return self.predict(locations, covariates)

    def predict_labels(self, locations: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        return np.argmax(self.predict_proba(locations, covariates), axis=1)

    def save(self, directory) -> Path:
        """写出网络检查点与模型说明（基函数系统、剪枝列、缩放器）"""
        if not self.fitted:
            raise DataError(f"{self.name} 尚未拟合，无法保存")
        directory = Path(directory)
        save_checkpoint(self.net, directory / NETWORK_FILE)
        payload = {
            "name": self.name,
            "task": self.task,
            "n_classes": self.n_classes,
            "features": self.features,
            "config": self.config.to_dict(),
            "basis": self.system.to_dict() if self.system is not None else None,
            "kept_columns": self.kept_columns.tolist() if self.kept_columns is not None else None,
            "scaler": self.scaler.to_dict(),
        }
        try:
            (directory / MODEL_FILE).write_text(json.dumps(payload, indent=2), encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"无法写入模型说明 {directory / MODEL_FILE}: {e}") from e
        logger.info(f"模型已保存: {directory}")
        return directory

    @classmethod
    def load(cls, directory) -> "DeepKriging":
        directory = Path(directory)
        try:
            payload = json.loads((directory / MODEL_FILE).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise DataIOError(f"模型说明不存在: {directory / MODEL_FILE}") from e
        except (OSError, json.JSONDecodeError) as e:
            raise DataIOError(f"无法读取模型说明: {e}") from e
        try:
            config = dict(payload["config"])
            if isinstance(config.get("domain"), list):
                config["domain"] = tuple(config["domain"])
            model = cls(payload["task"], payload["n_classes"], DeepKrigingConfig(**config),
                        payload["features"], payload["name"])
        except (KeyError, TypeError) as e:
            raise SchemaError(f"模型说明缺少字段: {e}") from e
        if payload.get("basis"):
            model.system = BasisSystem.from_dict(payload["basis"])
            model.kept_columns = np.asarray(payload["kept_columns"], dtype=np.int64)
        model.scaler = Scaler.from_dict(payload["scaler"])
        model.net = load_checkpoint(directory / NETWORK_FILE)
        return model


def baseline_dnn(variant: str, task: str = "regression", n_classes: int = 1,
                 config: DeepKrigingConfig = DeepKrigingConfig()) -> DeepKriging:
    """
    基线 DNN：与 DeepKriging 相同的网络，但输入只有截距（intercept_only）
    或截距加原始坐标（with_coords），不做基函数嵌入
    """
    variants = {"intercept_only": ("intercept", "dnn-intercept"),
                "with_coords": ("coords", "dnn-coords")}
    if variant not in variants:
        raise ConfigError(f"未知的基线变体: {variant}，可选 {', '.join(variants)}")
    features, name = variants[variant]
    return DeepKriging(task, n_classes, config, features, name)
