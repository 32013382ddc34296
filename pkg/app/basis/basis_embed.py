#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
多分辨率径向基嵌入模块
生成各层格点节点、计算 Wendland/高斯核基函数矩阵，并去除全零列
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from app.errors import ConfigError, DataError, DataIOError

logger = logging.getLogger(__name__)

KERNELS = ("wendland", "gaussian")

# 第 h 层每个坐标轴上的节点数为 9*2^(h-1)+1
BASE_KNOTS = 9
# 核尺度 = 2.5 倍节点间距
THETA_FACTOR = 2.5
# 保留列的阈值
PRUNE_TOLERANCE = 1e-12


def num_levels(n: int, d: int) -> int:
    """
    自动层数 H = 1 + ceil(log2(n^(1/d) / 10))，至少为 1

    Args:
        n: 样本数
        d: 空间维度
    """
    if n < 1:
        raise DataError(f"样本数必须为正，当前为 {n}")
    if d not in (1, 2, 3):
        raise DataError(f"空间维度必须为 1、2 或 3，当前为 {d}")
    ratio = n ** (1.0 / d) / 10.0
    # 完全幂的开方可能差一个 ulp
    levels = 1 + math.ceil(math.log2(ratio) - 1e-12)
    return max(1, levels)


def knots_per_axis(level: int) -> int:
    return BASE_KNOTS * 2 ** (level - 1) + 1


def _check_domain(domain, d: int) -> np.ndarray:
    domain = np.asarray(domain, dtype=np.float64).reshape(d, 2)
    widths = domain[:, 1] - domain[:, 0]
    if np.any(~np.isfinite(domain)) or np.any(widths <= 0):
        raise DataError(f"区域边界退化: {domain.tolist()}")
    return domain


def knot_grid(level: int, domain, d: int) -> Tuple[np.ndarray, float]:
    """
    第 level 层的格点节点与核尺度

    节点包含区域两端，每轴 9*2^(level-1)+1 个；距离在单位盒上计算，
    因此 θ 以单位盒为尺度，等于 2.5 倍单位盒上的节点间距。

    Args:
        level: 层号，从 1 开始
        domain: 每轴 [lo, hi]，形状 d×2
        d: 空间维度

    Returns:
        (节点矩阵 (count^d)×d，原坐标系, θ)
    """
    if level < 1:
        raise DataError(f"层号必须 >= 1，当前为 {level}")
    domain = _check_domain(domain, d)
    count = knots_per_axis(level)
    unit = np.linspace(0.0, 1.0, count)
    mesh = np.meshgrid(*([unit] * d), indexing="ij")
    unit_knots = np.stack([m.reshape(-1) for m in mesh], axis=1)
    knots = domain[:, 0] + unit_knots * (domain[:, 1] - domain[:, 0])
    theta = THETA_FACTOR / (count - 1)
    return knots, theta


def wendland(t) -> np.ndarray:
    """Wendland 紧支撑函数 (1-t)^6 (35t^2+18t+3)/3，t>1 时为 0"""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise DataError("Wendland 核的参数不能为负")
    inside = t < 1.0
    tc = np.where(inside, t, 1.0)
    value = (1.0 - tc) ** 6 * (35.0 * tc ** 2 + 18.0 * tc + 3.0) / 3.0
    return np.where(inside, value, 0.0)


def gaussian_kernel(t) -> np.ndarray:
    """高斯核 exp(-t^2)"""
    t = np.asarray(t, dtype=np.float64)
    return np.exp(-t ** 2)


_KERNEL_FUNCS = {"wendland": wendland, "gaussian": gaussian_kernel}


@dataclass(frozen=True)
class BasisSystem:
    """多分辨率基函数系统，构造后不可修改"""

    dim: int
    levels: int
    kernel: str
    domain: np.ndarray
    thetas: Tuple[float, ...]

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ConfigError(f"未知的核函数: {self.kernel}，可选 {', '.join(KERNELS)}")
        if self.levels < 1:
            raise ConfigError(f"层数必须 >= 1，当前为 {self.levels}")
        domain = _check_domain(self.domain, self.dim)
        domain.setflags(write=False)
        object.__setattr__(self, "domain", domain)

    @classmethod
    def create(cls, dim: int, levels: int, kernel: str = "wendland", domain=None) -> "BasisSystem":
        if domain is None:
            domain = np.tile([0.0, 1.0], (dim, 1))
        thetas = tuple(knot_grid(h, domain, dim)[1] for h in range(1, levels + 1))
        return cls(dim, levels, kernel, np.asarray(domain, dtype=np.float64), thetas)

    @property
    def level_counts(self) -> List[int]:
        return [knots_per_axis(h) ** self.dim for h in range(1, self.levels + 1)]

    @property
    def k_original(self) -> int:
        return int(sum(self.level_counts))

    def knots(self, level: int) -> np.ndarray:
        return knot_grid(level, self.domain, self.dim)[0]

    def to_unit(self, locations: np.ndarray) -> np.ndarray:
        """把坐标逐轴仿射映射到单位盒"""
        lo = self.domain[:, 0]
        return (locations - lo) / (self.domain[:, 1] - lo)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "levels": self.levels, "kernel": self.kernel,
                "domain": self.domain.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "BasisSystem":
        return cls.create(int(data["dim"]), int(data["levels"]), data["kernel"], data["domain"])


def default_domain(locations: np.ndarray) -> np.ndarray:
    """数据外包盒每侧各外扩一个第 1 层节点间距"""
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    lo = locations.min(axis=0)
    hi = locations.max(axis=0)
    width = hi - lo
    if np.any(width <= 0):
        raise DataError("数据在某个坐标轴上没有跨度，无法自动确定区域，请显式指定 basis.domain")
    pad = width / (knots_per_axis(1) - 1)
    return np.stack([lo - pad, hi + pad], axis=1)


def build_basis_system(locations: np.ndarray,
                       levels: Union[int, str] = "auto",
                       kernel: str = "wendland",
                       domain: Union[str, Sequence[float], np.ndarray] = "auto") -> BasisSystem:
    """
    按训练位置构造基函数系统

    Args:
        locations: 训练坐标 N×d
        levels: 层数或 "auto"（按 num_levels 计算）
        kernel: "wendland" 或 "gaussian"
        domain: "auto"、扁平的 lo1,hi1[,lo2,hi2] 序列或 d×2 数组
    """
    locations = np.asarray(locations, dtype=np.float64)
    if locations.ndim == 1:
        locations = locations[:, None]
    d = locations.shape[1]
    if isinstance(levels, str):
        if levels != "auto":
            raise ConfigError(f"basis.levels 只能是整数或 auto，当前为 {levels}")
        levels = num_levels(locations.shape[0], d)
    if isinstance(domain, str):
        if domain != "auto":
            raise ConfigError(f"basis.domain 只能是 auto 或数值序列，当前为 {domain}")
        domain = default_domain(locations)
    system = BasisSystem.create(d, int(levels), kernel, np.asarray(domain, dtype=np.float64).reshape(d, 2))
    logger.debug(f"基函数系统: d={d}, H={system.levels}, K={system.k_original}, 核={kernel}")
    return system


@dataclass(frozen=True)
class EmbeddingMatrix:
    """基函数矩阵 Φ 及剪枝信息"""

    values: np.ndarray
    kept_columns: np.ndarray
    k_original: int

    @property
    def width(self) -> int:
        return self.values.shape[1]


def evaluate_basis(locations: np.ndarray, system: BasisSystem) -> np.ndarray:
    """计算未剪枝的 N×K 基函数矩阵，列按层、层内按节点字典序排列"""
    locations = np.asarray(locations, dtype=np.float64)
    if locations.ndim == 1:
        locations = locations[:, None]
    if locations.shape[1] != system.dim:
        raise DataError(f"坐标维度 {locations.shape[1]} 与基函数系统维度 {system.dim} 不一致")
    kernel = _KERNEL_FUNCS[system.kernel]
    unit_locations = system.to_unit(locations)
    unit_domain = np.tile([0.0, 1.0], (system.dim, 1))
    blocks = []
    for h, theta in enumerate(system.thetas, start=1):
        unit_knots, _ = knot_grid(h, unit_domain, system.dim)
        blocks.append(kernel(cdist(unit_locations, unit_knots) / theta))
    return np.hstack(blocks)


def embed(locations: np.ndarray, system: BasisSystem,
          kept_columns: Optional[np.ndarray] = None) -> EmbeddingMatrix:
    """
    计算嵌入矩阵并去除全零列

    Args:
        locations: 坐标 N×d
        system: 基函数系统
        kept_columns: 已冻结的保留列；为 None 时按当前坐标剪枝

    Returns:
        EmbeddingMatrix
    """
    full = evaluate_basis(locations, system)
    if kept_columns is None:
        kept_columns = np.flatnonzero(np.any(np.abs(full) > PRUNE_TOLERANCE, axis=0))
        dropped = full.shape[1] - len(kept_columns)
        if dropped:
            logger.debug(f"去除 {dropped} 个全零基函数列")
    kept_columns = np.asarray(kept_columns, dtype=np.int64)
    return EmbeddingMatrix(full[:, kept_columns], kept_columns, system.k_original)


def concat_features(x: Optional[np.ndarray], phi: Union[EmbeddingMatrix, np.ndarray]) -> np.ndarray:
    """协变量在前、基函数列在后拼接特征矩阵"""
    values = phi.values if isinstance(phi, EmbeddingMatrix) else np.asarray(phi, dtype=np.float64)
    if x is None:
        return values.copy()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != values.shape[0]:
        raise DataError(f"协变量行数 {x.shape[0]} 与基函数矩阵行数 {values.shape[0]} 不一致")
    return np.hstack([x, values])


def save_embedding_csv(path, embedding: EmbeddingMatrix) -> Path:
    """导出嵌入矩阵，列名为原始列号 phi_<k>"""
    path = Path(path)
    frame = pd.DataFrame(embedding.values, columns=[f"phi_{k}" for k in embedding.kept_columns])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise DataIOError(f"无法写入 {path}: {e}") from e
    return path
