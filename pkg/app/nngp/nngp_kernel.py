#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NNGP 协方差
无限宽 DeepKriging 网络诱导的高斯过程协方差：基础项、逐层递推与近场形式检查
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg

from app.basis.basis_embed import EmbeddingMatrix
from app.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")
# 近场检查通过的相对残差上限
NEARFIELD_TOLERANCE = 0.05


@dataclass(frozen=True)
class NNGPConfig:
    sigma_b2: float = 0.0
    sigma_w2: float = 1.0
    depth: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if not (np.isfinite(self.sigma_b2) and self.sigma_b2 >= 0):
            raise ConfigError(f"σ_b² 必须为非负有限值，当前为 {self.sigma_b2}")
        if not (np.isfinite(self.sigma_w2) and self.sigma_w2 > 0):
            raise ConfigError(f"σ_w² 必须为正有限值，当前为 {self.sigma_w2}")
        if self.depth < 1:
            raise ConfigError(f"深度必须 >= 1，当前为 {self.depth}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"未知的激活函数: {self.activation}，可选 {', '.join(ACTIVATIONS)}")


def _features(features: Union[np.ndarray, EmbeddingMatrix]) -> np.ndarray:
    values = features.values if isinstance(features, EmbeddingMatrix) else features
    values = np.asarray(values, dtype=np.float64)
    return values[:, None] if values.ndim == 1 else values


def c0(a, b, cfg: NNGPConfig) -> float:
    """基础项 σ_b² + σ_w²·aᵀb/(P+K)"""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DataError(f"输入长度不一致: {a.shape[0]} 与 {b.shape[0]}")
    return float(cfg.sigma_b2 + cfg.sigma_w2 * (a @ b) / a.shape[0])


def arc_cosine_step(c_ab, c_aa, c_bb, cfg: NNGPConfig):
    """
    ReLU 层的递推：σ_b² + σ_w²/(2π)·√(c_aa·c_bb)·{sin θ + (π−θ)cos θ}

    相关系数先截断到 [-1, 1] 再取 arccos。支持数组输入。
    """
    c_ab, c_aa, c_bb = (np.asarray(v, dtype=np.float64) for v in (c_ab, c_aa, c_bb))
    if np.any(c_aa <= 0) or np.any(c_bb <= 0):
        raise DataError("arc-cosine 递推要求对角元为正")
    norm = np.sqrt(c_aa * c_bb)
    theta = np.arccos(np.clip(c_ab / norm, -1.0, 1.0))
    value = cfg.sigma_b2 + cfg.sigma_w2 / (2.0 * np.pi) * norm * (
        np.sin(theta) + (np.pi - theta) * np.cos(theta))
    return float(value) if value.ndim == 0 else value


def induced_cov(features: Union[np.ndarray, EmbeddingMatrix], cfg: NNGPConfig) -> np.ndarray:
    """
    诱导协方差的 Gram 矩阵：基础项后做 depth-1 步递推

    Args:
        features: 每行为一个位置的 (x(s)ᵀ, φ(s)ᵀ)
        cfg: NNGP 设置

    Returns:
        N×N 对称矩阵
    """
    x = _features(features)
    gram = cfg.sigma_b2 + cfg.sigma_w2 * (x @ x.T) / x.shape[1]
    for _ in range(cfg.depth - 1):
        if cfg.activation == "relu":
            diag = np.diag(gram).copy()
            gram = arc_cosine_step(gram, diag[:, None], diag[None, :], cfg)
        else:
            gram = cfg.sigma_b2 + cfg.sigma_w2 * gram
    return 0.5 * (gram + gram.T)


@dataclass(frozen=True)
class NearfieldReport:
    """
    近场拟合 C(s,s') ≈ v(s) + v(s') − c‖φ(s)−φ(s')‖² 的结果

    residual 为非对角点对的残差范数相对于 c·‖φ(s)−φ(s')‖² 项范数的比值。
    """

    v: np.ndarray
    c: float
    residual: float
    n_pairs: int

    @property
    def passed(self) -> bool:
        return self.residual < NEARFIELD_TOLERANCE


def nearfield_form_check(locations, features: Union[np.ndarray, EmbeddingMatrix],
                         cfg: NNGPConfig = NNGPConfig(depth=2),
                         max_steps: float = 2.0) -> NearfieldReport:
    """
    在一维细网格上检查相邻位置的协方差形式

    Args:
        locations: 升序一维网格
        features: 各位置的嵌入
        cfg: NNGP 设置（默认一个 ReLU 隐藏层）
        max_steps: 参与拟合的点对间距上限（以网格步长计，不含该值）

    Returns:
        NearfieldReport
    """
    s = np.asarray(locations, dtype=np.float64).reshape(-1)
    x = _features(features)
    if x.shape[0] != s.shape[0]:
        raise DataError(f"嵌入行数 {x.shape[0]} 与位置个数 {s.shape[0]} 不一致")
    if s.shape[0] < 3 or np.any(np.diff(s) <= 0):
        raise DataError("近场检查需要至少 3 个严格递增的网格点")
    step = float(np.min(np.diff(s)))
    gram = induced_cov(x, cfg)

    a_idx, b_idx = np.triu_indices(s.shape[0])
    near = np.abs(s[b_idx] - s[a_idx]) < max_steps * step * (1.0 - 1e-9)
    a_idx, b_idx = a_idx[near], b_idx[near]
    off = a_idx != b_idx
    if np.count_nonzero(off) < 2:
        raise DataError("网格上的近邻点对不足，无法拟合")

    n = s.shape[0]
    dist2 = np.sum((x[a_idx] - x[b_idx]) ** 2, axis=1)
    design = np.zeros((a_idx.shape[0], n + 1))
    rows = np.arange(a_idx.shape[0])
    design[rows, a_idx] += 1.0
    design[rows, b_idx] += 1.0
    design[:, n] = -dist2
    rhs = gram[a_idx, b_idx]
    solution, _, _, _ = linalg.lstsq(design, rhs)
    v, c = solution[:n], float(solution[n])

    resid = (design @ solution - rhs)[off]
    scale = np.linalg.norm(c * dist2[off])
    residual = float(np.linalg.norm(resid) / scale) if scale > 0 else float(np.linalg.norm(resid))
    logger.debug(f"近场拟合: {a_idx.shape[0]} 个点对, c={c:.4g}, 相对残差 {residual:.3e}")
    return NearfieldReport(v, c, residual, int(a_idx.shape[0]))
