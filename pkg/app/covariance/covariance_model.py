#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
协方差模型模块
指数 / Matérn(ν=1.5) 协方差函数、带块金效应的 Gram 矩阵与自适应抖动 Cholesky 分解
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from app.errors import ConfigError, DataError, DataIOError, NumericalError

logger = logging.getLogger(__name__)

FAMILIES = ("exponential", "matern15")

# 抖动从 1e-10·mean(diag) 开始，每次 ×10，最大 1e-4·mean(diag)
JITTER_START = 1e-10
JITTER_MAX = 1e-4

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class CovarianceModel:
    """参数化协方差模型：族、方差 σ²、变程 ρ、块金 τ²"""

    family: str
    sigma2: float
    rho: float
    tau2: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"未知的协方差族: {self.family}，可选 {', '.join(FAMILIES)}")
        if not (self.sigma2 > 0 and self.rho > 0 and self.tau2 >= 0):
            raise ConfigError(
                f"协方差参数非法: sigma2={self.sigma2}, rho={self.rho}, tau2={self.tau2}")

    def value(self, h) -> np.ndarray:
        """距离 h 处的协方差，不含块金"""
        return cov_value(self, h)

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma2": float(self.sigma2),
                "rho": float(self.rho), "tau2": float(self.tau2)}


def cov_value(model: CovarianceModel, h) -> np.ndarray:
    """
    协方差函数值

    exponential: σ² exp(-h/ρ)
    matern15:    σ² (1 + √3 h/ρ) exp(-√3 h/ρ)
    """
    h = np.asarray(h, dtype=np.float64)
    if np.any(h < 0):
        raise DataError("距离不能为负")
    r = h / model.rho
    if model.family == "exponential":
        return model.sigma2 * np.exp(-r)
    return model.sigma2 * (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)


def cross_cov(a: np.ndarray, b: np.ndarray, model: CovarianceModel) -> np.ndarray:
    """两组位置之间的协方差矩阵（不含块金）"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    return cov_value(model, cdist(a, b))


@dataclass(frozen=True)
class GramFactor:
    """Gram 矩阵 Σ 及其下三角因子 L，LLᵀ = Σ + jitter·I"""

    matrix: np.ndarray
    lower: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """求解 (Σ + jitter·I) x = b"""
        return linalg.cho_solve((self.lower, True), b, check_finite=False)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """求解 L x = b"""
        return linalg.solve_triangular(self.lower, b, lower=True, check_finite=False)

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.lower))))


def cholesky_with_jitter(matrix: np.ndarray) -> GramFactor:
    """
    Cholesky 分解，失败时在对角线上逐级增加抖动

    Raises:
        NumericalError: 抖动升到上限后仍然失败
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    scale = float(np.mean(np.diag(matrix))) if matrix.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        raise NumericalError("Gram 矩阵对角线均值非正")

    jitter = 0.0
    while True:
        try:
            shifted = matrix + jitter * np.eye(matrix.shape[0]) if jitter else matrix
            lower = linalg.cholesky(shifted, lower=True, check_finite=False)
            if jitter:
                logger.warning(f"Cholesky 分解需要抖动 {jitter:.3e}")
            return GramFactor(matrix, lower, jitter)
        except linalg.LinAlgError:
            jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * scale * (1 + 1e-9):
                raise NumericalError(
                    f"Cholesky 分解失败，抖动已升至 {JITTER_MAX * scale:.3e}") from None


def gram(locations: np.ndarray, model: CovarianceModel) -> GramFactor:
    """
    组装 Σ_ij = C(‖s_i - s_j‖) + τ²·1{i=j} 并分解

    Args:
        locations: 坐标 N×d
        model: 协方差模型

    Returns:
        GramFactor（记录实际使用的抖动量）
    """
    locations = np.asarray(locations, dtype=np.float64)
    if locations.ndim == 1:
        locations = locations[:, None]
    if locations.shape[0] < 1:
        raise DataError("Gram 矩阵至少需要一个位置")
    matrix = cross_cov(locations, locations, model)
    matrix[np.diag_indices_from(matrix)] += model.tau2
    return cholesky_with_jitter(matrix)


@dataclass(frozen=True)
class FittedCovariance:
    """极大似然拟合结果：协方差模型、均值系数 β、对数似然与收敛信息"""

    model: CovarianceModel
    beta: np.ndarray
    loglik: float
    converged: bool = True
    iterations: int = 0
    mean: str = "constant"

    def to_dict(self) -> dict:
        data = self.model.to_dict()
        data.update({"beta": np.asarray(self.beta).tolist(), "loglik": float(self.loglik),
                     "converged": bool(self.converged), "iterations": int(self.iterations),
                     "mean": self.mean})
        return data

    def to_json(self, path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"无法写入 {path}: {e}") from e
        return path

    @classmethod
    def from_dict(cls, data: dict) -> "FittedCovariance":
        model = CovarianceModel(data["family"], float(data["sigma2"]),
                                float(data["rho"]), float(data["tau2"]))
        return cls(model, np.asarray(data.get("beta", []), dtype=np.float64),
                   float(data.get("loglik", np.nan)), bool(data.get("converged", True)),
                   int(data.get("iterations", 0)), data.get("mean", "constant"))

    @classmethod
    def from_json(cls, path) -> "FittedCovariance":
        path = Path(path)
        if not path.exists():
            raise DataIOError(f"模型文件不存在: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def design_matrix(covariates: Optional[np.ndarray], n: int, add_intercept: bool = False) -> np.ndarray:
    """
    趋势项设计矩阵：P=0 时为全 1 列；add_intercept 时在协变量前补全 1 列
    """
    if covariates is None or np.asarray(covariates).size == 0:
        return np.ones((n, 1))
    x = np.asarray(covariates, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if add_intercept:
        x = np.hstack([np.ones((x.shape[0], 1)), x])
    return x
