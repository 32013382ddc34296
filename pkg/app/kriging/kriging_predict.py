#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Kriging 预测模块
提供泛 Kriging、固定秩 Kriging (FRK) 以及使 FRK 与 Kriging 等价的 Σ_K 构造

泛 Kriging 方差采用 GLS 修正形式：
    σ²(s₀) = C(s₀,s₀) - cᵀΣ⁻¹c + (x₀ - XᵀΣ⁻¹c)ᵀ (XᵀΣ⁻¹X)⁻¹ (x₀ - XᵀΣ⁻¹c)
全部求解通过 Cholesky 三角回代完成，不显式求逆。
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import linalg, stats

from app.basis.basis_embed import BasisSystem, build_basis_system, evaluate_basis
from app.covariance.covariance_mle import fit_mle, gls_beta
from app.covariance.covariance_model import (
    CovarianceModel,
    cross_cov,
    design_matrix,
    gram,
)
from app.errors import DataError, DataIOError, NumericalError
from app.predictor.base_predictor import SpatialPredictor
from app.spatial.spatial_data import SpatialDataset

logger = logging.getLogger(__name__)

# 方差允许的负值容差，超出视为分解出错
VARIANCE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class KrigingPrediction:
    """Kriging 预测结果：预测均值、Kriging 方差、GLS 系数"""

    mean: np.ndarray
    variance: np.ndarray
    beta: np.ndarray

    def to_csv(self, path, locations: np.ndarray) -> Path:
        """导出为 CSV：坐标列、mean、variance"""
        path = Path(path)
        locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
        if locations.shape[0] != self.mean.shape[0]:
            locations = locations.T
        frame = pd.DataFrame(locations, columns=[f"s{i + 1}" for i in range(locations.shape[1])])
        frame["mean"] = self.mean
        frame["variance"] = self.variance
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise DataIOError(f"无法写入 {path}: {e}") from e
        return path


def _as_2d(locations: np.ndarray) -> np.ndarray:
    locations = np.asarray(locations, dtype=np.float64)
    return locations[:, None] if locations.ndim == 1 else locations


def _clip_variance(variance: np.ndarray) -> np.ndarray:
    if np.any(variance < -VARIANCE_TOLERANCE):
        raise NumericalError(f"Kriging 方差为负 ({variance.min():.3e})，分解可能已失效")
    return np.maximum(variance, 0.0)


def universal_kriging(train: SpatialDataset, test_locations: np.ndarray, model: CovarianceModel,
                      test_covariates: Optional[np.ndarray] = None,
                      beta: Optional[np.ndarray] = None,
                      add_intercept: bool = False) -> KrigingPrediction:
    """
    泛 Kriging 预测

    Args:
        train: 训练数据集；P=0 时趋势项为截距
        test_locations: 预测位置 M×d
        model: 协方差模型（块金只加在训练 Gram 对角线上）
        test_covariates: 预测位置的协变量 M×P
        beta: 已知的均值系数（简单 Kriging）；为 None 时用 GLS 估计
        add_intercept: 是否在协变量前补截距列

    Returns:
        KrigingPrediction
    """
    test_locations = _as_2d(test_locations)
    x = design_matrix(train.covariates, train.n, add_intercept)
    x0 = design_matrix(test_covariates, test_locations.shape[0], add_intercept)
    if x0.shape[1] != x.shape[1]:
        raise DataError(f"预测位置协变量列数 {x0.shape[1]} 与训练集 {x.shape[1]} 不一致")

    factor = gram(train.locations, model)
    c0 = cross_cov(train.locations, test_locations, model)
    v = factor.half_solve(c0)
    prior = model.sigma2

    if beta is None:
        beta, r, _ = gls_beta(factor, x, train.responses)
        xt = factor.half_solve(x)
        u = x0.T - xt.T @ v
        w = linalg.solve_triangular(r, u, trans="T", lower=False, check_finite=False)
        gls_term = np.sum(w ** 2, axis=0)
    else:
        beta = np.asarray(beta, dtype=np.float64).reshape(-1)
        gls_term = 0.0

    resid = train.responses - x @ beta
    alpha = factor.solve(resid)
    mean = x0 @ beta + c0.T @ alpha
    variance = prior - np.sum(v ** 2, axis=0) + gls_term
    return KrigingPrediction(mean, _clip_variance(variance), np.asarray(beta))


def _woodbury_solver(phi: np.ndarray, sigma_k: np.ndarray, v_diag: np.ndarray):
    """
    返回 B ↦ (ΦΣ_KΦᵀ + V)⁻¹B 的求解函数

    使用 Σ⁻¹ = V⁻¹ - V⁻¹Φ Σ_K (I + ΦᵀV⁻¹ΦΣ_K)⁻¹ ΦᵀV⁻¹，只需 K×K 线性系统，
    Σ_K 奇异时同样适用。
    """
    inv_v = 1.0 / v_diag
    k = phi.shape[1]
    inner = np.eye(k) + (phi.T * inv_v) @ phi @ sigma_k
    try:
        lu = linalg.lu_factor(inner, check_finite=False)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"FRK 内部 K×K 系统奇异: {e}") from e
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(np.diag(lu[0])).max())):
        raise NumericalError("FRK 内部 K×K 系统奇异")

    def solve(b: np.ndarray) -> np.ndarray:
        y = inv_v[:, None] * b if b.ndim == 2 else inv_v * b
        t = phi.T @ y
        s = linalg.lu_solve(lu, t, check_finite=False)
        correction = phi @ (sigma_k @ s)
        return y - (inv_v[:, None] * correction if b.ndim == 2 else inv_v * correction)

    return solve


def frk_predict(train: SpatialDataset, phi_train: np.ndarray, phi_test: np.ndarray,
                sigma_k: np.ndarray, v_diag, test_covariates: Optional[np.ndarray] = None,
                add_intercept: bool = False) -> np.ndarray:
    """
    固定秩 Kriging 预测

    Ŷ(s₀) = x(s₀)ᵀβ̂ + φ(s₀)ᵀ Σ_K Φᵀ Σ⁻¹ (z - Xβ̂)，Σ = ΦΣ_KΦᵀ + V

    Args:
        train: 训练数据集
        phi_train: 训练位置基函数矩阵 N×K
        phi_test: 预测位置基函数矩阵 M×K
        sigma_k: 随机效应协方差 K×K（对称半正定）
        v_diag: 对角噪声方差（标量或长度 N）
        test_covariates: 预测位置协变量
        add_intercept: 是否在协变量前补截距列

    Returns:
        长度 M 的预测值
    """
    phi_train = np.asarray(getattr(phi_train, "values", phi_train), dtype=np.float64)
    phi_test = np.asarray(getattr(phi_test, "values", phi_test), dtype=np.float64)
    sigma_k = np.asarray(sigma_k, dtype=np.float64)
    n, k = phi_train.shape
    if phi_test.shape[1] != k or sigma_k.shape != (k, k):
        raise DataError("FRK 基函数矩阵与 Σ_K 的维度不一致")
    if n != train.n:
        raise DataError(f"基函数矩阵行数 {n} 与训练样本数 {train.n} 不一致")
    v_diag = np.broadcast_to(np.asarray(v_diag, dtype=np.float64), (n,)).copy()
    if np.any(v_diag <= 0):
        raise DataError("FRK 的噪声方差必须为正")

    solve = _woodbury_solver(phi_train, sigma_k, v_diag)
    x = design_matrix(train.covariates, n, add_intercept)
    x0 = design_matrix(test_covariates, phi_test.shape[0], add_intercept)

    sx = solve(x)
    gram_x = x.T @ sx
    try:
        beta = linalg.solve(gram_x, sx.T @ train.responses, assume_a="pos", check_finite=False)
    except linalg.LinAlgError as e:
        raise NumericalError(f"FRK 趋势项设计矩阵秩亏: {e}") from e
    alpha = solve(train.responses - x @ beta)
    return x0 @ beta + phi_test @ (sigma_k @ (phi_train.T @ alpha))


def dense_frk_predict(train: SpatialDataset, phi_train: np.ndarray, phi_test: np.ndarray,
                      sigma_k: np.ndarray, v_diag, test_covariates: Optional[np.ndarray] = None,
                      add_intercept: bool = False) -> np.ndarray:
    """FRK 的稠密 N×N 实现，仅用于校验 Woodbury 路径"""
    phi_train = np.asarray(phi_train, dtype=np.float64)
    phi_test = np.asarray(phi_test, dtype=np.float64)
    n = phi_train.shape[0]
    sigma = phi_train @ sigma_k @ phi_train.T + np.diag(np.broadcast_to(v_diag, (n,)))
    factor = linalg.cho_factor(sigma, lower=True)
    x = design_matrix(train.covariates, n, add_intercept)
    x0 = design_matrix(test_covariates, phi_test.shape[0], add_intercept)
    sx = linalg.cho_solve(factor, x)
    beta = linalg.solve(x.T @ sx, sx.T @ train.responses, assume_a="pos")
    alpha = linalg.cho_solve(factor, train.responses - x @ beta)
    return x0 @ beta + phi_test @ sigma_k @ phi_train.T @ alpha


def right_inverse_sigma_k(phi: np.ndarray, locations: np.ndarray,
                          model: CovarianceModel) -> np.ndarray:
    """
    构造 Σ_K = Φ_R⁻¹ Σ^ν (Φ_R⁻¹)ᵀ，使 ΦΣ_KΦᵀ = Σ^ν

    Φ_R⁻¹ = Φᵀ(ΦΦᵀ)⁻¹ 为行满秩 Φ 的右逆（即伪逆），Σ^ν 为不含块金的 Gram 矩阵。
    在训练与预测位置的并集上构造时，FRK 预测与泛 Kriging 完全一致。

    Args:
        phi: 基函数矩阵 N×K，要求行满秩 N 且 K >= N
        locations: 对应的 N 个位置
        model: 协方差模型（块金不参与）

    Returns:
        K×K 矩阵 Σ_K
    """
    phi = np.asarray(getattr(phi, "values", phi), dtype=np.float64)
    n, k = phi.shape
    if k < n:
        raise DataError(f"基函数个数 {k} 小于位置数 {n}，右逆不存在")
    if np.linalg.matrix_rank(phi) < n:
        raise NumericalError("基函数矩阵行秩亏，右逆不存在")
    right_inverse = linalg.pinv(phi)
    sigma_nu = cross_cov(_as_2d(locations), _as_2d(locations), model)
    sigma_k = right_inverse @ sigma_nu @ right_inverse.T
    return 0.5 * (sigma_k + sigma_k.T)


def gaussian_quantiles(prediction: KrigingPrediction, levels: Sequence[float],
                       nugget: float = 0.0) -> np.ndarray:
    """
    Gaussian 预测分布的分位数表 mean + sqrt(var + nugget)·Φ⁻¹(t)

    Returns:
        M×T 分位数矩阵
    """
    levels = np.asarray(levels, dtype=np.float64)
    sd = np.sqrt(prediction.variance + nugget)
    return prediction.mean[:, None] + sd[:, None] * stats.norm.ppf(levels)[None, :]


class KrigingPredictor(SpatialPredictor):
    """
    泛 Kriging 预测器
    给定协方差模型时直接使用，否则在训练集上做极大似然估计
    """

    def __init__(self, model: Optional[CovarianceModel] = None, family: str = "exponential",
                 mean: str = "constant", max_iter: int = 500, name: str = "kriging"):
        """
        初始化 Kriging 预测器

        Args:
            model: 固定的协方差模型；None 表示用 MLE 估计
            family: MLE 时的协方差族
            mean: "constant" 或 "linear"（截距 + 协变量）
            max_iter: MLE 迭代上限
            name: 方法名称
        """
        super().__init__(name)
        self.fixed_model = model
        self.model = model
        self.family = family
        self.mean = mean
        self.max_iter = max_iter
        self.fitted = None
        self.train: Optional[SpatialDataset] = None

    def _covariates(self, data_covariates):
        return data_covariates if self.mean == "linear" else None

    def fit(self, train: SpatialDataset):
        self.train = train
        self.model = self.fixed_model
        if self.model is None:
            self.fitted = fit_mle(train, self.family, self.mean, max_iter=self.max_iter)
            self.model = self.fitted.model
            logger.info(f"{self.name}: 估计的协方差参数 {self.model.to_dict()}")
        return self

    def predict_full(self, locations: np.ndarray,
                     covariates: Optional[np.ndarray] = None) -> KrigingPrediction:
        """返回含 Kriging 方差的完整预测"""
        if self.train is None:
            raise DataError(f"{self.name} 尚未拟合")
        train = self.train
        if self.mean != "linear":
            train = SpatialDataset(train.locations, train.responses)
        return universal_kriging(train, locations, self.model,
                                 self._covariates(covariates),
                                 add_intercept=self.mean == "linear")

    def predict(self, locations: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        return self.predict_full(locations, covariates).mean


def _min_levels_covering(n: int, dim: int, max_levels: int = 8) -> int:
    """使 K >= n 的最小层数"""
    for levels in range(1, max_levels + 1):
        if BasisSystem.create(dim, levels).k_original >= n:
            return levels
    raise DataError(f"{max_levels} 层基函数仍少于 {n} 个，无法构造右逆")


class FrkPredictor(SpatialPredictor):
    """
    以右逆构造 Σ_K 的固定秩 Kriging

    在训练与预测位置的并集上选取足够多层的基函数（K >= N），
    使 ΦΣ_KΦᵀ 等于不含块金的 Gram 矩阵，块金作为对角噪声。
    """

    def __init__(self, model: CovarianceModel, kernel: str = "wendland", name: str = "frk"):
        super().__init__(name)
        if not model.tau2 > 0:
            raise DataError("FRK 需要正的块金方差作为对角噪声")
        self.model = model
        self.kernel = kernel
        self.train: Optional[SpatialDataset] = None

    def fit(self, train: SpatialDataset):
        self.train = train
        return self

    def predict(self, locations: np.ndarray, covariates: Optional[np.ndarray] = None) -> np.ndarray:
        if self.train is None:
            raise DataError(f"{self.name} 尚未拟合")
        train = SpatialDataset(self.train.locations, self.train.responses)
        locations = _as_2d(locations)
        # 重复位置只保留一份，否则 Φ 行秩亏
        union, inverse = np.unique(np.vstack([train.locations, locations]), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        levels = _min_levels_covering(union.shape[0], train.dim)
        system = build_basis_system(union, levels, self.kernel)
        phi = evaluate_basis(union, system)
        signal = CovarianceModel(self.model.family, self.model.sigma2, self.model.rho, 0.0)
        sigma_k = right_inverse_sigma_k(phi, union, signal)
        logger.debug(f"{self.name}: 并集 {union.shape[0]} 个位置, H={levels}, K={phi.shape[1]}")
        return frk_predict(train, phi[inverse[:train.n]], phi[inverse[train.n:]], sigma_k, self.model.tau2)
