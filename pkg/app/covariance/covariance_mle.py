#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
协方差参数极大似然估计模块
在 (log σ², log ρ, log τ²) 上做 Nelder-Mead 单纯形搜索，均值系数用广义最小二乘剖面化
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.spatial.distance import pdist

from app.errors import DataError, NumericalError
from app.spatial.spatial_data import SpatialDataset

from .covariance_model import (
    FAMILIES,
    CovarianceModel,
    FittedCovariance,
    design_matrix,
    gram,
)

logger = logging.getLogger(__name__)

MEAN_STRUCTURES = ("constant", "linear")

MAX_ITER = 500
SIMPLEX_TOL = 1e-8


@dataclass(frozen=True)
class ProfileTerms:
    """剖面似然的中间量"""

    loglik: float
    beta: np.ndarray


def gls_beta(factor, x: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    广义最小二乘 β̂ = (XᵀΣ⁻¹X)⁻¹XᵀΣ⁻¹z，只用三角回代

    Returns:
        (β̂, 白化后的设计矩阵 L⁻¹X 的 QR 中的 R, 白化残差 L⁻¹(z - Xβ̂))
    """
    xt = factor.half_solve(x)
    zt = factor.half_solve(z)
    q, r = np.linalg.qr(xt)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise NumericalError("趋势项设计矩阵秩亏")
    beta = np.linalg.solve(r, q.T @ zt)
    return beta, r, zt - xt @ beta


def profile_loglik(locations: np.ndarray, z: np.ndarray, x: np.ndarray,
                   model: CovarianceModel) -> ProfileTerms:
    """给定协方差参数的剖面对数似然（β 取 GLS 估计）"""
    factor = gram(locations, model)
    beta, _, resid = gls_beta(factor, x, z)
    n = z.shape[0]
    loglik = -0.5 * (factor.logdet() + float(resid @ resid) + n * np.log(2.0 * np.pi))
    return ProfileTerms(loglik, beta)


def _initial_guess(data: SpatialDataset) -> Tuple[float, float, float]:
    variance = float(np.var(data.responses))
    if variance <= 0:
        raise DataError("观测值方差为 0，无法估计协方差参数")
    if data.n > 2000:
        # 大样本时直径用外包盒对角线近似
        span = data.locations.max(axis=0) - data.locations.min(axis=0)
        diameter = float(np.linalg.norm(span))
    else:
        diameter = float(pdist(data.locations).max())
    diameter = diameter if diameter > 0 else 1.0
    return variance, 0.1 * diameter, 0.05 * variance


def fit_mle(data: SpatialDataset, family: str = "exponential", mean: str = "constant",
            max_iter: int = MAX_ITER, tol: float = SIMPLEX_TOL) -> FittedCovariance:
    """
    极大似然估计协方差参数

    Args:
        data: 训练数据集（N >= 5）
        family: "exponential" 或 "matern15"
        mean: "constant"（仅截距）或 "linear"（截距 + 协变量）
        max_iter: 单纯形迭代上限
        tol: 单纯形收敛容差（参数与目标函数）

    Returns:
        FittedCovariance；未收敛时 converged=False 并返回迄今最优解
    """
    if family not in FAMILIES:
        raise DataError(f"未知的协方差族: {family}")
    if mean not in MEAN_STRUCTURES:
        raise DataError(f"未知的均值结构: {mean}")
    if data.n < 5:
        raise DataError(f"极大似然估计至少需要 5 个样本，当前为 {data.n}")

    x = design_matrix(data.covariates if mean == "linear" else None, data.n, add_intercept=True)
    z = data.responses
    sigma2_0, rho_0, tau2_0 = _initial_guess(data)
    start = np.log([sigma2_0, rho_0, tau2_0])
    # 搜索范围相对初值设定，避免退化参数
    bounds = [
        (start[0] - np.log(1e6), start[0] + np.log(1e3)),
        (start[1] - np.log(1e4), start[1] + np.log(1e3)),
        (start[2] - np.log(1e8), start[2] + np.log(1e3)),
    ]

    best = {"value": np.inf, "params": start}

    def objective(params: np.ndarray) -> float:
        sigma2, rho, tau2 = np.exp(params)
        try:
            value = -profile_loglik(data.locations, z, x,
                                    CovarianceModel(family, sigma2, rho, tau2)).loglik
        except NumericalError:
            return 1e300
        if value < best["value"]:
            best["value"] = value
            best["params"] = params.copy()
        return value

    result = optimize.minimize(
        objective, start, method="Nelder-Mead", bounds=bounds,
        options={"maxiter": max_iter, "xatol": tol, "fatol": tol},
    )
    params = result.x if result.fun <= best["value"] else best["params"]
    sigma2, rho, tau2 = np.exp(params)
    model = CovarianceModel(family, float(sigma2), float(rho), float(tau2))
    terms = profile_loglik(data.locations, z, x, model)

    if not result.success:
        logger.warning(f"协方差极大似然估计未收敛（{result.nit} 次迭代），返回迄今最优解")
    logger.debug(f"MLE 结果: {model.to_dict()}, loglik={terms.loglik:.4f}")
    return FittedCovariance(model, terms.beta, terms.loglik, bool(result.success),
                            int(result.nit), mean)


def loglik_at(data: SpatialDataset, model: CovarianceModel, mean: str = "constant") -> float:
    """给定参数下的剖面对数似然，用于与拟合结果比较"""
    x = design_matrix(data.covariates if mean == "linear" else None, data.n, add_intercept=True)
    return profile_loglik(data.locations, data.responses, x, model).loglik
