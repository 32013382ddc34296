#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
协方差模块
提供参数化协方差函数、Gram 矩阵分解与极大似然估计
"""

from .covariance_mle import fit_mle, gls_beta, loglik_at, profile_loglik
from .covariance_model import (
    FAMILIES,
    CovarianceModel,
    FittedCovariance,
    GramFactor,
    cholesky_with_jitter,
    cov_value,
    cross_cov,
    design_matrix,
    gram,
)

__all__ = [
    'FAMILIES',
    'CovarianceModel',
    'FittedCovariance',
    'GramFactor',
    'cholesky_with_jitter',
    'cov_value',
    'cross_cov',
    'design_matrix',
    'gram',
    'fit_mle',
    'gls_beta',
    'loglik_at',
    'profile_loglik',
]
