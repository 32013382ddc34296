#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Kriging 模块
提供泛 Kriging、固定秩 Kriging 与 Kriging 预测器
"""

from .kriging_predict import (
    FrkPredictor,
    KrigingPrediction,
    KrigingPredictor,
    dense_frk_predict,
    frk_predict,
    gaussian_quantiles,
    right_inverse_sigma_k,
    universal_kriging,
)

__all__ = [
    'FrkPredictor',
    'KrigingPrediction',
    'KrigingPredictor',
    'dense_frk_predict',
    'frk_predict',
    'gaussian_quantiles',
    'right_inverse_sigma_k',
    'universal_kriging',
]
