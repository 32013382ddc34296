#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
空间数据模块
提供数据集、CSV 读取、归一化、网格匹配、交叉验证划分与评估指标
"""

from .spatial_data import (
    CsvSchema,
    FoldAssignment,
    Scaler,
    SpatialDataset,
    assign_cells,
    grid_match,
    kfold_split,
    load_csv,
    load_grid_csv,
    min_max_normalize,
    save_csv,
)
from .spatial_metrics import mae_and_accuracy, mape, mse, rmse

__all__ = [
    'CsvSchema',
    'FoldAssignment',
    'Scaler',
    'SpatialDataset',
    'assign_cells',
    'grid_match',
    'kfold_split',
    'load_csv',
    'load_grid_csv',
    'min_max_normalize',
    'save_csv',
    'mae_and_accuracy',
    'mape',
    'mse',
    'rmse',
]
