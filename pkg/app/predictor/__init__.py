#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
预测器基类模块
"""

from .base_predictor import SpatialPredictor

__all__ = [
    'SpatialPredictor'
]
