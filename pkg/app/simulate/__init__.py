#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模拟数据模块
提供各实验所需的可复现数据生成器
"""

from .simulate_data import (
    SimConfig,
    gaussian_mixture_1d,
    nonstat_2d,
    nonstat_surface,
    probe_signal,
    sample_gp_1d,
    sample_probe_1d,
    train_test_split,
    write_simulation,
)
from .simulate_rng import make_stream, open_uniform, standard_normal

__all__ = [
    'SimConfig',
    'gaussian_mixture_1d',
    'nonstat_2d',
    'nonstat_surface',
    'probe_signal',
    'sample_gp_1d',
    'sample_probe_1d',
    'train_test_split',
    'write_simulation',
    'make_stream',
    'open_uniform',
    'standard_normal',
]
