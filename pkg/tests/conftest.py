#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
测试公共设置
"""

import os
import sys

import numpy as np
import pytest

# 确保项目根目录在Python路径中
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from app.spatial.spatial_data import SpatialDataset  # noqa: E402

FIXTURE_DIR = os.path.join(project_root, "resources", "fixtures")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def smooth_1d():
    """[0,1] 上 60 个等距点的光滑信号"""
    s = np.linspace(0.0, 1.0, 60)
    return SpatialDataset(s[:, None], np.sin(2 * np.pi * s) + 0.5 * s)


@pytest.fixture
def fixture_dir():
    return FIXTURE_DIR
