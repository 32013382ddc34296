#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
DeepKriging 空间预测工具箱
多分辨率基函数嵌入 + 深度网络的空间预测，以及 Kriging/FRK 基线与预测分布估计
"""

__version__ = "0.1.0"
