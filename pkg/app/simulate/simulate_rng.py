#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
随机数流模块
基于 PCG64 (64 位) 的可复现随机数，每个用途一个独立命名流
"""

import zlib

import numpy as np
from scipy.special import ndtri

# 均匀数平移半个 ulp，保证落在开区间 (0, 1)
_HALF_ULP = 2.0 ** -54


def make_stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """
    创建命名随机数流

    同一 (seed, name, index) 总是得到同一序列；新增流不会影响已有流。

    Args:
        seed: 主种子
        name: 流名称，例如 "gp"、"noise"、"mixture"
        index: 同名流的序号（如集成成员编号）
    """
    key = zlib.crc32(name.encode("utf-8"))
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, key, int(index)])
    return np.random.Generator(np.random.PCG64(sequence))


def open_uniform(stream: np.random.Generator, size) -> np.ndarray:
    """开区间 (0, 1) 上的均匀数"""
    return stream.random(size) + _HALF_ULP


def standard_normal(stream: np.random.Generator, size) -> np.ndarray:
    """逆 CDF 变换生成标准正态数，每个数恰好消耗一个均匀数"""
    return ndtri(open_uniform(stream, size))
