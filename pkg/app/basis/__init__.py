#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
基函数嵌入模块
提供多分辨率格点节点、Wendland/高斯核与基函数矩阵计算
"""

from .basis_embed import (
    KERNELS,
    BasisSystem,
    EmbeddingMatrix,
    build_basis_system,
    concat_features,
    default_domain,
    embed,
    evaluate_basis,
    gaussian_kernel,
    knot_grid,
    num_levels,
    save_embedding_csv,
    wendland,
)

__all__ = [
    'KERNELS',
    'BasisSystem',
    'EmbeddingMatrix',
    'build_basis_system',
    'concat_features',
    'default_domain',
    'embed',
    'evaluate_basis',
    'gaussian_kernel',
    'knot_grid',
    'num_levels',
    'save_embedding_csv',
    'wendland',
]
