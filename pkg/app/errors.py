#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
异常定义模块
库代码只抛出这里的异常，命令行入口负责把它们映射为退出码
"""

from typing import Optional


class DeepKrigingError(Exception):
    """所有库异常的基类"""

    exit_code = 1


class ConfigError(DeepKrigingError):
    """配置错误（未知键、类型不匹配、非法取值）"""

    exit_code = 2


class SchemaError(ConfigError):
    """CSV 列声明与文件内容不符"""


class DataError(DeepKrigingError):
    """输入数据不满足前置条件"""

    exit_code = 2

    def __init__(self, message: str, row: Optional[int] = None):
        """
        Args:
            message: 错误描述
            row: 出错的数据行号（从 0 开始，可选）
        """
        if row is not None:
            message = f"{message} (第 {row} 行)"
        super().__init__(message)
        self.row = row


class NumericalError(DeepKrigingError):
    """数值计算失败：分解失败、损失出现 NaN、方差为明显负值等"""

    exit_code = 3


class ConvergenceError(NumericalError):
    """迭代优化未收敛"""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class DataIOError(DeepKrigingError):
    """文件不存在或无法写入"""

    exit_code = 4
