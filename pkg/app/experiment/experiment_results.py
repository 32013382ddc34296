#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验结果输出模块
逐次结果表、汇总表、绘图数据（长表格式）与运行清单
"""

import json
import logging
import platform
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
import scipy

from app.errors import ConfigError, DataError, DataIOError

from .experiment_constants import MANIFEST_FILE, get_version

logger = logging.getLogger(__name__)

PLOT_KINDS = ("curve", "surface", "boxplot", "density")
FLOAT_FORMAT = "%.17g"


def _write_frame(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise DataIOError(f"无法写入 {path}: {e}") from e
    logger.debug(f"已写出 {path} ({len(frame)} 行)")
    return path


def write_table(rows: Iterable[Mapping[str, Any]], path) -> pd.DataFrame:
    """把结果行写为 CSV 并返回 DataFrame"""
    frame = pd.DataFrame(list(rows))
    if frame.empty:
        raise DataError(f"没有可写出的结果: {path}")
    _write_frame(frame, path)
    return frame


def summarize(frame: pd.DataFrame, by: Sequence[str] = ("method", "metric", "split"),
              value: str = "value") -> pd.DataFrame:
    """
    按方法、指标、数据划分汇总均值与标准差

    只有一次重复时标准差记为 0。
    """
    missing = [c for c in list(by) + [value] if c not in frame.columns]
    if missing:
        raise DataError(f"结果表缺少列: {', '.join(missing)}")
    grouped = frame.groupby(list(by), sort=False)[value]
    summary = grouped.agg(mean="mean", sd="std", count="count").reset_index()
    summary["sd"] = summary["sd"].fillna(0.0)
    return summary


def write_summary(frame: pd.DataFrame, path, **kwargs) -> pd.DataFrame:
    summary = summarize(frame, **kwargs)
    _write_frame(summary, path)
    return summary


def _curve_rows(series: str, data) -> list:
    x, y = (np.asarray(v, dtype=np.float64).reshape(-1) for v in data)
    if x.shape != y.shape:
        raise DataError(f"曲线 {series} 的 x 与 y 长度不一致")
    return [{"series": series, "x": a, "y": b} for a, b in zip(x, y)]


def _surface_rows(series: str, data) -> list:
    coords, values = data
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if coords.shape[0] != values.shape[0] or coords.shape[1] != 2:
        raise DataError(f"曲面 {series} 需要 N×2 坐标与长度 N 的取值")
    return [{"series": series, "x": c[0], "y": c[1], "value": v} for c, v in zip(coords, values)]


def _boxplot_rows(series: str, data) -> list:
    values = np.asarray(data, dtype=np.float64).reshape(-1)
    return [{"series": series, "x": i, "y": v} for i, v in enumerate(values)]


_ROW_BUILDERS = {
    "curve": _curve_rows,
    "surface": _surface_rows,
    "boxplot": _boxplot_rows,
    "density": _curve_rows,
}


def emit_plot_data(results: Mapping[str, Any], kind: str, path) -> pd.DataFrame:
    """
    写出长表格式的绘图数据

    Args:
        results: 系列名到数据的映射
            curve / density: (x, y)
            surface: (N×2 坐标, 取值)
            boxplot: 一组取值（例如各折的 RMSE）
        kind: "curve"、"surface"、"boxplot" 或 "density"
        path: 输出 CSV 路径

    Returns:
        写出的 DataFrame，列为 series, x, y（曲面另有 value）
    """
    if kind not in PLOT_KINDS:
        raise ConfigError(f"未知的绘图数据类型: {kind}，可选 {', '.join(PLOT_KINDS)}")
    if not results:
        raise DataError(f"没有可输出的 {kind} 数据")
    rows = []
    for series, data in results.items():
        rows.extend(_ROW_BUILDERS[kind](str(series), data))
    if not rows:
        raise DataError(f"没有可输出的 {kind} 数据")
    frame = pd.DataFrame(rows)
    _write_frame(frame, path)
    return frame


def package_versions() -> Dict[str, str]:
    return {
        "deepkriging": get_version(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "platform": platform.platform(),
    }


def write_manifest(output_dir, experiment: str, config: Mapping[str, Any],
                   seeds: Sequence[int], wall_times: Mapping[str, float],
                   outputs: Optional[Sequence[str]] = None) -> Path:
    """
    写出运行清单：配置、种子、版本与耗时

    Args:
        output_dir: 输出目录
        experiment: 实验名称
        config: 完整配置
        seeds: 各次重复的种子
        wall_times: 各阶段耗时（秒）
        outputs: 产出文件名列表
    """
    path = Path(output_dir) / MANIFEST_FILE
    manifest = {
        "experiment": experiment,
        "created": datetime.now().isoformat(timespec="seconds"),
        "config": dict(config),
        "seeds": [int(s) for s in seeds],
        "versions": package_versions(),
        "wall_seconds": {k: float(v) for k, v in wall_times.items()},
        "outputs": sorted(outputs or []),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"无法写入运行清单 {path}: {e}") from e
    logger.info(f"运行清单已写出: {path}")
    return path
