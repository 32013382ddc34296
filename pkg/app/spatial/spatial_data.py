#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
空间数据集模块
提供空间数据集的读取、归一化、网格匹配和交叉验证划分功能
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.errors import DataError, DataIOError, SchemaError

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SpatialDataset:
    """
    空间数据集

    locations 为 N×d 坐标矩阵，responses 为长度 N 的观测值，
    covariates 为 N×P 协变量矩阵（P 可以为 0）。构造后不可修改。
    """

    locations: np.ndarray
    responses: np.ndarray
    covariates: Optional[np.ndarray] = None
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        locations = np.asarray(self.locations, dtype=np.float64)
        if locations.ndim == 1:
            locations = locations[:, None]
        responses = np.asarray(self.responses, dtype=np.float64).reshape(-1)
        n = locations.shape[0]
        if self.covariates is None:
            covariates = np.zeros((n, 0))
        else:
            covariates = np.asarray(self.covariates, dtype=np.float64)
            if covariates.ndim == 1:
                covariates = covariates[:, None]

        if n < 1:
            raise DataError("数据集至少需要一行")
        if locations.shape[1] not in (1, 2, 3):
            raise DataError(f"坐标维度必须为 1、2 或 3，当前为 {locations.shape[1]}")
        if responses.shape[0] != n:
            raise DataError(f"观测值个数 {responses.shape[0]} 与坐标行数 {n} 不一致")
        if covariates.shape[0] != n:
            raise DataError(f"协变量行数 {covariates.shape[0]} 与坐标行数 {n} 不一致")
        for label, values in (("坐标", locations), ("观测值", responses), ("协变量", covariates)):
            bad = ~np.isfinite(values)
            if bad.any():
                row = int(np.argwhere(bad)[0][0])
                raise DataError(f"{label}包含非有限值", row=row)

        names = tuple(self.names)
        if names and len(names) != covariates.shape[1]:
            raise DataError(f"协变量名称个数 {len(names)} 与列数 {covariates.shape[1]} 不一致")

        object.__setattr__(self, "locations", _frozen(locations))
        object.__setattr__(self, "responses", _frozen(responses))
        object.__setattr__(self, "covariates", _frozen(covariates))
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def subset(self, index: Sequence[int]) -> "SpatialDataset":
        """按行索引取子集"""
        index = np.asarray(index)
        return SpatialDataset(self.locations[index], self.responses[index],
                              self.covariates[index], self.names)

    def with_responses(self, responses: np.ndarray) -> "SpatialDataset":
        """替换观测值，坐标与协变量保持不变"""
        return SpatialDataset(self.locations, responses, self.covariates, self.names)


@dataclass(frozen=True)
class CsvSchema:
    """CSV 列角色声明：坐标列、观测列、协变量列"""

    coords: Tuple[str, ...]
    response: str
    covars: Tuple[str, ...] = ()

    @classmethod
    def from_flags(cls, coords: str, response: str, covars: str = "") -> "CsvSchema":
        """
        从命令行形式构造，例如 coords="sx,sy"、response="z"、covars="a,b,c"
        """
        split = lambda text: tuple(c.strip() for c in text.split(",") if c.strip())
        return cls(split(coords), response.strip(), split(covars or ""))

    @property
    def columns(self) -> List[str]:
        return list(self.coords) + [self.response] + list(self.covars)


def _read_numeric(path: Path, columns: Sequence[str]) -> np.ndarray:
    """读取 CSV 中声明的列并逐格解析为浮点数"""
    if not path.exists():
        raise DataIOError(f"CSV 文件不存在: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DataIOError(f"无法读取 CSV 文件 {path}: {e}") from e

    for column in columns:
        if column not in frame.columns:
            raise SchemaError(f"CSV 文件 {path.name} 缺少列: {column}")

    declared = frame[list(columns)]
    numeric = declared.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad_rows = numeric.isna().any(axis=1).to_numpy()
    if bad_rows.any():
        row = int(np.flatnonzero(bad_rows)[0])
        bad_cols = [c for c in columns if pd.isna(numeric.iloc[row][c])]
        raise DataError(f"列 {', '.join(bad_cols)} 含有无法解析的数值", row=row)
    return numeric.to_numpy(dtype=np.float64)


def load_csv(path, schema: CsvSchema) -> SpatialDataset:
    """
    读取 CSV 文件为空间数据集

    Args:
        path: CSV 文件路径（需要表头，逗号分隔，UTF-8，小数点为 '.'）
        schema: 列角色声明

    Returns:
        按文件行序排列的 SpatialDataset

    Raises:
        DataIOError: 文件不存在
        SchemaError: 声明的列不存在
        DataError: 声明列中存在空白或非数值单元格
    """
    path = Path(path)
    values = _read_numeric(path, schema.columns)
    d = len(schema.coords)
    dataset = SpatialDataset(
        locations=values[:, :d],
        responses=values[:, d],
        covariates=values[:, d + 1:],
        names=tuple(schema.covars),
    )
    logger.info(f"已读取 {path.name}: N={dataset.n}, d={dataset.dim}, P={dataset.n_covariates}")
    return dataset


def load_grid_csv(path, coords: Sequence[str], covars: Sequence[str] = ()) -> Tuple[np.ndarray, np.ndarray]:
    """
    读取网格 CSV（没有观测列）

    Returns:
        (网格单元中心 M×d, 网格协变量 M×P)
    """
    path = Path(path)
    values = _read_numeric(path, list(coords) + list(covars))
    d = len(coords)
    logger.info(f"已读取网格 {path.name}: M={values.shape[0]}, P={values.shape[1] - d}")
    return values[:, :d], values[:, d:]


def save_csv(path, dataset: SpatialDataset, coord_names: Sequence[str] = None,
             response_name: str = "z") -> Path:
    """把数据集写为 CSV，列顺序为坐标、观测值、协变量"""
    path = Path(path)
    coord_names = list(coord_names or [f"s{i + 1}" for i in range(dataset.dim)])
    covar_names = list(dataset.names) or [f"x{i + 1}" for i in range(dataset.n_covariates)]
    frame = pd.DataFrame(dataset.locations, columns=coord_names)
    frame[response_name] = dataset.responses
    for i, name in enumerate(covar_names):
        frame[name] = dataset.covariates[:, i]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise DataIOError(f"无法写入 {path}: {e}") from e
    return path


@dataclass(frozen=True)
class Scaler:
    """按列的最小-最大缩放器"""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        minimum = _frozen(np.atleast_1d(self.minimum))
        maximum = _frozen(np.atleast_1d(self.maximum))
        if np.any(maximum < minimum):
            raise DataError("Scaler 的最大值不能小于最小值")
        object.__setattr__(self, "minimum", minimum)
        object.__setattr__(self, "maximum", maximum)

    @property
    def span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def transform(self, m: np.ndarray) -> np.ndarray:
        """(x - min) / (max - min)，常数列映射为 0"""
        m = np.asarray(m, dtype=np.float64)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        out = (m - self.minimum) / safe
        return np.where(span > 0, out, 0.0)

    def inverse_transform(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        return self.minimum + m * self.span

    def to_dict(self) -> Dict[str, list]:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "Scaler":
        return cls(np.asarray(data["min"], dtype=np.float64), np.asarray(data["max"], dtype=np.float64))


def min_max_normalize(m: np.ndarray) -> Tuple[np.ndarray, Scaler]:
    """
    按列做最小-最大归一化

    Args:
        m: N×P 有限值矩阵

    Returns:
        (归一化后的矩阵, 用于逆变换的 Scaler)
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if not np.all(np.isfinite(m)):
        raise DataError("归一化输入包含非有限值")
    if m.shape[0] == 0:
        scaler = Scaler(np.zeros(m.shape[1]), np.zeros(m.shape[1]))
    else:
        scaler = Scaler(m.min(axis=0), m.max(axis=0))
    return scaler.transform(m), scaler


@dataclass(frozen=True)
class FoldAssignment:
    """k 折交叉验证的折号分配"""

    fold_of: np.ndarray
    k: int = field(default=0)

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=np.int64)
        fold_of.setflags(write=False)
        object.__setattr__(self, "fold_of", fold_of)
        if self.k == 0:
            object.__setattr__(self, "k", int(fold_of.max()) + 1)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.k)

    def folds(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """依次给出 (训练索引, 验证索引)"""
        for fold in range(self.k):
            test = np.flatnonzero(self.fold_of == fold)
            train = np.flatnonzero(self.fold_of != fold)
            yield train, test


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """
    伪随机 k 折划分，给定种子结果确定

    Args:
        n: 样本数
        k: 折数，要求 2 <= k <= n
        seed: 随机种子

    Returns:
        FoldAssignment，各折大小相差不超过 1
    """
    if k < 2:
        raise DataError(f"折数至少为 2，当前为 {k}")
    if k > n:
        raise DataError(f"折数 {k} 大于样本数 {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(fold_of, k)


def _lattice_axes(grid: np.ndarray) -> List[np.ndarray]:
    axes = []
    for j in range(grid.shape[1]):
        values = np.unique(grid[:, j])
        axes.append(values)
    return axes


def _nearest_on_axis(axis: np.ndarray, x: np.ndarray) -> np.ndarray:
    # 等距时取较小的下标
    idx = np.searchsorted(axis, x, side="left")
    idx = np.clip(idx, 1, len(axis) - 1) if len(axis) > 1 else np.zeros_like(idx)
    if len(axis) == 1:
        return idx
    left = axis[idx - 1]
    right = axis[idx]
    choose_left = np.abs(x - left) <= np.abs(right - x)
    return np.where(choose_left, idx - 1, idx)


def assign_cells(locations: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """
    把站点分配到最近的网格单元中心

    Args:
        locations: 站点坐标 N×d
        grid: 矩形格点上的单元中心 M×d

    Returns:
        长度 N 的网格行号
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if locations.shape[1] != grid.shape[1]:
        raise DataError("站点与网格的坐标维度不一致")

    axes = _lattice_axes(grid)
    grid_keys = np.stack([np.searchsorted(axes[j], grid[:, j]) for j in range(grid.shape[1])], axis=1)
    lookup = {tuple(key): row for row, key in enumerate(grid_keys.tolist())}

    station_keys = np.stack([_nearest_on_axis(axes[j], locations[:, j])
                             for j in range(grid.shape[1])], axis=1)
    cells = np.empty(locations.shape[0], dtype=np.int64)
    for i, key in enumerate(station_keys.tolist()):
        row = lookup.get(tuple(key))
        if row is None:
            raise DataError("站点最近的格点不在网格中", row=i)
        cells[i] = row
    return cells


def grid_match(stations: SpatialDataset, grid: np.ndarray,
               grid_covariates: Optional[np.ndarray] = None,
               names: Sequence[str] = ()) -> SpatialDataset:
    """
    站点-网格匹配：同一单元内的站点观测取平均

    Args:
        stations: 站点数据集
        grid: 网格单元中心 M×d（矩形格点）
        grid_covariates: 网格单元上的协变量 M×P；为 None 时取单元内站点协变量的均值
        names: 网格协变量名称

    Returns:
        每个被占用单元一行的数据集，行按网格行号升序
    """
    if stations.n == 0:
        raise DataError("站点集合为空")
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    cells = assign_cells(stations.locations, grid)
    occupied, inverse, counts = np.unique(cells, return_inverse=True, return_counts=True)

    sums = np.bincount(inverse, weights=stations.responses, minlength=len(occupied))
    responses = sums / counts

    if grid_covariates is not None:
        covariates = np.asarray(grid_covariates, dtype=np.float64)[occupied]
        out_names = tuple(names)
    else:
        covariates = np.zeros((len(occupied), stations.n_covariates))
        for j in range(stations.n_covariates):
            covariates[:, j] = np.bincount(inverse, weights=stations.covariates[:, j],
                                           minlength=len(occupied)) / counts
        out_names = stations.names

    logger.info(f"网格匹配完成: {stations.n} 个站点落入 {len(occupied)} 个网格单元")
    return SpatialDataset(grid[occupied], responses, covariates, out_names)
