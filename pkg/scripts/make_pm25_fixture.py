#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
生成 PM2.5 示例数据
48×32 网格（经度 -124.5 起步长 1.2，纬度 25.5 起步长 0.75）上的 6 个气象协变量，
以及落在其中 604 个网格单元内的 841 个站点（237 个单元各 2 个站点，367 个单元各 1 个）。
随机数由确定性的哈希函数给出，输出与仓库中的 resources/fixtures/pm25_*.csv 一致。

用法: python scripts/make_pm25_fixture.py [输出目录]
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd

N_LON, N_LAT = 48, 32
LON0, LON_STEP = -124.5, 1.2
LAT0, LAT_STEP = 25.5, 0.75
N_CELLS = 604
N_DOUBLE = 237
# 站点相对单元中心的最大偏移（以网格步长计）
OFFSET = 0.4


def hash_uniform(a, b):
    x = np.sin(a * 12.9898 + b * 78.233) * 43758.5453
    x = x - np.trunc(x)
    return np.where(x < 0, x + 1.0, x)


def hash_normal(a, b):
    p = np.maximum(hash_uniform(a, b), 1e-12)
    return np.sqrt(-2.0 * np.log(p)) * np.cos(2.0 * np.pi * hash_uniform(a, b + 0.37))


def make_grid() -> pd.DataFrame:
    i, j = np.meshgrid(np.arange(N_LON), np.arange(N_LAT), indexing="ij")
    c = (i * N_LAT + j).reshape(-1).astype(np.float64)
    lon = (LON0 + LON_STEP * i).reshape(-1)
    lat = (LAT0 + LAT_STEP * j).reshape(-1)
    x = (lon - LON0) / (LON_STEP * (N_LON - 1))
    y = (lat - LAT0) / (LAT_STEP * (N_LAT - 1))
    grid = pd.DataFrame({"lon": lon, "lat": lat})
    grid["tmp2m"] = 290 - 15 * y + 4 * np.sin(3.1 * x) + 0.8 * hash_normal(c, 4)
    grid["rh2m"] = 65 + 15 * np.cos(2.5 * x + 1.0) - 10 * y + 2 * hash_normal(c, 5)
    grid["apcp"] = np.exp(0.8 * np.sin(4 * x) * np.cos(3 * y) + 0.2 * hash_normal(c, 6))
    grid["pres"] = 100500 - 1500 * np.sin(3.14159 * x) + 300 * y + 50 * hash_normal(c, 7)
    grid["ugrd"] = 3 * np.cos(2 * y) + 0.5 * hash_normal(c, 8)
    grid["vgrd"] = 2 * np.sin(3 * x) + 0.5 * hash_normal(c, 9)
    grid["field"] = (9.5 + 2 * x + 3 * np.sin(5 * x + 0.5) * np.cos(4 * y)
                     + 0.25 * (grid["tmp2m"] - 285) - 0.04 * (grid["rh2m"] - 60) + 0.3 * grid["ugrd"])
    return grid


def make_stations(grid: pd.DataFrame) -> pd.DataFrame:
    cells = np.arange(len(grid))
    keys = hash_uniform(cells.astype(np.float64), 1)
    selected = np.lexsort((cells, keys))[:N_CELLS]
    covars = ["tmp2m", "rh2m", "apcp", "pres", "ugrd", "vgrd"]
    rows = []
    for rank, c in enumerate(selected):
        cell = grid.iloc[c]
        for s in range(2 if rank < N_DOUBLE else 1):
            lon = cell["lon"] + (2 * hash_uniform(c, 2 + 10 * s) - 1) * OFFSET * LON_STEP
            lat = cell["lat"] + (2 * hash_uniform(c, 3 + 10 * s) - 1) * OFFSET * LAT_STEP
            row = {
                "station_id": f"ST{len(rows):04d}",
                "lon": float(np.clip(lon, LON0, LON0 + LON_STEP * (N_LON - 1))),
                "lat": float(np.clip(lat, LAT0, LAT0 + LAT_STEP * (N_LAT - 1))),
                "pm25": max(float(cell["field"] + hash_normal(c, 11 + 10 * s)), 1.0),
            }
            row.update({name: cell[name] for name in covars})
            rows.append(row)
    return pd.DataFrame(rows)


def main(output_dir: Path):
    output_dir.mkdir(parents=True, exist_ok=True)
    grid = make_grid()
    stations = make_stations(grid)
    formats = {"lon": "{:.4f}", "lat": "{:.4f}", "pm25": "{:.3f}", "pres": "{:.2f}"}
    for name in ("tmp2m", "rh2m", "apcp", "ugrd", "vgrd"):
        formats[name] = "{:.4f}"
    for column, fmt in formats.items():
        stations[column] = stations[column].map(fmt.format)
    stations.to_csv(output_dir / "pm25_fixture.csv", index=False)

    grid_out = grid.drop(columns=["field"])
    for column, fmt in {**formats, "lon": "{:.2f}", "lat": "{:.2f}"}.items():
        if column in grid_out:
            grid_out[column] = grid_out[column].map(fmt.format)
    grid_out.to_csv(output_dir / "pm25_grid.csv", index=False)
    print(f"✓ {len(stations)} 个站点, {len(grid_out)} 个网格单元: {output_dir}")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "resources" / "fixtures"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
