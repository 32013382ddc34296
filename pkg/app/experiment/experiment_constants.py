#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验常量模块
配置键的默认值、实验名称与方法名称
"""

from typing import Any, Dict, Tuple

from app import __version__

# 实验名称
EXPERIMENTS: Tuple[str, ...] = ("sim1d", "sim2d", "mixture-uq", "probe", "scaling", "pm25-fixture")

# 方法名称
METHODS: Tuple[str, ...] = (
    "deepkriging", "deepkriging-gaussian", "kriging-true", "kriging-mle", "frk",
    "dnn-intercept", "dnn-coords",
)

# 各实验的默认方法
DEFAULT_METHODS: Dict[str, Tuple[str, ...]] = {
    "sim1d": ("kriging-true", "kriging-mle", "deepkriging", "deepkriging-gaussian",
              "dnn-intercept", "dnn-coords"),
    "sim2d": ("deepkriging", "deepkriging-gaussian", "dnn-coords", "kriging-mle"),
    "mixture-uq": ("deepkriging", "kriging-mle"),
    "probe": ("kriging-mle", "deepkriging"),
    "scaling": ("kriging-mle", "deepkriging"),
    "pm25-fixture": ("deepkriging", "dnn-coords", "kriging-mle"),
}

# 各实验允许的方法
SUPPORTED_METHODS: Dict[str, Tuple[str, ...]] = {
    "sim1d": METHODS,
    "sim2d": ("deepkriging", "deepkriging-gaussian", "kriging-mle", "dnn-intercept", "dnn-coords"),
    "mixture-uq": ("deepkriging", "kriging-mle"),
    "probe": ("kriging-mle", "deepkriging"),
    "scaling": ("kriging-mle", "deepkriging"),
    "pm25-fixture": ("deepkriging", "kriging-mle", "dnn-intercept", "dnn-coords"),
}

# 退出码
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

# 全部配置键及默认值；键的类型由默认值决定
DEFAULTS: Dict[str, Any] = {
    # 运行
    "run.seed": 0,
    "run.replicates": 20,
    "run.workers": 0,
    "run.output": "results",
    "run.methods": "",
    "run.log_level": "INFO",
    "run.verbose": False,
    # 基函数
    "basis.kernel": "wendland",
    "basis.levels": "auto",
    "basis.domain": "auto",
    # 网络
    "net.hidden_layers": 3,
    "net.width": 100,
    "net.dropout": 0.5,
    "net.batchnorm": True,
    "net.epochs": 200,
    "net.batch_size": 32,
    "net.learning_rate": 1e-3,
    # Kriging
    "kriging.family": "exponential",
    "kriging.mean": "constant",
    "kriging.max_iter": 500,
    # 模拟
    "sim.n": 1000,
    "sim.n_train": 800,
    "sim.side": 30,
    "sim.mu": 1.0,
    "sim.sigma2": 1.0,
    "sim.rho": 0.1,
    "sim.tau2": 0.01,
    # 交叉验证
    "cv.folds": 10,
    # 分布预测
    "ddsp.ensemble": 10,
    "ddsp.cuts": "auto",
    "ddsp.pdf_points": 200,
    # 非线性探针
    "probe.n": 100,
    "probe.index": 49,
    "probe.dropped": 50,
    "probe.values": 50,
    "probe.epochs": 50,
    # 计时
    "scaling.sizes": "400,1600,6400",
    "scaling.epochs": 20,
    "scaling.levels": 4,
    "scaling.max_iter": 100,
    # PM2.5
    "pm25.stations": "resources/fixtures/pm25_fixture.csv",
    "pm25.grid": "resources/fixtures/pm25_grid.csv",
    "pm25.covars": "tmp2m,rh2m,apcp,pres,ugrd,vgrd",
    "pm25.threshold": 12.0,
}

MANIFEST_FILE = "manifest.json"
CONFIG_ECHO_FILE = "config.json"


def get_version() -> str:
    return __version__
