#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验配置模块
读取 key = value 配置文件与 YAML 预设，按 命令行 > 文件 > 预设 > 默认值 的优先级合并
"""

import difflib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from app.basis.basis_embed import KERNELS
from app.covariance.covariance_mle import MEAN_STRUCTURES
from app.covariance.covariance_model import FAMILIES
from app.deepkriging.deepkriging_model import DeepKrigingConfig
from app.errors import ConfigError, DataIOError

from .experiment_constants import (
    CONFIG_ECHO_FILE, DEFAULT_METHODS, DEFAULTS, EXPERIMENTS, METHODS,
)

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parents[2] / "resources" / "experiments"

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def read_config(config_file) -> Dict[str, str]:
    """
    读取 key = value 配置文件，# 之后为注释

    Returns:
        键到原始字符串值的字典
    """
    path = Path(config_file)
    if not path.exists():
        raise DataIOError(f"配置文件不存在: {path}")
    config = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for number, line in enumerate(f, start=1):
                if "#" in line:
                    line = line[:line.index("#")]
                line = line.strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"配置文件第 {number} 行缺少 '=': {line}")
                key, value = line.split("=", 1)
                config[key.strip()] = value.strip()
    except OSError as e:
        raise DataIOError(f"读取配置文件失败: {e}") from e
    return config


def _flatten(data: Mapping, prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def load_preset(name: str, preset_dir: Path = PRESET_DIR) -> Dict[str, Any]:
    """读取 resources/experiments/<name>.yaml，嵌套键展开为点号形式"""
    path = Path(preset_dir) / f"{name}.yaml"
    if not path.exists():
        return {}
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"无法解析实验预设 {path}: {e}") from e
    if not isinstance(data, Mapping):
        raise ConfigError(f"实验预设 {path} 必须是映射")
    return _flatten(data)


def _check_key(key: str, source: str):
    if key not in DEFAULTS:
        nearest = difflib.get_close_matches(key, DEFAULTS.keys(), n=1)
        hint = f"，是否为 {nearest[0]}？" if nearest else ""
        raise ConfigError(f"{source}中的未知配置键: {key}{hint}")


def _coerce(key: str, value: Any) -> Any:
    """按默认值的类型转换取值"""
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(str(value).strip()) if not isinstance(value, (int, float)) else int(value)
        if isinstance(default, float):
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError):
        kind = type(default).__name__
        raise ConfigError(f"配置键 {key} 的取值 {value!r} 不是 {kind} 类型") from None


class RunConfig:
    """合并后的运行配置，只读"""

    def __init__(self, values: Dict[str, Any], sources: Dict[str, str]):
        self._values = dict(values)
        self.sources = dict(sources)

    def __getitem__(self, key: str) -> Any:
        _check_key(key, "查询")
        return self._values[key]

    def to_dict(self) -> Dict[str, Any]:
        return dict(self._values)

    def with_values(self, **values) -> "RunConfig":
        """以点号键（下划线代替点号）覆盖取值，返回新的配置"""
        merged = dict(self._values)
        sources = dict(self.sources)
        for name, value in values.items():
            key = name.replace("__", ".")
            _check_key(key, "覆盖项")
            merged[key] = _coerce(key, value)
            sources[key] = "override"
        return RunConfig(merged, sources)

    def methods(self, experiment: str) -> Tuple[str, ...]:
        text = self._values["run.methods"]
        if not text:
            return DEFAULT_METHODS[experiment]
        return tuple(m.strip() for m in text.split(",") if m.strip())

    @property
    def workers(self) -> int:
        workers = self._values["run.workers"]
        return workers if workers > 0 else (os.cpu_count() or 1)

    def int_or_auto(self, key: str):
        value = self[key]
        return "auto" if value == "auto" else int(value)

    def domain(self):
        value = self["basis.domain"]
        if value == "auto":
            return "auto"
        return tuple(float(v) for v in value.split(","))

    def deepkriging_config(self, **overrides) -> DeepKrigingConfig:
        config = DeepKrigingConfig(
            hidden_layers=self["net.hidden_layers"],
            width=self["net.width"],
            dropout=self["net.dropout"],
            batchnorm=self["net.batchnorm"],
            epochs=self["net.epochs"],
            batch_size=self["net.batch_size"],
            learning_rate=self["net.learning_rate"],
            kernel=self["basis.kernel"],
            levels=self.int_or_auto("basis.levels"),
            domain=self.domain(),
            seed=self["run.seed"],
            progress=self["run.verbose"],
        )
        return config.with_overrides(**overrides) if overrides else config


def parse_config(path=None, flags: Optional[Mapping[str, Any]] = None,
                 preset: Optional[str] = None) -> RunConfig:
    """
    解析运行配置

    Args:
        path: key = value 配置文件（可选）
        flags: 命令行给出的点号键取值，None 表示未给出
        preset: 实验预设名（可选）

    Returns:
        RunConfig

    Raises:
        ConfigError: 未知键或类型不匹配
    """
    values = dict(DEFAULTS)
    sources = {key: "default" for key in DEFAULTS}
    layers = []
    if preset:
        layers.append(("预设", load_preset(preset)))
    if path:
        layers.append(("配置文件", read_config(path)))
    if flags:
        layers.append(("命令行", {k: v for k, v in flags.items() if v is not None}))
    for source, layer in layers:
        for key, value in layer.items():
            _check_key(key, source)
            values[key] = _coerce(key, value)
            sources[key] = source
    return RunConfig(values, sources)


def validate_config(config: RunConfig, experiment: Optional[str] = None) -> Dict[str, Any]:
    """检查取值范围，返回 {'valid', 'errors', 'warnings'}"""
    result = {"valid": True, "errors": [], "warnings": []}
    values = config.to_dict()

    def error(message: str):
        result["errors"].append(message)
        result["valid"] = False

    positive = ("run.replicates", "net.hidden_layers", "net.width", "net.epochs", "net.batch_size",
                "kriging.max_iter", "sim.n", "sim.n_train", "ddsp.ensemble", "ddsp.pdf_points",
                "probe.n", "probe.epochs", "scaling.epochs", "scaling.levels", "scaling.max_iter")
    for key in positive:
        if values[key] < 1:
            error(f"{key} 必须 >= 1，当前为 {values[key]}")
    if values["run.workers"] < 0:
        error(f"run.workers 不能为负，当前为 {values['run.workers']}")
    if values["cv.folds"] < 2:
        error(f"cv.folds 必须 >= 2，当前为 {values['cv.folds']}")
    if values["probe.values"] < 3:
        error(f"probe.values 至少为 3，当前为 {values['probe.values']}")
    if not 0.0 <= values["net.dropout"] < 1.0:
        error(f"net.dropout 必须在 [0, 1) 内，当前为 {values['net.dropout']}")
    if values["net.learning_rate"] <= 0:
        error("net.learning_rate 必须为正")
    if values["basis.kernel"] not in KERNELS:
        error(f"未知的核函数: {values['basis.kernel']}")
    if values["kriging.family"] not in FAMILIES:
        error(f"未知的协方差族: {values['kriging.family']}")
    if values["kriging.mean"] not in MEAN_STRUCTURES:
        error(f"未知的均值结构: {values['kriging.mean']}")
    if experiment in ("sim1d", "mixture-uq") and values["sim.n_train"] >= values["sim.n"]:
        error(f"sim.n_train ({values['sim.n_train']}) 必须小于 sim.n ({values['sim.n']})")
    for key in ("basis.levels", "ddsp.cuts"):
        if values[key] != "auto" and not values[key].isdigit():
            error(f"{key} 只能是正整数或 auto，当前为 {values[key]}")
    if values["basis.domain"] != "auto":
        try:
            config.domain()
        except ValueError:
            error(f"basis.domain 格式错误: {values['basis.domain']}")
    try:
        sizes = [int(s) for s in values["scaling.sizes"].split(",")]
        if min(sizes) < 10:
            error("scaling.sizes 中的样本数至少为 10")
    except ValueError:
        error(f"scaling.sizes 格式错误: {values['scaling.sizes']}")
    if experiment is not None:
        if experiment not in EXPERIMENTS:
            error(f"未知的实验: {experiment}，可选 {', '.join(EXPERIMENTS)}")
        else:
            for method in config.methods(experiment):
                if method not in METHODS:
                    error(f"未知的方法: {method}")
    if values["run.workers"] > (os.cpu_count() or 1):
        result["warnings"].append(f"run.workers={values['run.workers']} 超过 CPU 核数")
    if values["run.replicates"] > 100:
        result["warnings"].append("重复次数超过 100，运行时间会很长")
    return result


def check_config(config: RunConfig, experiment: Optional[str] = None) -> RunConfig:
    """validate_config 的抛异常版本，警告写入日志"""
    result = validate_config(config, experiment)
    for warning in result["warnings"]:
        logger.warning(warning)
    if not result["valid"]:
        raise ConfigError("; ".join(result["errors"]))
    return config


def echo_config(config: RunConfig, output_dir) -> Path:
    """把完整配置写为输出目录下的 config.json"""
    path = Path(output_dir) / CONFIG_ECHO_FILE
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(config.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"无法写入 {path}: {e}") from e
    return path
