#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验模块
提供配置解析、日志设置、实验运行与结果输出
"""

from .experiment_config import (
    RunConfig,
    check_config,
    echo_config,
    load_preset,
    parse_config,
    read_config,
    validate_config,
)
from .experiment_constants import DEFAULTS, EXPERIMENTS, METHODS, SUPPORTED_METHODS, get_version
from .experiment_logging import setup_logger
from .experiment_results import emit_plot_data, summarize, write_manifest, write_table
from .experiment_runner import (
    ExperimentResult,
    ExperimentSpec,
    crossval,
    loglog_slopes,
    make_predictor,
    run_experiment,
    time_methods,
    worker_pool,
)

__all__ = [
    'RunConfig',
    'check_config',
    'echo_config',
    'load_preset',
    'parse_config',
    'read_config',
    'validate_config',
    'DEFAULTS',
    'EXPERIMENTS',
    'METHODS',
    'SUPPORTED_METHODS',
    'get_version',
    'setup_logger',
    'emit_plot_data',
    'summarize',
    'write_manifest',
    'write_table',
    'ExperimentResult',
    'ExperimentSpec',
    'crossval',
    'loglog_slopes',
    'make_predictor',
    'run_experiment',
    'time_methods',
    'worker_pool',
]
