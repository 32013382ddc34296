#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
日志设置模块
控制台按级别着色，可选写入输出目录下的日志文件
"""

import logging
from pathlib import Path
from typing import Optional

from colorama import Fore, Style, just_fix_windows_console

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

_LEVEL_COLORS = {
    logging.DEBUG: Fore.CYAN,
    logging.INFO: Fore.GREEN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.RED + Style.BRIGHT,
}


class ColorFormatter(logging.Formatter):
    """只给级别名着色"""

    def format(self, record: logging.LogRecord) -> str:
        color = _LEVEL_COLORS.get(record.levelno, "")
        original = record.levelname
        record.levelname = f"{color}{original}{Style.RESET_ALL}"
        try:
            return super().format(record)
        finally:
            record.levelname = original


def setup_logger(level: str = "INFO", log_file: Optional[Path] = None) -> logging.Logger:
    """
    配置 app 包的日志，重复调用时替换已有处理器

    Args:
        level: 日志级别名
        log_file: 日志文件路径（可选）

    Returns:
        app 包的 logger
    """
    just_fix_windows_console()
    logger = logging.getLogger("app")
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    console = logging.StreamHandler()
    console.setFormatter(ColorFormatter(LOG_FORMAT))
    logger.addHandler(console)

    if log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
