"""
日志模块
按天滚动写入 logs/<name>.log，错误额外写入 logs/error/<name>.log，
每条记录带上当前作业的 job_id
"""
import errno
import logging
import logging.handlers
import os
from contextvars import ContextVar
from typing import Dict, Optional

JOB_ID_CTX = ContextVar("job_id", default="")

LOG_FORMAT = "[%(asctime)s] %(filename)s[line:%(lineno)d] : [%(levelname)s] - [job_id:%(job_id)s] - %(message)s"

_loggers: Dict[str, logging.Logger] = {}


class JobIDFilter(logging.Filter):
    def filter(self, record):
        record.job_id = JOB_ID_CTX.get() or "system"
        return True


def ensure_dir(path):
    """os.makedirs without EEXIST."""
    try:
        os.makedirs(path)
    except OSError as e:
        if e.errno != errno.EEXIST:
            raise e


def _rotating_handler(filename: str, level: int) -> logging.Handler:
    handler = logging.handlers.TimedRotatingFileHandler(
        filename=filename,
        when="MIDNIGHT",
        interval=1,
        backupCount=14,
        encoding="utf-8",
    )
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def get_logger_by_name(name: str, log_dir: str = "logs/", level: int = logging.INFO) -> logging.Logger:
    """
    创建带滚动文件输出的 logger

    Args:
        name: logger 名称，同时作为日志文件名
        log_dir: 日志目录
        level: 普通日志文件的级别

    Returns:
        logging.Logger: 配置好的 logger
    """
    logger = logging.getLogger(f"causal.{name}")
    logger.setLevel(logging.DEBUG)
    logger.addFilter(JobIDFilter())

    stdout_file = os.path.join(log_dir, name)
    error_file = os.path.join(log_dir, "error", name)
    for file_path in (stdout_file, error_file):
        ensure_dir(os.path.dirname(file_path))

    logger.addHandler(_rotating_handler(f"{stdout_file}.log", level))
    logger.addHandler(_rotating_handler(f"{error_file}.log", logging.ERROR))
    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    获取（缓存的）logger，日志目录与级别取自 configs/app.yaml

    Args:
        name: 模块名，缺省为 causal

    Returns:
        logging.Logger: logger 实例
    """
    name = name or "causal"
    if name in _loggers:
        return _loggers[name]

    from pkg.conf.conf import resolve_path, section
    logs = section("logs")
    log_dir = resolve_path(logs.get("path", "logs/"))
    level = getattr(logging, str(logs.get("level", "INFO")).upper(), logging.INFO)
    logger = get_logger_by_name(name, log_dir=log_dir, level=level)
    _loggers[name] = logger
    return logger


def lazy_logger(name: str):
    """
    返回一个延迟获取 logger 的函数，日志目录不可用时退回标准 logging

    Args:
        name: 模块名

    Returns:
        Callable[[], logging.Logger]
    """
    def _get_logger() -> logging.Logger:
        try:
            return get_logger(name)
        except Exception:
            return logging.getLogger(name)
    return _get_logger
