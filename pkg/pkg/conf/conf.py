"""
配置加载模块
读取 configs/app.yaml，并允许 configs/.env 与环境变量覆盖数值参数
"""
import os
from dataclasses import dataclass
from typing import Dict, Optional

import yaml
from dotenv import load_dotenv

# 仓库根目录，测试从任意工作目录启动时也能找到配置
ROOT_DIR = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
CONFIG_PATH = os.path.join(ROOT_DIR, "configs", "app.yaml")
ENV_PATH = os.path.join(ROOT_DIR, "configs", ".env")


@dataclass(frozen=True)
class Numerics:
    """数值参数"""
    tol: float = 1e-9
    rank_tol: float = 1e-10
    verify_tol: float = 1e-8
    gap_threshold: float = 1e-6
    closure_tol: float = 1e-7
    max_retries: int = 5
    seed: int = 20240601
    max_dense_dim: int = 1024


_config: Optional[Dict] = None


def get_config() -> Dict:
    """
    获取全局配置（单例模式）

    Returns:
        Dict: app.yaml 解析结果，已应用环境变量覆盖
    """
    global _config
    if _config is None:
        load_dotenv(dotenv_path=ENV_PATH)
        with open(CONFIG_PATH, "r", encoding="utf-8") as f:
            config = yaml.load(f, Loader=yaml.FullLoader) or {}
        numerics = config.setdefault("numerics", {})
        if os.getenv("CAUSAL_TOL"):
            numerics["tol"] = float(os.getenv("CAUSAL_TOL"))
        if os.getenv("CAUSAL_SEED"):
            numerics["seed"] = int(os.getenv("CAUSAL_SEED"))
        if os.getenv("CAUSAL_LOG_DIR"):
            config.setdefault("logs", {})["path"] = os.getenv("CAUSAL_LOG_DIR")
        _config = config
    return _config


def get_numerics() -> Numerics:
    """读取 numerics 段，缺省字段取 Numerics 默认值"""
    section = get_config().get("numerics", {})
    known = {k: v for k, v in section.items() if k in Numerics.__dataclass_fields__}
    return Numerics(**known)


def resolve_tol(tol: Optional[float]) -> float:
    return get_numerics().tol if tol is None else float(tol)


def resolve_seed(seed: Optional[int]) -> int:
    return get_numerics().seed if seed is None else int(seed)


def section(name: str) -> Dict:
    """读取任意配置段，不存在时返回空字典"""
    return get_config().get(name, {}) or {}


def resolve_path(path: str) -> str:
    """相对路径按仓库根目录解析"""
    return path if os.path.isabs(path) else os.path.join(ROOT_DIR, path)
