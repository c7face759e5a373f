"""
张量基础模块
多体子系统的记账（SystemSpec）与稠密复矩阵运算：
Kronecker 积、偏迹、子系统置换、幺正性检查、算子 Schmidt 分解、相位对齐距离、cmatrix/1 编解码

基矢约定：复合指标按行优先，第一个子系统为最高位
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from pkg.errors.errors import DimensionMismatch, ParseError, UnknownLabel

CMATRIX_FORMAT = "cmatrix/1"


@dataclass(frozen=True)
class SystemSpec:
    """有序的带标签子系统列表"""
    systems: Tuple[Tuple[str, int], ...] = ()

    def __post_init__(self):
        systems = tuple((str(label), int(dim)) for label, dim in self.systems)
        object.__setattr__(self, "systems", systems)
        labels = [label for label, _ in systems]
        if len(set(labels)) != len(labels):
            raise DimensionMismatch(f"子系统标签重复: {labels}")
        for label, dim in systems:
            if dim < 1:
                raise DimensionMismatch(f"子系统 {label} 维度必须 ≥ 1，实际为 {dim}")

    @classmethod
    def of(cls, pairs: Iterable[Sequence]) -> "SystemSpec":
        return cls(tuple((p[0], p[1]) for p in pairs))

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.systems]

    @property
    def dims(self) -> List[int]:
        return [dim for _, dim in self.systems]

    @property
    def total_dim(self) -> int:
        return int(math.prod(self.dims))

    def __len__(self) -> int:
        return len(self.systems)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"未知子系统标签: {label}，已有: {self.labels}")

    def dim(self, label: str) -> int:
        return self.systems[self.index(label)][1]

    def dim_of(self, labels: Iterable[str]) -> int:
        return int(math.prod(self.dim(label) for label in labels))

    def sub(self, labels: Iterable[str]) -> "SystemSpec":
        """按给定顺序取子集"""
        return SystemSpec(tuple((label, self.dim(label)) for label in labels))

    def ordered(self, labels: Iterable[str]) -> List[str]:
        """把一组标签按本 spec 的顺序排列"""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return [label for label in self.labels if label in wanted]

    def without(self, labels: Iterable[str]) -> "SystemSpec":
        dropped = set(labels)
        return SystemSpec(tuple(s for s in self.systems if s[0] not in dropped))

    def concat(self, other: "SystemSpec") -> "SystemSpec":
        return SystemSpec(self.systems + other.systems)

    def to_json(self) -> List[List]:
        return [[label, dim] for label, dim in self.systems]


@dataclass(frozen=True)
class IOSpec:
    """一个幺正（或等距）映射的输入、输出子系统描述"""
    inputs: SystemSpec
    outputs: SystemSpec

    @classmethod
    def of(cls, inputs: Iterable[Sequence], outputs: Iterable[Sequence]) -> "IOSpec":
        return cls(SystemSpec.of(inputs), SystemSpec.of(outputs))

    def dagger(self) -> "IOSpec":
        return IOSpec(self.outputs, self.inputs)

    def check_shape(self, m):
        expected = (self.outputs.total_dim, self.inputs.total_dim)
        if np.shape(m) != expected:
            raise DimensionMismatch(f"矩阵形状 {np.shape(m)} 与 spec 要求 {expected} 不符")

    def to_json(self) -> Dict:
        return {"inputs": self.inputs.to_json(), "outputs": self.outputs.to_json()}

    @classmethod
    def from_json(cls, obj: Dict) -> "IOSpec":
        try:
            return cls.of(obj["inputs"], obj["outputs"])
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise ParseError(f"系统描述格式错误: {e}")


@dataclass(frozen=True)
class OpSchmidtTerm:
    left: np.ndarray
    right: np.ndarray
    weight: float


@dataclass(frozen=True)
class OpSchmidt:
    """M = Σ_k w_k A_k ⊗ B_k，权重降序，两侧因子 HS 正交归一"""
    terms: List[OpSchmidtTerm] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return len(self.terms)

    def reconstruct(self) -> np.ndarray:
        return sum(t.weight * np.kron(t.left, t.right) for t in self.terms)

    def lefts(self) -> List[np.ndarray]:
        return [t.left for t in self.terms]

    def rights(self) -> List[np.ndarray]:
        return [t.right for t in self.terms]


def as_matrix(m) -> np.ndarray:
    return np.asarray(m, dtype=complex)


def kron(*mats) -> np.ndarray:
    """
    Kronecker 积，与 SystemSpec 的行优先约定一致

    Args:
        *mats: 任意个矩阵，左侧为高位

    Returns:
        np.ndarray: 乘积矩阵
    """
    result = np.ones((1, 1), dtype=complex)
    for m in mats:
        result = np.kron(result, as_matrix(m))
    return result


def _require_square(m: np.ndarray, dim: int):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"需要方阵，实际形状 {m.shape}")
    if m.shape[0] != dim:
        raise DimensionMismatch(f"矩阵维度 {m.shape[0]} 与子系统总维度 {dim} 不符")


def partial_trace(m, spec: SystemSpec, keep: Iterable[str]) -> np.ndarray:
    """
    对 keep 之外的子系统求偏迹，保留的子系统按 spec 中的顺序排列

    Args:
        m: 方阵，维度为 spec.total_dim
        spec: 子系统描述
        keep: 保留的标签集合

    Returns:
        np.ndarray: 约化后的矩阵
    """
    m = as_matrix(m)
    _require_square(m, spec.total_dim)
    kept = spec.ordered(keep)
    n = len(spec)
    dims = spec.dims
    tensor = m.reshape(dims + dims)
    # 从高轴往低轴逐个收缩，避免轴号错位
    for pos in reversed(range(n)):
        if spec.labels[pos] in kept:
            continue
        tensor = np.trace(tensor, axis1=pos, axis2=pos + tensor.ndim // 2)
    d = spec.dim_of(kept)
    return tensor.reshape(d, d)


def permutation_axes(spec: SystemSpec, new_order: Sequence[str]) -> List[int]:
    if sorted(new_order) != sorted(spec.labels) or len(new_order) != len(spec):
        raise UnknownLabel(f"{list(new_order)} 不是 {spec.labels} 的置换")
    return [spec.index(label) for label in new_order]


def permute_rows(m, spec: SystemSpec, new_order: Sequence[str]) -> np.ndarray:
    """只置换行（输出侧）子系统顺序"""
    m = as_matrix(m)
    axes = permutation_axes(spec, new_order)
    cols = m.shape[1]
    tensor = m.reshape(spec.dims + [cols]).transpose(axes + [len(axes)])
    return tensor.reshape(spec.total_dim, cols)


def permute_cols(m, spec: SystemSpec, new_order: Sequence[str]) -> np.ndarray:
    """只置换列（输入侧）子系统顺序"""
    return permute_rows(as_matrix(m).T, spec, new_order).T


def permute_systems(m, spec: SystemSpec, new_order: Sequence[str]) -> np.ndarray:
    """
    行列同时按 new_order 重排子系统

    Args:
        m: 方阵
        spec: 当前子系统顺序
        new_order: 新的标签顺序

    Returns:
        np.ndarray: P m P^T
    """
    m = as_matrix(m)
    _require_square(m, spec.total_dim)
    return permute_cols(permute_rows(m, spec, new_order), spec, new_order)


def is_unitary(m, tol: float = 1e-9) -> Tuple[bool, float]:
    """
    幺正性检查，residual = ‖m†m − I‖_F / sqrt(dim)

    Returns:
        Tuple[bool, float]: (是否幺正, residual)
    """
    m = as_matrix(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False, float("inf")
    residual = isometry_residual(m)
    return residual <= tol, residual


def isometry_residual(m) -> float:
    """‖m†m − I‖_F / sqrt(cols)，同样适用于非方的等距映射"""
    m = as_matrix(m)
    cols = m.shape[1]
    return float(np.linalg.norm(m.conj().T @ m - np.eye(cols)) / math.sqrt(cols))


def reshuffle(m, row_dims: Tuple[int, int], col_dims: Tuple[int, int]) -> np.ndarray:
    """
    重排 m[(a1,a2),(b1,b2)] → R[(a1,b1),(a2,b2)]，行列两侧的二分可以不同

    Args:
        m: 形状 (r1·r2, c1·c2)
        row_dims: (r1, r2)
        col_dims: (c1, c2)

    Returns:
        np.ndarray: 形状 (r1·c1, r2·c2)
    """
    r1, r2 = row_dims
    c1, c2 = col_dims
    m = as_matrix(m)
    if m.shape != (r1 * r2, c1 * c2):
        raise DimensionMismatch(f"形状 {m.shape} 与二分 {row_dims}|{col_dims} 不符")
    return m.reshape(r1, r2, c1, c2).transpose(0, 2, 1, 3).reshape(r1 * c1, r2 * c2)


def schmidt_factors(m, row_dims: Tuple[int, int], col_dims: Tuple[int, int],
                    rank_tol: float = 1e-10) -> List[Tuple[float, np.ndarray, np.ndarray]]:
    """非方情形的算子 Schmidt 分解，返回 [(w, A(r1×c1), B(r2×c2)), ...]"""
    r1, r2 = row_dims
    c1, c2 = col_dims
    u, s, vh = np.linalg.svd(reshuffle(m, row_dims, col_dims), full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return []
    keep = int(np.sum(s > rank_tol * s[0]))
    return [
        (float(s[k]), u[:, k].reshape(r1, c1), vh[k, :].reshape(r2, c2))
        for k in range(keep)
    ]


def operator_schmidt(m, d1: int, d2: int, rank_tol: float = 1e-10) -> OpSchmidt:
    """
    算子 Schmidt 分解 m = Σ w_k A_k ⊗ B_k（重排后做 SVD）

    Args:
        m: d1·d2 维方阵
        d1: 第一个因子维度
        d2: 第二个因子维度
        rank_tol: 相对奇异值截断

    Returns:
        OpSchmidt: 分解结果
    """
    m = as_matrix(m)
    _require_square(m, d1 * d2)
    terms = [
        OpSchmidtTerm(left=a, right=b, weight=w)
        for w, a, b in schmidt_factors(m, (d1, d2), (d1, d2), rank_tol)
    ]
    return OpSchmidt(terms=terms)


def phase_aligned_distance(u, v) -> float:
    """min_φ ‖u − e^{iφ} v‖_F，φ = arg Tr(u†v)"""
    u = as_matrix(u)
    v = as_matrix(v)
    if u.shape != v.shape:
        raise DimensionMismatch(f"形状不一致: {u.shape} vs {v.shape}")
    overlap = np.vdot(v, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v))


def global_phase(u, v) -> complex:
    """返回 c (|c|=1) 使 u ≈ c·v"""
    overlap = np.vdot(as_matrix(v), as_matrix(u))
    return complex(overlap / abs(overlap)) if abs(overlap) > 0 else 1.0 + 0j


def fix_gauge(u) -> np.ndarray:
    """把第一个非零元素变为正实数"""
    u = as_matrix(u)
    flat = u.reshape(-1)
    nonzero = np.flatnonzero(np.abs(flat) > 1e-12 * max(1.0, np.abs(flat).max(initial=0.0)))
    if nonzero.size == 0:
        return u
    first = flat[nonzero[0]]
    return u * (abs(first) / first)


def to_cmatrix(m) -> Dict:
    """矩阵 → cmatrix/1 字典"""
    m = as_matrix(m)
    if m.ndim != 2:
        raise DimensionMismatch(f"需要二维矩阵，实际 ndim={m.ndim}")
    return {
        "format": CMATRIX_FORMAT,
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in m.reshape(-1)],
    }


def from_cmatrix(obj: Dict) -> np.ndarray:
    """
    cmatrix/1 字典 → 矩阵，拒绝 NaN/Inf 与形状不符

    Raises:
        ParseError: 格式错误
    """
    try:
        rows = int(obj["rows"])
        cols = int(obj["cols"])
        data = obj["data"]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"cmatrix 缺少字段或字段类型错误: {e}")
    if obj.get("format", CMATRIX_FORMAT) != CMATRIX_FORMAT:
        raise ParseError(f"不支持的矩阵格式: {obj.get('format')}")
    if rows < 1 or cols < 1 or len(data) != rows * cols:
        raise ParseError(f"cmatrix 数据长度 {len(data)} 与形状 {rows}x{cols} 不符")
    try:
        arr = np.array([[float(re), float(im)] for re, im in data], dtype=float)
    except (TypeError, ValueError) as e:
        raise ParseError(f"cmatrix 元素格式错误: {e}")
    if not np.all(np.isfinite(arr)):
        raise ParseError("cmatrix 含 NaN 或 Inf")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(rows, cols)


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"JSON 不允许 NaN/Inf: {x}")
    text = format(x, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _canonical(obj, level: int) -> str:
    pad = " " * (level + 1)
    end = " " * level
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_canonical(obj[k], level + 1)}"
                 for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _canonical(v, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"无法序列化的类型: {type(obj).__name__}")


def canonical_dumps(obj) -> str:
    """排序键、缩进 1 的确定性 JSON，浮点固定输出 17 位有效数字"""
    return _canonical(obj, 0)
