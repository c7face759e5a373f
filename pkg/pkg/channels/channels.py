"""
信道模块
Choi–Jamiołkowski (CJ) 算子、边缘信道、无影响判定、秩一 CJ 恢复幺正、Stinespring 完备化、残余幺正提取

CJ 约定：ρ = Σ_ij C(|i⟩⟨j|) ⊗ |i⟩⟨j|_{A*}，输出在前、对偶输入在后，Tr ρ = d_A；
对偶输入标签记作 "<label>*"
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from pkg.conf.conf import get_numerics, resolve_tol
from pkg.errors.errors import (DimensionMismatch, NotAChannel, NotCompletable, NotFactorizable,
                               NotUnitary, RankNotOne)
from pkg.log.log import lazy_logger
from pkg.tensor.tensor import (IOSpec, SystemSpec, as_matrix, fix_gauge, isometry_residual, kron,
                               partial_trace, permute_cols, permute_rows, permute_systems)

_get_logger = lazy_logger("channels")


def dual_label(label: str) -> str:
    return f"{label}*"


@dataclass(frozen=True)
class CJOperator:
    """信道的 CJ 算子，作用于 outputs ⊗ inputs*"""
    matrix: np.ndarray
    out_spec: SystemSpec
    in_spec: SystemSpec

    @property
    def joint_spec(self) -> SystemSpec:
        duals = tuple((dual_label(label), dim) for label, dim in self.in_spec.systems)
        return SystemSpec(self.out_spec.systems + duals)

    @property
    def d_in(self) -> int:
        return self.in_spec.total_dim

    @property
    def d_out(self) -> int:
        return self.out_spec.total_dim

    def tp_residual(self) -> float:
        """‖Tr_out ρ − 1‖_F / sqrt(d_in)"""
        reduced = partial_trace(self.matrix, self.joint_spec,
                                [dual_label(x) for x in self.in_spec.labels])
        return float(np.linalg.norm(reduced - np.eye(self.d_in)) / math.sqrt(self.d_in))

    def rank(self, tol: Optional[float] = None) -> int:
        tol = resolve_tol(tol)
        eigs = np.linalg.eigvalsh(self.matrix)
        top = eigs[-1]
        return int(np.sum(eigs > tol * top)) if top > 0 else 0


@dataclass(frozen=True)
class StinespringResult:
    """H_X → H_Y ⊗ H_F 的等距（必要时为幺正）扩张"""
    isometry: np.ndarray
    env_dim: int
    env_label: str = "F"

    @property
    def is_unitary(self) -> bool:
        return self.isometry.shape[0] == self.isometry.shape[1]


def _require_isometry(j: np.ndarray, tol: float):
    residual = isometry_residual(j)
    if residual > tol:
        _get_logger().error(f"输入不是幺正/等距映射, residual={residual:.3e}")
        raise NotUnitary("输入矩阵不是幺正或等距映射", residual=residual)


def cj_of_isometry(j, specs: IOSpec) -> CJOperator:
    """等距映射（含幺正）的 CJ 算子，秩一"""
    j = as_matrix(j)
    specs.check_shape(j)
    vec = j.reshape(-1)
    return CJOperator(np.outer(vec, vec.conj()), specs.outputs, specs.inputs)


def cj_of_unitary(u, in_spec: SystemSpec, out_spec: SystemSpec,
                  tol: Optional[float] = None) -> CJOperator:
    """
    幺正映射的 CJ 算子

    Args:
        u: 幺正矩阵，形状 (d_out, d_in)
        in_spec: 输入子系统
        out_spec: 输出子系统
        tol: 幺正性容差

    Returns:
        CJOperator: 秩一正算子，迹为 d_in
    """
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        raise NotUnitary(f"幺正矩阵必须为方阵，实际形状 {u.shape}")
    _require_isometry(u, resolve_tol(tol))
    return cj_of_isometry(u, IOSpec(in_spec, out_spec))


def _identity_split_residual(m: np.ndarray, spec: SystemSpec, drop: List[str]) -> Tuple[np.ndarray, float]:
    """m ≈ cand ⊗ 1_drop 的最佳 cand 及相对残差"""
    keep = [label for label in spec.labels if label not in drop]
    d_drop = spec.dim_of(drop)
    cand = partial_trace(m, spec, keep) / d_drop
    rebuilt = permute_systems(kron(cand, np.eye(d_drop)), spec.sub(keep + drop), spec.labels)
    norm = np.linalg.norm(m)
    residual = float(np.linalg.norm(m - rebuilt) / norm) if norm > 0 else 0.0
    return cand, residual


def marginal(rho: CJOperator, keep_outputs: Iterable[str], keep_inputs: Iterable[str],
             tol: Optional[float] = None) -> CJOperator:
    """
    CJ 层面的边缘信道：对丢弃的输出求偏迹；丢弃的输入须呈单位张量形式，验证后除以其维度

    Args:
        rho: CJ 算子
        keep_outputs: 保留的输出标签
        keep_inputs: 保留的输入标签
        tol: 单位张量形式的容差

    Returns:
        CJOperator: 边缘信道

    Raises:
        NotAChannel: 丢弃的输入对保留输出有影响
    """
    tol = resolve_tol(tol)
    outs = rho.out_spec.ordered(keep_outputs)
    ins = rho.in_spec.ordered(keep_inputs)
    joint = rho.joint_spec
    all_duals = [dual_label(x) for x in rho.in_spec.labels]
    m = partial_trace(rho.matrix, joint, outs + all_duals)
    spec1 = rho.out_spec.sub(outs).concat(joint.sub(all_duals))
    drop = [dual_label(x) for x in rho.in_spec.labels if x not in ins]
    if drop:
        m, residual = _identity_split_residual(m, spec1, drop)
        if residual > tol:
            _get_logger().error(f"丢弃输入 {drop} 后不是信道, residual={residual:.3e}")
            raise NotAChannel(f"丢弃的输入 {drop} 影响了输出 {outs}", residual=residual)
    return CJOperator(m, rho.out_spec.sub(outs), rho.in_spec.sub(ins))


def pad_cj(rho: CJOperator, out_spec: SystemSpec, in_spec: SystemSpec) -> np.ndarray:
    """把边缘 CJ 算子用单位算子补齐到完整的 outputs ⊗ inputs* 空间"""
    full = CJOperator(np.zeros((1, 1)), out_spec, in_spec).joint_spec
    present = rho.joint_spec.labels
    missing = [label for label in full.labels if label not in present]
    padded = kron(rho.matrix, np.eye(full.dim_of(missing)))
    return permute_systems(padded, full.sub(present + missing), full.labels)


def _output_rows(j: np.ndarray, specs: IOSpec, keep_outputs: List[str]) -> np.ndarray:
    """把 j 的行按 (保留输出, 其余输出) 排列，返回形状 (d_keep, d_rest, d_in)"""
    rest = [x for x in specs.outputs.labels if x not in keep_outputs]
    arranged = permute_rows(j, specs.outputs, keep_outputs + rest)
    d_keep = specs.outputs.dim_of(keep_outputs)
    return arranged.reshape(d_keep, -1, j.shape[1])


def influence_residuals(j, specs: IOSpec, to_outputs: Iterable[str],
                        from_inputs: Optional[Iterable[str]] = None) -> Dict[str, float]:
    """
    各输入对一组输出的无影响残差

    残差与 CJ 定义 ‖M' − ρ_{D|C}⊗1_{A*}‖_F / ‖M'‖_F 数值相同，
    但通过 Heisenberg 像 Y_{dd'} = J_d† J_{d'} 计算，不构造 M'

    Args:
        j: 幺正或等距矩阵
        specs: 输入输出描述
        to_outputs: 目标输出集合 D
        from_inputs: 待检查的输入，缺省为全部

    Returns:
        Dict[str, float]: 输入标签 → 残差
    """
    j = as_matrix(j)
    specs.check_shape(j)
    outs = specs.outputs.ordered(to_outputs)
    inputs = specs.inputs.ordered(from_inputs) if from_inputs is not None else specs.inputs.labels
    if not outs:
        return {label: 0.0 for label in inputs}
    rows = _output_rows(j, specs, outs)
    dims = specs.inputs.dims
    n = len(dims)
    diff_sq = {label: 0.0 for label in inputs}
    total_sq = 0.0
    for d in range(rows.shape[0]):
        left = rows[d].conj().T
        for e in range(rows.shape[0]):
            y = left @ rows[e]
            total_sq += float(np.vdot(y, y).real)
            tensor = y.reshape(dims + dims)
            for label in inputs:
                a = specs.inputs.index(label)
                t = np.moveaxis(tensor, (a, a + n), (0, 1))
                avg = np.trace(t, axis1=0, axis2=1) / dims[a]
                diff = t - np.eye(dims[a]).reshape((dims[a], dims[a]) + (1,) * (2 * n - 2)) * avg
                diff_sq[label] += float(np.vdot(diff, diff).real)
    if total_sq == 0:
        return {label: 0.0 for label in inputs}
    return {label: math.sqrt(diff_sq[label] / total_sq) for label in inputs}


def no_influence(u, specs: IOSpec, from_input: str, to_outputs: Iterable[str],
                 tol: Optional[float] = None) -> Tuple[bool, float]:
    """
    判定输入 A 是否不影响输出集合 D

    Returns:
        Tuple[bool, float]: (无影响, 残差)
    """
    tol = resolve_tol(tol)
    specs.inputs.index(from_input)
    residual = influence_residuals(u, specs, to_outputs, [from_input])[from_input]
    return residual <= tol, residual


def cj_marginal_of_isometry(j, specs: IOSpec, keep_outputs: Iterable[str], keep_inputs: Iterable[str],
                            tol: Optional[float] = None) -> CJOperator:
    """
    直接由等距映射计算边缘 CJ 算子，不经过完整 CJ 算子

    Args:
        j: 幺正或等距矩阵
        specs: 输入输出描述
        keep_outputs: 保留输出
        keep_inputs: 保留输入，其余输入须对保留输出无影响
        tol: 容差

    Returns:
        CJOperator: 边缘信道

    Raises:
        NotAChannel: 被丢弃的输入有影响
    """
    tol = resolve_tol(tol)
    j = as_matrix(j)
    specs.check_shape(j)
    outs = specs.outputs.ordered(keep_outputs)
    ins = specs.inputs.ordered(keep_inputs)
    dropped = [x for x in specs.inputs.labels if x not in ins]
    if dropped and outs:
        residual = _joint_influence_residual(j, specs, outs, dropped)
        if residual > tol:
            _get_logger().error(f"输入 {dropped} 对 {outs} 有影响, residual={residual:.3e}")
            raise NotAChannel(f"丢弃的输入 {dropped} 影响了输出 {outs}", residual=residual)
    rows = _output_rows(j, specs, outs)
    arranged = permute_cols(rows.reshape(-1, j.shape[1]), specs.inputs, ins + dropped)
    d_keep = specs.inputs.dim_of(ins)
    d_drop = specs.inputs.dim_of(dropped)
    z = arranged.reshape(rows.shape[0], rows.shape[1], d_keep, d_drop)
    m = np.einsum("grkw,hrlw->gkhl", z, z.conj()) / d_drop
    size = rows.shape[0] * d_keep
    return CJOperator(m.reshape(size, size), specs.outputs.sub(outs), specs.inputs.sub(ins))


def _joint_influence_residual(j: np.ndarray, specs: IOSpec, outs: List[str], group: List[str]) -> float:
    """把一组输入视为一个复合系统后的无影响残差"""
    rest = [x for x in specs.inputs.labels if x not in group]
    merged = permute_cols(j, specs.inputs, group + rest)
    merged_spec = IOSpec(
        SystemSpec((("#group", specs.inputs.dim_of(group)),) + specs.inputs.sub(rest).systems),
        specs.outputs,
    )
    return influence_residuals(merged, merged_spec, outs, ["#group"])["#group"]


def unitary_from_rank1_cj(rho: CJOperator, tol: Optional[float] = None) -> np.ndarray:
    """
    由秩一 CJ 算子恢复幺正，规范：第一个非零元素为正实数

    Raises:
        RankNotOne: 数值秩大于一
        NotUnitary: 恢复出的矩阵不幺正
    """
    tol = resolve_tol(tol)
    eigs, vecs = np.linalg.eigh(rho.matrix)
    top = eigs[-1]
    if top <= 0 or (eigs.size > 1 and eigs[-2] > tol * top):
        second = eigs[-2] / top if eigs.size > 1 and top > 0 else float("inf")
        raise RankNotOne("CJ 算子的数值秩不为一", residual=float(second))
    u = math.sqrt(top) * vecs[:, -1].reshape(rho.d_out, rho.d_in)
    if rho.d_out != rho.d_in:
        raise NotUnitary(f"输入输出维度不等 ({rho.d_out} vs {rho.d_in})，不是幺正信道")
    residual = isometry_residual(u)
    if residual > get_numerics().verify_tol:
        raise NotUnitary("秩一 CJ 算子不对应幺正映射", residual=residual)
    return fix_gauge(u)


def stinespring(rho: CJOperator, require_unitary: bool = False, tol: Optional[float] = None,
                env_label: str = "F") -> StinespringResult:
    """
    由 CJ 算子的谱分解构造 Stinespring 等距扩张 V = Σ_k K_k ⊗ |k⟩_F

    require_unitary 时把环境补足到 d_X / d_Y，使 V 为幺正

    Args:
        rho: 信道 CJ 算子
        require_unitary: 是否要求幺正完备化
        tol: 相对秩判定容差
        env_label: 环境标签

    Returns:
        StinespringResult: 扩张结果，行顺序 (Y, F)

    Raises:
        NotCompletable: 无法完备化为幺正
    """
    tol = resolve_tol(tol)
    d_y, d_x = rho.d_out, rho.d_in
    eigs, vecs = np.linalg.eigh(rho.matrix)
    order = np.argsort(eigs)[::-1]
    eigs, vecs = eigs[order], vecs[:, order]
    top = eigs[0] if eigs.size else 0.0
    rank = int(np.sum(eigs > tol * top)) if top > 0 else 0
    env_dim = rank
    if require_unitary:
        if d_x % d_y != 0 or rank > d_x // d_y:
            _get_logger().error(f"无法完备化: d_X={d_x}, d_Y={d_y}, rank={rank}")
            raise NotCompletable(f"d_X={d_x} 与 d_Y·rank={d_y}·{rank} 不相容，无法完备化为幺正")
        env_dim = d_x // d_y
    kraus = np.zeros((d_y, env_dim, d_x), dtype=complex)
    for k in range(rank):
        kraus[:, k, :] = math.sqrt(max(eigs[k], 0.0)) * vecs[:, k].reshape(d_y, d_x)
    v = kraus.reshape(d_y * env_dim, d_x)
    residual = isometry_residual(v)
    if residual > get_numerics().verify_tol:
        raise NotCompletable("Kraus 算子不满足保迹条件", residual=residual)
    if require_unitary:
        # 补零后的方阵由列正交直接得到幺正；再做一次极分解消除舍入
        w, _, vh = np.linalg.svd(v)
        v = w @ vh
    return StinespringResult(isometry=v, env_dim=env_dim, env_label=env_label)


def extract_residual_unitary(u, u_tilde, shared_out_spec: SystemSpec, residual_in_dim: int,
                             residual_out_dim: int, tol: Optional[float] = None) -> np.ndarray:
    """
    由 u = (1_shared ⊗ T) ũ 提取 T = Tr_shared[u ũ†] / d_shared

    行约定：u 的行为 shared ⊗ 残余输出，ũ 的行为 shared ⊗ 残余输入（残余因子在最后）

    Raises:
        NotFactorizable: u ũ† 不具有 1 ⊗ T 形式或 T 不幺正
    """
    tol = resolve_tol(tol)
    u = as_matrix(u)
    u_tilde = as_matrix(u_tilde)
    d_s = shared_out_spec.total_dim
    if u.shape[0] != d_s * residual_out_dim or u_tilde.shape[0] != d_s * residual_in_dim:
        raise DimensionMismatch(
            f"行维度不符: u {u.shape}, ũ {u_tilde.shape}, shared {d_s}, "
            f"residual {residual_in_dim}->{residual_out_dim}"
        )
    m = u @ u_tilde.conj().T
    t = np.trace(m.reshape(d_s, residual_out_dim, d_s, residual_in_dim), axis1=0, axis2=2) / d_s
    rebuilt = np.kron(np.eye(d_s), t)
    residual = float(np.linalg.norm(m - rebuilt) / max(np.linalg.norm(m), 1e-300))
    if residual > tol or residual_in_dim != residual_out_dim:
        _get_logger().error(f"残余幺正提取失败, residual={residual:.3e}")
        raise NotFactorizable("u ũ† 不具有 1 ⊗ T 形式", residual=residual)
    t_residual = isometry_residual(t)
    if t_residual > get_numerics().verify_tol:
        raise NotFactorizable("提取出的 T 不幺正", residual=t_residual)
    return t

