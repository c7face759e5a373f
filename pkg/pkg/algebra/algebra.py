"""
*-代数块分解模块
矩阵 *-代数闭包、Wedderburn 块分解（对其交换子），以及基于它的二分、嵌套与多因子劈分
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from pkg.channels.channels import CJOperator, dual_label, pad_cj
from pkg.conf.conf import get_numerics, resolve_seed, resolve_tol
from pkg.errors.errors import (CommutantViolation, CommutatorTooLarge, DimensionMismatch,
                               NotAnAlgebra, NumericalDegeneracy)
from pkg.log.log import lazy_logger
from pkg.tensor.tensor import SystemSpec, as_matrix, operator_schmidt, permute_systems

_get_logger = lazy_logger("algebra")


@dataclass
class StarAlgebra:
    """HS 正交归一基张成的矩阵 *-代数"""
    ambient_dim: int
    basis: List[np.ndarray] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def basis_matrix(self) -> np.ndarray:
        """形状 (dim, d²)，每行一个向量化的基元素"""
        if not self.basis:
            return np.zeros((0, self.ambient_dim ** 2), dtype=complex)
        return np.array([b.reshape(-1) for b in self.basis])

    def closure_residual(self) -> float:
        """基元素两两乘积落在张成空间外的最大相对残差"""
        rows = self.basis_matrix()
        worst = 0.0
        for a in self.basis:
            for b in self.basis:
                p = (a @ b).reshape(-1)
                norm = np.linalg.norm(p)
                if norm == 0:
                    continue
                r = p - rows.T @ (rows.conj() @ p)
                worst = max(worst, float(np.linalg.norm(r) / norm))
        return worst


@dataclass
class BlockSplit:
    """s: H_D → ⊕_i X_i^L ⊗ X_i^R 的幺正，行序为 (i, l, r)"""
    s: np.ndarray
    blocks: List[Tuple[int, int]]

    @property
    def offsets(self) -> List[int]:
        result, pos = [], 0
        for dl, dr in self.blocks:
            result.append(pos)
            pos += dl * dr
        return result

    def block_range(self, i: int) -> slice:
        start = self.offsets[i]
        return slice(start, start + self.blocks[i][0] * self.blocks[i][1])


@dataclass
class MultiSplit:
    """s: H → ⊕_i X_i^(1) ⊗ … ⊗ X_i^(k) 的幺正，行序为 (i, x1, …, xk)"""
    s: np.ndarray
    blocks: List[Tuple[int, ...]]

    @property
    def offsets(self) -> List[int]:
        result, pos = [], 0
        for dims in self.blocks:
            result.append(pos)
            pos += int(np.prod(dims))
        return result

    def block_range(self, i: int) -> slice:
        start = self.offsets[i]
        return slice(start, start + int(np.prod(self.blocks[i])))

    def as_pair(self) -> BlockSplit:
        """两因子时转为 BlockSplit"""
        if any(len(b) != 2 for b in self.blocks):
            raise DimensionMismatch(f"块结构 {self.blocks} 不是两因子")
        return BlockSplit(self.s, [tuple(b) for b in self.blocks])


@dataclass
class NestedSplit:
    """外层劈分 A_1，每个外层块 i 在 X_i^R ⊗ A_2 上再做一次劈分"""
    outer: BlockSplit
    inner: List[BlockSplit]


@dataclass
class PairSplitResult:
    split: BlockSplit
    left_channels: List[CJOperator]
    right_channels: List[CJOperator]


@dataclass
class NestedSplitResult:
    split: NestedSplit
    leaf_channels: List[List[CJOperator]]


@dataclass
class MultiSplitResult:
    split: MultiSplit
    channels: List[List[CJOperator]]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(resolve_seed(seed))


def _orthonormal_extend(rows: np.ndarray, candidates: np.ndarray, drop: float) -> np.ndarray:
    """把候选向量（列）中与 rows 张成空间正交的部分追加为新的正交归一行"""
    if candidates.size == 0:
        return rows
    norms = np.linalg.norm(candidates, axis=0)
    if rows.shape[0]:
        candidates = candidates - rows.T @ (rows.conj() @ candidates)
    keep = np.linalg.norm(candidates, axis=0) > drop * np.maximum(norms, 1e-300)
    if not np.any(keep):
        return rows
    fresh = candidates[:, keep]
    q = scipy.linalg.orth(fresh, rcond=drop)
    # 二次正交化，压低舍入误差
    if rows.shape[0]:
        q = q - rows.T @ (rows.conj() @ q)
        q = scipy.linalg.orth(q, rcond=drop)
    return np.vstack([rows, q.T]) if q.size else rows


def algebra_closure(generators: Sequence[np.ndarray], d: int, tol: Optional[float] = None) -> StarAlgebra:
    """
    含单位元且包含生成元的最小 *-代数

    反复加入伴随与两两乘积，并以 HS Gram–Schmidt 正交化，直到维数稳定

    Args:
        generators: d×d 生成元
        d: 环境维度
        tol: 新元素的相对舍弃阈值，缺省取 numerics.closure_tol

    Returns:
        StarAlgebra: 代数
    """
    drop = get_numerics().closure_tol if tol is None else tol
    gens = [as_matrix(g) for g in generators]
    for g in gens:
        if g.shape != (d, d):
            raise DimensionMismatch(f"生成元形状 {g.shape} 与环境维度 {d} 不符")
    seeds = [np.eye(d, dtype=complex)] + gens + [g.conj().T for g in gens]
    rows = _orthonormal_extend(np.zeros((0, d * d), dtype=complex),
                               np.array([m.reshape(-1) for m in seeds]).T, drop)
    while True:
        size = rows.shape[0]
        mats = rows.reshape(size, d, d)
        for i in range(size):
            products = np.einsum("ab,kbc->kac", mats[i], mats).reshape(size, d * d).T
            rows = _orthonormal_extend(rows, products, drop)
            if rows.shape[0] == d * d:
                break
        if rows.shape[0] == size or rows.shape[0] == d * d:
            break
    return StarAlgebra(d, [r.reshape(d, d) for r in rows])


def _cluster(values: np.ndarray, gap: float) -> List[List[int]]:
    """已排序实数按相邻间隔分组"""
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    groups = [[0]]
    for idx in range(1, len(values)):
        if values[idx] - values[idx - 1] > gap * scale:
            groups.append([idx])
        else:
            groups[-1].append(idx)
    return groups


def _random_hermitian(alg: StarAlgebra, rng: np.random.Generator, coeffs_basis: Optional[List[np.ndarray]] = None) -> np.ndarray:
    basis = coeffs_basis if coeffs_basis is not None else alg.basis
    if not basis:
        return np.zeros((alg.ambient_dim, alg.ambient_dim), dtype=complex)
    x = rng.standard_normal(len(basis))
    h = np.tensordot(x, np.asarray(basis), axes=1)
    return (h + h.conj().T) / 2


def algebra_center(alg: StarAlgebra) -> List[np.ndarray]:
    """
    代数的中心：与全部基元素对易的代数元素

    对易子落在代数内，按 HS 正交基取坐标后求零空间；
    奇异值用绝对阈值截断，交换代数的对易子全是舍入噪声时整个代数即为中心
    """
    d = alg.ambient_dim
    identity = np.eye(d, dtype=complex) / np.sqrt(d)
    m = alg.dimension
    if m == 0:
        return [identity]
    mats = np.asarray(alg.basis)
    flat = mats.reshape(m, d * d).conj()
    # 第 k 列：[b_k, b_l] 在基 b_j 上的坐标，行序 (l, j)
    coords = np.empty((m * m, m), dtype=complex)
    for k, bk in enumerate(mats):
        comm = np.matmul(bk, mats) - np.matmul(mats, bk)
        coords[:, k] = (comm.reshape(m, d * d) @ flat.T).reshape(-1)
    _, sv, vh = np.linalg.svd(coords)
    scale = max(1.0, float(max(np.linalg.norm(b) for b in alg.basis)))
    rank = int(np.sum(sv > get_numerics().closure_tol * scale))
    coeffs = vh[rank:].conj().T
    if coeffs.shape[1] == 0:
        _get_logger().warning("中心为空，退回单位元")
        return [identity]
    return [np.tensordot(coeffs[:, j], mats, axes=1) for j in range(coeffs.shape[1])]


def _fingerprint(cols: np.ndarray) -> Tuple:
    """块子空间投影的舍入值，唯一确定该块"""
    proj = cols @ cols.conj().T
    return tuple(np.round(proj.real, 6).reshape(-1)) + tuple(np.round(proj.imag, 6).reshape(-1))


def _block_residual(m: np.ndarray, n: int, k: int) -> float:
    """m ≈ M ⊗ 1_k 的相对残差"""
    t = m.reshape(n, k, n, k)
    fit = np.einsum("arbr->ab", t) / k
    diff = t - np.einsum("ab,rs->arbs", fit, np.eye(k))
    norm = np.linalg.norm(m)
    return float(np.linalg.norm(diff) / norm) if norm > 0 else 0.0


def wedderburn(alg: StarAlgebra, seed=None, tol: Optional[float] = None) -> BlockSplit:
    """
    Wedderburn 块分解：s a s† = ⊕_i (M_i(a) ⊗ 1_{R_i})

    中心 → 随机厄米中心元的谱投影 → 块内随机厄米元的本征空间与矩阵单位 → 按 (i, l, r) 组装

    Args:
        alg: *-代数
        seed: 随机种子或 Generator
        tol: 块结构残差容差，缺省取 numerics.verify_tol

    Returns:
        BlockSplit: 块按 (dimL, dimR, 投影指纹) 排序

    Raises:
        NotAnAlgebra: 输入不闭合
        NumericalDegeneracy: 多次重采样后仍无法分开谱
    """
    numerics = get_numerics()
    check_tol = numerics.verify_tol if tol is None else tol
    rng = _rng(seed)
    closure = alg.closure_residual() if alg.dimension <= 64 else 0.0
    if closure > numerics.closure_tol * 10:
        raise NotAnAlgebra("基元素乘积不在张成空间内", residual=closure)
    center = algebra_center(alg)
    last_error = None
    for attempt in range(numerics.max_retries):
        try:
            split = _wedderburn_once(alg, center, rng, numerics.gap_threshold, check_tol)
            return split
        except NumericalDegeneracy as e:
            last_error = e
            _get_logger().warning(f"Wedderburn 第 {attempt + 1} 次采样退化: {e}")
    raise NumericalDegeneracy(f"{numerics.max_retries} 次重采样后仍退化: {last_error}")


def _wedderburn_once(alg: StarAlgebra, center: List[np.ndarray], rng: np.random.Generator,
                     gap: float, check_tol: float) -> BlockSplit:
    z = _random_hermitian(alg, rng, center)
    evals, evecs = np.linalg.eigh(z)
    groups = _cluster(evals, gap)
    if len(groups) != len(center):
        raise NumericalDegeneracy(f"中心维数 {len(center)} 与谱簇数 {len(groups)} 不符")

    found = []
    for idx in groups:
        v = evecs[:, idx]
        h = v.conj().T @ _random_hermitian(alg, rng) @ v
        hv, hvec = np.linalg.eigh((h + h.conj().T) / 2)
        sub = _cluster(hv, gap)
        sizes = {len(g) for g in sub}
        if len(sizes) != 1:
            raise NumericalDegeneracy(f"块内本征空间大小不一致: {[len(g) for g in sub]}")
        n, m = len(sub), sizes.pop()
        spaces = [hvec[:, g] for g in sub]
        a = v.conj().T @ sum(c * b for c, b in zip(rng.standard_normal(alg.dimension)
                                                   + 1j * rng.standard_normal(alg.dimension), alg.basis)) @ v
        cols = [spaces[0]]
        for l in range(1, n):
            g = spaces[l].conj().T @ a @ spaces[0]
            scale = np.linalg.norm(g) / np.sqrt(m)
            if scale < gap:
                raise NumericalDegeneracy("矩阵单位构造时耦合过弱")
            cols.append(spaces[l] @ g / scale)
        # 列序 (l, r)
        block_cols = v @ np.hstack(cols)
        # 极分解只修正舍入，列的相位与顺序不变
        pu, _, pvh = np.linalg.svd(block_cols, full_matrices=False)
        block_cols = pu @ pvh
        found.append(((n, m), block_cols))

    found.sort(key=lambda item: (item[0], _fingerprint(item[1])))
    w = np.hstack([cols for _, cols in found])
    s = w.conj().T
    blocks = [dims for dims, _ in found]
    split = BlockSplit(s=s, blocks=blocks)
    residual = max((_split_residual(split, b) for b in alg.basis), default=0.0)
    if residual > check_tol:
        raise NumericalDegeneracy("块结构残差过大", residual=residual)
    return split


def _split_residual(split: BlockSplit, a: np.ndarray, commutant: bool = False) -> float:
    """s a s† 偏离 ⊕ M_i⊗1（commutant 时为 ⊕ 1⊗N_i）的相对残差"""
    m = split.s @ a @ split.s.conj().T
    norm = np.linalg.norm(m)
    if norm == 0:
        return 0.0
    off = m.copy()
    err = 0.0
    for i, (dl, dr) in enumerate(split.blocks):
        r = split.block_range(i)
        blk = m[r, r]
        off[r, r] = 0
        if commutant:
            swapped = blk.reshape(dl, dr, dl, dr).transpose(1, 0, 3, 2).reshape(dl * dr, dl * dr)
            err += (_block_residual(swapped, dr, dl) * np.linalg.norm(blk)) ** 2
        else:
            err += (_block_residual(blk, dl, dr) * np.linalg.norm(blk)) ** 2
    err += np.linalg.norm(off) ** 2
    return float(np.sqrt(err) / norm)


def _factor_residual(m: np.ndarray, dims: Sequence[int], t: int) -> float:
    """m ≈ 1 ⊗ … ⊗ M_t ⊗ … ⊗ 1 的相对残差"""
    norm = np.linalg.norm(m)
    if norm == 0:
        return 0.0
    k = len(dims)
    tensor = m.reshape(tuple(dims) + tuple(dims))
    moved = np.moveaxis(tensor, (t, t + k), (0, 1))
    d_t = dims[t]
    rest = int(np.prod(dims)) // d_t
    moved = moved.reshape(d_t, d_t, rest, rest)
    fit = np.trace(moved, axis1=2, axis2=3) / rest
    diff = moved - np.einsum("ab,rs->abrs", fit, np.eye(rest))
    return float(np.linalg.norm(diff) / norm)


def _extract_right(m: np.ndarray, n: int, k: int) -> np.ndarray:
    """m ≈ 1_n ⊗ N 时的 N"""
    return np.einsum("lalb->ab", m.reshape(n, k, n, k)) / n


def _split_chain(groups: List[List[np.ndarray]], d: int, rng: np.random.Generator,
                 check_tol: float) -> MultiSplit:
    if len(groups) == 1:
        return MultiSplit(np.eye(d, dtype=complex), [(d,)])
    first = wedderburn(algebra_closure(groups[0], d), seed=rng, tol=check_tol)
    s_total = np.zeros((d, d), dtype=complex)
    blocks: List[Tuple[int, ...]] = []
    pos = 0
    for i, (n, m) in enumerate(first.blocks):
        r = first.block_range(i)
        rows_i = first.s[r, :]
        sub_groups = [[_extract_right(rows_i @ g @ rows_i.conj().T, n, m) for g in group]
                      for group in groups[1:]]
        inner = _split_chain(sub_groups, m, rng, check_tol)
        # 行 (l, s, ·) → (s, l, ·)
        lifted = np.kron(np.eye(n), inner.s) @ rows_i
        for s_idx, dims in enumerate(inner.blocks):
            size = int(np.prod(dims))
            start = inner.offsets[s_idx]
            for l in range(n):
                s_total[pos + l * size: pos + (l + 1) * size, :] = lifted[l * m + start: l * m + start + size, :]
            blocks.append((n,) + tuple(dims))
            pos += n * size
    return MultiSplit(s_total, blocks)


def split_factors(groups: Sequence[Sequence[np.ndarray]], d: int, seed=None,
                  tol: Optional[float] = None) -> MultiSplit:
    """
    多组互相对易的算子在同一空间 H 上的公共块分解

    前 k−1 组各自生成一个因子，最后一组取剩余的交换子；
    返回的 s 使第 t 组在每个块上形如 1⊗…⊗M_t⊗…⊗1

    Args:
        groups: k 组 d×d 算子
        d: H 的维度
        seed: 随机种子或 Generator
        tol: 结构校验容差，缺省取 numerics.verify_tol

    Returns:
        MultiSplit: 块按 (各因子维度, 投影指纹) 排序

    Raises:
        CommutantViolation: 某组算子不满足所得块结构
    """
    check_tol = get_numerics().verify_tol if tol is None else tol
    rng = _rng(seed)
    groups = [[as_matrix(g) for g in group] for group in groups]
    chain = _split_chain(list(groups), d, rng, check_tol)

    pieces = []
    for i, dims in enumerate(chain.blocks):
        rows = chain.s[chain.block_range(i), :]
        pieces.append((tuple(dims), _fingerprint(rows.conj().T), rows))
    pieces.sort(key=lambda p: (p[0], p[1]))
    split = MultiSplit(np.vstack([p[2] for p in pieces]), [p[0] for p in pieces])

    for t, group in enumerate(groups):
        for g in group:
            residual = _multi_residual(split, g, t)
            if residual > check_tol:
                _get_logger().error(f"第 {t} 组算子不满足块结构, residual={residual:.3e}")
                raise CommutantViolation(f"第 {t} 组算子不在对应因子上作用", residual=residual)
    _get_logger().info(f"块劈分完成: d={d}, blocks={split.blocks}")
    return split


def _multi_residual(split: MultiSplit, g: np.ndarray, t: int) -> float:
    m = split.s @ g @ split.s.conj().T
    norm = np.linalg.norm(m)
    if norm == 0:
        return 0.0
    off = m.copy()
    err = 0.0
    for i, dims in enumerate(split.blocks):
        r = split.block_range(i)
        blk = m[r, r]
        off[r, r] = 0
        err += (_factor_residual(blk, dims, t) * np.linalg.norm(blk)) ** 2
    err += np.linalg.norm(off) ** 2
    return float(np.sqrt(err) / norm)


def _dual_factors(rho: CJOperator, label: str) -> List[np.ndarray]:
    """CJ 算子在 label* 一侧的算子 Schmidt 因子"""
    joint = rho.joint_spec
    target = dual_label(label)
    others = [x for x in joint.labels if x != target]
    m = permute_systems(rho.matrix, joint, others + [target])
    schmidt = operator_schmidt(m, joint.dim_of(others), joint.dim(target), get_numerics().rank_tol)
    return schmidt.rights()


def _check_commuting(ops: Sequence[CJOperator], tol: float):
    outs, ins = [], []
    for rho in ops:
        for item in rho.out_spec.systems:
            if item not in outs:
                outs.append(item)
        for item in rho.in_spec.systems:
            if item not in ins:
                ins.append(item)
    out_spec, in_spec = SystemSpec(tuple(outs)), SystemSpec(tuple(ins))
    padded = [pad_cj(rho, out_spec, in_spec) for rho in ops]
    for a in range(len(padded)):
        for b in range(a + 1, len(padded)):
            comm = padded[a] @ padded[b] - padded[b] @ padded[a]
            bound = np.linalg.norm(padded[a]) * np.linalg.norm(padded[b])
            residual = float(np.linalg.norm(comm) / bound) if bound > 0 else 0.0
            if residual > tol:
                raise CommutatorTooLarge(f"CJ 算子 {a}, {b} 不对易", residual=residual)


def _factor_channel(rho: CJOperator, label: str, q_rows: np.ndarray, dims: Sequence[int],
                    keep: int, new_label: str) -> CJOperator:
    """
    把 rho 在 label* 上换到劈分基并限制到一个块，只保留第 keep 个因子

    q_rows 为块对应的 s 行（H → 块空间）；CJ 侧的基变换为 (1 ⊗ q_rows)
    """
    joint = rho.joint_spec
    target = dual_label(label)
    others = [x for x in joint.labels if x != target]
    m = permute_systems(rho.matrix, joint, others + [target])
    d_o = joint.dim_of(others)
    conj = np.kron(np.eye(d_o), q_rows)
    restricted = conj @ m @ conj.conj().T
    tensor = restricted.reshape((d_o,) + tuple(dims) + (d_o,) + tuple(dims))
    k = len(dims)
    for t in reversed(range(k)):
        if t == keep:
            continue
        tensor = np.trace(tensor, axis1=1 + t, axis2=1 + t + tensor.ndim // 2) / dims[t]
    d_keep = dims[keep]
    matrix = tensor.reshape(d_o * d_keep, d_o * d_keep)
    in_labels = [x for x in rho.in_spec.labels if x != label]
    new_in = SystemSpec(tuple((x, rho.in_spec.dim(x)) for x in in_labels) + ((new_label, d_keep),))
    # others 的顺序：输出，然后其余对偶输入
    return CJOperator(matrix, rho.out_spec, new_in)


def split_pair(rho1: CJOperator, rho2: CJOperator, label: str, seed=None,
               tol: Optional[float] = None) -> PairSplitResult:
    """
    两个对易 CJ 算子在共享输入 D 上的块劈分

    s 由 rho1 在 D* 上的因子生成的代数确定，rho2 的因子须落在交换子中；
    CJ 对偶基下的 Wedderburn 幺正为 Q，则 D 上的劈分为 S = conj(Q)

    Args:
        rho1: (A | C, D) 上的 CJ 算子
        rho2: (B | D, E) 上的 CJ 算子
        label: 共享输入 D 的标签
        seed: 随机种子
        tol: 对易与结构校验容差

    Returns:
        PairSplitResult: S 与各块信道 ρ_{A|C X_i^L}、ρ_{B|X_i^R E}
    """
    tol = resolve_tol(tol)
    _check_commuting([rho1, rho2], tol)
    d = rho1.in_spec.dim(label)
    if rho2.in_spec.dim(label) != d:
        raise DimensionMismatch(f"两个算子上 {label} 的维度不同")
    q = split_factors([_dual_factors(rho1, label), _dual_factors(rho2, label)], d, seed=seed)
    pair = q.as_pair()
    left, right = [], []
    for i, (dl, dr) in enumerate(pair.blocks):
        rows = q.s[q.block_range(i), :]
        left.append(_factor_channel(rho1, label, rows, (dl, dr), 0, f"{label}L{i}"))
        right.append(_factor_channel(rho2, label, rows, (dl, dr), 1, f"{label}R{i}"))
    return PairSplitResult(BlockSplit(pair.s.conj(), pair.blocks), left, right)


def split_multi(ops: Sequence[CJOperator], label: str, seed=None,
                tol: Optional[float] = None) -> MultiSplitResult:
    """
    k 个两两对易的 CJ 算子共享输入 H 时的多因子劈分

    每个算子得到一个因子；剩余重数空间非平凡时追加为最后一个因子

    Returns:
        MultiSplitResult: S（对 H）与各块各算子的信道
    """
    tol = resolve_tol(tol)
    _check_commuting(ops, tol)
    d = ops[0].in_spec.dim(label)
    groups = [_dual_factors(rho, label) for rho in ops] + [[]]
    q = split_factors(groups, d, seed=seed)
    blocks = q.blocks
    if all(b[-1] == 1 for b in blocks):
        blocks = [b[:-1] for b in blocks]
    channels = []
    for i, dims in enumerate(blocks):
        rows = q.s[q.block_range(i), :]
        channels.append([_factor_channel(rho, label, rows, dims, t, f"{label}.{t}#{i}")
                         for t, rho in enumerate(ops)])
    return MultiSplitResult(MultiSplit(q.s.conj(), blocks), channels)


def split_nested(rho1: CJOperator, rho2: CJOperator, rho3: CJOperator, label1: str, label2: str,
                 seed=None, tol: Optional[float] = None) -> NestedSplitResult:
    """
    嵌套劈分：先把 A_1 在 rho1 与 rho2·rho3 之间劈开，
    再对每个外层块在 X_i^R ⊗ A_2 上把 rho2 的限制与 rho3 劈开

    Args:
        rho1: 读 A_1 的算子
        rho2: 读 A_1、A_2 的算子
        rho3: 读 A_2 的算子
        label1: A_1 标签
        label2: A_2 标签

    Returns:
        NestedSplitResult: 外层/内层劈分及每个外层块的 [ρ1_i, ρ2_ij..., ρ3_ij...] 叶信道
    """
    tol = resolve_tol(tol)
    rng = _rng(seed)
    _check_commuting([rho1, rho2, rho3], tol)
    d1 = rho1.in_spec.dim(label1)
    joint23 = _product_cj(rho2, rho3)
    outer_q = split_factors([_dual_factors(rho1, label1), _dual_factors(joint23, label1)], d1, seed=rng).as_pair()
    inner_splits, leaves = [], []
    for i, (dl, dr) in enumerate(outer_q.blocks):
        rows = outer_q.s[outer_q.block_range(i), :]
        rho1_i = _factor_channel(rho1, label1, rows, (dl, dr), 0, f"{label1}L{i}")
        xr = f"{label1}R{i}"
        rho2_i = _factor_channel(rho2, label1, rows, (dl, dr), 1, xr)
        composite = f"{xr}.{label2}"
        rho2_c = _merge_inputs(rho2_i, [xr, label2], composite)
        rho3_c = _pad_input(rho3, label2, composite, dr, front=True)
        inner = split_pair(rho2_c, rho3_c, composite, seed=rng, tol=tol)
        inner_splits.append(inner.split)
        leaves.append([rho1_i] + inner.left_channels + inner.right_channels)
    return NestedSplitResult(NestedSplit(BlockSplit(outer_q.s.conj(), outer_q.blocks), inner_splits), leaves)


def _product_cj(rho_a: CJOperator, rho_b: CJOperator) -> CJOperator:
    """两个对易边缘算子的（补齐后）乘积，即联合信道"""
    outs = list(rho_a.out_spec.systems) + [s for s in rho_b.out_spec.systems if s not in rho_a.out_spec.systems]
    ins = list(rho_a.in_spec.systems) + [s for s in rho_b.in_spec.systems if s not in rho_a.in_spec.systems]
    out_spec, in_spec = SystemSpec(tuple(outs)), SystemSpec(tuple(ins))
    matrix = pad_cj(rho_a, out_spec, in_spec) @ pad_cj(rho_b, out_spec, in_spec)
    return CJOperator(matrix, out_spec, in_spec)


def _merge_inputs(rho: CJOperator, labels: List[str], merged: str) -> CJOperator:
    """把若干输入合并为一个复合输入（放在最后）"""
    joint = rho.joint_spec
    duals = [dual_label(x) for x in labels]
    others = [x for x in joint.labels if x not in duals]
    m = permute_systems(rho.matrix, joint, others + duals)
    rest_in = [x for x in rho.in_spec.labels if x not in labels]
    in_spec = SystemSpec(tuple((x, rho.in_spec.dim(x)) for x in rest_in) + ((merged, rho.in_spec.dim_of(labels)),))
    return CJOperator(m, rho.out_spec, in_spec)


def _pad_input(rho: CJOperator, label: str, merged: str, extra_dim: int, front: bool) -> CJOperator:
    """给 label 补上一个平凡作用的维度为 extra_dim 的因子，得到复合输入 merged"""
    joint = rho.joint_spec
    target = dual_label(label)
    others = [x for x in joint.labels if x != target]
    m = permute_systems(rho.matrix, joint, others + [target])
    d_o = joint.dim_of(others)
    d_l = joint.dim(target)
    ident = np.eye(extra_dim)
    if front:
        padded = np.einsum("aibj,xy->axibyj", m.reshape(d_o, d_l, d_o, d_l), ident)
    else:
        padded = np.einsum("aibj,xy->aixbjy", m.reshape(d_o, d_l, d_o, d_l), ident)
    size = d_o * d_l * extra_dim
    rest_in = [x for x in rho.in_spec.labels if x != label]
    in_spec = SystemSpec(tuple((x, rho.in_spec.dim(x)) for x in rest_in) + ((merged, d_l * extra_dim),))
    return CJOperator(padded.reshape(size, size), rho.out_spec, in_spec)
