"""
合成执行器
按配方逐步搭建扩展线路图。DiagramAssembler 负责连线、指标与节点的放置；
SynthesisEngine 从目标幺正读出每个节点：每一步都从当前前沿 Φ（已放置节点的总作用）出发，
在 K = U Φ† 的各直和块上读出所需的代数或信道

劈分用 Heisenberg 图像：输出组可观测量 K†(|x⟩⟨y|⊗1)K 在待劈连线上的算子 Schmidt 因子张成局部代数，
其 Wedderburn 幺正直接作为劈分节点
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from pkg.algebra.algebra import MultiSplit, split_factors
from pkg.channels.channels import cj_marginal_of_isometry, extract_residual_unitary, stinespring
from pkg.conf.conf import get_numerics, resolve_seed, resolve_tol
from pkg.errors.errors import MultipleBlocks, NotFactorizable, UnknownLabel
from pkg.log.log import lazy_logger
from pkg.synth.recipes import LeafStep, Recipe, ResidualStep, SplitStep
from pkg.tensor.tensor import (IOSpec, SystemSpec, as_matrix, fix_gauge, global_phase, is_unitary,
                               permute_cols, permute_rows, reshuffle, schmidt_factors)
from pkg.xdiagram.xdiagram import (Assignment, DiagramBuilder, XDiagram, assignment_key, evaluate_as,
                                   final_slice, layer_matrix, schedule, slice_blocks)

_get_logger = lazy_logger("synth")

ChildSynth = Callable[[np.ndarray, IOSpec], XDiagram]


@dataclass
class Front:
    """当前前沿：切片连线、直和块表；k 为 U Φ†（只在合成时有）"""
    diagram: XDiagram
    wires: List[str]
    live: List[str]
    table: Dict[str, Tuple[int, List[int]]]
    phi: Optional[np.ndarray] = None
    k: Optional[np.ndarray] = None

    def blocks(self):
        """逐块给出 (取值, 块内子系统描述, 块偏移)"""
        for alpha in self.diagram.assignments(self.live):
            offset, dims = self.table[assignment_key(self.live, alpha)]
            yield alpha, SystemSpec(tuple(zip(self.wires, dims))), offset


class DiagramAssembler:
    """
    配方的公共骨架：维护 builder、配方名到实际连线名的映射，以及劈分/叶/残余节点的放置

    子类实现 _split / _leaf / _residual / _finalize
    """

    def __init__(self, inputs: SystemSpec):
        self.builder = DiagramBuilder()
        for label, dim in inputs.systems:
            self.builder.add_wire(label, dim)
        self.inputs = inputs
        self.alias: Dict[str, str] = {}
        self.gauge_report: List[Dict] = []
        self._front_cache: Optional[Front] = None

    def _wire(self, name: str) -> str:
        return self.alias.get(name, name)

    def _new_wire_name(self, name: str) -> str:
        actual = self.builder.fresh(name)
        self.alias[name] = actual
        return actual

    def _ensure_output(self, label: str, dim: int):
        if label not in self.builder.wires:
            self.builder.add_wire(label, int(dim))

    def _slice(self) -> Front:
        d = self.builder.build()
        d.boundary_in = list(self.inputs.labels)
        steps = schedule(d)
        wires = final_slice(d, steps)
        live, table, _ = slice_blocks(d, wires)
        return Front(d, wires, live, table)

    def _front(self) -> Front:
        if self._front_cache is None:
            self._front_cache = self._slice()
        return self._front_cache

    @staticmethod
    def carried(d: XDiagram, wires: Sequence[str]) -> List[str]:
        return [i for i in d.declared() if any(i in d.wires[w].indices for w in wires)]

    def _resolve(self, front: Front, names: Sequence[str]) -> List[str]:
        wires = [self._wire(w) for w in names]
        missing = [w for w in wires if w not in front.wires]
        if missing:
            raise UnknownLabel(f"连线 {missing} 不在当前切片 {front.wires} 中")
        return wires

    def run(self, recipe: Recipe):
        _get_logger().debug(f"开始执行配方 {recipe.tag}, 共 {len(recipe.steps)} 步")
        for step in recipe.steps:
            _get_logger().debug(f"{recipe.tag}: {step}")
            if isinstance(step, SplitStep):
                self._split(step)
                self._front_cache = None
            elif isinstance(step, LeafStep):
                # 叶节点互不依赖，共用劈分之后的前沿
                self._leaf(step)
            elif isinstance(step, ResidualStep):
                self._front_cache = None
                self._residual(step)
            else:
                raise TypeError(f"未知的配方步骤: {step!r}")
        return self._finalize()

    def _split(self, step: SplitStep):
        raise NotImplementedError

    def _leaf(self, step: LeafStep):
        raise NotImplementedError

    def _residual(self, step: ResidualStep):
        raise NotImplementedError

    def _finalize(self):
        raise NotImplementedError

    def place_split(self, step: SplitStep, d: XDiagram, wires: List[str],
                    splits: Dict[str, Tuple[Assignment, MultiSplit]]) -> str:
        """
        放置劈分节点；splits 以携带指标的取值为键

        多块时新建指标（嵌套在携带的最深指标之下），出线按块给出维度表
        """
        carried = self.carried(d, wires)
        index = None
        if step.index is not None:
            index = self.builder.fresh(step.index)
            if carried:
                parent = carried[-1]
                chain = d.ancestors(parent) + [parent]
                if set(chain) != set(carried):
                    raise ValueError(f"连线 {wires} 携带的指标 {carried} 不在同一嵌套链上")
                sizes = {assignment_key(chain, beta): len(split.blocks) for beta, split in splits.values()}
                self.builder.add_index(index, sizes, parent)
            else:
                self.builder.add_index(index, len(next(iter(splits.values()))[1].blocks))
        elif any(len(split.blocks) != 1 for _, split in splits.values()):
            blocks = {key: split.blocks for key, (_, split) in splits.items()}
            _get_logger().error(f"连线 {wires} 的劈分出现多个块: {blocks}")
            raise MultipleBlocks(f"连线 {wires} 的劈分应为单块，实际块结构 {blocks}")
        out_indices = tuple(carried) + ((index,) if index else ())

        count = len(step.groups) + (1 if step.rest else 0)
        out_names = [self._new_wire_name(name) for name in step.out_wires[:count]]
        tables: List[Dict[str, int]] = [{} for _ in out_names]
        matrices: Dict[str, np.ndarray] = {}
        report = {}
        for beta, split in splits.values():
            for b, dims in enumerate(split.blocks):
                gamma = dict(beta)
                if index:
                    gamma[index] = b
                key = assignment_key(out_indices, gamma)
                for t, dim in enumerate(dims):
                    tables[t][key] = int(dim)
                matrices[key] = split.s[split.block_range(b), :]
            report[assignment_key(carried, beta)] = [list(map(int, dims)) for dims in split.blocks]
        for name, table in zip(out_names, tables):
            self.builder.add_wire(name, table, out_indices)
        node = self.builder.add_node(self.builder.fresh("S"), wires, out_names, matrices)
        self.gauge_report.append({"node": node, "wires": list(wires), "index": index, "blocks": report})
        _get_logger().info(f"劈分 {wires} → {out_names}: 块维度 {report}")
        return node

    def place_leaf(self, step: LeafStep, ins: List[str], outs: List[str], carried: List[str],
                   matrices: Dict[str, np.ndarray], env_dims: Optional[Dict[str, int]] = None) -> str:
        node_outs = list(outs)
        if step.env is not None:
            env = self._new_wire_name(step.env)
            self.builder.add_wire(env, env_dims, carried)
            node_outs.append(env)
        return self.builder.add_node(self.builder.fresh(f"L_{'_'.join(outs)}"), ins, node_outs, matrices)

    def residual_layout(self, front: Front, outputs: Sequence[str]) -> Tuple[List[str], Dict[str, Tuple[int, int]], int]:
        """
        残余连线 = 切片中除 outputs 外的全部连线

        Returns:
            (残余连线, 块键 → (残余空间内偏移, 块内残余维度), 残余总维度)
        """
        res_wires = [w for w in front.wires if w not in set(outputs)]
        offsets, total = {}, 0
        for alpha, spec, _ in front.blocks():
            size = spec.dim_of(res_wires)
            offsets[assignment_key(front.live, alpha)] = (total, size)
            total += size
        return res_wires, offsets, total

    def place_residual(self, res_wires: List[str], outs: List[str], t: np.ndarray,
                       offsets: Dict[str, Tuple[int, int]]) -> str:
        matrices = {key: t[:, off:off + size] for key, (off, size) in offsets.items()}
        return self.builder.add_node(self.builder.fresh("T"), res_wires, outs, matrices)


class SynthesisEngine(DiagramAssembler):
    """
    在给定幺正上执行一个配方

    Args:
        u: 目标幺正，行按 specs.outputs、列按 specs.inputs
        specs: 输入输出描述，输入与输出标签互不相同
        child_synth: 递归叶节点的子问题合成函数
        seed: 随机种子或 Generator
        tol: 判定容差
    """

    def __init__(self, u, specs: IOSpec, child_synth: Optional[ChildSynth] = None, seed=None,
                 tol: Optional[float] = None):
        overlap = set(specs.inputs.labels) & set(specs.outputs.labels)
        if overlap:
            raise UnknownLabel(f"输入与输出标签不能重复: {sorted(overlap)}")
        super().__init__(specs.inputs)
        self.u = as_matrix(u)
        self.specs = specs
        self.child_synth = child_synth
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(resolve_seed(seed))
        self.tol = resolve_tol(tol)
        self.numerics = get_numerics()
        for label, dim in specs.outputs.systems:
            self.builder.add_wire(label, dim)
        self.builder.set_boundary(specs.inputs.labels, specs.outputs.labels)

    def _front(self) -> Front:
        if self._front_cache is not None:
            return self._front_cache
        front = self._slice()
        phi = np.eye(self.u.shape[1], dtype=complex)
        for step in schedule(front.diagram):
            phi = layer_matrix(front.diagram, step) @ phi
        front.phi, front.k = phi, self.u @ phi.conj().T
        self._front_cache = front
        return front

    def _k_block(self, front: Front, spec: SystemSpec, offset: int) -> np.ndarray:
        return front.k[:, offset:offset + spec.total_dim]

    # ---- 劈分 ----

    def _group_gram(self, k_alpha: np.ndarray, spec: SystemSpec, group: List[str], wires: List[str]) -> np.ndarray:
        """输出组 Heisenberg 图像在 wires 上的因子空间的 Gram 矩阵"""
        outs = self.specs.outputs
        labels = outs.ordered(group)
        rest = [b for b in outs.labels if b not in labels]
        others = [w for w in spec.labels if w not in wires]
        d_g, d_w = outs.dim_of(labels), spec.dim_of(wires)
        size = k_alpha.shape[1]
        d_o = size // d_w
        rows = permute_cols(permute_rows(k_alpha, outs, labels + rest), spec, wires + others)
        rows = rows.reshape(d_g, -1, size)
        gram = np.zeros((d_w * d_w, d_w * d_w), dtype=complex)
        for x in range(d_g):
            for y in range(d_g):
                image = rows[x].conj().T @ rows[y]
                r = reshuffle(image, (d_w, d_o), (d_w, d_o))
                gram += r @ r.conj().T
        return gram

    def _generators(self, gram: np.ndarray, d_w: int) -> List[np.ndarray]:
        vals, vecs = np.linalg.eigh(gram)
        top = vals[-1] if vals.size else 0.0
        if top <= 0:
            return []
        return [vecs[:, j].reshape(d_w, d_w) for j in range(vals.size) if vals[j] > self.tol * top]

    def _split(self, step: SplitStep):
        front = self._front()
        d = front.diagram
        wires = self._resolve(front, step.wires)
        carried = self.carried(d, wires)

        grams: Dict[str, Tuple[Assignment, int, List[np.ndarray]]] = {}
        for alpha, spec, offset in front.blocks():
            beta = {i: alpha[i] for i in carried}
            d_w = spec.dim_of(wires)
            key = assignment_key(carried, beta)
            if key not in grams:
                grams[key] = (beta, d_w, [np.zeros((d_w * d_w, d_w * d_w), dtype=complex) for _ in step.groups])
            k_alpha = self._k_block(front, spec, offset)
            for t, group in enumerate(step.groups):
                grams[key][2][t] += self._group_gram(k_alpha, spec, group, wires)

        splits = {}
        for key, (beta, d_w, group_grams) in grams.items():
            groups = [self._generators(g, d_w) for g in group_grams]
            if step.rest:
                groups.append([])
            splits[key] = (beta, split_factors(groups, d_w, seed=self.rng))
        self.place_split(step, d, wires, splits)

    # ---- 叶节点 ----

    def _leaf(self, step: LeafStep):
        front = self._front()
        d = front.diagram
        requested = self._resolve(front, step.in_wires)
        ins = [w for w in front.wires if w in requested]
        outs = self.specs.outputs.ordered(step.outputs)
        carried = self.carried(d, ins)
        if step.recurse and carried:
            raise ValueError(f"带指标的叶节点 {outs} 不能递归合成")

        matrices: Dict[str, np.ndarray] = {}
        env_dims: Dict[str, int] = {}
        child_spec = None
        for alpha, spec, offset in front.blocks():
            key = assignment_key(carried, alpha)
            if key in matrices:
                continue
            io = IOSpec(spec, self.specs.outputs)
            k_alpha = self._k_block(front, spec, offset)
            if step.env is not None:
                rho = cj_marginal_of_isometry(k_alpha, io, outs, ins, tol=self.tol)
                dilation = stinespring(rho, require_unitary=True, tol=self.tol, env_label=step.env)
                matrices[key] = dilation.isometry
                env_dims[key] = dilation.env_dim
            else:
                matrices[key] = self._rank_one_factor(k_alpha, io, outs, ins)
                child_spec = IOSpec(spec.sub(ins), self.specs.outputs.sub(outs))

        if step.recurse and self.child_synth is not None and len(outs) + len(ins) > 2:
            child = self.child_synth(matrices[""], child_spec)
            self.builder.embed(child, prefix=f"{self.builder.fresh('V_' + '_'.join(outs))}.")
        else:
            self.place_leaf(step, ins, outs, carried, matrices, env_dims)

    def _rank_one_factor(self, k_alpha: np.ndarray, io: IOSpec, outs: List[str], ins: List[str]) -> np.ndarray:
        """K 的列块形如 V ⊗ R（V: ins → outs）时取出幺正 V"""
        rest_out = [b for b in io.outputs.labels if b not in outs]
        rest_in = [w for w in io.inputs.labels if w not in ins]
        d_g, d_in = io.outputs.dim_of(outs), io.inputs.dim_of(ins)
        if d_g != d_in:
            raise NotFactorizable(f"叶节点 {outs} 的维度 {d_g} 与入线维度 {d_in} 不等")
        m = permute_cols(permute_rows(k_alpha, io.outputs, outs + rest_out), io.inputs, ins + rest_in)
        terms = schmidt_factors(m, (d_g, io.outputs.dim_of(rest_out)), (d_in, io.inputs.dim_of(rest_in)),
                                rank_tol=self.numerics.rank_tol)
        if not terms:
            raise NotFactorizable(f"叶节点 {outs} 的块为零")
        if len(terms) > 1 and terms[1][0] > self.tol * terms[0][0]:
            ratio = terms[1][0] / terms[0][0]
            _get_logger().error(f"叶节点 {outs} 不是乘积形式, 第二奇异值比 {ratio:.3e}")
            raise NotFactorizable(f"输出 {outs} 不只依赖于 {ins}", residual=ratio)
        v = fix_gauge(terms[0][1] * math.sqrt(d_in))
        ok, residual = is_unitary(v, self.numerics.verify_tol)
        if not ok:
            raise NotFactorizable(f"叶节点 {outs} 的因子不幺正", residual=residual)
        return v

    # ---- 残余 ----

    def _residual(self, step: ResidualStep):
        front = self._front()
        outs = self.specs.outputs
        residual_outs = outs.ordered(step.outputs)
        shared = [w for w in outs.labels if w in front.wires]
        if sorted(shared + residual_outs) != sorted(outs.labels):
            raise UnknownLabel(f"残余输出 {residual_outs} 与已产生的输出 {shared} 不构成全部输出")
        res_wires, offsets, d_res = self.residual_layout(front, outs.labels)
        d_shared = outs.dim_of(shared)
        n = self.u.shape[0]

        # 切片 → shared ⊗ (⊕_α ⊗残余连线)
        perm = np.zeros((n, n))
        for alpha, spec, offset in front.blocks():
            res_offset, block_res = offsets[assignment_key(front.live, alpha)]
            axes = [spec.index(w) for w in shared + res_wires]
            local = np.arange(spec.total_dim).reshape(spec.dims).transpose(axes).reshape(d_shared, block_res)
            for s_idx in range(d_shared):
                perm[s_idx * d_res + res_offset + np.arange(block_res), offset + local[s_idx]] = 1
        u_tilde = perm @ front.phi
        u_sorted = permute_rows(self.u, outs, shared + residual_outs)
        t = extract_residual_unitary(u_sorted, u_tilde, outs.sub(shared), d_res, outs.dim_of(residual_outs),
                                     tol=self.tol)
        self.place_residual(res_wires, residual_outs, t, offsets)

    # ---- 收尾 ----

    def _finalize(self) -> XDiagram:
        diagram = self.builder.build()
        m = evaluate_as(diagram, self.specs)
        phase = global_phase(self.u, m)
        if abs(phase - 1) > 1e-15 and diagram.layers:
            node = self.builder.nodes[diagram.layers[0][0]]
            node.matrices = {k: phase * v for k, v in node.matrices.items()}
            diagram = self.builder.build()
        distance = float(np.linalg.norm(self.u - phase * m))
        limit = self.numerics.verify_tol * max(1.0, math.sqrt(self.u.shape[0]))
        if distance > limit:
            _get_logger().error(f"线路图求值与目标不一致, distance={distance:.3e}")
            raise NotFactorizable("合成的线路图求值与目标幺正不一致", residual=distance)
        _get_logger().debug(f"配方执行完毕, 节点数 {len(diagram.nodes)}, distance={distance:.3e}")
        return diagram
