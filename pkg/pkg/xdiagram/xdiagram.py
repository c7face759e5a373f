"""
扩展线路图模块
带指标的连线、嵌套指标、幺正族节点与分层切片；校验、求值、路径分析、取共轭转置以及图的拼接

切片空间：对活跃指标按声明顺序做字典序枚举（嵌套指标的取值排在父指标取值之内），
每个取值下按切片中连线的顺序做张量积，再整体取直和

节点约定：指标分为贯穿（入线与出线都带）、引入（只在出线上）、消去（只在入线上）三类；
matrices 以节点全部指标的取值为键，给出该取值下 ⊗入线 → ⊗出线 的矩阵块；
固定贯穿取值时，按引入取值排行、消去取值排列拼成的块矩阵必须幺正
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from pkg.conf.conf import get_numerics
from pkg.errors.errors import InvalidDiagram, UnknownLabel
from pkg.log.log import lazy_logger
from pkg.tensor.tensor import IOSpec, as_matrix, is_unitary, permute_cols, permute_rows

_get_logger = lazy_logger("xdiagram")

Assignment = Dict[str, int]


@dataclass(frozen=True)
class IndexVar:
    """指标变量；嵌套指标的 sizes 以祖先取值（逗号连接，根在前）为键"""
    name: str
    sizes: Union[int, Dict[str, int]]
    parent: Optional[str] = None


@dataclass
class XWire:
    """连线；dims 以本线指标取值（逗号连接）为键，无指标时键为空串"""
    id: str
    indices: Tuple[str, ...] = ()
    dims: Dict[str, int] = field(default_factory=dict)

    def key(self, assignment: Assignment) -> str:
        return assignment_key(self.indices, assignment)

    def dim_at(self, assignment: Assignment) -> int:
        return self.dims[self.key(assignment)]


@dataclass
class XNode:
    name: str
    indices: Tuple[str, ...]
    in_wires: List[str]
    out_wires: List[str]
    matrices: Dict[str, np.ndarray] = field(default_factory=dict)

    def key(self, assignment: Assignment) -> str:
        return assignment_key(self.indices, assignment)

    def matrix_at(self, assignment: Assignment) -> np.ndarray:
        return self.matrices[self.key(assignment)]


@dataclass
class XDiagram:
    index_vars: List[IndexVar] = field(default_factory=list)
    wires: Dict[str, XWire] = field(default_factory=dict)
    nodes: Dict[str, XNode] = field(default_factory=dict)
    layers: List[List[str]] = field(default_factory=list)
    boundary_in: List[str] = field(default_factory=list)
    boundary_out: List[str] = field(default_factory=list)

    def index_var(self, name: str) -> IndexVar:
        for var in self.index_vars:
            if var.name == name:
                return var
        raise UnknownLabel(f"未声明的指标: {name}")

    def declared(self) -> List[str]:
        return [var.name for var in self.index_vars]

    def ancestors(self, name: str) -> List[str]:
        """根在前的祖先链（不含自身）"""
        chain = []
        parent = self.index_var(name).parent
        while parent is not None:
            if parent in chain:
                break
            chain.append(parent)
            parent = self.index_var(parent).parent
        return list(reversed(chain))

    def index_size(self, name: str, assignment: Assignment) -> int:
        var = self.index_var(name)
        if isinstance(var.sizes, dict):
            return int(var.sizes[assignment_key(self.ancestors(name), assignment)])
        return int(var.sizes)

    def assignments(self, names: Iterable[str]) -> List[Assignment]:
        """按声明顺序对给定指标做字典序枚举"""
        wanted = set(names)
        ordered = [n for n in self.declared() if n in wanted]
        result: List[Assignment] = []

        def walk(pos: int, current: Assignment):
            if pos == len(ordered):
                result.append(dict(current))
                return
            name = ordered[pos]
            for value in range(self.index_size(name, current)):
                current[name] = value
                walk(pos + 1, current)
            current.pop(name, None)

        walk(0, {})
        return result

    def producer(self, wire_id: str) -> Optional[str]:
        for node in self.nodes.values():
            if wire_id in node.out_wires:
                return node.name
        return None

    def consumer(self, wire_id: str) -> Optional[str]:
        for node in self.nodes.values():
            if wire_id in node.in_wires:
                return node.name
        return None

    def dim_of_boundary(self, wire_id: str) -> int:
        return self.wires[wire_id].dims.get("", 1)

    @property
    def dim_in(self) -> int:
        return int(math.prod(self.dim_of_boundary(w) for w in self.boundary_in))

    @property
    def dim_out(self) -> int:
        return int(math.prod(self.dim_of_boundary(w) for w in self.boundary_out))


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def to_json(self) -> Dict:
        return {"code": self.code, "message": self.message}


@dataclass
class LayerStep:
    """一层节点及其前后切片的连线顺序"""
    nodes: List[str]
    before: List[str]
    after: List[str]


def assignment_key(names: Sequence[str], assignment: Assignment) -> str:
    return ",".join(str(assignment[n]) for n in names)


def index_roles(d: XDiagram, node: XNode) -> Tuple[List[str], List[str], List[str]]:
    """(贯穿, 引入, 消去)，各自按声明顺序"""
    ins = {i for w in node.in_wires for i in d.wires[w].indices}
    outs = {i for w in node.out_wires for i in d.wires[w].indices}
    order = d.declared()
    through = [i for i in order if i in ins and i in outs]
    sourced = [i for i in order if i in outs and i not in ins]
    sunk = [i for i in order if i in ins and i not in outs]
    return through, sourced, sunk


def _live(d: XDiagram, wires: Sequence[str]) -> Set[str]:
    return {i for w in wires for i in d.wires[w].indices}


def schedule(d: XDiagram, diagnostics: Optional[List[Diagnostic]] = None) -> List[LayerStep]:
    """
    逐层推进切片：节点的出线放在其第一条入线的位置，其余入线移除；没有入线的节点追加在末尾

    Args:
        d: 线路图
        diagnostics: 不为 None 时记录顺序错误，否则直接抛出 InvalidDiagram

    Returns:
        List[LayerStep]: 每层的前后切片
    """
    current = list(d.boundary_in)
    steps = []
    for layer in d.layers:
        before = list(current)
        for name in layer:
            node = d.nodes[name]
            missing = [w for w in node.in_wires if w not in current]
            if missing:
                diag = Diagnostic("NodeOrderViolation", f"节点 {name} 的入线 {missing} 在该层之前不可用")
                if diagnostics is None:
                    raise InvalidDiagram(diag.message, [diag])
                diagnostics.append(diag)
                continue
            if node.in_wires:
                pos = min(current.index(w) for w in node.in_wires)
                current = [w for w in current if w not in node.in_wires]
                current[pos:pos] = list(node.out_wires)
            else:
                current.extend(node.out_wires)
        steps.append(LayerStep(list(layer), before, list(current)))
    return steps


def final_slice(d: XDiagram, steps: List[LayerStep]) -> List[str]:
    return steps[-1].after if steps else list(d.boundary_in)


def validate(d: XDiagram, tol: Optional[float] = None) -> List[Diagnostic]:
    """
    校验线路图，返回诊断列表；空列表表示合法

    结构性错误（未知引用、生产/消费次数、指标来源）存在时不再检查维度与幺正性

    Args:
        d: 线路图
        tol: 节点幺正性容差，缺省取 numerics.verify_tol

    Returns:
        List[Diagnostic]: 诊断
    """
    tol = get_numerics().verify_tol if tol is None else tol
    diags: List[Diagnostic] = []
    add = lambda code, msg: diags.append(Diagnostic(code, msg))

    declared = d.declared()
    if len(set(declared)) != len(declared):
        add("NestingInvalid", f"指标重复声明: {declared}")
    for pos, var in enumerate(d.index_vars):
        if var.parent is not None and var.parent not in declared[:pos]:
            add("NestingInvalid", f"指标 {var.name} 的父指标 {var.parent} 未在其之前声明")
        if var.parent is None and not isinstance(var.sizes, int):
            add("NestingInvalid", f"根指标 {var.name} 的 sizes 必须为整数")
        if var.parent is not None and not isinstance(var.sizes, dict):
            add("NestingInvalid", f"嵌套指标 {var.name} 的 sizes 必须为表")
    if diags:
        return diags
    for var in d.index_vars:
        if isinstance(var.sizes, int):
            if var.sizes < 1:
                add("DimMismatch", f"指标 {var.name} 取值数必须 ≥ 1")
            continue
        chain = d.ancestors(var.name)
        for a in d.assignments(chain):
            key = assignment_key(chain, a)
            if key not in var.sizes:
                add("MissingDimEntry", f"指标 {var.name} 缺少父取值 {key} 的 sizes")
            elif int(var.sizes[key]) < 1:
                add("DimMismatch", f"指标 {var.name} 在父取值 {key} 下取值数必须 ≥ 1")
    if diags:
        return diags

    for wire in d.wires.values():
        for i in wire.indices:
            if i not in declared:
                add("NestingInvalid", f"连线 {wire.id} 使用了未声明的指标 {i}")
            elif any(p not in wire.indices for p in d.ancestors(i)):
                add("NestingInvalid", f"连线 {wire.id} 带有 {i} 但缺少其父指标")
    for node in d.nodes.values():
        for w in node.in_wires + node.out_wires:
            if w not in d.wires:
                add("UnknownWire", f"节点 {node.name} 引用了未知连线 {w}")
        for i in node.indices:
            if i not in declared:
                add("NestingInvalid", f"节点 {node.name} 使用了未声明的指标 {i}")
    for w in d.boundary_in + d.boundary_out:
        if w not in d.wires:
            add("UnknownWire", f"边界引用了未知连线 {w}")
    placed: Dict[str, int] = {}
    for layer in d.layers:
        for name in layer:
            if name not in d.nodes:
                add("UnknownNode", f"层中引用了未知节点 {name}")
            placed[name] = placed.get(name, 0) + 1
    for name in d.nodes:
        if placed.get(name, 0) != 1:
            add("NodeOrderViolation", f"节点 {name} 出现在 {placed.get(name, 0)} 个层中")
    if diags:
        return diags

    for node in d.nodes.values():
        carried = {i for w in node.in_wires + node.out_wires for i in d.wires[w].indices}
        if set(node.indices) != carried:
            add("NestingInvalid", f"节点 {node.name} 的指标 {list(node.indices)} 与连线指标 {sorted(carried)} 不一致")

    produced: Dict[str, int] = {w: 1 for w in d.boundary_in}
    consumed: Dict[str, int] = {w: 1 for w in d.boundary_out}
    for node in d.nodes.values():
        for w in node.out_wires:
            produced[w] = produced.get(w, 0) + 1
        for w in node.in_wires:
            consumed[w] = consumed.get(w, 0) + 1
    for w in d.wires:
        if produced.get(w, 0) > 1:
            add("WireMultiplyProduced", f"连线 {w} 被产生 {produced[w]} 次")
        if consumed.get(w, 0) > 1:
            add("WireMultiplyConsumed", f"连线 {w} 被消费 {consumed[w]} 次")
        if produced.get(w, 0) == 0 and consumed.get(w, 0) > 0:
            add("WireNotProduced", f"连线 {w} 从未被产生")
        if produced.get(w, 0) > 0 and consumed.get(w, 0) == 0:
            add("WireNotConsumed", f"连线 {w} 从未被消费")
    for w in d.boundary_in + d.boundary_out:
        if d.wires[w].indices:
            add("BoundaryIndexed", f"边界连线 {w} 带有指标 {list(d.wires[w].indices)}")

    sources: Dict[str, List[str]] = {}
    sinks: Dict[str, List[str]] = {}
    for node in d.nodes.values():
        _, sourced, sunk = index_roles(d, node)
        for i in sourced:
            sources.setdefault(i, []).append(node.name)
        for i in sunk:
            sinks.setdefault(i, []).append(node.name)
    used = {i for wire in d.wires.values() for i in wire.indices}
    for i in sorted(used):
        if len(sources.get(i, [])) > 1:
            add("IndexMultiplySourced", f"指标 {i} 被 {sources[i]} 多次引入")
        if not sources.get(i):
            add("IndexUnsourced", f"指标 {i} 没有引入节点")
        if len(sinks.get(i, [])) > 1:
            add("IndexMultiplySunk", f"指标 {i} 被 {sinks[i]} 多次消去")
        if not sinks.get(i):
            add("IndexUnsunk", f"指标 {i} 没有消去节点")
    if diags:
        return diags

    steps = schedule(d, diags)
    if diags:
        return diags
    if sorted(final_slice(d, steps)) != sorted(d.boundary_out):
        add("WireNotConsumed", f"最终切片 {final_slice(d, steps)} 与输出边界 {d.boundary_out} 不一致")
        return diags
    for step in steps:
        live_before = _live(d, step.before)
        for name in step.nodes:
            node = d.nodes[name]
            _, sourced, sunk = index_roles(d, node)
            for i in sourced:
                if i in live_before:
                    add("NestingInvalid", f"节点 {name} 引入的指标 {i} 此前已活跃")
            for i in sunk:
                if i in _live(d, step.after):
                    add("IndexUnsunk", f"节点 {name} 消去 {i} 后仍有连线携带该指标")
    if diags:
        return diags

    for wire in d.wires.values():
        for a in d.assignments(wire.indices):
            key = wire.key(a)
            if key not in wire.dims:
                add("MissingDimEntry", f"连线 {wire.id} 缺少取值 {key} 的维度")
            elif int(wire.dims[key]) < 1:
                add("DimMismatch", f"连线 {wire.id} 在取值 {key} 下维度必须 ≥ 1")
    if diags:
        return diags

    for node in d.nodes.values():
        _check_node(d, node, tol, diags)
    if diags:
        return diags

    sizes = [_slice_dim(d, step.before) for step in steps] + [_slice_dim(d, final_slice(d, steps))]
    if len(set(sizes)) > 1:
        add("DimMismatch", f"各切片总维度不一致: {sizes}")
    return diags


def _check_node(d: XDiagram, node: XNode, tol: float, diags: List[Diagnostic]):
    through, sourced, sunk = index_roles(d, node)
    for beta in d.assignments(through):
        rows: Dict[str, int] = {}
        cols: Dict[str, int] = {}
        blocks = {}
        for gamma in d.assignments(set(through) | set(sourced) | set(sunk)):
            if any(gamma[i] != beta[i] for i in through):
                continue
            key = node.key(gamma)
            if key not in node.matrices:
                diags.append(Diagnostic("MissingMatrix", f"节点 {node.name} 缺少取值 {key} 的矩阵"))
                return
            r = int(math.prod(d.wires[w].dim_at(gamma) for w in node.out_wires))
            c = int(math.prod(d.wires[w].dim_at(gamma) for w in node.in_wires))
            m = node.matrices[key]
            if np.shape(m) != (r, c):
                diags.append(Diagnostic("DimMismatch",
                                        f"节点 {node.name} 取值 {key} 的矩阵形状 {np.shape(m)} 应为 {(r, c)}"))
                return
            rk, ck = assignment_key(sourced, gamma), assignment_key(sunk, gamma)
            rows[rk], cols[ck] = r, c
            blocks[(rk, ck)] = m
        total_r, total_c = sum(rows.values()), sum(cols.values())
        if total_r != total_c:
            diags.append(Diagnostic("DimMismatch",
                                    f"节点 {node.name} 在贯穿取值 {beta} 下块矩阵为 {total_r}×{total_c}"))
            return
        full = np.zeros((total_r, total_c), dtype=complex)
        r_off = dict(zip(rows, itertools.accumulate([0] + list(rows.values())[:-1])))
        c_off = dict(zip(cols, itertools.accumulate([0] + list(cols.values())[:-1])))
        for (rk, ck), m in blocks.items():
            full[r_off[rk]:r_off[rk] + rows[rk], c_off[ck]:c_off[ck] + cols[ck]] = m
        ok, residual = is_unitary(full, tol)
        if not ok:
            diags.append(Diagnostic("NotUnitary",
                                    f"节点 {node.name} 在贯穿取值 {beta} 下不幺正 (residual={residual:.3e})"))
            return


def slice_blocks(d: XDiagram, wires: Sequence[str]) -> Tuple[List[str], Dict[str, Tuple[int, List[int]]], int]:
    """切片的直和块：(活跃指标, 键 → (偏移, 各连线维度), 总维度)"""
    live = [i for i in d.declared() if i in _live(d, wires)]
    table, offset = {}, 0
    for a in d.assignments(live):
        dims = [d.wires[w].dim_at(a) for w in wires]
        table[assignment_key(live, a)] = (offset, dims)
        offset += int(math.prod(dims))
    return live, table, offset


def _slice_dim(d: XDiagram, wires: Sequence[str]) -> int:
    return slice_blocks(d, wires)[2]


def layer_matrix(d: XDiagram, step: LayerStep) -> np.ndarray:
    live_in, table_in, dim_in = slice_blocks(d, step.before)
    live_out, table_out, dim_out = slice_blocks(d, step.after)
    nodes = [d.nodes[n] for n in step.nodes]
    consumed = {w for node in nodes for w in node.in_wires}
    passing = [w for w in step.before if w not in consumed]
    in_order = [w for node in nodes for w in node.in_wires] + passing
    out_order = [w for node in nodes for w in node.out_wires] + passing
    col_perm = [in_order.index(w) for w in step.before]
    row_perm = [out_order.index(w) for w in step.after]
    result = np.zeros((dim_out, dim_in), dtype=complex)
    for gamma in d.assignments(set(live_in) | set(live_out)):
        off_in, dims_in = table_in[assignment_key(live_in, gamma)]
        off_out, dims_out = table_out[assignment_key(live_out, gamma)]
        pass_dim = int(math.prod(d.wires[w].dim_at(gamma) for w in passing))
        op = np.ones((1, 1), dtype=complex)
        for node in nodes:
            op = np.kron(op, node.matrix_at(gamma))
        op = np.kron(op, np.eye(pass_dim))
        row_dims = [d.wires[w].dim_at(gamma) for w in out_order]
        col_dims = [d.wires[w].dim_at(gamma) for w in in_order]
        tensor = op.reshape(row_dims + col_dims)
        tensor = tensor.transpose(row_perm + [len(row_dims) + p for p in col_perm])
        rows, cols = int(math.prod(dims_out)), int(math.prod(dims_in))
        result[off_out:off_out + rows, off_in:off_in + cols] += tensor.reshape(rows, cols)
    return result


def _final_permutation(d: XDiagram, final: List[str]) -> np.ndarray:
    dims = [d.dim_of_boundary(w) for w in final]
    size = int(math.prod(dims))
    perm = [final.index(w) for w in d.boundary_out]
    return np.eye(size, dtype=complex).reshape(dims + [size]).transpose(perm + [len(dims)]).reshape(size, size)


def _require_valid(d: XDiagram):
    diags = validate(d)
    if diags:
        _get_logger().error(f"线路图校验失败: {[x.code for x in diags]}")
        raise InvalidDiagram(f"线路图不合法: {diags[0].code}: {diags[0].message}", diags)


def layer_matrices(d: XDiagram, check: bool = True) -> List[np.ndarray]:
    """
    每层的矩阵（输出边界的最终置换并入最后一层）

    Returns:
        List[np.ndarray]: 按时间顺序
    """
    if check:
        _require_valid(d)
    steps = schedule(d)
    mats = [layer_matrix(d, step) for step in steps]
    perm = _final_permutation(d, final_slice(d, steps))
    if mats:
        mats[-1] = perm @ mats[-1]
    else:
        mats = [perm]
    return mats


def evaluate(d: XDiagram, check: bool = True) -> np.ndarray:
    """
    线路图求值：各层矩阵依次相乘，得到 boundary_in → boundary_out 的幺正

    Args:
        d: 线路图
        check: 是否先校验

    Returns:
        np.ndarray: 形状 (dim_out, dim_in)

    Raises:
        InvalidDiagram: 校验失败
    """
    result = None
    for m in layer_matrices(d, check):
        result = m if result is None else m @ result
    return result


def evaluate_as(d: XDiagram, specs: IOSpec, check: bool = True) -> np.ndarray:
    """按 specs 的子系统顺序重排求值结果的行与列"""
    if sorted(d.boundary_in) != sorted(specs.inputs.labels) or sorted(d.boundary_out) != sorted(specs.outputs.labels):
        raise UnknownLabel(f"边界 {d.boundary_in}→{d.boundary_out} 与系统描述不符")
    m = evaluate(d, check)
    m = permute_cols(m, specs.inputs.sub(d.boundary_in), specs.inputs.labels)
    return permute_rows(m, specs.outputs.sub(d.boundary_out), specs.outputs.labels)


def paths(d: XDiagram) -> Dict[Tuple[str, str], bool]:
    """
    边界输入到边界输出的可达性；节点的每条入线都连到它的每条出线

    Returns:
        Dict[Tuple[str, str], bool]: (输入连线, 输出连线) → 是否有路径
    """
    succ: Dict[str, Set[str]] = {w: set() for w in d.wires}
    for node in d.nodes.values():
        for w in node.in_wires:
            succ[w].update(node.out_wires)
    result = {}
    for a in d.boundary_in:
        seen, frontier = {a}, [a]
        while frontier:
            w = frontier.pop()
            for nxt in succ.get(w, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        for b in d.boundary_out:
            result[(a, b)] = b in seen
    return result


def is_causally_faithful(d: XDiagram, u, specs: IOSpec, tol: Optional[float] = None) -> Tuple[bool, List[Dict]]:
    """
    路径关系是否与 u 的影响关系完全一致

    Returns:
        Tuple[bool, List[Dict]]: (是否忠实, 不一致的 (输入, 输出) 对)
    """
    from pkg.causal.causal import causal_structure_of
    from pkg.tensor.tensor import phase_aligned_distance

    u = as_matrix(u)
    distance = phase_aligned_distance(evaluate_as(d, specs), u)
    if distance > get_numerics().verify_tol * max(1.0, math.sqrt(u.shape[0])):
        raise InvalidDiagram(f"线路图求值与给定幺正不一致 (distance={distance:.3e})")
    cs = causal_structure_of(u, specs, tol)
    reach = paths(d)
    witnesses = []
    for a in specs.inputs.labels:
        for b in specs.outputs.labels:
            if reach[(a, b)] != cs.influences(a, b):
                witnesses.append({"input": a, "output": b, "path": reach[(a, b)], "influence": cs.influences(a, b)})
    return not witnesses, witnesses


def dagger(d: XDiagram) -> XDiagram:
    """层序反转、矩阵取共轭转置、出入线互换"""
    nodes = {
        name: XNode(node.name, node.indices, list(node.out_wires), list(node.in_wires),
                    {k: np.conj(m).T for k, m in node.matrices.items()})
        for name, node in d.nodes.items()
    }
    wires = {w.id: XWire(w.id, w.indices, dict(w.dims)) for w in d.wires.values()}
    return XDiagram(list(d.index_vars), wires, nodes, [list(layer) for layer in reversed(d.layers)],
                    list(d.boundary_out), list(d.boundary_in))


def single_node(u, specs: IOSpec, name: str = "U") -> XDiagram:
    """把整个幺正放进一个节点"""
    builder = DiagramBuilder()
    for label, dim in specs.inputs.systems + specs.outputs.systems:
        if label not in builder.wires:
            builder.add_wire(label, dim)
    builder.add_node(name, specs.inputs.labels, specs.outputs.labels, as_matrix(u), layer=0)
    builder.set_boundary(specs.inputs.labels, specs.outputs.labels)
    return builder.build()


class DiagramBuilder:
    """
    逐步组装 XDiagram；layer 为 None 时按依赖自动分层（入线生产者所在层 + 1）
    """

    def __init__(self):
        self.index_vars: List[IndexVar] = []
        self.wires: Dict[str, XWire] = {}
        self.nodes: Dict[str, XNode] = {}
        self.node_layer: Dict[str, int] = {}
        self.boundary_in: List[str] = []
        self.boundary_out: List[str] = []

    def fresh(self, base: str) -> str:
        """生成未被连线、节点或指标占用的名字"""
        taken = set(self.wires) | set(self.nodes) | {v.name for v in self.index_vars}
        if base not in taken:
            return base
        for i in itertools.count(1):
            name = f"{base}{i}"
            if name not in taken:
                return name

    def add_index(self, name: str, sizes: Union[int, Dict[str, int]], parent: Optional[str] = None) -> str:
        self.index_vars.append(IndexVar(name, sizes, parent))
        return name

    def add_wire(self, wire_id: str, dims: Union[int, Dict[str, int]], indices: Sequence[str] = ()) -> str:
        if isinstance(dims, dict):
            table = {str(k): int(v) for k, v in dims.items()}
        else:
            # 整数维度对所有取值相同
            probe = XDiagram(index_vars=list(self.index_vars))
            table = {assignment_key(indices, a): int(dims) for a in probe.assignments(indices)}
        self.wires[wire_id] = XWire(wire_id, tuple(indices), table)
        return wire_id

    def _declared_order(self, names: Iterable[str]) -> Tuple[str, ...]:
        wanted = set(names)
        return tuple(v.name for v in self.index_vars if v.name in wanted)

    def add_node(self, name: str, in_wires: Sequence[str], out_wires: Sequence[str],
                 matrices: Union[np.ndarray, Dict[str, np.ndarray]], layer: Optional[int] = None,
                 indices: Optional[Sequence[str]] = None) -> str:
        """
        添加节点

        Args:
            name: 节点名
            in_wires: 入线
            out_wires: 出线
            matrices: 单个矩阵（无指标）或 取值键 → 矩阵
            layer: 层号，None 时按依赖自动确定
            indices: 节点指标，缺省为连线指标按声明顺序的并集

        Returns:
            str: 节点名
        """
        if indices is None:
            indices = self._declared_order(i for w in list(in_wires) + list(out_wires) for i in self.wires[w].indices)
        if not isinstance(matrices, dict):
            matrices = {"": as_matrix(matrices)}
        self.nodes[name] = XNode(name, tuple(indices), list(in_wires), list(out_wires),
                                 {k: as_matrix(m) for k, m in matrices.items()})
        if layer is None:
            layer = 0
            for w in in_wires:
                for other, node in self.nodes.items():
                    if other != name and w in node.out_wires:
                        layer = max(layer, self.node_layer[other] + 1)
        self.node_layer[name] = layer
        return name

    def set_boundary(self, boundary_in: Sequence[str], boundary_out: Sequence[str]):
        self.boundary_in = list(boundary_in)
        self.boundary_out = list(boundary_out)

    @property
    def depth(self) -> int:
        return max(self.node_layer.values(), default=-1) + 1

    def embed(self, child: XDiagram, prefix: str, layer_offset: Optional[int] = None,
              rename: Optional[Dict[str, str]] = None) -> Dict[str, str]:
        """
        把子图内联进来：内部连线、节点、指标加前缀，边界连线保持原名（或按 rename 改名）

        Args:
            child: 子图
            prefix: 内部名字前缀
            layer_offset: 子图第 0 层对应的层号；None 时按边界入线的生产者确定
            rename: 子图边界连线 → 本图连线

        Returns:
            Dict[str, str]: 子图连线 → 本图连线
        """
        rename = dict(rename or {})
        boundary = set(child.boundary_in) | set(child.boundary_out)
        wire_map = {w: rename.get(w, w) if w in boundary else f"{prefix}{w}" for w in child.wires}
        index_map = {v.name: f"{prefix}{v.name}" for v in child.index_vars}
        for var in child.index_vars:
            self.add_index(index_map[var.name], var.sizes, index_map.get(var.parent) if var.parent else None)
        for w in child.wires.values():
            target = wire_map[w.id]
            if w.id in boundary and target in self.wires:
                continue
            self.wires[target] = XWire(target, tuple(index_map[i] for i in w.indices), dict(w.dims))
        if layer_offset is None:
            layer_offset = 0
            for w in child.boundary_in:
                producer = next((n for n, node in self.nodes.items() if wire_map[w] in node.out_wires), None)
                if producer is not None:
                    layer_offset = max(layer_offset, self.node_layer[producer] + 1)
        for pos, layer in enumerate(child.layers):
            for name in layer:
                node = child.nodes[name]
                new = f"{prefix}{name}"
                self.nodes[new] = XNode(new, tuple(index_map[i] for i in node.indices),
                                        [wire_map[w] for w in node.in_wires],
                                        [wire_map[w] for w in node.out_wires],
                                        dict(node.matrices))
                self.node_layer[new] = layer_offset + pos
        return wire_map

    def build(self) -> XDiagram:
        depth = self.depth
        layers: List[List[str]] = [[] for _ in range(depth)]
        for name, layer in self.node_layer.items():
            layers[layer].append(name)
        layers = [layer for layer in layers if layer]
        return XDiagram(list(self.index_vars), dict(self.wires), dict(self.nodes), layers,
                        list(self.boundary_in), list(self.boundary_out))
