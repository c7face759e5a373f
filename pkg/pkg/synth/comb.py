"""
梳状（comb）重连
把成对的输出/输入 (B, A) 弯折成一个外部节点的端口：节点从 B 接收、向 A 发送。
节点的先后顺序须满足：排在后面（或同一个）节点的出口不影响排在前面节点的入口
"""
import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from pkg.causal.causal import causal_structure_of
from pkg.conf.conf import resolve_tol
from pkg.errors.errors import DimensionMismatch, NoValidOrdering, UnknownLabel
from pkg.log.log import lazy_logger
from pkg.synth.synth import OK, synth
from pkg.tensor.tensor import IOSpec, as_matrix
from pkg.xdiagram.xdiagram import XDiagram, paths, single_node

_get_logger = lazy_logger("synth")


@dataclass
class CombDiagram:
    """
    diagram 为未弯折、可直接求值的线路图；slots 按节点顺序给出 (节点, 入口, 出口)；
    relations 是开放端口之间在图中没有路径的 (输入, 输出) 对
    """
    diagram: XDiagram
    order: List[Tuple[str, str]]
    slots: List[Dict[str, str]]
    open_inputs: List[str]
    open_outputs: List[str]
    relations: List[Tuple[str, str]] = field(default_factory=list)
    faithful: bool = True

    def to_json(self) -> Dict:
        return {
            "order": [list(p) for p in self.order],
            "slots": self.slots,
            "open_inputs": self.open_inputs,
            "open_outputs": self.open_outputs,
            "relations": [list(r) for r in self.relations],
            "faithful": self.faithful,
        }


def _valid(order: Sequence[Tuple[str, str]], cs) -> bool:
    for i, (_, a_i) in enumerate(order):
        for b_j, _ in order[:i + 1]:
            if cs.influences(a_i, b_j):
                return False
    return True


def comb_rewire(u, specs: IOSpec, node_pairs: Sequence[Tuple[str, str]], tol: Optional[float] = None,
                seed: Optional[int] = None) -> CombDiagram:
    """
    为 u 合成线路图并把给定的 (输出, 输入) 对弯折为梳状结构的节点端口

    Args:
        u: 幺正
        specs: 输入输出描述
        node_pairs: [(输出标签, 输入标签), ...]，每对构成一个外部节点
        tol: 容差
        seed: 随机种子

    Returns:
        CombDiagram: 梳状线路图

    Raises:
        NoValidOrdering: 不存在满足无影响条件的节点顺序
    """
    tol = resolve_tol(tol)
    u = as_matrix(u)
    pairs = [(str(b), str(a)) for b, a in node_pairs]
    used_b, used_a = [b for b, _ in pairs], [a for _, a in pairs]
    if len(set(used_b)) != len(used_b) or len(set(used_a)) != len(used_a):
        raise UnknownLabel(f"每个系统至多属于一个节点: {pairs}")
    for b, a in pairs:
        if specs.outputs.dim(b) != specs.inputs.dim(a):
            raise DimensionMismatch(f"节点 ({b} → {a}) 两端维度不等: {specs.outputs.dim(b)} vs {specs.inputs.dim(a)}")

    cs = causal_structure_of(u, specs, tol)
    order = next((list(p) for p in itertools.permutations(pairs) if _valid(p, cs)), None)
    if order is None:
        _get_logger().error(f"节点 {pairs} 不存在有效顺序")
        raise NoValidOrdering(f"节点 {pairs} 不存在满足无影响条件的顺序")

    result = synth(u, specs, tol=tol, seed=seed)
    if result.status == OK:
        diagram, faithful = result.diagram, result.faithful
    else:
        diagram, faithful = single_node(u, specs), False
    slots = [{"node": f"N{k + 1}", "in_port": b, "out_port": a} for k, (b, a) in enumerate(order)]
    open_inputs = [a for a in specs.inputs.labels if a not in used_a]
    open_outputs = [b for b in specs.outputs.labels if b not in used_b]
    reach = paths(diagram)
    relations = [(a, b) for a in open_inputs for b in open_outputs if not reach[(a, b)]]
    _get_logger().info(f"梳状结构: 顺序 {order}, 开放端口无影响关系 {relations}")
    return CombDiagram(diagram, order, slots, open_inputs, open_outputs, relations, faithful)
