"""
实例生成模块
* gen_haar：Haar 随机幺正
* gen_from_structure：成对连线构造，每个 (输入, 输出) 影响对一条内部连线
* gen_instance：按类别名生成实例；模板类按自身配方随机搭建（含多块直和），
  成对连线过大的结构用紧凑的随机线路
* named_example / signalling_oracle / solve_internal_dims

所有生成结果都会重新计算因果结构，与目标不一致时重采样
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from pkg.algebra.algebra import MultiSplit
from pkg.causal.causal import CausalHypergraph, CausalStructure, causal_structure_of, dual
from pkg.causal.classify import (DUAL_PLAN, PRODUCT, REDUCE, TEMPLATES, TRIVIAL, UNSUPPORTED,
                                 compact_structure)
from pkg.conf.conf import get_numerics, resolve_seed, section
from pkg.errors.errors import DegenerateAfterRetries, DimensionMismatch, UnknownLabel
from pkg.log.log import lazy_logger
from pkg.synth.engine import DiagramAssembler
from pkg.synth.recipes import TEMPLATE_RECIPES, LeafStep, ResidualStep, SplitStep
from pkg.tensor.tensor import IOSpec, SystemSpec, as_matrix, kron, permute_rows
from pkg.xdiagram.xdiagram import DiagramBuilder, assignment_key, evaluate_as

_get_logger = lazy_logger("genlab")

Seed = Union[None, int, np.random.Generator]
Instance = Tuple[np.ndarray, IOSpec]


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(resolve_seed(seed))


def _label_order(label: str) -> Tuple[str, int]:
    head = label.rstrip("0123456789")
    tail = label[len(head):]
    return head, int(tail) if tail else 0


def _check_dense(dim: int):
    limit = get_numerics().max_dense_dim
    if dim > limit:
        raise DimensionMismatch(f"实例总维度 {dim} 超过 numerics.max_dense_dim = {limit}")


def gen_haar(dim: int, seed: Seed = None) -> np.ndarray:
    """
    Haar 随机幺正：复高斯矩阵做 QR，再用 R 对角元的相位修正

    Args:
        dim: 维度，≥ 1
        seed: 随机种子或 Generator

    Returns:
        np.ndarray: dim × dim 幺正
    """
    if int(dim) < 1:
        raise DimensionMismatch(f"Haar 幺正的维度必须 ≥ 1，实际 {dim}")
    rng = _rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = scipy.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def _random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((dim, 1)) + 1j * rng.standard_normal((dim, 1))
    return v / np.linalg.norm(v)


# ---- 随机线路 ----

@dataclass
class Circuit:
    """
    由 Haar 随机节点组成的普通线路

    nodes 为 (节点名, 入线, 出线)；dims 中未列出的连线维度取 default_dim
    """
    inputs: List[str]
    outputs: List[str]
    nodes: List[Tuple[str, List[str], List[str]]]
    dims: Dict[str, int] = field(default_factory=dict)
    default_dim: int = 2

    def dim(self, wire: str) -> int:
        return int(self.dims.get(wire, self.default_dim))

    def specs(self) -> IOSpec:
        return IOSpec(SystemSpec(tuple((a, self.dim(a)) for a in self.inputs)),
                      SystemSpec(tuple((b, self.dim(b)) for b in self.outputs)))


def realise_circuit(circuit: Circuit, seed: Seed = None) -> Instance:
    """
    给每个节点抽一个 Haar 幺正并求值

    Raises:
        DimensionMismatch: 节点入线与出线维度之积不等，或超过稠密上限
    """
    rng = _rng(seed)
    specs = circuit.specs()
    _check_dense(specs.inputs.total_dim)
    builder = DiagramBuilder()
    wires = set(circuit.inputs) | set(circuit.outputs)
    for _, ins, outs in circuit.nodes:
        wires.update(ins)
        wires.update(outs)
    for w in sorted(wires):
        builder.add_wire(w, circuit.dim(w))
    for name, ins, outs in circuit.nodes:
        d_in = math.prod(circuit.dim(w) for w in ins)
        d_out = math.prod(circuit.dim(w) for w in outs)
        if d_in != d_out:
            raise DimensionMismatch(f"节点 {name}: 入线维度 {d_in} ≠ 出线维度 {d_out}")
        builder.add_node(name, ins, outs, gen_haar(d_in, rng))
    builder.set_boundary(circuit.inputs, circuit.outputs)
    return evaluate_as(builder.build(), specs), specs


# ---- 成对连线构造 ----

@dataclass
class GenSpec:
    """
    hypergraph 给出目标因果结构；internal_dims 为 (输入, 输出) → 内部连线维度，缺省取 genlab.pair_dim
    """
    hypergraph: CausalHypergraph
    internal_dims: Dict[Tuple[str, str], int] = field(default_factory=dict)
    seed: Optional[int] = None

    @classmethod
    def of(cls, cs: CausalStructure, internal_dims: Optional[Mapping[Tuple[str, str], int]] = None,
           seed: Optional[int] = None) -> "GenSpec":
        return cls(CausalHypergraph.from_structure(cs), dict(internal_dims or {}), seed)

    @property
    def structure(self) -> CausalStructure:
        return self.hypergraph.to_structure()

    def pairs(self) -> List[Tuple[str, str]]:
        cs = self.structure
        return [(a, b) for a in cs.inputs for b in cs.outputs if a in cs.parents[b]]

    def pair_dim(self, a: str, b: str) -> int:
        default = int(section("genlab").get("pair_dim", 2))
        return int(self.internal_dims.get((a, b), default))

    def validate(self):
        pairs = set(self.pairs())
        unknown = [p for p in self.internal_dims if tuple(p) not in pairs]
        if unknown:
            raise UnknownLabel(f"内部维度引用了不存在的影响对: {unknown}")
        small = [p for p in pairs if self.pair_dim(*p) < 2]
        if small:
            raise DimensionMismatch(f"影响对的内部维度必须 ≥ 2: {sorted(small)}")

    def boundary_dims(self) -> Dict[str, int]:
        cs = self.structure
        dims = {label: 1 for label in cs.inputs + cs.outputs}
        for a, b in self.pairs():
            dims[a] *= self.pair_dim(a, b)
            dims[b] *= self.pair_dim(a, b)
        return dims


def pair_circuit(gs: GenSpec) -> Circuit:
    """V^(a): A_a → ⊗_b X_ab，W^(b): ⊗_a X_ab → B_b"""
    cs = gs.structure
    wire = {(a, b): f"{a}>{b}" for a, b in gs.pairs()}
    nodes = []
    for a in cs.inputs:
        nodes.append((f"V_{a}", [a], [wire[(a, b)] for b in cs.outputs if (a, b) in wire]))
    for b in cs.outputs:
        nodes.append((f"W_{b}", [wire[(a, b)] for a in cs.inputs if (a, b) in wire], [b]))
    dims = dict(gs.boundary_dims())
    dims.update({name: gs.pair_dim(a, b) for (a, b), name in wire.items()})
    return Circuit(list(cs.inputs), list(cs.outputs), nodes, dims)


def _sample(draw: Callable[[], Instance], expected: CausalStructure, what: str) -> Instance:
    """抽样直到因果结构与目标一致"""
    retries = int(section("genlab").get("max_resample", 10))
    for attempt in range(retries + 1):
        u, specs = draw()
        got = causal_structure_of(u, specs)
        if got == expected:
            return u, specs
        _get_logger().warning(f"{what}: 第 {attempt + 1} 次抽样的因果结构退化为 {got.to_json()['parents']}")
    _get_logger().error(f"{what}: 重采样 {retries} 次仍未得到目标结构")
    raise DegenerateAfterRetries(f"{what}: 重采样 {retries} 次仍未得到目标因果结构")


def gen_from_structure(gs: GenSpec) -> Instance:
    """
    U = (W^(1)⊗…⊗W^(k))(V^(1)⊗…⊗V^(n))，各分量为 Haar 随机

    Raises:
        DegenerateAfterRetries: 重采样后仍有影响退化
        DimensionMismatch: 总维度超过稠密上限
    """
    gs.validate()
    circuit = pair_circuit(gs)
    _check_dense(circuit.specs().inputs.total_dim)
    rng = _rng(gs.seed)
    return _sample(lambda: realise_circuit(circuit, rng), gs.structure, "成对连线实例")


# ---- 按配方随机搭建 ----

class _RecipeRealiser(DiagramAssembler):
    """按模板配方搭建随机线路图：劈分块维度与输出维度取自 profile，节点为 Haar 随机"""

    def __init__(self, inputs: SystemSpec, profile: Dict, rng: np.random.Generator):
        super().__init__(inputs)
        self.rng = rng
        self.output_dims = dict(profile["outputs"])
        self.splits = list(profile["splits"])
        self.produced: List[str] = []

    def _split(self, step: SplitStep):
        front = self._front()
        wires = self._resolve(front, step.wires)
        carried = self.carried(front.diagram, wires)
        layout = self.splits.pop(0)
        splits = {}
        for alpha, spec, _ in front.blocks():
            key = assignment_key(carried, alpha)
            if key in splits:
                continue
            beta = {i: alpha[i] for i in carried}
            # 嵌套劈分按外层块给出各自的块结构
            blocks = layout[beta[carried[-1]]] if isinstance(layout, dict) else layout
            blocks = [tuple(int(x) for x in b) for b in blocks]
            d_w = spec.dim_of(wires)
            if sum(math.prod(b) for b in blocks) != d_w:
                raise DimensionMismatch(f"劈分 {wires} 的块 {blocks} 与维度 {d_w} 不符")
            splits[key] = (beta, MultiSplit(gen_haar(d_w, self.rng), blocks))
        self.place_split(step, front.diagram, wires, splits)

    def _leaf(self, step: LeafStep):
        front = self._front()
        requested = self._resolve(front, step.in_wires)
        ins = [w for w in front.wires if w in requested]
        outs = list(step.outputs)
        d_g = math.prod(self.output_dims[b] for b in outs)
        carried = self.carried(front.diagram, ins)
        matrices, env_dims = {}, {}
        for alpha, spec, _ in front.blocks():
            key = assignment_key(carried, alpha)
            if key in matrices:
                continue
            d_in = spec.dim_of(ins)
            if d_in % d_g or (step.env is None and d_in != d_g):
                raise DimensionMismatch(f"叶节点 {outs}: 入线维度 {d_in} 与输出维度 {d_g} 不相容")
            matrices[key] = gen_haar(d_in, self.rng)
            env_dims[key] = d_in // d_g
        for b in outs:
            self._ensure_output(b, self.output_dims[b])
        self.place_leaf(step, ins, outs, carried, matrices, env_dims)
        self.produced.extend(outs)

    def _residual(self, step: ResidualStep):
        if len(step.outputs) != 1:
            raise DimensionMismatch(f"随机搭建只支持单个残余输出: {step.outputs}")
        front = self._front()
        res_wires, offsets, d_res = self.residual_layout(front, self.produced)
        label = step.outputs[0]
        self.output_dims[label] = d_res
        self._ensure_output(label, d_res)
        self.place_residual(res_wires, [label], gen_haar(d_res, self.rng), offsets)
        self.produced.append(label)

    def _finalize(self) -> Instance:
        outputs = sorted(self.produced, key=_label_order)
        self.builder.set_boundary(self.inputs.labels, outputs)
        specs = IOSpec(self.inputs, SystemSpec(tuple((b, self.output_dims[b]) for b in outputs)))
        return evaluate_as(self.builder.build(), specs), specs


# 各模板的最小维度：每个规定的影响都存活。splits 按配方中劈分的顺序给出块维度，
# 嵌套劈分以外层块号为键；残余输出的维度由块结构决定
PROFILES: Dict[str, Dict[str, Dict]] = {
    "CCC": {
        "min": {"inputs": {"A1": 2, "A2": 2, "A3": 2}, "splits": [[(1, 1), (1, 1)]],
                "outputs": {"B1": 2, "B3": 2}},
        "wide": {"inputs": {"A1": 2, "A2": 3, "A3": 2}, "splits": [[(1, 1), (1, 2)]],
                 "outputs": {"B1": 2, "B3": 2}},
        "single": {"inputs": {"A1": 2, "A2": 4, "A3": 2}, "splits": [[(2, 2)]],
                   "outputs": {"B1": 2, "B3": 2}},
    },
    # 叶节点输出至少 2 维，所以每个输出要从某个劈分拿到 2 维因子
    "T34": {
        "min": {"inputs": {"A1": 4, "A2": 4, "A3": 4},
                "splits": [[(2, 1), (2, 1)], [(1, 2), (1, 2)], [(2, 1), (2, 1)]],
                "outputs": {"B1": 2, "B2": 2, "B3": 2}},
    },
    # 外层两块的 X^L 维度不同，内层块数分别为 1 和 2
    "T44_1": {
        "min": {"inputs": {"A1": 2, "A2": 2, "A3": 3, "A4": 2},
                "splits": [[(1, 1), (2, 1)], {0: [(1, 2)], 1: [(1, 2), (1, 2)]}],
                "outputs": {"B1": 2, "B2": 2, "B3": 2}},
    },
    "T44_2": {
        "min": {"inputs": {"A1": 4, "A2": 4, "A3": 4, "A4": 2},
                "splits": [[(2, 1), (2, 1)], [(1, 2), (1, 2)], [(2, 1), (2, 1)]],
                "outputs": {"B1": 2, "B2": 2, "B3": 2}},
    },
    "T44_3": {
        "min": {"inputs": {"A1": 4, "A2": 2, "A3": 2, "A4": 2},
                "splits": [[(1, 2), (1, 2)], [(1, 1), (1, 1)]],
                "outputs": {"B1": 2, "B2": 2, "B3": 2}},
    },
    "T44_4": {
        "min": {"inputs": {"A1": 2, "A2": 2, "A3": 2, "A4": 2},
                "splits": [[(1, 1, 1, 1), (1, 1, 1, 1)]],
                "outputs": {"B2": 2, "B3": 2, "B4": 2}},
    },
}


def realise_recipe(tag: str, profile: str = "min", seed: Seed = None) -> Instance:
    """按模板 tag 的配方与维度 profile 搭建一个随机实例（不检查因果结构）"""
    try:
        layout = PROFILES[tag][profile]
    except KeyError:
        raise UnknownLabel(f"没有 {tag}/{profile} 的维度配置")
    inputs = SystemSpec(tuple(sorted(layout["inputs"].items(), key=lambda kv: _label_order(kv[0]))))
    _check_dense(inputs.total_dim)
    realiser = _RecipeRealiser(inputs, layout, _rng(seed))
    return realiser.run(TEMPLATE_RECIPES[tag]({}))


# ---- 紧凑随机线路 ----

def _c(inputs: int, outputs: int, nodes, dims) -> Circuit:
    return Circuit([f"A{i}" for i in range(1, inputs + 1)], [f"B{j}" for j in range(1, outputs + 1)],
                   [(name, list(ins), list(outs)) for name, ins, outs in nodes], dict(dims))


# 成对连线构造维度过大的结构：共享两个父节点的输出对用一个混合节点 M，
# 父集包含关系用剩余连线 l 串接。未列出的连线均为 2 维
CIRCUITS: Dict[str, Circuit] = {
    "Std44_3": _c(4, 4, [
        ("V2", ["A2"], ["p21", "p24"]), ("V3", ["A3"], ["p32", "p33"]), ("V4", ["A4"], ["p43", "p44"]),
        ("W2", ["A1", "p32"], ["B2", "l2"]), ("W1", ["l2", "p21"], ["B1"]),
        ("W3", ["p33", "p43"], ["B3"]), ("W4", ["p24", "p44"], ["B4"]),
    ], {"A2": 4, "A3": 4, "A4": 4, "B1": 4, "B3": 4, "B4": 4}),
    "U44_1": _c(4, 4, [
        ("V1", ["A1"], ["p11", "p13"]), ("V3", ["A3"], ["p31", "p32"]),
        ("W3", ["p13", "A4"], ["B3", "l3"]), ("W1", ["p11", "A2", "p31"], ["B1", "l1"]),
        ("W2", ["l3", "p32"], ["B2", "l2"]), ("W4", ["l1", "l2"], ["B4"]),
    ], {"A1": 4, "A3": 4, "l1": 4, "B4": 8}),
    "U44_2": _c(4, 4, [
        ("V1", ["A1"], ["w1", "p13"]), ("V3", ["A3"], ["p31", "p33"]), ("V4", ["A4"], ["p42", "p43"]),
        ("M12", ["w1", "A2"], ["m1", "m2"]),
        ("W1", ["m1", "p31"], ["B1", "l1"]), ("W2", ["m2", "p42"], ["B2", "l2"]),
        ("W3", ["p13", "p33", "p43"], ["B3", "l3"]), ("W4", ["l1", "l2", "l3"], ["B4"]),
    ], {"A1": 4, "A3": 4, "A4": 4, "l3": 4, "B4": 16}),
    "U44_3": _c(4, 4, [
        ("V1", ["A1"], ["w1", "p14"]), ("V3", ["A3"], ["p33", "p34"]), ("V4", ["A4"], ["p42", "p43"]),
        ("M12", ["w1", "A2"], ["m1", "m2"]),
        ("W4", ["p14", "p34"], ["B4", "l4"]),
        ("W1", ["m1", "l4"], ["B1"]), ("W2", ["m2", "p42"], ["B2"]), ("W3", ["p33", "p43"], ["B3"]),
    ], {"A1": 4, "A3": 4, "A4": 4, "B1": 4, "B2": 4, "B3": 4}),
    "U44_4": _c(4, 4, [
        ("V1", ["A1"], ["w1", "p13"]), ("V2", ["A2"], ["w2", "p24"]),
        ("M12", ["w1", "w2"], ["m1", "m2"]),
        ("W3", ["p13", "A3"], ["B3", "l3"]), ("W4", ["p24", "A4"], ["B4", "l4"]),
        ("W1", ["m1", "l3"], ["B1"]), ("W2", ["m2", "l4"], ["B2"]),
    ], {"A1": 4, "A2": 4, "B1": 4, "B2": 4}),
    "U44_5": _c(4, 4, [
        ("V1", ["A1"], ["w1", "p13"]), ("V2", ["A2"], ["w2", "p24"]),
        ("V3", ["A3"], ["p33", "p34"]), ("V4", ["A4"], ["p42", "p43"]),
        ("M12", ["w1", "w2"], ["m1", "m2"]),
        ("W4", ["p24", "p34"], ["B4", "l4"]),
        ("W1", ["m1", "l4"], ["B1"]), ("W2", ["m2", "p42"], ["B2"]), ("W3", ["p13", "p33", "p43"], ["B3"]),
    ], {"A1": 4, "A2": 4, "A3": 4, "A4": 4, "B1": 4, "B2": 4, "B3": 8}),
    "U44_6": _c(4, 4, [
        ("V1", ["A1"], ["w1", "p13"]), ("V2", ["A2"], ["w2", "p24"]),
        ("V3", ["A3"], ["w3", "p31"]), ("V4", ["A4"], ["w4", "p42"]),
        ("M12", ["w1", "w2"], ["m1", "m2"]), ("M34", ["w3", "w4"], ["m3", "m4"]),
        ("W1", ["m1", "p31"], ["B1"]), ("W2", ["m2", "p42"], ["B2"]),
        ("W3", ["m3", "p13"], ["B3"]), ("W4", ["m4", "p24"], ["B4"]),
    ], {"A1": 4, "A2": 4, "A3": 4, "A4": 4, "B1": 4, "B2": 4, "B3": 4, "B4": 4}),
}


# ---- 结构目录 ----

@dataclass(frozen=True)
class CatalogEntry:
    structure: CausalStructure
    tag: str


def _positional(cs: CausalStructure) -> CausalStructure:
    """输入重命名为 A1..，输出重命名为 B1..（按位置）"""
    return cs.relabel({a: f"A{i + 1}" for i, a in enumerate(cs.inputs)},
                      {b: f"B{j + 1}" for j, b in enumerate(cs.outputs)})


def _entry(parents: Dict[str, str], n: int, tag: str) -> CatalogEntry:
    return CatalogEntry(compact_structure(parents, n), tag)


# 对偶类：底层模板实例取共轭转置后按位置重命名
DUAL_BASES: Dict[str, str] = {"DualT34": "T34", "DualT44_2": "T44_2", "DualT44_3": "T44_3"}

# 全部 17 个（3,3）结构（同构意义下）及其顶层方案
STRUCTURES_33: Dict[str, CatalogEntry] = {
    "S33_01": _entry({"B1": "123", "B2": "123", "B3": "123"}, 3, TRIVIAL),
    "S33_02": _entry({"B1": "123", "B2": "123", "B3": "1"}, 3, REDUCE),
    "S33_03": _entry({"B1": "123", "B2": "123", "B3": "12"}, 3, REDUCE),
    "S33_04": _entry({"B1": "123", "B2": "1", "B3": "1"}, 3, REDUCE),
    "S33_05": _entry({"B1": "123", "B2": "1", "B3": "2"}, 3, REDUCE),
    "S33_06": _entry({"B1": "123", "B2": "12", "B3": "12"}, 3, REDUCE),
    "S33_07": _entry({"B1": "12", "B2": "123", "B3": "23"}, 3, "CCC"),
    "S33_08": _entry({"B1": "123", "B2": "1", "B3": "12"}, 3, REDUCE),
    "S33_09": _entry({"B1": "123", "B2": "3", "B3": "12"}, 3, REDUCE),
    "S33_10": _entry({"B1": "1", "B2": "2", "B3": "3"}, 3, PRODUCT),
    "S33_11": _entry({"B1": "1", "B2": "2", "B3": "13"}, 3, PRODUCT),
    "S33_12": _entry({"B1": "1", "B2": "1", "B3": "23"}, 3, PRODUCT),
    "S33_13": _entry({"B1": "12", "B2": "12", "B3": "3"}, 3, PRODUCT),
    "S33_14": _entry({"B1": "12", "B2": "13", "B3": "1"}, 3, REDUCE),
    "S33_15": _entry({"B1": "12", "B2": "13", "B3": "2"}, 3, REDUCE),
    "S33_16": _entry({"B1": "12", "B2": "12", "B3": "13"}, 3, REDUCE),
    "S33_17": _entry({"B1": "12", "B2": "13", "B3": "23"}, 3, "Cyclic33"),
}

# 15 个不可约（4,4）结构：9 个可解，6 个不支持
STRUCTURES_44: Dict[str, CatalogEntry] = {
    "T44_1": CatalogEntry(TEMPLATES["T44_1"], "T44_1"),
    "T44_2": CatalogEntry(TEMPLATES["T44_2"], "T44_2"),
    "T44_3": CatalogEntry(TEMPLATES["T44_3"], "T44_3"),
    "T44_4": CatalogEntry(TEMPLATES["T44_4"], "T44_4"),
    "DualT44_2": CatalogEntry(_positional(dual(TEMPLATES["T44_2"])), DUAL_PLAN),
    "DualT44_3": CatalogEntry(_positional(dual(TEMPLATES["T44_3"])), DUAL_PLAN),
    "Std44_1": CatalogEntry(TEMPLATES["Std44_1"], "Std44_1"),
    "Std44_2": CatalogEntry(TEMPLATES["Std44_2"], "Std44_2"),
    "Std44_3": CatalogEntry(TEMPLATES["Std44_3"], "Std44_3"),
    "U44_1": _entry({"B1": "123", "B2": "134", "B3": "14", "B4": "1234"}, 4, UNSUPPORTED),
    "U44_2": _entry({"B1": "123", "B2": "124", "B3": "134", "B4": "1234"}, 4, UNSUPPORTED),
    "U44_3": _entry({"B1": "123", "B2": "124", "B3": "34", "B4": "13"}, 4, UNSUPPORTED),
    "U44_4": _entry({"B1": "123", "B2": "124", "B3": "13", "B4": "24"}, 4, UNSUPPORTED),
    "U44_5": _entry({"B1": "123", "B2": "124", "B3": "134", "B4": "23"}, 4, UNSUPPORTED),
    "U44_6": _entry({"B1": "123", "B2": "124", "B3": "134", "B4": "234"}, 4, UNSUPPORTED),
}

# 其余类别：(3,4) 模板及其对偶、(n,2)/(2,k) 约化与直积
OTHER_STRUCTURES: Dict[str, CatalogEntry] = {
    "T34": CatalogEntry(TEMPLATES["T34"], "T34"),
    "DualT34": CatalogEntry(_positional(dual(TEMPLATES["T34"])), "DualT34"),
    "N2": _entry({"B1": "12", "B2": "23"}, 3, REDUCE),
    "K2": CatalogEntry(_positional(dual(compact_structure({"B1": "12", "B2": "23"}, 3))), REDUCE),
    "Product22": _entry({"B1": "1", "B2": "2"}, 2, PRODUCT),
}


def catalog() -> Dict[str, CatalogEntry]:
    merged: Dict[str, CatalogEntry] = {}
    for table in (STRUCTURES_33, STRUCTURES_44, OTHER_STRUCTURES):
        merged.update(table)
    merged.setdefault("CCC", CatalogEntry(TEMPLATES["CCC"], "CCC"))
    merged.setdefault("Cyclic33", CatalogEntry(TEMPLATES["Cyclic33"], "Cyclic33"))
    return merged


def catalog_structure(name: str) -> CausalStructure:
    entry = catalog().get(name)
    if entry is None:
        raise UnknownLabel(f"未知的实例类别: {name}")
    return entry.structure


def _relabelled_dagger(u: np.ndarray, specs: IOSpec) -> Instance:
    flipped = specs.dagger()
    specs = IOSpec(SystemSpec(tuple((f"A{i + 1}", d) for i, d in enumerate(flipped.inputs.dims))),
                   SystemSpec(tuple((f"B{j + 1}", d) for j, d in enumerate(flipped.outputs.dims))))
    return u.conj().T, specs


def gen_instance(tag: str, seed: Seed = None, profile: str = "min") -> Instance:
    """
    生成类别 tag 的一个随机实例

    * PROFILES 中的模板：按配方随机搭建，劈分为多块直和
    * 对偶类：底层模板实例的共轭转置
    * CIRCUITS 中的结构：紧凑随机线路
    * 其余：成对连线构造

    Args:
        tag: 类别名（见 catalog()）
        seed: 随机种子
        profile: 模板的维度配置名

    Returns:
        (u, specs)
    """
    expected = catalog_structure(tag)
    rng = _rng(seed)
    if tag in PROFILES:
        def draw():
            return realise_recipe(tag, profile, rng)
    elif tag in DUAL_BASES:
        def draw():
            return _relabelled_dagger(*realise_recipe(DUAL_BASES[tag], profile, rng))
    elif tag in CIRCUITS:
        def draw():
            return realise_circuit(CIRCUITS[tag], rng)
    else:
        circuit = pair_circuit(GenSpec.of(expected))
        _check_dense(circuit.specs().inputs.total_dim)

        def draw():
            return realise_circuit(circuit, rng)
    u, specs = _sample(draw, expected, tag)
    _get_logger().debug(f"生成实例 {tag}/{profile}: 维度 {u.shape[0]}")
    return u, specs


# ---- 具名例子 ----

def _io(in_dims: Sequence[int], out_dims: Sequence[int]) -> IOSpec:
    return IOSpec(SystemSpec(tuple((f"A{i + 1}", int(d)) for i, d in enumerate(in_dims))),
                  SystemSpec(tuple((f"B{j + 1}", int(d)) for j, d in enumerate(out_dims))))


def named_example(name: str, n: int = 2, dims: Optional[Sequence[int]] = None, seed: Seed = None) -> Instance:
    """
    具名例子

    * cnot_pair: |a,c,b⟩ → |a⊕c, c, b⊕c⟩，A2 为共享控制位
    * swap: B1 = A2、B2 = A1（dims 给出 (d1, d2)）
    * identity: n 个系统上的恒等
    * product: 每个 A_i → B_i 一个 Haar 因子的张量积

    Raises:
        UnknownLabel: 未知名字
    """
    if name == "cnot_pair":
        u = np.zeros((8, 8), dtype=complex)
        for a, c, b in itertools.product(range(2), repeat=3):
            u[(a ^ c) * 4 + c * 2 + (b ^ c), a * 4 + c * 2 + b] = 1
        return u, _io([2, 2, 2], [2, 2, 2])
    if name == "swap":
        d1, d2 = (int(d) for d in (dims or (2, 2)))
        u = np.zeros((d1 * d2, d1 * d2), dtype=complex)
        for a1, a2 in itertools.product(range(d1), range(d2)):
            u[a2 * d1 + a1, a1 * d2 + a2] = 1
        return u, _io([d1, d2], [d2, d1])
    if name in ("identity", "product"):
        dims = [int(d) for d in (dims or [2] * n)]
        _check_dense(math.prod(dims))
        if name == "identity":
            u = np.eye(math.prod(dims), dtype=complex)
        else:
            rng = _rng(seed)
            u = kron(*(gen_haar(d, rng) for d in dims))
        return u, _io(dims, dims)
    raise UnknownLabel(f"未知的具名例子: {name}")


# ---- 维度求解 ----

def solve_internal_dims(cs: CausalStructure, dims: Mapping[str, int]) -> Optional[Dict[Tuple[str, str], int]]:
    """
    为每个影响对找 ≥ 2 的内部维度，使各边界系统维度等于其关联影响对维度之积

    Args:
        cs: 因果结构
        dims: 系统标签 → 维度

    Returns:
        Optional[Dict]: (输入, 输出) → 维度；无解时为 None
    """
    pairs = [(a, b) for a in cs.inputs for b in cs.outputs if a in cs.parents[b]]
    try:
        remaining = {label: int(dims[label]) for label in cs.inputs + cs.outputs}
    except KeyError as e:
        raise DimensionMismatch(f"缺少系统维度: {e}")
    left = {label: 0 for label in remaining}
    for a, b in pairs:
        left[a] += 1
        left[b] += 1
    if any(left[x] == 0 and remaining[x] != 1 for x in remaining):
        return None
    chosen: Dict[Tuple[str, str], int] = {}

    def search(pos: int) -> bool:
        if pos == len(pairs):
            return all(v == 1 for v in remaining.values())
        a, b = pairs[pos]
        g = math.gcd(remaining[a], remaining[b])
        candidates = [k for k in range(2, g + 1) if g % k == 0]
        # 最后一个关联对必须用完剩余维度
        if left[a] == 1:
            candidates = [k for k in candidates if k == remaining[a]]
        if left[b] == 1:
            candidates = [k for k in candidates if k == remaining[b]]
        for k in candidates:
            chosen[(a, b)] = k
            remaining[a] //= k
            remaining[b] //= k
            left[a] -= 1
            left[b] -= 1
            if search(pos + 1):
                return True
            remaining[a] *= k
            remaining[b] *= k
            left[a] += 1
            left[b] += 1
            del chosen[(a, b)]
        return False

    return dict(chosen) if search(0) else None


# ---- 蛮力信号判定 ----

def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho - sigma))))


def signalling_oracle(u, specs: IOSpec, a: str, outputs: Sequence[str], seed: Seed = None,
                      states: Optional[int] = None, sweep: Optional[int] = None) -> float:
    """
    在其余输入的随机乘积态下改变 a 的随机纯态，返回 outputs 边缘态的最大迹距离

    Args:
        u: 幺正
        specs: 输入输出描述
        a: 发信输入
        outputs: 观察的输出组
        seed: 随机种子
        states: a 的随机态总数，缺省取 genlab.oracle_states
        sweep: 其余输入的随机乘积态个数，缺省取 genlab.oracle_sweep

    Returns:
        float: 最大迹距离
    """
    conf = section("genlab")
    states = int(states or conf.get("oracle_states", 200))
    sweep = int(sweep or conf.get("oracle_sweep", 20))
    if a not in specs.inputs:
        raise UnknownLabel(f"未知输入: {a}")
    u = as_matrix(u)
    rng = _rng(seed)
    keep = specs.outputs.ordered(outputs)
    rest = [b for b in specs.outputs.labels if b not in keep]
    d_keep = specs.outputs.dim_of(keep)
    per_sweep = max(2, states // sweep)
    worst = 0.0
    for _ in range(sweep):
        local = {x: _random_state(specs.inputs.dim(x), rng) for x in specs.inputs.labels}
        reference = None
        for _ in range(per_sweep):
            local[a] = _random_state(specs.inputs.dim(a), rng)
            out = u @ kron(*(local[x] for x in specs.inputs.labels))
            block = permute_rows(out, specs.outputs, keep + rest).reshape(d_keep, -1)
            rho = block @ block.conj().T
            if reference is None:
                reference = rho
                continue
            worst = max(worst, trace_distance(rho, reference))
    return worst


def signals(u, specs: IOSpec, a: str, outputs: Sequence[str], seed: Seed = None) -> bool:
    """信号判定：最大迹距离超过 genlab.oracle_threshold"""
    threshold = float(section("genlab").get("oracle_threshold", 1e-6))
    return signalling_oracle(u, specs, a, outputs, seed) > threshold
