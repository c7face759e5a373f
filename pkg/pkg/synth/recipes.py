"""
合成配方
每个可解的因果结构类对应一串步骤：劈分（split）→ 叶节点（leaf）→ 残余（residual）
配方中的 A1.. / B1.. 是模板角色名，经 roles 映射到实际标签
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

from pkg.causal.causal import CausalStructure


@dataclass
class SplitStep:
    """
    把 wires（复合）劈分成与 groups 一一对应的张量因子

    rest 为 True 时额外保留剩余交换子因子作为最后一条出线；
    index 为 None 表示必须单块（否则 MultipleBlocks）
    """
    wires: List[str]
    groups: List[List[str]]
    out_wires: List[str]
    index: Optional[str] = None
    rest: bool = False


@dataclass
class LeafStep:
    """outputs 只依赖 in_wires；env 不为空时做 Stinespring 幺正完备化，否则为幺正叶节点"""
    outputs: List[str]
    in_wires: List[str]
    env: Optional[str] = None
    recurse: bool = False


@dataclass
class ResidualStep:
    """剩余输出由剩余全部连线上的一个汇节点给出"""
    outputs: List[str]


@dataclass
class Recipe:
    tag: str
    steps: List = field(default_factory=list)


def _r(roles: Dict[str, str]) -> Callable[[str], str]:
    return lambda name: roles.get(name, name)


def ccc(roles: Dict[str, str]) -> Recipe:
    r = _r(roles)
    return Recipe("CCC", [
        SplitStep([r("A2")], [[r("B1")], [r("B3")]], ["XL", "XR"], index="i"),
        LeafStep([r("B1")], [r("A1"), "XL"], env="FL"),
        LeafStep([r("B3")], ["XR", r("A3")], env="FR"),
        ResidualStep([r("B2")]),
    ])


def t34(roles: Dict[str, str]) -> Recipe:
    r = _r(roles)
    return Recipe("T34", [
        SplitStep([r("A1")], [[r("B1")], [r("B2")]], ["XL", "XR"], index="i"),
        SplitStep([r("A2")], [[r("B1")], [r("B3")]], ["YL", "YR"], index="j"),
        SplitStep([r("A3")], [[r("B2")], [r("B3")]], ["ZL", "ZR"], index="k"),
        LeafStep([r("B1")], ["XL", "YL"], env="F1"),
        LeafStep([r("B2")], ["XR", "ZL"], env="F2"),
        LeafStep([r("B3")], ["YR", "ZR"], env="F3"),
        ResidualStep([r("B4")]),
    ])


def t44_1(roles: Dict[str, str]) -> Recipe:
    """A3 外层劈分，A1 与 X^L 上的嵌套劈分"""
    r = _r(roles)
    return Recipe("T44_1", [
        SplitStep([r("A3")], [[r("B1"), r("B2")], [r("B3")]], ["XL", "XR"], index="i"),
        SplitStep([r("A1"), "XL"], [[r("B1")], [r("B2")]], ["YL", "YR"], index="j"),
        LeafStep([r("B1")], [r("A2"), "YL"], env="FL"),
        LeafStep([r("B2")], ["YR"], env="FR"),
        LeafStep([r("B3")], ["XR", r("A4")], env="GR"),
        ResidualStep([r("B4")]),
    ])


def t44_2(roles: Dict[str, str]) -> Recipe:
    r = _r(roles)
    return Recipe("T44_2", [
        SplitStep([r("A1")], [[r("B1")], [r("B2")]], ["XL", "XR"], index="i"),
        SplitStep([r("A2")], [[r("B1")], [r("B3")]], ["YL", "YR"], index="j"),
        SplitStep([r("A3")], [[r("B2")], [r("B3")]], ["ZL", "ZR"], index="k"),
        LeafStep([r("B1")], ["XL", "YL"], env="F1"),
        LeafStep([r("B2")], ["XR", "ZL"], env="F2"),
        LeafStep([r("B3")], ["YR", "ZR", r("A4")], env="F3"),
        ResidualStep([r("B4")]),
    ])


def t44_3(roles: Dict[str, str]) -> Recipe:
    r = _r(roles)
    return Recipe("T44_3", [
        SplitStep([r("A1")], [[r("B1")], [r("B2")]], ["XL", "XR"], index="i"),
        SplitStep([r("A3")], [[r("B2")], [r("B3")]], ["YL", "YR"], index="j"),
        LeafStep([r("B1")], ["XL", r("A2")], env="F1"),
        LeafStep([r("B2")], ["XR", "YL"], env="F2"),
        LeafStep([r("B3")], ["YR", r("A4")], env="F3"),
        ResidualStep([r("B4")]),
    ])


def t44_4(roles: Dict[str, str]) -> Recipe:
    """A1 上三个因子加剩余交换子"""
    r = _r(roles)
    return Recipe("T44_4", [
        SplitStep([r("A1")], [[r("B2")], [r("B3")], [r("B4")]], ["X2", "X3", "X4", "X1"], index="i", rest=True),
        LeafStep([r("B2")], ["X2", r("A2")], env="F2"),
        LeafStep([r("B3")], ["X3", r("A3")], env="F3"),
        LeafStep([r("B4")], ["X4", r("A4")], env="F4"),
        ResidualStep([r("B1")]),
    ])


def std44_3(roles: Dict[str, str]) -> Recipe:
    r = _r(roles)
    return Recipe("Std44_3", [
        SplitStep([r("A3")], [[r("B1"), r("B2")], [r("B3")]], ["XL", "XR"]),
        SplitStep([r("A1"), "XL"], [[r("B1")], [r("B2")]], ["YL", "YR"]),
        SplitStep([r("A2")], [[r("B1")], [r("B4")]], ["Z1", "Z4"]),
        SplitStep([r("A4")], [[r("B3")], [r("B4")]], ["W3", "W4"]),
        LeafStep([r("B1")], ["YL", "Z1"]),
        LeafStep([r("B2")], ["YR"]),
        LeafStep([r("B3")], ["XR", "W3"]),
        LeafStep([r("B4")], ["Z4", "W4"]),
    ])


def standard(cs: CausalStructure, tag: str = "Standard") -> Recipe:
    """
    无 4-圈结构的两层标准线路：每个输入按子节点劈成单块张量因子，每个输出一个幺正
    """
    steps: List = []
    factor: Dict[tuple, str] = {}
    for a in cs.inputs:
        children = [b for b in cs.outputs if a in cs.parents[b]]
        if len(children) < 2:
            for b in children:
                factor[(a, b)] = a
            continue
        names = [f"{a}.{b}" for b in children]
        steps.append(SplitStep([a], [[b] for b in children], names))
        factor.update({(a, b): name for b, name in zip(children, names)})
    for b in cs.outputs:
        steps.append(LeafStep([b], [factor[(a, b)] for a in cs.inputs if a in cs.parents[b]]))
    return Recipe(tag, steps)


def bipartition(s: Sequence[str], s_bar: Sequence[str], p_s: Sequence[str], c: Sequence[str],
                p_s_bar: Sequence[str], left: str = "XL", right: str = "XR") -> Recipe:
    """U = (V⊗W)(1⊗T⊗1)，V、W 递归合成"""
    if not c:
        return Recipe("Bipartition", [
            LeafStep(list(s), list(p_s), recurse=True),
            LeafStep(list(s_bar), list(p_s_bar), recurse=True),
        ])
    return Recipe("Bipartition", [
        SplitStep(list(c), [list(s), list(s_bar)], [left, right]),
        LeafStep(list(s), list(p_s) + [left], recurse=True),
        LeafStep(list(s_bar), [right] + list(p_s_bar), recurse=True),
    ])


def product(components: Sequence[Dict]) -> Recipe:
    return Recipe("Product", [LeafStep(list(comp["outputs"]), list(comp["inputs"]), recurse=True)
                              for comp in components])


TEMPLATE_RECIPES: Dict[str, Callable[[Dict[str, str]], Recipe]] = {
    "CCC": ccc,
    "T34": t34,
    "T44_1": t44_1,
    "T44_2": t44_2,
    "T44_3": t44_3,
    "T44_4": t44_4,
    "Std44_3": std44_3,
}

# 这些模板都是无 4-圈结构，直接用标准线路
STANDARD_TEMPLATES = ("Cyclic33", "Std44_1", "Std44_2")
