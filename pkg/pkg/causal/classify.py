"""
因果结构分类模块
把因果结构映射到合成方案（SynthesisPlan）：平凡、直积、约化规则、模板、标准线路、二分、对偶或不支持
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from pkg.causal.causal import (CausalStructure, bipartition_parts, dual, fresh_label, isomorphism)
from pkg.log.log import lazy_logger

_get_logger = lazy_logger("classify")

TRIVIAL = "Trivial"
PRODUCT = "Product"
BIPARTITION = "Bipartition"
REDUCE = "Reduce"
STANDARD = "Standard"
DUAL_PLAN = "DualPlan"
UNSUPPORTED = "Unsupported"


def compact_structure(parents: Dict[str, str], n: int) -> CausalStructure:
    """由 {"B1": "12", ...} 形式的紧凑描述构造模板结构"""
    inputs = [f"A{i}" for i in range(1, n + 1)]
    outputs = sorted(parents, key=lambda b: int(b[1:]))
    return CausalStructure.of(inputs, outputs, {b: [f"A{c}" for c in parents[b]] for b in outputs})


# 角色标签 A1.. / B1.. 与 pkg.synth.recipes 中的配方一一对应
TEMPLATES: Dict[str, CausalStructure] = {
    "CCC": compact_structure({"B1": "12", "B2": "123", "B3": "23"}, 3),
    "Cyclic33": compact_structure({"B1": "12", "B2": "13", "B3": "23"}, 3),
    "T34": compact_structure({"B1": "12", "B2": "13", "B3": "23", "B4": "123"}, 3),
    "T44_1": compact_structure({"B1": "123", "B2": "13", "B3": "34", "B4": "1234"}, 4),
    "T44_2": compact_structure({"B1": "12", "B2": "13", "B3": "234", "B4": "1234"}, 4),
    "T44_3": compact_structure({"B1": "12", "B2": "13", "B3": "34", "B4": "1234"}, 4),
    "T44_4": compact_structure({"B1": "1234", "B2": "12", "B3": "13", "B4": "14"}, 4),
    "Std44_1": compact_structure({"B1": "12", "B2": "23", "B3": "34", "B4": "14"}, 4),
    "Std44_2": compact_structure({"B1": "12", "B2": "13", "B3": "14", "B4": "234"}, 4),
    "Std44_3": compact_structure({"B1": "123", "B2": "13", "B3": "34", "B4": "24"}, 4),
}

# 对偶模板：把结构对偶后再交给原模板
DUAL_TEMPLATES: Dict[str, str] = {"DualT34": "T34"}


@dataclass
class SynthesisPlan:
    """合成方案：tag 决定执行路径，params 携带划分/见证数据，sub_plans 为子问题方案"""
    tag: str
    params: Dict = field(default_factory=dict)
    sub_plans: List["SynthesisPlan"] = field(default_factory=list)
    structure: Optional[CausalStructure] = None

    @property
    def supported(self) -> bool:
        return self.tag != UNSUPPORTED and all(p.supported for p in self.sub_plans)

    def tags(self) -> List[str]:
        """先序遍历的全部 tag"""
        result = [self.tag]
        for p in self.sub_plans:
            result.extend(p.tags())
        return result

    def to_json(self) -> Dict:
        return {
            "tag": self.tag,
            "params": _jsonable(self.params),
            "sub_plans": [p.to_json() for p in self.sub_plans],
        }


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [_jsonable(v) for v in value]
        return sorted(items) if isinstance(value, (set, frozenset)) else items
    if isinstance(value, CausalStructure):
        return value.to_json()
    return value


def reduce_child(cs: CausalStructure, rule: str, witness: Tuple[str, str],
                 link: Optional[str] = None) -> CausalStructure:
    """
    约化规则对应的子结构

    Args:
        cs: 原结构
        rule: R1 | R2 | R3 | R4
        witness: R1 (B_j, A_i)；R2 (A_i, B_j)；R3 (B_j, B_l)；R4 (A_i, A_l)
        link: 新连接线/合并系统的标签，缺省自动生成

    Returns:
        CausalStructure: 子问题的结构
    """
    taken = set(cs.inputs) | set(cs.outputs)
    if rule == "R1":
        b, a = witness
        x = link or fresh_label(f"X_{a}", taken)
        ins = tuple(x if i == a else i for i in cs.inputs)
        outs = tuple(o for o in cs.outputs if o != b)
        return CausalStructure(ins, outs, {o: frozenset(x if i == a else i for i in cs.parents[o]) for o in outs})
    if rule == "R2":
        a, b = witness
        x = link or fresh_label(f"X_{b}", taken)
        ins = tuple(i for i in cs.inputs if i != a)
        outs = tuple(x if o == b else o for o in cs.outputs)
        parents = {o: cs.parents[o] for o in cs.outputs if o != b}
        parents[x] = cs.parents[b] - {a}
        return CausalStructure(ins, outs, parents)
    if rule == "R3":
        b1, b2 = witness
        m = link or fresh_label(f"{b1}&{b2}", taken)
        outs = tuple(m if o == b1 else o for o in cs.outputs if o != b2)
        parents = {(m if o == b1 else o): cs.parents[o] for o in cs.outputs if o != b2}
        return CausalStructure(cs.inputs, outs, parents)
    if rule == "R4":
        a1, a2 = witness
        m = link or fresh_label(f"{a1}&{a2}", taken)
        ins = tuple(m if i == a1 else i for i in cs.inputs if i != a2)
        parents = {o: frozenset(m if i in (a1, a2) else i for i in cs.parents[o]) for o in cs.outputs}
        return CausalStructure(ins, cs.outputs, parents)
    raise ValueError(f"不支持的约化规则: {rule}，支持的规则: ['R1', 'R2', 'R3', 'R4']")


def find_reduction(cs: CausalStructure) -> Optional[Tuple[str, Tuple[str, str]]]:
    """按 R1→R4 顺序寻找第一个可用的约化见证"""
    for b in cs.outputs:
        if len(cs.parents[b]) == 1:
            return "R1", (b, next(iter(cs.parents[b])))
    for a in cs.inputs:
        children = cs.ch(a)
        if len(children) == 1:
            return "R2", (a, next(iter(children)))
    for b1, b2 in itertools.combinations(cs.outputs, 2):
        if cs.parents[b1] == cs.parents[b2]:
            return "R3", (b1, b2)
    for a1, a2 in itertools.combinations(cs.inputs, 2):
        if cs.ch(a1) == cs.ch(a2):
            return "R4", (a1, a2)
    return None


def bipartition_children(cs: CausalStructure, s: Tuple[str, ...],
                         links: Tuple[str, str] = None) -> Optional[Dict]:
    """
    输出二分 S 的两个子结构；当某个父集与 C 的交既非空也非 C 时返回 None

    Returns:
        Optional[Dict]: {"S", "S_bar", "P_S", "C", "P_S_bar", "left", "right", "V", "W"}
    """
    p_s, c, p_sbar = bipartition_parts(cs, s)
    c_set = frozenset(c)
    for b in cs.outputs:
        meet = cs.parents[b] & c_set
        if meet and meet != c_set:
            return None
    taken = set(cs.inputs) | set(cs.outputs)
    left, right = links or (fresh_label("XL", taken), fresh_label("XR", taken))
    s_bar = tuple(b for b in cs.outputs if b not in s)

    def child(outs, parents_in, link, link_first):
        ins = ([link] if link_first else []) + list(parents_in) + ([] if link_first else [link])
        if not c:
            ins = list(parents_in)
        parents = {}
        for b in outs:
            pa = set(cs.parents[b]) - c_set
            if c and cs.parents[b] & c_set:
                pa.add(link)
            parents[b] = pa
        return CausalStructure.of(ins, outs, parents)

    return {
        "S": tuple(s), "S_bar": s_bar, "P_S": tuple(p_s), "C": tuple(c), "P_S_bar": tuple(p_sbar),
        "left": left, "right": right,
        "V": child(s, p_s, left, False),
        "W": child(s_bar, p_sbar, right, True),
    }


def match_template(cs: CausalStructure) -> Optional[Tuple[str, Dict[str, str]]]:
    """返回 (模板名, 角色标签 → 实际标签)"""
    for name, template in TEMPLATES.items():
        if (template.n, template.k) != (cs.n, cs.k):
            continue
        iso = isomorphism(template, cs)
        if iso is not None:
            roles = dict(iso[0])
            roles.update(iso[1])
            return name, roles
    return None


def is_linear(cs: CausalStructure) -> bool:
    """任意两个输出至多共享一个父节点（关联图无 4-圈）"""
    return all(len(cs.parents[b1] & cs.parents[b2]) <= 1 for b1, b2 in itertools.combinations(cs.outputs, 2))


def classify(cs: CausalStructure, allow_dual: bool = True) -> SynthesisPlan:
    """
    对因果结构分类，返回合成方案（Unsupported 也是正常返回值）

    顺序：平凡 → 直积 → 约化 R1–R4 → 模板 → 标准线路 → 二分 → 对偶 → 不支持

    Args:
        cs: 因果结构
        allow_dual: 是否允许尝试对偶结构

    Returns:
        SynthesisPlan: 合成方案
    """
    core = cs.core()
    plan = _classify_core(core, allow_dual)
    plan.structure = cs
    if core != cs:
        plan.params.setdefault("stripped_inputs", [a for a in cs.inputs if a not in core.inputs])
        plan.params.setdefault("stripped_outputs", [b for b in cs.outputs if b not in core.outputs])
    return plan


def _classify_core(cs: CausalStructure, allow_dual: bool) -> SynthesisPlan:
    if cs.is_trivial():
        return SynthesisPlan(TRIVIAL, {}, [], cs)

    components = cs.components()
    if len(components) > 1:
        subs = [classify(cs.restrict(ins, outs)) for ins, outs in components]
        params = {"components": [{"inputs": ins, "outputs": outs} for ins, outs in components]}
        return SynthesisPlan(PRODUCT, params, subs, cs)

    reduction = find_reduction(cs)
    if reduction is not None:
        rule, witness = reduction
        child = reduce_child(cs, rule, witness)
        return SynthesisPlan(REDUCE, {"rule": rule, "witness": list(witness)}, [classify(child)], cs)

    matched = match_template(cs)
    if matched is not None:
        name, roles = matched
        return SynthesisPlan(name, {"roles": roles}, [], cs)

    for name, base in DUAL_TEMPLATES.items():
        dual_cs = dual(cs)
        matched = match_template(dual_cs)
        if matched is not None and matched[0] == base:
            sub = SynthesisPlan(base, {"roles": matched[1]}, [], dual_cs)
            return SynthesisPlan(name, {}, [sub], cs)

    if is_linear(cs):
        return SynthesisPlan(STANDARD, {}, [], cs)

    outputs = list(cs.outputs)
    for size in range(1, len(outputs)):
        for s in itertools.combinations(outputs, size):
            parts = bipartition_children(cs, s)
            if parts is None or not parts["C"]:
                continue
            v_plan, w_plan = classify(parts["V"]), classify(parts["W"])
            if v_plan.supported and w_plan.supported:
                params = {key: parts[key] for key in ("S", "S_bar", "P_S", "C", "P_S_bar", "left", "right")}
                return SynthesisPlan(BIPARTITION, params, [v_plan, w_plan], cs)

    if allow_dual:
        dual_plan = classify(dual(cs), allow_dual=False)
        if dual_plan.supported:
            return SynthesisPlan(DUAL_PLAN, {}, [dual_plan], cs)

    _get_logger().info(f"不支持的因果结构: {cs.to_json()['parents']}")
    return SynthesisPlan(UNSUPPORTED, {"structure": cs.to_json()}, [], cs)
