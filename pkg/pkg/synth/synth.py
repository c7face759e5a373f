"""
合成入口
分类 → 按方案分派到配方执行器 / 约化 / 对偶；对结果做求值与因果忠实性验证
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pkg.causal.causal import CausalStructure, bipartition_parts, causal_structure_of, fresh_label
from pkg.causal.classify import (BIPARTITION, DUAL_PLAN, DUAL_TEMPLATES, PRODUCT, REDUCE, STANDARD, TRIVIAL,
                                 UNSUPPORTED, SynthesisPlan, classify, match_template)
from pkg.channels.channels import cj_marginal_of_isometry, extract_residual_unitary, stinespring
from pkg.conf.conf import get_numerics, resolve_seed, resolve_tol
from pkg.errors.errors import (DimensionMismatch, NotFactorizable, NotUnitary, UnknownLabel,
                               WitnessMissing)
from pkg.log.log import lazy_logger
from pkg.synth import recipes
from pkg.synth.engine import SynthesisEngine
from pkg.tensor.tensor import (IOSpec, SystemSpec, as_matrix, is_unitary, kron, permute_cols, permute_rows,
                               phase_aligned_distance)
from pkg.xdiagram.xdiagram import (DiagramBuilder, XDiagram, dagger, evaluate_as, is_causally_faithful,
                                   single_node)

_get_logger = lazy_logger("synth")

OK = "ok"
UNSUPPORTED_STATUS = "unsupported"

VARIANTS_44 = {1: "T44_1", 2: "T44_2", 3: "T44_3", 4: "T44_4"}
STD44 = {1: "Std44_1", 2: "Std44_2", 3: "Std44_3"}


@dataclass
class SynthesisResult:
    """
    合成结果；status 为 unsupported 时 diagram 为 None，structure 给出不支持的因果结构
    """
    diagram: Optional[XDiagram]
    residual: Optional[float]
    faithful: bool
    gauge_report: List[Dict]
    plan: Optional[SynthesisPlan]
    structure: CausalStructure
    status: str = OK
    witnesses: List[Dict] = field(default_factory=list)

    def to_json(self) -> Dict:
        return {
            "status": self.status,
            "residual": self.residual,
            "faithful": self.faithful,
            "gauge_report": self.gauge_report,
            "plan": self.plan.to_json() if self.plan is not None else None,
            "structure": self.structure.to_json(),
            "witnesses": self.witnesses,
        }


@dataclass
class Reduction:
    """
    约化得到的子问题及其还原方式

    R1 额外记录节点 T: A_i → B_j ⊗ X；R2 通过对偶的 R1 完成；R3/R4 只做合并
    """
    rule: str
    witness: Tuple[str, str]
    specs: IOSpec
    child_u: np.ndarray
    child_specs: IOSpec
    link: str
    node: Optional[np.ndarray] = None
    dual: Optional["Reduction"] = None

    def recombine(self, child: XDiagram) -> XDiagram:
        """把子问题的线路图还原为原问题的线路图"""
        if self.rule == "R2":
            return dagger(self.dual.recombine(dagger(child)))
        builder = DiagramBuilder()
        for label, dim in self.specs.inputs.systems + self.specs.outputs.systems:
            builder.add_wire(label, dim)
        if self.rule == "R1":
            b, a = self.witness
            builder.add_wire(self.link, self.child_specs.inputs.dim(self.link))
            builder.add_node(builder.fresh("T"), [a], [b, self.link], self.node, layer=0)
            builder.embed(child, prefix="W.")
        elif self.rule == "R3":
            b1, b2 = self.witness
            builder.add_wire(self.link, self.child_specs.outputs.dim(self.link))
            builder.embed(child, prefix="M.", layer_offset=0)
            size = self.child_specs.outputs.dim(self.link)
            builder.add_node(builder.fresh("unfuse"), [self.link], [b1, b2], np.eye(size))
        else:
            a1, a2 = self.witness
            builder.add_wire(self.link, self.child_specs.inputs.dim(self.link))
            size = self.child_specs.inputs.dim(self.link)
            builder.add_node(builder.fresh("fuse"), [a1, a2], [self.link], np.eye(size), layer=0)
            builder.embed(child, prefix="M.")
        builder.set_boundary(self.specs.inputs.labels, self.specs.outputs.labels)
        return builder.build()


class _Context:
    """一次合成调用内共享的随机数、容差与块维度报告"""

    def __init__(self, seed=None, tol: Optional[float] = None):
        self.rng = np.random.default_rng(resolve_seed(seed))
        self.tol = resolve_tol(tol)
        self.gauge_report: List[Dict] = []

    def engine(self, u, specs: IOSpec) -> SynthesisEngine:
        return SynthesisEngine(u, specs, child_synth=lambda v, s: _synthesize(v, s, self),
                               seed=self.rng, tol=self.tol)

    def run(self, u, specs: IOSpec, recipe: recipes.Recipe) -> XDiagram:
        engine = self.engine(u, specs)
        diagram = engine.run(recipe)
        self.gauge_report.extend(engine.gauge_report)
        return diagram


def _check_problem(u, specs: IOSpec, tol: float) -> np.ndarray:
    u = as_matrix(u)
    specs.check_shape(u)
    overlap = set(specs.inputs.labels) & set(specs.outputs.labels)
    if overlap:
        raise UnknownLabel(f"输入与输出标签不能重复: {sorted(overlap)}")
    limit = get_numerics().max_dense_dim
    if u.shape[0] > limit:
        raise DimensionMismatch(f"总维度 {u.shape[0]} 超过 numerics.max_dense_dim = {limit}")
    ok, residual = is_unitary(u, tol)
    if not ok:
        raise NotUnitary("输入矩阵不是幺正矩阵", residual=residual)
    return u


def _strip_trivial(specs: IOSpec) -> Tuple[IOSpec, List[str], List[str]]:
    ins = [label for label, dim in specs.inputs.systems if dim == 1]
    outs = [label for label, dim in specs.outputs.systems if dim == 1]
    return IOSpec(specs.inputs.without(ins), specs.outputs.without(outs)), ins, outs


def _reattach(child: XDiagram, specs: IOSpec, ins: Sequence[str], outs: Sequence[str]) -> XDiagram:
    """一维系统以孤立的 1×1 节点接回"""
    builder = DiagramBuilder()
    for label, dim in specs.inputs.systems + specs.outputs.systems:
        builder.add_wire(label, dim)
    builder.embed(child, prefix="")
    for label in ins:
        builder.add_node(builder.fresh(f"drop_{label}"), [label], [], np.ones((1, 1)), layer=0)
    for label in outs:
        builder.add_node(builder.fresh(f"make_{label}"), [], [label], np.ones((1, 1)), layer=0)
    builder.set_boundary(specs.inputs.labels, specs.outputs.labels)
    return builder.build()


def _synthesize(u, specs: IOSpec, ctx: _Context, plan: Optional[SynthesisPlan] = None) -> XDiagram:
    """按方案递归合成，返回求值与 u 严格相等（含相位）的线路图"""
    u = as_matrix(u)
    core, trivial_ins, trivial_outs = _strip_trivial(specs)
    if trivial_ins or trivial_outs:
        if not len(core.inputs) or not len(core.outputs):
            diagram = single_node(u, specs)
        else:
            diagram = _reattach(_synthesize(u, core, ctx), specs, trivial_ins, trivial_outs)
        return diagram

    if plan is None:
        plan = classify(causal_structure_of(u, specs, ctx.tol))
    _get_logger().debug(f"合成方案 {plan.tag}: {specs.inputs.labels} → {specs.outputs.labels}")
    tag = plan.tag
    cs = plan.structure

    if tag == TRIVIAL:
        return single_node(u, specs)
    if tag == PRODUCT:
        return ctx.run(u, specs, recipes.product(plan.params["components"]))
    if tag == REDUCE:
        reduction = reduce(u, specs, plan.params["rule"], tuple(plan.params["witness"]), tol=ctx.tol)
        return reduction.recombine(_synthesize(reduction.child_u, reduction.child_specs, ctx))
    if tag in recipes.TEMPLATE_RECIPES:
        return ctx.run(u, specs, recipes.TEMPLATE_RECIPES[tag](plan.params["roles"]))
    if tag in recipes.STANDARD_TEMPLATES or tag == STANDARD:
        return ctx.run(u, specs, recipes.standard(cs, tag))
    if tag == BIPARTITION:
        p = plan.params
        return ctx.run(u, specs, recipes.bipartition(p["S"], p["S_bar"], p["P_S"], p["C"], p["P_S_bar"],
                                                      p["left"], p["right"]))
    if tag in DUAL_TEMPLATES or tag == DUAL_PLAN:
        inverse = u.conj().T
        return dagger(_synthesize(inverse, specs.dagger(), ctx, plan.sub_plans[0]))
    if tag == UNSUPPORTED:
        # 分类保证子问题受支持；数值上出现不支持的子结构说明前面的步骤失败
        raise NotFactorizable(f"子问题的因果结构不受支持: {plan.params.get('structure')}")
    raise ValueError(f"未知的合成方案: {tag}")


def _verify(diagram: XDiagram, u: np.ndarray, specs: IOSpec, tol: float) -> Tuple[float, bool, List[Dict]]:
    residual = phase_aligned_distance(evaluate_as(diagram, specs), u)
    faithful, witnesses = is_causally_faithful(diagram, u, specs, tol)
    return residual, faithful, witnesses


def _result(diagram: XDiagram, u: np.ndarray, specs: IOSpec, ctx: _Context, plan: Optional[SynthesisPlan],
            cs: CausalStructure) -> SynthesisResult:
    residual, faithful, witnesses = _verify(diagram, u, specs, ctx.tol)
    if not faithful:
        _get_logger().warning(f"线路图不忠实: {witnesses}")
    _get_logger().info(f"合成完成: plan={plan.tag if plan else None}, residual={residual:.3e}, faithful={faithful}")
    return SynthesisResult(diagram, residual, faithful, ctx.gauge_report, plan, cs, OK, witnesses)


def synth(u, specs: IOSpec, tol: Optional[float] = None, seed: Optional[int] = None) -> SynthesisResult:
    """
    计算因果结构、分类并合成因果忠实的扩展线路图

    不支持的结构不抛异常，返回 status = "unsupported" 的结果

    Args:
        u: 幺正矩阵
        specs: 输入输出描述
        tol: 判定容差
        seed: 随机种子

    Returns:
        SynthesisResult: 合成结果

    Raises:
        NotUnitary: u 不幺正
        NumericalError: 数值流程失败
    """
    ctx = _Context(seed, tol)
    u = _check_problem(u, specs, ctx.tol)
    cs = causal_structure_of(u, specs, ctx.tol)
    plan = classify(cs)
    if not plan.supported:
        _get_logger().info(f"结构不受支持: {cs.to_json()['parents']}")
        return SynthesisResult(None, None, False, [], plan, cs, UNSUPPORTED_STATUS)
    _, trivial_ins, trivial_outs = _strip_trivial(specs)
    top_plan = None if (trivial_ins or trivial_outs) else plan
    diagram = _synthesize(u, specs, ctx, top_plan)
    return _result(diagram, u, specs, ctx, plan, cs)


def _template_problem(u, specs: IOSpec, tag: str, roles: Optional[Dict[str, str]], ctx: _Context):
    u = _check_problem(u, specs, ctx.tol)
    cs = causal_structure_of(u, specs, ctx.tol)
    if roles is None:
        matched = match_template(cs)
        if matched is None or matched[0] != tag:
            raise WitnessMissing(f"因果结构与 {tag} 模板不匹配: {cs.to_json()['parents']}")
        roles = matched[1]
    return u, cs, SynthesisPlan(tag, {"roles": roles}, [], cs)


def _run_template(u, specs: IOSpec, tag: str, roles, tol, seed) -> SynthesisResult:
    ctx = _Context(seed, tol)
    u, cs, plan = _template_problem(u, specs, tag, roles, ctx)
    if tag in recipes.STANDARD_TEMPLATES:
        recipe = recipes.standard(cs, tag)
    else:
        recipe = recipes.TEMPLATE_RECIPES[tag](plan.params["roles"])
    return _result(ctx.run(u, specs, recipe), u, specs, ctx, plan, cs)


def synth_ccc(u, specs: IOSpec, roles: Optional[Dict[str, str]] = None, tol: Optional[float] = None,
              seed: Optional[int] = None) -> SynthesisResult:
    """
    (3,3) 结构 A1↛B3、A3↛B1：A2 上多块劈分，两侧 Stinespring 叶节点，B2 由残余幺正给出
    """
    return _run_template(u, specs, "CCC", roles, tol, seed)


def synth_cyclic33(u, specs: IOSpec, roles: Optional[Dict[str, str]] = None, tol: Optional[float] = None,
                   seed: Optional[int] = None) -> SynthesisResult:
    return _run_template(u, specs, "Cyclic33", roles, tol, seed)


def synth_t34(u, specs: IOSpec, roles: Optional[Dict[str, str]] = None, tol: Optional[float] = None,
              seed: Optional[int] = None) -> SynthesisResult:
    """三个输入上各一次多块劈分（指标 i、j、k），三个 Stinespring 叶节点，B4 为残余"""
    return _run_template(u, specs, "T34", roles, tol, seed)


def synth_44(u, specs: IOSpec, variant: int, roles: Optional[Dict[str, str]] = None, tol: Optional[float] = None,
             seed: Optional[int] = None) -> SynthesisResult:
    """
    四个 (4,4) 模板之一

    Args:
        variant: 1 嵌套劈分；2 在 (3,4) 流程上附加 A4；3 A1、A3 两次独立劈分；4 A1 上三因子劈分
    """
    if variant not in VARIANTS_44:
        raise WitnessMissing(f"variant 必须为 1..4，实际为 {variant}")
    return _run_template(u, specs, VARIANTS_44[variant], roles, tol, seed)


def synth_std44(u, specs: IOSpec, which: int, roles: Optional[Dict[str, str]] = None, tol: Optional[float] = None,
                seed: Optional[int] = None) -> SynthesisResult:
    """三个标准 (4,4) 线路之一，全部劈分强制单块"""
    if which not in STD44:
        raise WitnessMissing(f"which 必须为 1..3，实际为 {which}")
    return _run_template(u, specs, STD44[which], roles, tol, seed)


def synth_bipartition(u, specs: IOSpec, s: Sequence[str], c: Optional[Sequence[str]] = None,
                      p_s: Optional[Sequence[str]] = None, p_s_bar: Optional[Sequence[str]] = None,
                      tol: Optional[float] = None, seed: Optional[int] = None) -> SynthesisResult:
    """
    按输出二分 (S, S̄) 合成 U = (V⊗W)(1⊗T⊗1)，V、W 递归合成

    C、P_S、P_S̄ 缺省时由因果结构计算

    Raises:
        WitnessMissing: P_S 影响 S̄ 或 P_S̄ 影响 S
    """
    ctx = _Context(seed, tol)
    u = _check_problem(u, specs, ctx.tol)
    cs = causal_structure_of(u, specs, ctx.tol)
    s = [b for b in specs.outputs.labels if b in set(s)]
    s_bar = [b for b in specs.outputs.labels if b not in set(s)]
    parts = bipartition_parts(cs, s)
    p_s = list(parts[0] if p_s is None else p_s)
    c = list(parts[1] if c is None else c)
    p_s_bar = list(parts[2] if p_s_bar is None else p_s_bar)
    if sorted(p_s + c + p_s_bar) != sorted(specs.inputs.labels):
        raise UnknownLabel(f"P_S、C、P_S̄ 必须划分全部输入: {p_s} | {c} | {p_s_bar}")
    for a in p_s:
        if any(cs.influences(a, b) for b in s_bar):
            raise WitnessMissing(f"{a} ∈ P_S 影响了 S̄ = {s_bar}")
    for a in p_s_bar:
        if any(cs.influences(a, b) for b in s):
            raise WitnessMissing(f"{a} ∈ P_S̄ 影响了 S = {s}")
    taken = set(specs.inputs.labels) | set(specs.outputs.labels)
    left, right = fresh_label("XL", taken), fresh_label("XR", taken)
    params = {"S": tuple(s), "S_bar": tuple(s_bar), "P_S": tuple(p_s), "C": tuple(c), "P_S_bar": tuple(p_s_bar),
              "left": left, "right": right}
    plan = SynthesisPlan(BIPARTITION, params, [], cs)
    diagram = ctx.run(u, specs, recipes.bipartition(s, s_bar, p_s, c, p_s_bar, left, right))
    return _result(diagram, u, specs, ctx, plan, cs)


def _find_witness(cs: CausalStructure, rule: str) -> Optional[Tuple[str, str]]:
    if rule == "R1":
        return next(((b, next(iter(cs.parents[b]))) for b in cs.outputs if len(cs.parents[b]) == 1), None)
    if rule == "R2":
        return next(((a, next(iter(cs.ch(a)))) for a in cs.inputs if len(cs.ch(a)) == 1), None)
    if rule == "R3":
        return next(((b1, b2) for b1, b2 in itertools.combinations(cs.outputs, 2)
                     if cs.parents[b1] == cs.parents[b2]), None)
    if rule == "R4":
        return next(((a1, a2) for a1, a2 in itertools.combinations(cs.inputs, 2) if cs.ch(a1) == cs.ch(a2)), None)
    raise ValueError(f"不支持的约化规则: {rule}")


def _witness_holds(cs: CausalStructure, rule: str, witness: Tuple[str, str]) -> bool:
    x, y = witness
    try:
        if rule == "R1":
            return cs.parents[x] == frozenset([y])
        if rule == "R2":
            return cs.ch(x) == frozenset([y])
        if rule == "R3":
            return x != y and cs.parents[x] == cs.parents[y]
        if rule == "R4":
            return x != y and cs.ch(x) == cs.ch(y)
    except KeyError:
        return False
    raise ValueError(f"不支持的约化规则: {rule}")


def reduce(u, specs: IOSpec, rule: str, witness: Optional[Tuple[str, str]] = None,
           tol: Optional[float] = None) -> Reduction:
    """
    按约化规则把问题化为更小的子问题

    Args:
        u: 幺正
        specs: 输入输出描述
        rule: R1 (B_j, A_i) 单父输出；R2 (A_i, B_j) 单子输入；R3 (B_j, B_l) 相同父集；R4 (A_i, A_l) 相同子集
        witness: 缺省时取第一个可用见证
        tol: 容差

    Returns:
        Reduction: 子问题及还原方式

    Raises:
        WitnessMissing: 结构中不存在该规则的见证
    """
    tol = resolve_tol(tol)
    u = as_matrix(u)
    cs = causal_structure_of(u, specs, tol)
    if witness is None:
        witness = _find_witness(cs, rule)
    if witness is None or not _witness_holds(cs, rule, tuple(witness)):
        raise WitnessMissing(f"规则 {rule} 在结构 {cs.to_json()['parents']} 中没有见证 {witness}")
    witness = tuple(witness)
    taken = set(specs.inputs.labels) | set(specs.outputs.labels)
    ins, outs = specs.inputs, specs.outputs

    if rule == "R1":
        b, a = witness
        link = fresh_label(f"X_{a}", taken)
        rho = cj_marginal_of_isometry(u, specs, [b], [a], tol=tol)
        t = stinespring(rho, require_unitary=True, tol=tol, env_label=link).isometry
        env_dim = t.shape[0] // outs.dim(b)
        child_in = SystemSpec(tuple((link, env_dim) if label == a else (label, dim) for label, dim in ins.systems))
        rest = [label for label in ins.labels if label != a]
        u_tilde = kron(t, np.eye(ins.dim_of(rest)))
        u_tilde = permute_cols(u_tilde, ins.sub([a] + rest), ins.labels)
        u_tilde = permute_rows(u_tilde, SystemSpec(((b, outs.dim(b)), (link, env_dim))).concat(ins.sub(rest)),
                               [b] + child_in.labels)
        rest_out = [label for label in outs.labels if label != b]
        w = extract_residual_unitary(permute_rows(u, outs, [b] + rest_out), u_tilde, outs.sub([b]),
                                     child_in.total_dim, outs.dim_of(rest_out), tol=tol)
        child_specs = IOSpec(child_in, outs.sub(rest_out))
        return Reduction(rule, witness, specs, w, child_specs, link, node=t)
    if rule == "R2":
        a, b = witness
        inner = reduce(u.conj().T, specs.dagger(), "R1", (a, b), tol=tol)
        return Reduction(rule, witness, specs, inner.child_u.conj().T, inner.child_specs.dagger(), inner.link,
                         dual=inner)
    if rule == "R3":
        b1, b2 = witness
        link = fresh_label(f"{b1}&{b2}", taken)
        order = [label for label in outs.labels if label != b2]
        order.insert(order.index(b1) + 1, b2)
        child_out = SystemSpec(tuple((link, outs.dim_of([b1, b2])) if label == b1 else (label, outs.dim(label))
                                     for label in outs.labels if label != b2))
        return Reduction(rule, witness, specs, permute_rows(u, outs, order), IOSpec(ins, child_out), link)
    a1, a2 = witness
    link = fresh_label(f"{a1}&{a2}", taken)
    order = [label for label in ins.labels if label != a2]
    order.insert(order.index(a1) + 1, a2)
    child_in = SystemSpec(tuple((link, ins.dim_of([a1, a2])) if label == a1 else (label, ins.dim(label))
                                for label in ins.labels if label != a2))
    return Reduction(rule, witness, specs, permute_cols(u, ins, order), IOSpec(child_in, outs), link)


def synth_reduced(u, specs: IOSpec, rule: str, witness: Optional[Tuple[str, str]] = None,
                  tol: Optional[float] = None, seed: Optional[int] = None) -> SynthesisResult:
    """先按规则约化，再合成子问题并还原"""
    ctx = _Context(seed, tol)
    u = _check_problem(u, specs, ctx.tol)
    reduction = reduce(u, specs, rule, witness, tol=ctx.tol)
    diagram = reduction.recombine(_synthesize(reduction.child_u, reduction.child_specs, ctx))
    cs = causal_structure_of(u, specs, ctx.tol)
    plan = SynthesisPlan(REDUCE, {"rule": rule, "witness": list(reduction.witness)}, [], cs)
    return _result(diagram, u, specs, ctx, plan, cs)
