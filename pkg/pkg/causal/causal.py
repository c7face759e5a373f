"""
因果结构模块
从幺正矩阵提取父集族、对偶、超图规范化、维度约束检查，以及 JSON / DOT 导出
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from jinja2 import Environment, FileSystemLoader

from pkg.channels.channels import influence_residuals
from pkg.conf.conf import resolve_path, resolve_tol, section
from pkg.errors.errors import DimensionMismatch, NotUnitary, ParseError, UnknownLabel
from pkg.log.log import lazy_logger
from pkg.tensor.tensor import IOSpec, SystemSpec, as_matrix, is_unitary

_get_logger = lazy_logger("causal")


def _template_dir() -> str:
    return os.path.join(resolve_path(section("templates").get("path", "data/templates/")), "dot")


_jinja_env = Environment(loader=FileSystemLoader(_template_dir()))


@dataclass(frozen=True)
class CausalStructure:
    """父集族 {Pa(B_j)}"""
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    parents: Mapping[str, FrozenSet[str]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        parents = {b: frozenset(self.parents.get(b, ())) for b in self.outputs}
        unknown = set(self.parents) - set(self.outputs)
        if unknown:
            raise UnknownLabel(f"父集引用了未知输出: {sorted(unknown)}")
        for b, pa in parents.items():
            extra = pa - set(self.inputs)
            if extra:
                raise UnknownLabel(f"Pa({b}) 含未知输入: {sorted(extra)}")
        if len(set(self.inputs)) != len(self.inputs) or len(set(self.outputs)) != len(self.outputs):
            raise UnknownLabel("输入或输出标签重复")
        object.__setattr__(self, "parents", parents)

    @classmethod
    def of(cls, inputs: Sequence[str], outputs: Sequence[str],
           parents: Mapping[str, Iterable[str]]) -> "CausalStructure":
        return cls(tuple(inputs), tuple(outputs), {b: frozenset(p) for b, p in parents.items()})

    def pa(self, output: str) -> FrozenSet[str]:
        return self.parents[output]

    def ch(self, input_label: str) -> FrozenSet[str]:
        return frozenset(b for b in self.outputs if input_label in self.parents[b])

    def influences(self, a: str, b: str) -> bool:
        return a in self.parents[b]

    def influence_matrix(self) -> Dict[Tuple[str, str], bool]:
        return {(a, b): a in self.parents[b] for a in self.inputs for b in self.outputs}

    def __eq__(self, other) -> bool:
        if not isinstance(other, CausalStructure):
            return NotImplemented
        return (self.inputs == other.inputs and self.outputs == other.outputs
                and dict(self.parents) == dict(other.parents))

    def __hash__(self) -> int:
        return hash((self.inputs, self.outputs, tuple(self.parents[b] for b in self.outputs)))

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def k(self) -> int:
        return len(self.outputs)

    def relabel(self, input_map: Mapping[str, str], output_map: Mapping[str, str]) -> "CausalStructure":
        return CausalStructure(
            tuple(input_map.get(a, a) for a in self.inputs),
            tuple(output_map.get(b, b) for b in self.outputs),
            {output_map.get(b, b): frozenset(input_map.get(a, a) for a in pa)
             for b, pa in self.parents.items()},
        )

    def restrict(self, inputs: Iterable[str], outputs: Iterable[str]) -> "CausalStructure":
        ins = [a for a in self.inputs if a in set(inputs)]
        outs = [b for b in self.outputs if b in set(outputs)]
        return CausalStructure(tuple(ins), tuple(outs),
                               {b: self.parents[b] & frozenset(ins) for b in outs})

    def core(self) -> "CausalStructure":
        """去掉孤立的输入和无父集的输出"""
        outs = [b for b in self.outputs if self.parents[b]]
        ins = [a for a in self.inputs if any(a in self.parents[b] for b in outs)]
        return self.restrict(ins, outs)

    def components(self) -> List[Tuple[List[str], List[str]]]:
        """输入-输出关联图的连通分量，按首次出现顺序排列"""
        seen_in, comps = set(), []
        for start in self.inputs:
            if start in seen_in:
                continue
            ins, outs = {start}, set()
            frontier = [start]
            while frontier:
                a = frontier.pop()
                for b in self.ch(a):
                    if b in outs:
                        continue
                    outs.add(b)
                    for a2 in self.parents[b]:
                        if a2 not in ins:
                            ins.add(a2)
                            frontier.append(a2)
            seen_in |= ins
            comps.append(([a for a in self.inputs if a in ins], [b for b in self.outputs if b in outs]))
        return comps

    def is_trivial(self) -> bool:
        return self.n <= 1 or self.k <= 1 or all(self.parents[b] == frozenset(self.inputs) for b in self.outputs)

    def to_json(self) -> Dict:
        return {
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "parents": {b: [a for a in self.inputs if a in self.parents[b]] for b in self.outputs},
        }

    @classmethod
    def from_json(cls, obj: Dict) -> "CausalStructure":
        try:
            return cls.of(obj["inputs"], obj["outputs"], obj.get("parents", {}))
        except (KeyError, TypeError) as e:
            raise ParseError(f"因果结构 JSON 格式错误: {e}")


@dataclass(frozen=True)
class CausalHypergraph:
    """顶点为输入，每个输出对应一条超边"""
    vertices: Tuple[str, ...]
    hyperedges: Tuple[Tuple[str, FrozenSet[str]], ...]

    @classmethod
    def from_structure(cls, cs: CausalStructure) -> "CausalHypergraph":
        return cls(cs.inputs, tuple((b, cs.parents[b]) for b in cs.outputs))

    def to_structure(self) -> CausalStructure:
        return CausalStructure(self.vertices, tuple(b for b, _ in self.hyperedges),
                               {b: e for b, e in self.hyperedges})


@dataclass(frozen=True)
class Canonical:
    """规范编码及重标号：input_order[p] / output_order[q] 为规范位置上的原标签"""
    encoding: Tuple[int, int, Tuple[int, ...]]
    input_order: Tuple[str, ...]
    output_order: Tuple[str, ...]


@dataclass(frozen=True)
class ConstraintViolation:
    kind: str
    systems: Tuple[str, ...]
    detail: str

    def to_json(self) -> Dict:
        return {"kind": self.kind, "systems": list(self.systems), "detail": self.detail}


def influence_table(u, specs: IOSpec) -> Dict[str, Dict[str, float]]:
    """
    所有 (输出, 输入) 对的无影响残差

    Returns:
        Dict[str, Dict[str, float]]: 输出 → {输入 → 残差}
    """
    u = as_matrix(u)
    return {b: influence_residuals(u, specs, [b]) for b in specs.outputs.labels}


def causal_structure_of(u, specs: IOSpec, tol: Optional[float] = None,
                        table: Optional[Dict[str, Dict[str, float]]] = None) -> CausalStructure:
    """
    计算幺正矩阵的因果结构：Pa(B_j) = {A_i : A_i 影响 B_j}

    Args:
        u: 幺正矩阵
        specs: 输入输出描述
        tol: 无影响判定容差
        table: 已计算好的残差表，可省去重复计算

    Returns:
        CausalStructure: 父集族
    """
    tol = resolve_tol(tol)
    u = as_matrix(u)
    ok, residual = is_unitary(u, tol)
    if not ok:
        raise NotUnitary("输入矩阵不是幺正矩阵", residual=residual)
    table = table if table is not None else influence_table(u, specs)
    parents = {b: frozenset(a for a, r in row.items() if r > tol) for b, row in table.items()}
    cs = CausalStructure(tuple(specs.inputs.labels), tuple(specs.outputs.labels), parents)
    _get_logger().debug(f"因果结构: {cs.to_json()['parents']}")
    return cs


def dual(cs: CausalStructure) -> CausalStructure:
    """箭头反向：对偶结构的输入为原输出，Pa^dual(A_i) = Ch(A_i)"""
    return CausalStructure(cs.outputs, cs.inputs, {a: cs.ch(a) for a in cs.inputs})


def canonicalize(hg) -> Canonical:
    """
    穷举输入置换求字典序最小编码；输出按掩码排序，因而与输出置换无关

    Args:
        hg: CausalHypergraph 或 CausalStructure

    Returns:
        Canonical: 编码及对应的标签顺序
    """
    cs = hg.to_structure() if isinstance(hg, CausalHypergraph) else hg
    best = None
    for perm in itertools.permutations(cs.inputs):
        bit = {a: 1 << pos for pos, a in enumerate(perm)}
        masks = sorted((sum(bit[a] for a in cs.parents[b]), idx, b) for idx, b in enumerate(cs.outputs))
        key = tuple(m for m, _, _ in masks)
        if best is None or key < best[0]:
            best = (key, perm, tuple(b for _, _, b in masks))
    key, perm, outs = best if best is not None else ((), (), ())
    return Canonical((cs.n, cs.k, key), tuple(perm), outs)


def isomorphism(source: CausalStructure, target: CausalStructure) -> Optional[Tuple[Dict[str, str], Dict[str, str]]]:
    """
    若两结构同构，返回 source 标签 → target 标签的 (输入映射, 输出映射)
    """
    cs, ct = canonicalize(source), canonicalize(target)
    if cs.encoding != ct.encoding:
        return None
    return dict(zip(cs.input_order, ct.input_order)), dict(zip(cs.output_order, ct.output_order))


def bipartition_parts(cs: CausalStructure, s: Iterable[str]) -> Tuple[List[str], List[str], List[str]]:
    """输出二分 (S, S̄) 对应的 (P_S, C, P_S̄)"""
    s = set(s)
    p_s, c, p_sbar = [], [], []
    for a in cs.inputs:
        children = cs.ch(a)
        if children <= s:
            p_s.append(a)
        elif not (children & s):
            p_sbar.append(a)
        else:
            c.append(a)
    return p_s, c, p_sbar


def check_dimension_constraints(cs: CausalStructure, specs: IOSpec, diagram=None) -> List[ConstraintViolation]:
    """
    检查必要的维度条件

    对每个输出二分 S：U = (V⊗W)(1⊗T⊗1) 要求 d_{P_S} | d_S、d_{P_S̄} | d_S̄，
    且 C 非空时两个商都不小于 2；给出 diagram 时附带块维度一致性诊断

    Returns:
        List[ConstraintViolation]: 空列表表示未发现违反
    """
    violations: List[ConstraintViolation] = []
    d_in, d_out = specs.inputs.total_dim, specs.outputs.total_dim
    if d_in != d_out:
        violations.append(ConstraintViolation("global_dim", tuple(cs.inputs + cs.outputs),
                                              f"∏d_A = {d_in} ≠ ∏d_B = {d_out}"))
        return violations
    outputs = list(cs.outputs)
    seen = set()
    for size in range(1, len(outputs)):
        for s in itertools.combinations(outputs, size):
            sbar = tuple(b for b in outputs if b not in s)
            p_s, c, p_sbar = bipartition_parts(cs, s)
            for side, parents in ((s, p_s), (sbar, p_sbar)):
                if (side, tuple(parents)) in seen:
                    continue
                seen.add((side, tuple(parents)))
                d_side = specs.outputs.dim_of(side)
                d_par = specs.inputs.dim_of(parents)
                if d_side % d_par != 0:
                    violations.append(ConstraintViolation(
                        "bipartition_divisibility", tuple(parents) + side,
                        f"d({'·'.join(parents) or '1'}) = {d_par} 不整除 d({'·'.join(side)}) = {d_side}"))
                elif c and d_side // d_par < 2:
                    violations.append(ConstraintViolation(
                        "bipartition_wire", tuple(c) + side,
                        f"{'·'.join(c)} 影响 {'·'.join(side)}，但连接线维度 {d_side // d_par} < 2"))
    if diagram is not None:
        from pkg.xdiagram.xdiagram import validate
        for diag in validate(diagram):
            if diag.code in ("DimMismatch", "MissingDimEntry"):
                violations.append(ConstraintViolation("block_dims", (), diag.message))
    return violations


def to_dot(cs: CausalStructure) -> str:
    """因果 DAG 的 DOT 文本：输入在下，输出在上"""
    template = _jinja_env.get_template("causal.dot.j2")
    edges = [(a, b) for b in cs.outputs for a in cs.inputs if a in cs.parents[b]]
    return template.render(inputs=cs.inputs, outputs=cs.outputs, edges=edges)


def fresh_label(base: str, taken: Iterable[str]) -> str:
    """生成不与 taken 冲突的标签"""
    taken = set(taken)
    if base not in taken:
        return base
    for i in itertools.count(1):
        label = f"{base}{i}"
        if label not in taken:
            return label


def specs_for(cs: CausalStructure, dims: Mapping[str, int]) -> IOSpec:
    """按结构的标签顺序组装 IOSpec"""
    try:
        return IOSpec(SystemSpec(tuple((a, int(dims[a])) for a in cs.inputs)),
                      SystemSpec(tuple((b, int(dims[b])) for b in cs.outputs)))
    except KeyError as e:
        raise DimensionMismatch(f"缺少系统维度: {e}")


def total_pairs(cs: CausalStructure) -> int:
    return sum(len(cs.parents[b]) for b in cs.outputs)


def dense_dim_for_pairs(cs: CausalStructure, pair_dim: int) -> int:
    return int(math.prod([pair_dim] * total_pairs(cs)))
