"""
命令行入口
六个子命令共用一套参数校验、输入读取与产物输出；库异常在 main 中统一转换为退出码

产物（JSON / DOT）写入 --out，缺省写到标准输出；文本报告在给出 --out 时写到标准输出，否则写到标准错误
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import uuid
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from jinja2 import Environment, FileSystemLoader

from pkg.causal import causal
from pkg.causal.causal import (CausalStructure, causal_structure_of, check_dimension_constraints, dual,
                               influence_table, specs_for)
from pkg.causal.classify import classify
from pkg.conf.conf import get_numerics, resolve_path, section
from pkg.errors.errors import (CausalSynthError, DimensionConstraintViolated, InvalidDiagram, NotUnitary,
                               ParseError)
from pkg.genlab.genlab import GenSpec, gen_from_structure, gen_instance, named_example, solve_internal_dims
from pkg.log.log import JOB_ID_CTX, get_logger
from pkg.synth.synth import UNSUPPORTED_STATUS, synth
from pkg.tensor.tensor import (IOSpec, SystemSpec, as_matrix, canonical_dumps, from_cmatrix, is_unitary,
                               phase_aligned_distance, to_cmatrix)
from pkg.xdiagram import codec
from pkg.xdiagram.xdiagram import XDiagram, evaluate, evaluate_as, is_causally_faithful, paths, validate

COMMANDS = ("analyze", "decompose", "verify", "generate", "eval", "dual")
DOT_COMMANDS = ("analyze", "decompose")
MAX_TOL = 1e-3

EXIT_OK = 0
EXIT_VERIFY_FAILED = 4


def _template_dir() -> str:
    return os.path.join(resolve_path(section("templates").get("path", "data/templates/")), "report")


_jinja_env = Environment(loader=FileSystemLoader(_template_dir()))


@dataclass
class JobConfig:
    """
    一次命令行作业的全部参数；validate 在任何文件写入之前调用
    """
    command: str
    inputs: List[str]
    tol: Optional[float] = None
    seed: Optional[int] = None
    out: Optional[str] = None
    fmt: str = "json"
    specs: Optional[str] = None
    tag: Optional[str] = None
    example: Optional[str] = None
    profile: str = "min"

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "JobConfig":
        inputs = [p for p in (getattr(args, "input", None), getattr(args, "diagram", None)) if p]
        return cls(
            command=args.command,
            inputs=inputs,
            tol=args.tol,
            seed=args.seed,
            out=args.out,
            fmt=args.format,
            specs=getattr(args, "specs", None),
            tag=getattr(args, "tag", None),
            example=getattr(args, "example", None),
            profile=getattr(args, "profile", "min") or "min",
        )

    def validate(self):
        """
        Raises:
            ParseError: 参数不合法或输入文件不存在
        """
        if self.command not in COMMANDS:
            raise ParseError(f"未知命令: {self.command}")
        if self.tol is not None and not (0.0 < self.tol <= MAX_TOL):
            raise ParseError(f"--tol 须在 (0, {MAX_TOL}] 内，实际 {self.tol}")
        if self.fmt not in ("json", "dot"):
            raise ParseError(f"未知输出格式: {self.fmt}")
        if self.fmt == "dot" and self.command not in DOT_COMMANDS:
            raise ParseError(f"{self.command} 只支持 json 输出")
        if self.command == "generate":
            chosen = [x for x in (self.inputs, self.tag, self.example) if x]
            if len(chosen) != 1:
                raise ParseError("generate 需要且只需要结构文件、--tag、--example 之一")
        for path in self.inputs + ([self.specs] if self.specs else []):
            if not os.path.isfile(path):
                raise ParseError(f"输入文件不存在: {path}")

    def verify_limit(self, dim: int) -> float:
        return get_numerics().verify_tol * max(1.0, math.sqrt(dim))


def _read_json(path: str) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path} 不是合法 JSON: {e}")


def specs_sidecar(path: str) -> str:
    return f"{path}.specs.json"


def load_unitary(path: str, specs_path: Optional[str] = None) -> Tuple[np.ndarray, IOSpec]:
    """
    读取 cmatrix/1 文件；系统描述依次取 --specs 文件、文件内的 specs 字段、同名 .specs.json 旁文件

    Raises:
        ParseError: 文件格式错误或缺少系统描述
    """
    obj = _read_json(path)
    u = from_cmatrix(obj)
    if specs_path:
        spec_obj = _read_json(specs_path)
        spec_obj = spec_obj.get("specs", spec_obj)
    elif "specs" in obj:
        spec_obj = obj["specs"]
    elif os.path.isfile(specs_sidecar(path)):
        spec_obj = _read_json(specs_sidecar(path)).get("specs")
    else:
        raise ParseError(f"{path} 缺少系统描述，请用 --specs 指定")
    if not isinstance(spec_obj, dict):
        raise ParseError(f"{path} 的系统描述格式错误")
    specs = IOSpec.from_json(spec_obj)
    specs.check_shape(u)
    return u, specs


def load_diagram(path: str) -> XDiagram:
    with open(path, "r", encoding="utf-8") as f:
        return codec.loads(f.read())


def _require_unitary(u: np.ndarray):
    ok, residual = is_unitary(u, get_numerics().verify_tol)
    if not ok:
        raise NotUnitary("输入矩阵不是幺正矩阵", residual)


def unitary_document(u, specs: IOSpec, structure: Optional[CausalStructure] = None) -> Dict:
    doc = to_cmatrix(u)
    doc["specs"] = specs.to_json()
    if structure is not None:
        doc["structure"] = structure.to_json()
    return doc


def render_report(title: str, **fields) -> str:
    values = dict(status=None, tag=None, residual=None, faithful=None, parents=None, pairs=None,
                  blocks=None, diagnostics=None, verdict=None)
    values.update(fields)
    return _jinja_env.get_template("report.txt.j2").render(title=title, job_id=JOB_ID_CTX.get(), **values)


def _parents(cs: CausalStructure) -> List[Tuple[str, List[str]]]:
    return [(b, [a for a in cs.inputs if a in cs.pa(b)]) for b in cs.outputs]


def pair_rows(reach: Dict[Tuple[str, str], bool], cs: CausalStructure,
              table: Dict[str, Dict[str, float]]) -> List[Dict]:
    """逐个 (输入, 输出) 对比较路径与影响"""
    return [
        {"input": a, "output": b, "path": reach[(a, b)], "influence": cs.influences(a, b),
         "residual": table[b][a]}
        for a in cs.inputs for b in cs.outputs
    ]


class Job:
    """
    一次作业：读取输入、执行命令、按 --out / --format 写出产物与报告
    """

    def __init__(self, config: JobConfig):
        self.config = config
        self.logger = get_logger("cli")

    def emit(self, artifact: str, report: Optional[str] = None):
        text = artifact if artifact.endswith("\n") else artifact + "\n"
        if self.config.out:
            with open(self.config.out, "w", encoding="utf-8") as f:
                f.write(text)
            self.logger.info(f"已写出 {self.config.out}")
            if report:
                sys.stdout.write(report)
        else:
            sys.stdout.write(text)
            if report:
                sys.stderr.write(report)

    def emit_json(self, obj, report: Optional[str] = None):
        self.emit(canonical_dumps(obj), report)

    def _unitary(self) -> Tuple[np.ndarray, IOSpec]:
        u, specs = load_unitary(self.config.inputs[0], self.config.specs)
        _require_unitary(u)
        return u, specs

    def run(self) -> int:
        handler = getattr(self, f"cmd_{self.config.command}")
        return handler()

    def cmd_analyze(self) -> int:
        u, specs = self._unitary()
        table = influence_table(u, specs)
        cs = causal_structure_of(u, specs, self.config.tol, table)
        plan = classify(cs)
        self.logger.info(f"因果结构 {cs.to_json()['parents']}，分类 {plan.tag}")
        report = render_report("因果结构分析", tag=plan.tag, parents=_parents(cs))
        if self.config.fmt == "dot":
            self.emit(causal.to_dot(cs), report)
            return EXIT_OK
        self.emit_json({
            "structure": cs.to_json(),
            "influence": {b: {a: cs.influences(a, b) for a in cs.inputs} for b in cs.outputs},
            "residuals": table,
            "dual": dual(cs).to_json(),
            "classification": plan.to_json(),
        }, report)
        return EXIT_OK

    def cmd_decompose(self) -> int:
        u, specs = self._unitary()
        result = synth(u, specs, self.config.tol, self.config.seed)
        cs = result.structure
        if result.status == UNSUPPORTED_STATUS:
            report = render_report("分解", status=result.status, parents=_parents(cs),
                                   verdict="该因果结构暂无合成方案")
            self.emit_json({"status": result.status, "structure": cs.to_json(),
                            "plan": result.plan.to_json()}, report)
            return EXIT_OK
        table = influence_table(u, specs)
        report = render_report(
            "分解",
            status=result.status,
            tag=result.plan.tag if result.plan else None,
            residual=result.residual,
            faithful=result.faithful,
            parents=_parents(cs),
            pairs=pair_rows(paths(result.diagram), cs, table),
            blocks=result.gauge_report,
        )
        if self.config.fmt == "dot":
            self.emit(codec.to_dot(result.diagram), report)
        else:
            self.emit(codec.dumps(result.diagram), report)
        return EXIT_OK

    def cmd_verify(self) -> int:
        u, specs = self._unitary()
        d = load_diagram(self.config.inputs[1])
        diagnostics = validate(d)
        if diagnostics:
            raise InvalidDiagram(f"线路图校验失败: {len(diagnostics)} 条诊断", diagnostics)
        residual = phase_aligned_distance(evaluate_as(d, specs), u)
        limit = self.config.verify_limit(u.shape[0])
        if residual > limit:
            self.logger.warning(f"线路图与幺正不一致: residual={residual:.3e} > {limit:.3e}")
            report = render_report("验证", residual=residual, verdict="FAIL：线路图求值与幺正不一致")
            self.emit_json({"pass": False, "residual": residual, "faithful": False, "pairs": []}, report)
            return EXIT_VERIFY_FAILED
        table = influence_table(u, specs)
        cs = causal_structure_of(u, specs, self.config.tol, table)
        faithful, _ = is_causally_faithful(d, u, specs, self.config.tol)
        rows = pair_rows(paths(d), cs, table)
        verdict = "PASS" if faithful else "FAIL：路径关系与影响关系不一致"
        report = render_report("验证", residual=residual, faithful=faithful, pairs=rows, verdict=verdict)
        self.emit_json({"pass": faithful, "residual": residual, "faithful": faithful, "pairs": rows}, report)
        return EXIT_OK if faithful else EXIT_VERIFY_FAILED

    def _generate_from_structure(self) -> Tuple[np.ndarray, IOSpec]:
        obj = _read_json(self.config.inputs[0])
        cs = CausalStructure.from_json(obj)
        dims = obj.get("dims")
        if not dims:
            return gen_from_structure(GenSpec.of(cs, seed=self.config.seed))
        specs = specs_for(cs, {str(k): int(v) for k, v in dims.items()})
        violations = check_dimension_constraints(cs, specs)
        if violations:
            raise DimensionConstraintViolated(f"维度约束不满足: {len(violations)} 项", violations)
        internal = solve_internal_dims(cs, dict(dims))
        if internal is None:
            raise DimensionConstraintViolated(f"找不到满足维度 {dims} 的内部连线维度")
        return gen_from_structure(GenSpec.of(cs, internal, self.config.seed))

    def cmd_generate(self) -> int:
        if self.config.tag:
            u, specs = gen_instance(self.config.tag, self.config.seed, self.config.profile)
        elif self.config.example:
            u, specs = named_example(self.config.example, seed=self.config.seed)
        else:
            u, specs = self._generate_from_structure()
        cs = causal_structure_of(u, specs, self.config.tol)
        doc = unitary_document(u, specs, cs)
        report = render_report("生成", tag=classify(cs).tag, parents=_parents(cs))
        self.emit_json(doc, report)
        if self.config.out:
            with open(specs_sidecar(self.config.out), "w", encoding="utf-8") as f:
                f.write(canonical_dumps({"specs": specs.to_json(), "structure": cs.to_json()}) + "\n")
        return EXIT_OK

    def cmd_eval(self) -> int:
        d = load_diagram(self.config.inputs[0])
        diagnostics = validate(d)
        if diagnostics:
            raise InvalidDiagram(f"线路图校验失败: {len(diagnostics)} 条诊断", diagnostics)
        specs = IOSpec(
            SystemSpec(tuple((w, d.dim_of_boundary(w)) for w in d.boundary_in)),
            SystemSpec(tuple((w, d.dim_of_boundary(w)) for w in d.boundary_out)),
        )
        self.emit_json(unitary_document(evaluate(d), specs))
        return EXIT_OK

    def cmd_dual(self) -> int:
        u, specs = self._unitary()
        cs = causal_structure_of(u, specs, self.config.tol)
        ud = np.conj(as_matrix(u)).T
        report = render_report("对偶", parents=_parents(dual(cs)))
        self.emit_json(unitary_document(ud, specs.dagger(), dual(cs)), report)
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="无影响判定容差，缺省取配置")
    common.add_argument("--seed", type=int, default=None, help="随机种子，缺省取配置")
    common.add_argument("--out", default=None, help="产物输出路径，缺省写到标准输出")
    common.add_argument("--format", default="json", choices=["json", "dot"], help="产物格式")

    parser = argparse.ArgumentParser(prog="causal-synth", description="多体幺正的因果结构分析与因果忠实分解")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("analyze", "计算因果结构"), ("decompose", "合成因果忠实的扩展线路图"),
                            ("dual", "共轭转置及对偶结构")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("input", help="cmatrix/1 幺正文件")
        p.add_argument("--specs", default=None, help="系统描述 JSON")

    p = sub.add_parser("verify", parents=[common], help="验证线路图与幺正的一致性及因果忠实性")
    p.add_argument("input", help="cmatrix/1 幺正文件")
    p.add_argument("diagram", help="xdiagram/1 线路图文件")
    p.add_argument("--specs", default=None, help="系统描述 JSON")

    p = sub.add_parser("generate", parents=[common], help="按因果结构生成随机实例")
    p.add_argument("input", nargs="?", default=None, help="因果结构 JSON，可带 dims")
    p.add_argument("--tag", default=None, help="按类别生成，例如 CCC、T44_1、U44_1")
    p.add_argument("--profile", default="min", help="类别实例的维度配置")
    p.add_argument("--example", default=None, help="具名例子：cnot_pair、swap、identity、product")

    p = sub.add_parser("eval", parents=[common], help="线路图求值")
    p.add_argument("input", help="xdiagram/1 线路图文件")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Returns:
        int: 退出码，0 成功（含 unsupported），2 输入，3 前置条件，4 数值，5 维度约束
    """
    JOB_ID_CTX.set(uuid.uuid4().hex)
    logger = get_logger("cli")
    args = build_parser().parse_args(argv)
    try:
        config = JobConfig.from_args(args)
        config.validate()
        logger.info(f"开始作业 {config.command}: {config.inputs}")
        return Job(config).run()
    except CausalSynthError as e:
        logger.error(f"{type(e).__name__}: {e}")
        diagnostics = getattr(e, "diagnostics", None) or getattr(e, "violations", None)
        sys.stderr.write(render_report("错误", status=type(e).__name__, residual=e.residual,
                                       diagnostics=[_as_diagnostic(x) for x in diagnostics or []],
                                       verdict=e.message))
        return e.exit_code


def _as_diagnostic(item) -> Dict:
    if hasattr(item, "code"):
        return {"code": item.code, "message": item.message}
    return {"code": item.kind, "message": f"{','.join(item.systems)}: {item.detail}"}


if __name__ == "__main__":
    sys.exit(main())
