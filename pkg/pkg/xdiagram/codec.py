"""
线路图编解码
xdiagram/1 JSON 与 DOT 连接图导出
"""
import json
import os
from typing import Dict

from jinja2 import Environment, FileSystemLoader

from pkg.conf.conf import resolve_path, section
from pkg.errors.errors import ParseError
from pkg.tensor.tensor import canonical_dumps, from_cmatrix, to_cmatrix
from pkg.xdiagram.xdiagram import IndexVar, XDiagram, XNode, XWire

XDIAGRAM_FORMAT = "xdiagram/1"

_jinja_env = Environment(loader=FileSystemLoader(
    os.path.join(resolve_path(section("templates").get("path", "data/templates/")), "dot")))


def to_json(d: XDiagram) -> Dict:
    """线路图 → xdiagram/1 字典"""
    return {
        "format": XDIAGRAM_FORMAT,
        "index_vars": [
            {"name": v.name, "parent": v.parent,
             "sizes": dict(v.sizes) if isinstance(v.sizes, dict) else int(v.sizes)}
            for v in d.index_vars
        ],
        "wires": [
            {"id": w.id, "indices": list(w.indices), "dim_table": {k: int(x) for k, x in w.dims.items()}}
            for w in d.wires.values()
        ],
        "nodes": [
            {"name": n.name, "indices": list(n.indices), "in": list(n.in_wires), "out": list(n.out_wires),
             "matrices": {k: to_cmatrix(m) for k, m in n.matrices.items()}}
            for n in d.nodes.values()
        ],
        "layers": [list(layer) for layer in d.layers],
        "boundary_in": list(d.boundary_in),
        "boundary_out": list(d.boundary_out),
    }


def from_json(obj: Dict) -> XDiagram:
    """
    xdiagram/1 字典 → 线路图（不做语义校验，见 validate）

    Raises:
        ParseError: 字段缺失或类型错误
    """
    if not isinstance(obj, dict):
        raise ParseError("xdiagram 文档必须是 JSON 对象")
    if obj.get("format", XDIAGRAM_FORMAT) != XDIAGRAM_FORMAT:
        raise ParseError(f"不支持的线路图格式: {obj.get('format')}")
    try:
        index_vars = [
            IndexVar(str(v["name"]),
                     {str(k): int(x) for k, x in v["sizes"].items()} if isinstance(v["sizes"], dict) else int(v["sizes"]),
                     v.get("parent"))
            for v in obj.get("index_vars", [])
        ]
        wires = {}
        for w in obj["wires"]:
            wires[str(w["id"])] = XWire(str(w["id"]), tuple(w.get("indices", [])),
                                        {str(k): int(x) for k, x in w["dim_table"].items()})
        nodes = {}
        for n in obj["nodes"]:
            nodes[str(n["name"])] = XNode(str(n["name"]), tuple(n.get("indices", [])),
                                          [str(x) for x in n["in"]], [str(x) for x in n["out"]],
                                          {str(k): from_cmatrix(m) for k, m in n["matrices"].items()})
        return XDiagram(index_vars, wires, nodes, [[str(x) for x in layer] for layer in obj["layers"]],
                        [str(x) for x in obj["boundary_in"]], [str(x) for x in obj["boundary_out"]])
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ParseError(f"xdiagram 文档格式错误: {e}")


def dumps(d: XDiagram) -> str:
    return canonical_dumps(to_json(d))


def loads(text: str) -> XDiagram:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"JSON 解析失败: {e}")
    return from_json(obj)


def to_dot(d: XDiagram) -> str:
    """节点为方框、边界连线为点，边标注连线名及其指标"""
    template = _jinja_env.get_template("xdiagram.dot.j2")
    producers = {w: n.name for n in d.nodes.values() for w in n.out_wires}
    consumers = {w: n.name for n in d.nodes.values() for w in n.in_wires}
    edges = []
    for w in d.wires.values():
        src = producers.get(w.id, f"in:{w.id}")
        dst = consumers.get(w.id, f"out:{w.id}")
        label = w.id + (f"[{','.join(w.indices)}]" if w.indices else "")
        edges.append((src, dst, label))
    return template.render(nodes=list(d.nodes), layers=d.layers,
                           inputs=[f"in:{w}" for w in d.boundary_in],
                           outputs=[f"out:{w}" for w in d.boundary_out], edges=edges)
