"""
测试扩展线路图：校验、求值、路径、忠实性、共轭转置与 xdiagram/1 编解码
"""
import json

import numpy as np
import pytest

from pkg.errors.errors import InvalidDiagram, ParseError
from pkg.genlab.genlab import gen_haar, named_example
from pkg.tensor.tensor import IOSpec
from pkg.xdiagram import codec
from pkg.xdiagram.xdiagram import (DiagramBuilder, dagger, evaluate, evaluate_as, is_causally_faithful, paths,
                                   single_node, validate)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)


def cnot_pair_diagram():
    """控制位按取值 i 劈成两个一维块，两侧按 i 作用 X^i，最后把 i 写回 B2"""
    b = DiagramBuilder()
    b.add_index("i", 2)
    for w in ("A1", "A2", "A3", "B1", "B2", "B3"):
        b.add_wire(w, 2)
    for w in ("XL", "XR", "YL", "YR"):
        b.add_wire(w, 1, ["i"])
    b.add_node("S", ["A2"], ["XL", "XR"], {"0": np.array([[1, 0]]), "1": np.array([[0, 1]])})
    b.add_node("V", ["A1", "XL"], ["B1", "YL"], {"0": I2, "1": X})
    b.add_node("W", ["XR", "A3"], ["YR", "B3"], {"0": I2, "1": X})
    b.add_node("T", ["YL", "YR"], ["B2"], {"0": np.array([[1], [0]]), "1": np.array([[0], [1]])})
    b.set_boundary(["A1", "A2", "A3"], ["B1", "B2", "B3"])
    return b.build()


@pytest.fixture
def diagram():
    return cnot_pair_diagram()


@pytest.fixture
def ccc():
    return named_example("cnot_pair")


class TestValidate:
    """校验"""

    def test_valid(self, diagram):
        assert validate(diagram) == []
        assert diagram.layers == [["S"], ["V", "W"], ["T"]]

    def test_tampered_wire_dim(self, diagram):
        diagram.wires["XL"].dims["0"] = 2
        codes = [d.code for d in validate(diagram)]
        assert "DimMismatch" in codes

    def test_unconsumed_wire(self, diagram):
        obj = codec.to_json(diagram)
        obj["boundary_out"] = ["B1", "B3"]
        codes = [d.code for d in validate(codec.from_json(obj))]
        assert "WireNotConsumed" in codes

    def test_non_unitary_node(self, diagram):
        diagram.nodes["V"].matrices["1"] = 2 * X
        assert [d.code for d in validate(diagram)] == ["NotUnitary"]

    def test_evaluate_rejects_invalid(self, diagram):
        diagram.wires["XL"].dims["0"] = 2
        with pytest.raises(InvalidDiagram) as err:
            evaluate(diagram)
        assert err.value.diagnostics


class TestEvaluate:
    """求值与路径"""

    def test_reproduces_cnot_pair(self, diagram, ccc):
        u, _ = ccc
        assert np.allclose(evaluate(diagram), u)

    def test_paths(self, diagram):
        reach = paths(diagram)
        assert reach[("A1", "B2")]
        assert not reach[("A1", "B3")]
        assert not reach[("A3", "B1")]
        assert all(reach[("A2", b)] for b in ("B1", "B2", "B3"))

    def test_faithful(self, diagram, ccc):
        faithful, witnesses = is_causally_faithful(diagram, *ccc)
        assert faithful and witnesses == []

    def test_single_box_is_not_faithful(self, ccc):
        faithful, witnesses = is_causally_faithful(single_node(*ccc), *ccc)
        assert not faithful
        assert {"input": "A1", "output": "B3", "path": True, "influence": False} in witnesses

    def test_wrong_unitary_rejected(self, diagram, ccc):
        _, specs = ccc
        with pytest.raises(InvalidDiagram):
            is_causally_faithful(diagram, gen_haar(8, seed=1), specs)

    def test_dagger(self, diagram, ccc):
        u, _ = ccc
        assert np.allclose(evaluate(dagger(diagram)), u.conj().T)

    def test_evaluate_as_reorders_systems(self):
        u = gen_haar(6, seed=2)
        specs = IOSpec.of([("A1", 2), ("A2", 3)], [("B1", 3), ("B2", 2)])
        d = single_node(u, specs)
        assert np.allclose(evaluate_as(d, specs), u)


class TestCodec:
    """xdiagram/1 编解码"""

    def test_loads_dumps_preserves_semantics(self, diagram, ccc):
        text = codec.dumps(diagram)
        assert json.loads(text)["format"] == "xdiagram/1"
        assert np.allclose(evaluate(codec.loads(text)), ccc[0])
        assert codec.dumps(codec.loads(text)) == text

    def test_missing_field(self):
        with pytest.raises(ParseError):
            codec.from_json({"format": "xdiagram/1", "nodes": []})

    def test_bad_json(self):
        with pytest.raises(ParseError):
            codec.loads("{not json")

    def test_dot_export(self, diagram):
        text = codec.to_dot(diagram)
        assert text.startswith("digraph")
        assert "XL[i]" in text
