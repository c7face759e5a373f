"""
测试因果结构提取、对偶、规范化与维度约束
"""
import numpy as np
import pytest

from pkg.causal.causal import (CausalStructure, canonicalize, causal_structure_of, check_dimension_constraints,
                               dual, influence_table, isomorphism, specs_for, to_dot)
from pkg.errors.errors import NotUnitary, ParseError, UnknownLabel
from pkg.genlab.genlab import DUAL_BASES, catalog, gen_haar, gen_instance, named_example
from pkg.tensor.tensor import IOSpec, kron


@pytest.fixture
def ccc():
    """两个共享控制位的 CNOT"""
    return named_example("cnot_pair")


class TestCausalStructureOf:
    """由幺正提取因果结构"""

    def test_cnot_pair_has_ccc_structure(self, ccc):
        cs = causal_structure_of(*ccc)
        assert cs.pa("B1") == {"A1", "A2"}
        assert cs.pa("B2") == {"A1", "A2", "A3"}
        assert cs.pa("B3") == {"A2", "A3"}

    def test_swap(self):
        cs = causal_structure_of(*named_example("swap", dims=(2, 3)))
        assert cs.pa("B1") == {"A2"}
        assert cs.pa("B2") == {"A1"}

    def test_identity_has_singleton_parents(self):
        cs = causal_structure_of(*named_example("identity", n=3))
        assert all(cs.pa(f"B{i}") == {f"A{i}"} for i in range(1, 4))

    def test_haar_is_fully_connected(self):
        specs = IOSpec.of([("A1", 2), ("A2", 2)], [("B1", 2), ("B2", 2)])
        cs = causal_structure_of(gen_haar(4, seed=3), specs)
        assert cs.influence_matrix() == {(a, b): True for a in ("A1", "A2") for b in ("B1", "B2")}

    def test_non_unitary_rejected(self):
        specs = IOSpec.of([("A1", 2)], [("B1", 2)])
        with pytest.raises(NotUnitary):
            causal_structure_of(np.diag([1.0, 0.5]), specs)

    def test_influence_table_residuals(self, ccc):
        table = influence_table(*ccc)
        assert table["B1"]["A3"] < 1e-10
        assert table["B1"]["A1"] > 1e-3


class TestStructureOps:
    """结构运算"""

    def test_unknown_parent_rejected(self):
        with pytest.raises(UnknownLabel):
            CausalStructure.of(["A1"], ["B1"], {"B1": ["A2"]})

    def test_dual_is_involution(self, ccc):
        cs = causal_structure_of(*ccc)
        assert dual(dual(cs)) == cs
        assert dual(cs).pa("A1") == {"B1", "B2"}

    def test_dual_matches_adjoint(self, ccc):
        u, specs = ccc
        cs = causal_structure_of(u, specs)
        assert causal_structure_of(u.conj().T, specs.dagger()) == dual(cs)

    def test_canonical_encoding_ignores_labels(self):
        a = CausalStructure.of(["A1", "A2"], ["B1", "B2"], {"B1": ["A1"], "B2": ["A1", "A2"]})
        b = CausalStructure.of(["x", "y"], ["p", "q"], {"p": ["x", "y"], "q": ["y"]})
        assert canonicalize(a).encoding == canonicalize(b).encoding
        inputs, outputs = isomorphism(a, b)
        assert a.relabel(inputs, outputs).parents == b.parents

    def test_core_and_components(self):
        cs = CausalStructure.of(["A1", "A2", "A3"], ["B1", "B2", "B3"], {"B1": ["A1"], "B2": ["A2"], "B3": []})
        assert cs.core().inputs == ("A1", "A2")
        assert len(cs.core().components()) == 2

    def test_json_round_trip_and_errors(self, ccc):
        cs = causal_structure_of(*ccc)
        assert CausalStructure.from_json(cs.to_json()) == cs
        with pytest.raises(ParseError):
            CausalStructure.from_json({"outputs": ["B1"]})

    def test_dot_lists_edges(self, ccc):
        text = to_dot(causal_structure_of(*ccc))
        assert "A2" in text and "B3" in text


class TestDualityAcrossCatalog:
    """目录中每个类别：对偶为对合，且与共轭转置实例的因果结构一致"""

    @pytest.mark.parametrize("name", sorted(catalog()))
    def test_dual_is_involution(self, name):
        cs = catalog()[name].structure
        assert dual(dual(cs)) == cs

    @pytest.mark.parametrize("name", sorted(catalog()))
    def test_adjoint_instance_has_dual_structure(self, name):
        u, specs = gen_instance(name, seed=5)
        cs = causal_structure_of(u, specs)
        assert causal_structure_of(u.conj().T, specs.dagger()) == dual(cs)

    @pytest.mark.parametrize("name", sorted(DUAL_BASES))
    def test_dual_classes_match_base(self, name):
        base = catalog()[DUAL_BASES[name]].structure
        assert canonicalize(catalog()[name].structure).encoding == canonicalize(dual(base)).encoding


class TestDimensionConstraints:
    """维度约束"""

    ONE_WAY = CausalStructure.of(["A1", "A2"], ["B1", "B2"], {"B1": ["A1", "A2"], "B2": ["A2"]})

    def test_qubits_cannot_carry_one_way_signalling(self):
        specs = specs_for(self.ONE_WAY, {"A1": 2, "A2": 2, "B1": 2, "B2": 2})
        violations = check_dimension_constraints(self.ONE_WAY, specs)
        assert violations
        assert violations[0].to_json()["kind"] in ("bipartition_wire", "bipartition_divisibility")

    def test_feasible_dims(self):
        specs = specs_for(self.ONE_WAY, {"A1": 2, "A2": 4, "B1": 4, "B2": 2})
        assert check_dimension_constraints(self.ONE_WAY, specs) == []

    def test_global_dim_mismatch(self):
        specs = specs_for(self.ONE_WAY, {"A1": 2, "A2": 2, "B1": 2, "B2": 3})
        assert check_dimension_constraints(self.ONE_WAY, specs)[0].kind == "global_dim"

    def test_product_instance_satisfies_constraints(self):
        u = kron(gen_haar(2, seed=1), gen_haar(3, seed=2))
        specs = IOSpec.of([("A1", 2), ("A2", 3)], [("B1", 2), ("B2", 3)])
        assert check_dimension_constraints(causal_structure_of(u, specs), specs) == []
