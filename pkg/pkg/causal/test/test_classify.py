"""
测试因果结构分类
目录中每个结构的顶层方案、约化子结构与不支持结构的诚实报告
"""
import pytest

from pkg.causal.causal import CausalStructure, dual
from pkg.causal.classify import (PRODUCT, REDUCE, TEMPLATES, TRIVIAL,
                                 UNSUPPORTED, classify, compact_structure, find_reduction, is_linear,
                                 match_template, reduce_child)
from pkg.genlab.genlab import STRUCTURES_33, STRUCTURES_44, catalog


class TestCatalog:
    """目录结构的分类"""

    @pytest.mark.parametrize("name", sorted(catalog()))
    def test_top_level_tag(self, name):
        entry = catalog()[name]
        assert classify(entry.structure).tag == entry.tag

    def test_all_33_structures_supported(self):
        assert len(STRUCTURES_33) == 17
        for entry in STRUCTURES_33.values():
            assert classify(entry.structure).supported

    def test_unsupported_44_structures(self):
        unsupported = [name for name, entry in STRUCTURES_44.items() if not classify(entry.structure).supported]
        assert sorted(unsupported) == [f"U44_{i}" for i in range(1, 7)]

    def test_unsupported_plan_echoes_structure(self):
        plan = classify(STRUCTURES_44["U44_1"].structure)
        assert plan.tag == UNSUPPORTED
        assert plan.to_json()["params"]["structure"]["parents"]["B4"] == ["A1", "A2", "A3", "A4"]


class TestRules:
    """约化规则与模板匹配"""

    def test_r1_on_single_parent_output(self):
        cs = compact_structure({"B1": "12", "B2": "2"}, 2)
        rule, witness = find_reduction(cs)
        assert (rule, witness) == ("R1", ("B2", "A2"))
        child = reduce_child(cs, rule, witness, link="X")
        assert child.inputs == ("A1", "X")
        assert child.outputs == ("B1",)

    def test_r3_merges_outputs_with_equal_parents(self):
        cs = compact_structure({"B1": "12", "B2": "12", "B3": "123"}, 3)
        child = reduce_child(cs, "R3", ("B1", "B2"), link="M")
        assert child.outputs == ("M", "B3")
        assert child.pa("M") == {"A1", "A2"}

    def test_r2_drops_input_and_relabels_output(self):
        cs = compact_structure({"B1": "12", "B2": "23"}, 3)
        child = reduce_child(cs, "R2", ("A1", "B1"), link="Y")
        assert child.inputs == ("A2", "A3")
        assert child.pa("Y") == {"A2"}

    def test_template_match_under_relabelling(self):
        ccc = TEMPLATES["CCC"].relabel({"A1": "a", "A2": "b", "A3": "c"}, {"B1": "x", "B2": "y", "B3": "z"})
        name, roles = match_template(ccc)
        assert name == "CCC"
        assert roles["A2"] == "b"

    def test_linear_structures(self):
        assert is_linear(TEMPLATES["Std44_1"])
        assert not is_linear(TEMPLATES["CCC"])

    def test_trivial_and_product(self):
        full = compact_structure({"B1": "12", "B2": "12"}, 2)
        assert classify(full).tag == TRIVIAL
        identity = compact_structure({"B1": "1", "B2": "2"}, 2)
        plan = classify(identity)
        assert plan.tag == PRODUCT
        assert [p.tag for p in plan.sub_plans] == [TRIVIAL, TRIVIAL]

    def test_reduction_chain_ends_in_supported_plan(self):
        plan = classify(STRUCTURES_33["S33_15"].structure)
        assert plan.tag == REDUCE
        assert plan.supported
        assert UNSUPPORTED not in plan.tags()

    def test_dual_of_unsupported_is_unsupported(self):
        for i in range(1, 7):
            assert not classify(dual(STRUCTURES_44[f"U44_{i}"].structure)).supported

    def test_stripped_systems_recorded(self):
        cs = CausalStructure.of(["A1", "A2", "A3"], ["B1", "B2"], {"B1": ["A1", "A2"], "B2": ["A1", "A2"]})
        plan = classify(cs)
        assert plan.params["stripped_inputs"] == ["A3"]
