"""
测试因果忠实分解
具名例子、各合成类的随机实例、约化/二分/对偶入口、不支持结构的诚实报告与梳状重连

缺省每类跑 3 个种子；完整目录（每类 20 个实例）较慢，设置 CAUSAL_FULL_CATALOG=1 时运行
"""
import math
import os

import numpy as np
import pytest

from pkg.causal.classify import UNSUPPORTED
from pkg.conf.conf import get_numerics
from pkg.errors.errors import DimensionMismatch, NotUnitary, NoValidOrdering, UnknownLabel, WitnessMissing
from pkg.genlab.genlab import catalog, gen_haar, gen_instance, named_example
from pkg.synth.comb import comb_rewire
from pkg.synth.synth import (OK, UNSUPPORTED_STATUS, synth, synth_bipartition, synth_ccc, synth_reduced,
                             synth_t34)
from pkg.tensor.tensor import IOSpec, phase_aligned_distance
from pkg.xdiagram.xdiagram import evaluate_as, paths, validate

FULL = os.getenv("CAUSAL_FULL_CATALOG") == "1"
SEEDS = list(range(20)) if FULL else [3, 11, 17]
SUPPORTED = sorted(name for name, entry in catalog().items() if entry.tag != UNSUPPORTED)
UNSOLVED = sorted(name for name, entry in catalog().items() if entry.tag == UNSUPPORTED)

def assert_faithful(result, u, specs):
    assert result.status == OK
    assert result.faithful, result.witnesses
    assert validate(result.diagram) == []
    limit = get_numerics().verify_tol * max(1.0, math.sqrt(u.shape[0]))
    assert phase_aligned_distance(evaluate_as(result.diagram, specs), u) <= limit

class TestNamedExamples:
    """具名例子"""

    def test_cnot_pair(self):
        u, specs = named_example("cnot_pair")
        result = synth(u, specs, seed=1)
        assert result.plan.tag == "CCC"
        assert result.residual <= 1e-10
        assert_faithful(result, u, specs)
        assert result.gauge_report[0]["blocks"][""] == [[1, 1], [1, 1]]

    def test_haar_two_qubits_is_single_box(self):
        specs = IOSpec.of([("A1", 2), ("A2", 2)], [("B1", 2), ("B2", 2)])
        u = gen_haar(4, seed=2)
        result = synth(u, specs)
        assert len(result.diagram.nodes) == 1
        assert_faithful(result, u, specs)

    def test_swap(self):
        u, specs = named_example("swap", dims=(2, 3))
        assert_faithful(synth(u, specs), u, specs)

    def test_product(self):
        u, specs = named_example("product", dims=[2, 3, 2], seed=3)
        result = synth(u, specs)
        assert result.plan.tag == "Product"
        assert_faithful(result, u, specs)

    def test_trivial_system_reattached(self):
        u = gen_haar(4, seed=4)
        specs = IOSpec.of([("A0", 1), ("A1", 2), ("A2", 2)], [("B1", 2), ("B2", 2)])
        result = synth(u, specs)
        assert_faithful(result, u, specs)
        assert not any(v for (a, _), v in paths(result.diagram).items() if a == "A0")

class TestCatalog:
    """各合成类的随机实例"""

    @pytest.mark.parametrize("seed", SEEDS)
    @pytest.mark.parametrize("tag", SUPPORTED)
    def test_supported_class_is_faithful(self, tag, seed):
        u, specs = gen_instance(tag, seed=seed)
        result = synth(u, specs, seed=seed)
        assert_faithful(result, u, specs)

    @pytest.mark.parametrize("tag", UNSOLVED)
    def test_unsolved_class_reports_unsupported(self, tag):
        u, specs = gen_instance(tag, seed=5)
        result = synth(u, specs)
        assert result.status == UNSUPPORTED_STATUS
        assert result.diagram is None
        assert result.structure == catalog()[tag].structure

    @pytest.mark.parametrize("profile", ["wide", "single"])
    def test_ccc_profiles(self, profile):
        u, specs = gen_instance("CCC", seed=6, profile=profile)
        assert_faithful(synth_ccc(u, specs, seed=6), u, specs)

    def test_dual_template(self):
        u, specs = gen_instance("T34", seed=7)
        result = synth(u.conj().T, specs.dagger(), seed=7)
        assert result.plan.tag == "DualT34"
        assert_faithful(result, u.conj().T, specs.dagger())

class TestEntryPoints:
    """独立入口与前置条件"""

    def test_template_mismatch(self):
        u, specs = named_example("cnot_pair")
        with pytest.raises(WitnessMissing):
            synth_t34(u, specs)

    def test_not_unitary(self):
        specs = IOSpec.of([("A1", 2)], [("B1", 2)])
        with pytest.raises(NotUnitary):
            synth(np.diag([1.0, 0.2]), specs)

    def test_overlapping_labels(self):
        specs = IOSpec.of([("A", 2), ("B", 2)], [("A", 2), ("C", 2)])
        with pytest.raises(UnknownLabel):
            synth(np.eye(4), specs)

    def test_reduce_without_witness(self):
        specs = IOSpec.of([("A1", 2), ("A2", 2)], [("B1", 2), ("B2", 2)])
        with pytest.raises(WitnessMissing):
            synth_reduced(gen_haar(4, seed=8), specs, "R1")

    def test_r2_reduction(self):
        u, specs = gen_instance("N2", seed=9)
        assert_faithful(synth_reduced(u, specs, "R2", ("A1", "B1"), seed=9), u, specs)

    def test_bipartition(self):
        u, specs = gen_instance("N2", seed=10)
        result = synth_bipartition(u, specs, ["B1"], seed=10)
        assert result.plan.params["C"] == ("A2",)
        assert_faithful(result, u, specs)

    def test_bipartition_rejects_bad_parts(self):
        u, specs = gen_instance("N2", seed=12)
        with pytest.raises(WitnessMissing):
            synth_bipartition(u, specs, ["B1"], c=[], p_s=["A1", "A2"], p_s_bar=["A3"])

class TestComb:
    """梳状重连"""

    def test_open_ports_keep_no_path_relations(self):
        u, specs = named_example("cnot_pair")
        comb = comb_rewire(u, specs, [("B1", "A3")], seed=13)
        assert comb.faithful
        assert comb.order == [("B1", "A3")]
        assert ("A1", "B3") in comb.relations
        assert comb.slots == [{"node": "N1", "in_port": "B1", "out_port": "A3"}]

    def test_signalling_node_has_no_order(self):
        u, specs = named_example("cnot_pair")
        with pytest.raises(NoValidOrdering):
            comb_rewire(u, specs, [("B3", "A3")])

    def test_port_dims_must_match(self):
        u, specs = named_example("swap", dims=(2, 3))
        with pytest.raises(DimensionMismatch):
            comb_rewire(u, specs, [("B1", "A1")])
