"""
测试实例生成：Haar 幺正、指定结构的随机实例、模板配方、具名例子、维度求解与蛮力信号判定
"""
import numpy as np
import pytest

from pkg.causal.causal import causal_structure_of
from pkg.causal.classify import compact_structure
from pkg.errors.errors import DegenerateAfterRetries, DimensionMismatch, UnknownLabel
from pkg.genlab import genlab
from pkg.genlab.genlab import (STRUCTURES_33, GenSpec, catalog_structure, gen_from_structure, gen_haar, gen_instance,
                               named_example, realise_recipe, signalling_oracle, signals, solve_internal_dims)
from pkg.tensor.tensor import is_unitary

N2 = compact_structure({"B1": "12", "B2": "23"}, 3)


class TestHaar:
    """Haar 随机幺正"""

    def test_unitary(self):
        ok, residual = is_unitary(gen_haar(6, seed=1))
        assert ok, residual

    def test_deterministic_per_seed(self):
        assert np.array_equal(gen_haar(4, seed=7), gen_haar(4, seed=7))
        assert not np.allclose(gen_haar(4, seed=7), gen_haar(4, seed=8))

    def test_bad_dim(self):
        with pytest.raises(DimensionMismatch):
            gen_haar(0)


class TestFromStructure:
    """成对连线构造"""

    def test_hits_target_structure(self):
        u, specs = gen_from_structure(GenSpec.of(N2, seed=2))
        assert specs.inputs.dims == [2, 4, 2]
        assert causal_structure_of(u, specs) == N2

    def test_internal_dims(self):
        gs = GenSpec.of(N2, {("A2", "B1"): 3}, seed=3)
        assert gs.boundary_dims() == {"A1": 2, "A2": 6, "A3": 2, "B1": 6, "B2": 4}
        u, specs = gen_from_structure(gs)
        assert causal_structure_of(u, specs) == N2

    def test_internal_dims_must_name_pairs(self):
        with pytest.raises(UnknownLabel):
            gen_from_structure(GenSpec.of(N2, {("A1", "B2"): 2}))

    def test_degenerate_draws_give_up(self, monkeypatch):
        monkeypatch.setattr(genlab, "realise_circuit", lambda circuit, rng: named_example("identity", n=3))
        with pytest.raises(DegenerateAfterRetries):
            gen_from_structure(GenSpec.of(N2, seed=4))


class TestTemplates:
    """模板配方与类别实例"""

    def test_profile_dims(self):
        _, specs = realise_recipe("CCC", "wide", seed=5)
        assert specs.inputs.dim("A2") == 3

    def test_unknown_profile(self):
        with pytest.raises(UnknownLabel):
            realise_recipe("CCC", "huge")

    @pytest.mark.parametrize("tag", ["CCC", "Cyclic33", "T34", "DualT34", "Std44_3", "U44_4", "S33_15"])
    def test_instance_structure(self, tag):
        u, specs = gen_instance(tag, seed=6)
        assert causal_structure_of(u, specs) == catalog_structure(tag)

    def test_unknown_tag(self):
        with pytest.raises(UnknownLabel):
            gen_instance("S99")


class TestNamedExamples:
    """具名例子"""

    def test_cnot_pair_is_permutation(self):
        u, _ = named_example("cnot_pair")
        assert np.array_equal(np.abs(u) @ np.ones(8), np.ones(8))
        # |1,1,0⟩ → |0,1,1⟩
        assert u[3, 6] == 1

    def test_swap(self):
        u, specs = named_example("swap", dims=(2, 3))
        assert specs.outputs.dims == [3, 2]
        assert causal_structure_of(u, specs).parents["B1"] == frozenset(["A2"])

    def test_identity_and_product(self):
        u, _ = named_example("identity", n=3)
        assert np.array_equal(u, np.eye(8))
        u, specs = named_example("product", dims=[2, 3], seed=1)
        assert causal_structure_of(u, specs).parents == {"B1": frozenset(["A1"]), "B2": frozenset(["A2"])}

    def test_unknown(self):
        with pytest.raises(UnknownLabel):
            named_example("toffoli")


class TestSolveInternalDims:
    """内部维度求解"""

    def test_feasible(self):
        dims = {"A1": 2, "A2": 4, "A3": 2, "B1": 4, "B2": 4}
        assert solve_internal_dims(N2, dims) == {("A1", "B1"): 2, ("A2", "B1"): 2, ("A2", "B2"): 2,
                                                 ("A3", "B2"): 2}

    def test_infeasible(self):
        assert solve_internal_dims(N2, {"A1": 2, "A2": 2, "A3": 2, "B1": 4, "B2": 4}) is None

    def test_missing_dim(self):
        with pytest.raises(DimensionMismatch):
            solve_internal_dims(N2, {"A1": 2})


class TestOracle:
    """蛮力信号判定与影响判定一致"""

    def test_cnot_pair(self):
        u, specs = named_example("cnot_pair")
        assert signalling_oracle(u, specs, "A1", ["B3"], seed=1, states=40, sweep=4) < 1e-9
        assert signals(u, specs, "A2", ["B1"], seed=1)
        cs = causal_structure_of(u, specs)
        assert not cs.influences("A1", "B3")
        assert cs.influences("A2", "B1")

    def test_unknown_input(self):
        u, specs = named_example("swap")
        with pytest.raises(UnknownLabel):
            signalling_oracle(u, specs, "A9", ["B1"])


# 全部 (2,2) 与 (3,3) 目录成员
SMALL_CORPUS = ["Product22"] + sorted(STRUCTURES_33)


class TestOracleAcrossCorpus:
    """每个输入输出对上，蛮力信号判定与无影响判定一致"""

    @pytest.mark.parametrize("name", SMALL_CORPUS)
    def test_oracle_agrees_with_structure(self, name):
        u, specs = gen_instance(name, seed=13)
        cs = causal_structure_of(u, specs)
        for b in specs.outputs.labels:
            for a in specs.inputs.labels:
                distance = signalling_oracle(u, specs, a, [b], seed=17, states=24, sweep=4)
                if cs.influences(a, b):
                    assert distance > 1e-6, (a, b)
                else:
                    assert distance < 1e-9, (a, b)
