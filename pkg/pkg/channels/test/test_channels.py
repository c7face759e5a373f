"""
测试信道运算
CJ 算子、边缘信道、无影响判定、秩一恢复、Stinespring 完备化与残余幺正提取
"""
from functools import reduce

import numpy as np
import pytest

from pkg.causal.causal import causal_structure_of
from pkg.channels.channels import (CJOperator, cj_marginal_of_isometry, cj_of_unitary, extract_residual_unitary,
                                   influence_residuals, marginal, no_influence, pad_cj, stinespring,
                                   unitary_from_rank1_cj)
from pkg.errors.errors import NotAChannel, NotCompletable, NotFactorizable, NotUnitary, RankNotOne
from pkg.genlab.genlab import STRUCTURES_33, GenSpec, catalog_structure, gen_from_structure, gen_haar
from pkg.tensor.tensor import IOSpec, SystemSpec, kron, phase_aligned_distance

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
CNOT = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
QUBITS = IOSpec.of([("A1", 2), ("A2", 2)], [("B1", 2), ("B2", 2)])


class TestCJOperator:
    """CJ 算子"""

    def test_trace_and_rank(self):
        spec = SystemSpec.of([("A", 2)])
        rho = cj_of_unitary(H, spec, SystemSpec.of([("B", 2)]))
        assert np.isclose(np.trace(rho.matrix).real, 2.0)
        assert rho.rank() == 1
        assert rho.tp_residual() < 1e-12

    def test_non_unitary_rejected(self):
        spec = SystemSpec.of([("A", 2)])
        with pytest.raises(NotUnitary):
            cj_of_unitary(np.diag([1.0, 0.3]), spec, spec)

    def test_rank_one_recovers_unitary_up_to_phase(self):
        u = gen_haar(3, seed=7)
        spec = SystemSpec.of([("A", 3)])
        recovered = unitary_from_rank1_cj(cj_of_unitary(u, spec, SystemSpec.of([("B", 3)])))
        assert phase_aligned_distance(recovered, u) < 1e-9

    def test_rank_two_rejected(self):
        spec = SystemSpec.of([("A", 2)])
        rho = cj_of_unitary(H, spec, SystemSpec.of([("B", 2)]))
        mixed = CJOperator(0.5 * rho.matrix + 0.5 * np.eye(4) / 2, rho.out_spec, rho.in_spec)
        with pytest.raises(RankNotOne):
            unitary_from_rank1_cj(mixed)


class TestInfluence:
    """无影响判定"""

    def test_swap_influence_pattern(self):
        assert no_influence(SWAP, QUBITS, "A1", ["B1"])[0]
        assert not no_influence(SWAP, QUBITS, "A1", ["B2"])[0]

    def test_cnot_has_full_influence(self):
        # 相位回踢：目标位也影响控制位输出
        residuals = influence_residuals(CNOT, QUBITS, ["B1"])
        assert residuals["A1"] > 0.1
        assert residuals["A2"] > 0.1

    def test_product_has_no_cross_influence(self):
        u = kron(gen_haar(2, seed=1), gen_haar(2, seed=2))
        residuals = influence_residuals(u, QUBITS, ["B2"])
        assert residuals["A1"] < 1e-10
        assert residuals["A2"] > 0.1


class TestMarginal:
    """边缘信道"""

    def test_marginal_of_product_is_factor(self):
        v = gen_haar(2, seed=3)
        u = kron(v, gen_haar(2, seed=4))
        rho = cj_marginal_of_isometry(u, QUBITS, ["B1"], ["A1"])
        assert rho.rank() == 1
        assert phase_aligned_distance(unitary_from_rank1_cj(rho), v) < 1e-9

    def test_marginal_agrees_with_full_cj(self):
        u = kron(gen_haar(2, seed=5), gen_haar(2, seed=6))
        full = cj_of_unitary(u, QUBITS.inputs, QUBITS.outputs)
        direct = cj_marginal_of_isometry(u, QUBITS, ["B2"], ["A2"])
        assert np.allclose(marginal(full, ["B2"], ["A2"]).matrix, direct.matrix)

    def test_dropping_influencing_input_fails(self):
        with pytest.raises(NotAChannel):
            cj_marginal_of_isometry(SWAP, QUBITS, ["B2"], ["A2"])


class TestStinespring:
    """Stinespring 扩张"""

    def test_completion_to_unitary(self):
        u = gen_haar(4, seed=11)
        rho = cj_marginal_of_isometry(u, QUBITS, ["B1"], ["A1", "A2"])
        result = stinespring(rho, require_unitary=True)
        assert result.is_unitary
        assert result.env_dim == 2

    def test_isometry_reproduces_channel(self):
        u = gen_haar(4, seed=12)
        rho = cj_marginal_of_isometry(u, QUBITS, ["B1"], ["A1", "A2"])
        v = stinespring(rho).isometry
        rebuilt = cj_marginal_of_isometry(v, IOSpec.of([("X", 4)], [("B1", 2), ("F", v.shape[0] // 2)]),
                                          ["B1"], ["X"])
        assert np.allclose(rebuilt.matrix, rho.matrix, atol=1e-9)

    def test_depolarising_channel_not_completable(self):
        rho = CJOperator(np.eye(4, dtype=complex) / 2, SystemSpec.of([("Y", 2)]), SystemSpec.of([("X", 2)]))
        with pytest.raises(NotCompletable):
            stinespring(rho, require_unitary=True)


class TestResidualUnitary:
    """残余幺正提取"""

    def test_extracts_local_factor(self):
        t = gen_haar(2, seed=21)
        u_tilde = gen_haar(4, seed=22)
        u = kron(np.eye(2), t) @ u_tilde
        shared = SystemSpec.of([("S", 2)])
        assert np.allclose(extract_residual_unitary(u, u_tilde, shared, 2, 2), t)

    def test_non_local_factor_rejected(self):
        u_tilde = np.eye(4, dtype=complex)
        u = kron(gen_haar(2, seed=23), np.eye(2))
        with pytest.raises(NotFactorizable):
            extract_residual_unitary(u, u_tilde, SystemSpec.of([("S", 2)]), 2, 2)


def _edges(name: str) -> int:
    cs = catalog_structure(name)
    return sum(len(cs.parents[b]) for b in cs.outputs)


# 成对连线构造下总维度为 2^边数，CJ 稠密计算只取边数 ≤ 5 的成员
CORPUS = [name for name in list(STRUCTURES_33) + ["N2", "K2", "Product22"] if _edges(name) <= 5]


def _padded_marginals(u, specs, full=None):
    """各输出对其父集的边缘信道；给出 full 时在 CJ 层面求边缘"""
    cs = causal_structure_of(u, specs)
    if full is None:
        margs = [cj_marginal_of_isometry(u, specs, [b], cs.parents[b]) for b in specs.outputs.labels]
    else:
        margs = [marginal(full, [b], cs.parents[b]) for b in specs.outputs.labels]
    return [pad_cj(rho, specs.outputs, specs.inputs) for rho in margs]


class TestMarginalFactorisation:
    """结构化幺正：各输出边缘信道补齐后两两对易，乘积还原整体 CJ 算子"""

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("name", CORPUS)
    def test_product_of_marginals(self, name, seed):
        u, specs = gen_from_structure(GenSpec.of(catalog_structure(name), seed=seed))
        full = cj_of_unitary(u, specs.inputs, specs.outputs)
        product = reduce(np.matmul, _padded_marginals(u, specs, full))
        assert np.linalg.norm(product - full.matrix) <= 1e-8 * np.linalg.norm(full.matrix)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("name", CORPUS)
    def test_marginals_commute(self, name, seed):
        u, specs = gen_from_structure(GenSpec.of(catalog_structure(name), seed=seed))
        padded = _padded_marginals(u, specs)
        for i in range(len(padded)):
            for k in range(i + 1, len(padded)):
                comm = padded[i] @ padded[k] - padded[k] @ padded[i]
                bound = np.linalg.norm(padded[i]) * np.linalg.norm(padded[k])
                assert np.linalg.norm(comm) <= 1e-8 * bound
