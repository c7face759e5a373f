"""
测试 *-代数闭包、Wedderburn 块分解与劈分
"""
import numpy as np
import pytest

from pkg.algebra.algebra import (StarAlgebra, algebra_center, algebra_closure, split_factors, split_multi,
                                 split_nested, split_pair, wedderburn)
from pkg.channels.channels import cj_marginal_of_isometry
from pkg.errors.errors import CommutantViolation, NotAnAlgebra
from pkg.genlab.genlab import gen_haar, named_example
from pkg.tensor.tensor import IOSpec, kron

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)


def _direct_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0],) * 2, dtype=complex)
    out[:a.shape[0], :a.shape[0]] = a
    out[a.shape[0]:, a.shape[0]:] = b
    return out


def _is_unitary(s: np.ndarray) -> bool:
    return np.allclose(s @ s.conj().T, np.eye(s.shape[0]), atol=1e-9)


class TestClosure:
    """代数闭包与中心"""

    def test_single_pauli(self):
        alg = algebra_closure([X], 2)
        assert alg.dimension == 2

    def test_full_matrix_factor(self):
        alg = algebra_closure([kron(X, I2), kron(Z, I2)], 4)
        assert alg.dimension == 4
        assert len(algebra_center(alg)) == 1

    def test_direct_sum_has_two_dim_center(self):
        alg = algebra_closure([_direct_sum(X, np.zeros((1, 1))), _direct_sum(Z, np.zeros((1, 1)))], 3)
        assert alg.dimension == 5
        assert len(algebra_center(alg)) == 2


class TestWedderburn:
    """Wedderburn 块分解"""

    def test_direct_sum_blocks(self):
        alg = algebra_closure([_direct_sum(X, np.zeros((1, 1))), _direct_sum(Z, np.zeros((1, 1)))], 3)
        split = wedderburn(alg, seed=1)
        assert split.blocks == [(1, 1), (2, 1)]
        assert _is_unitary(split.s)

    def test_tensor_factor_multiplicity(self):
        split = wedderburn(algebra_closure([kron(X, I2), kron(Z, I2)], 4), seed=2)
        assert split.blocks == [(2, 2)]
        assert _is_unitary(split.s)

    def test_non_closed_basis_rejected(self):
        alg = StarAlgebra(2, [I2 / np.sqrt(2), X / np.sqrt(2), Z / np.sqrt(2)])
        with pytest.raises(NotAnAlgebra):
            wedderburn(alg, seed=3)


class TestCommutativeAlgebra:
    """交换代数：对易子只剩舍入噪声，整个代数都是中心"""

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_rotated_diagonal_center(self, seed):
        u = gen_haar(2, seed=seed)
        alg = algebra_closure([u @ Z @ u.conj().T], 2)
        assert alg.dimension == 2
        assert len(algebra_center(alg)) == 2

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_rotated_diagonal_blocks(self, seed):
        u = gen_haar(2, seed=seed)
        split = wedderburn(algebra_closure([u @ Z @ u.conj().T], 2), seed=seed)
        assert split.blocks == [(1, 1), (1, 1)]
        assert _is_unitary(split.s)

    def test_classical_factor_with_multiplicity(self):
        u = gen_haar(2, seed=7)
        split = wedderburn(algebra_closure([kron(u @ Z @ u.conj().T, I2)], 4), seed=7)
        assert split.blocks == [(1, 2), (1, 2)]

    def test_classical_first_group(self):
        u = gen_haar(2, seed=8)
        control = kron(u @ Z @ u.conj().T, I2)
        split = split_factors([[control], [kron(I2, X), kron(I2, Z)]], 4, seed=8)
        assert split.blocks == [(1, 2), (1, 2)]

    def test_empty_basis_center_is_identity(self):
        center = algebra_center(StarAlgebra(3, []))
        assert len(center) == 1
        assert np.allclose(center[0], np.eye(3) / np.sqrt(3))


class TestSplitFactors:
    """多组算子的公共块分解"""

    def test_two_commuting_factors(self):
        split = split_factors([[kron(X, I2), kron(Z, I2)], [kron(I2, X), kron(I2, Z)]], 4, seed=4)
        assert split.blocks == [(2, 2)]
        assert _is_unitary(split.s)

    def test_non_commuting_group_rejected(self):
        with pytest.raises(CommutantViolation):
            split_factors([[kron(X, I2), kron(Z, I2)], [kron(Z, I2)]], 4, seed=5)


class TestSplitPair:
    """共享控制位的两个边缘信道"""

    def test_cnot_pair_splits_into_two_classical_blocks(self):
        u, specs = named_example("cnot_pair")
        rho1 = cj_marginal_of_isometry(u, specs, ["B1"], ["A1", "A2"])
        rho3 = cj_marginal_of_isometry(u, specs, ["B3"], ["A2", "A3"])
        result = split_pair(rho1, rho3, "A2", seed=6)
        assert result.split.blocks == [(1, 1), (1, 1)]
        assert _is_unitary(result.split.s)
        assert len(result.left_channels) == len(result.right_channels) == 2
        for rho in result.left_channels + result.right_channels:
            assert rho.rank() == 1


def _isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    return gen_haar(d_out, seed=rng)[:, :d_in]


def _recorded(iso: np.ndarray, record: int, n_record: int) -> np.ndarray:
    """在末尾追加一个记录块编号的环境寄存器，使不同块的输出正交"""
    out = np.zeros((iso.shape[0], n_record, iso.shape[1]), dtype=complex)
    out[:, record, :] = iso
    return out.reshape(iso.shape[0] * n_record, iso.shape[1])


def _random_blocks(rng: np.random.Generator, choices, max_blocks: int, max_dim: int):
    while True:
        count = int(rng.integers(1, max_blocks + 1))
        blocks = [choices[k] for k in rng.integers(0, len(choices), size=count)]
        total = sum(int(np.prod(b)) for b in blocks)
        if 2 <= total <= max_dim:
            return blocks, total


PAIR_CHOICES = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]
NESTED_CHOICES = [(1, 1), (1, 2), (2, 1)]
MULTI_CHOICES = [(1, 1, 2), (1, 2, 1), (2, 1, 1), (2, 2, 1), (1, 2, 2), (1, 1, 1)]


def _pair_instance(seed: int):
    """D → ⊕_i X_i^L ⊗ X_i^R，左因子送 A，右因子送 B"""
    rng = np.random.default_rng(seed)
    blocks, d = _random_blocks(rng, PAIR_CHOICES, 3, 9)
    s = gen_haar(d, seed=rng)
    specs = IOSpec.of([("D", d)], [("A", 3), ("F1", 2), ("K", 3), ("B", 3), ("F2", 2)])
    j = np.zeros((specs.outputs.total_dim, d), dtype=complex)
    offset = 0
    for i, (dl, dr) in enumerate(blocks):
        v = _recorded(_isometry(dl, 6, rng), i, 3)
        w = _isometry(dr, 6, rng)
        j += kron(v, w) @ s[offset:offset + dl * dr]
        offset += dl * dr
    rho1 = cj_marginal_of_isometry(j, specs, ["A"], ["D"])
    rho2 = cj_marginal_of_isometry(j, specs, ["B"], ["D"])
    return rho1, rho2, blocks


def _multi_instance(seed: int):
    """H → ⊕_i X_i^0 ⊗ X_i^1 ⊗ X_i^2，第 t 个因子送 O_t"""
    rng = np.random.default_rng(seed)
    blocks, d = _random_blocks(rng, MULTI_CHOICES, 2, 12)
    s = gen_haar(d, seed=rng)
    specs = IOSpec.of([("H", d)], [("O0", 2), ("F0", 2), ("K", 2), ("O1", 2), ("F1", 2), ("O2", 2), ("F2", 2)])
    j = np.zeros((specs.outputs.total_dim, d), dtype=complex)
    offset = 0
    for i, dims in enumerate(blocks):
        maps = [_recorded(_isometry(dims[0], 4, rng), i, 2)] + [_isometry(x, 4, rng) for x in dims[1:]]
        size = int(np.prod(dims))
        j += kron(*maps) @ s[offset:offset + size]
        offset += size
    ops = [cj_marginal_of_isometry(j, specs, [f"O{t}"], ["H"]) for t in range(3)]
    return ops, blocks


def _nested_instance(seed: int):
    """
    A1 → ⊕_i X_i^L ⊗ X_i^R，A2 → ⊕_j Y_j^L ⊗ Y_j^R；
    O1 读 X^L，O2 读 X^R ⊗ Y^L，O3 只读 Y^R
    """
    rng = np.random.default_rng(seed)
    outer, d1 = _random_blocks(rng, NESTED_CHOICES, 2, 4)
    inner, d2 = _random_blocks(rng, NESTED_CHOICES, 2, 4)
    s1, s2 = gen_haar(d1, seed=rng), gen_haar(d2, seed=rng)
    specs = IOSpec.of([("A1", d1), ("A2", d2)],
                      [("O1", 2), ("F1", 2), ("K1", 2), ("O2", 4), ("F2", 2), ("K2", 2), ("O3", 2), ("F3", 2)])
    tails = [_isometry(q, 4, rng) for _, q in inner]
    j = np.zeros((specs.outputs.total_dim, d1 * d2), dtype=complex)
    off1 = 0
    for i, (dl, dr) in enumerate(outer):
        v = _recorded(_isometry(dl, 4, rng), i, 2)
        off2 = 0
        for k, (p, q) in enumerate(inner):
            w = _recorded(_isometry(dr * p, 8, rng), k, 2)
            rows = kron(s1[off1:off1 + dl * dr], s2[off2:off2 + p * q])
            j += kron(v, w, tails[k]) @ rows
            off2 += p * q
        off1 += dl * dr
    rho1 = cj_marginal_of_isometry(j, specs, ["O1"], ["A1"])
    rho2 = cj_marginal_of_isometry(j, specs, ["O2"], ["A1", "A2"])
    rho3 = cj_marginal_of_isometry(j, specs, ["O3"], ["A2"])
    return (rho1, rho2, rho3), outer, inner


class TestConstructedBlocks:
    """已知块结构的构造实例：劈分恢复出的块维度多重集与构造一致"""

    @pytest.mark.parametrize("seed", range(30))
    def test_pair_recovers_blocks(self, seed):
        rho1, rho2, blocks = _pair_instance(seed)
        result = split_pair(rho1, rho2, "D", seed=seed)
        assert sorted(result.split.blocks) == sorted(blocks)
        assert _is_unitary(result.split.s)
        assert len(result.left_channels) == len(blocks)

    @pytest.mark.parametrize("seed", range(10))
    def test_multi_recovers_blocks(self, seed):
        ops, blocks = _multi_instance(100 + seed)
        result = split_multi(ops, "H", seed=seed)
        assert sorted(tuple(b) for b in result.split.blocks) == sorted(blocks)
        assert _is_unitary(result.split.s)
        assert all(len(channels) == 3 for channels in result.channels)

    @pytest.mark.parametrize("seed", range(10))
    def test_nested_recovers_blocks(self, seed):
        (rho1, rho2, rho3), outer, inner = _nested_instance(200 + seed)
        result = split_nested(rho1, rho2, rho3, "A1", "A2", seed=seed)
        assert sorted(result.split.outer.blocks) == sorted(outer)
        assert _is_unitary(result.split.outer.s)
        for (_, dr), inner_split in zip(result.split.outer.blocks, result.split.inner):
            assert sorted(inner_split.blocks) == sorted((dr * p, q) for p, q in inner)
            assert _is_unitary(inner_split.s)
