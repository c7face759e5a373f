"""
测试张量基础运算
行优先约定、偏迹、置换、算子 Schmidt 分解与 cmatrix/1 编解码
"""
import json

import numpy as np
import pytest

from pkg.errors.errors import DimensionMismatch, ParseError, UnknownLabel
from pkg.tensor.tensor import (IOSpec, SystemSpec, canonical_dumps, from_cmatrix, is_unitary, kron,
                               operator_schmidt, partial_trace, permute_rows, permute_systems,
                               phase_aligned_distance, to_cmatrix)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class TestSystemSpec:
    """子系统描述"""

    def test_labels_and_dims(self):
        spec = SystemSpec.of([("A1", 2), ("A2", 3)])
        assert spec.labels == ["A1", "A2"]
        assert spec.total_dim == 6
        assert spec.dim_of(["A2"]) == 3

    def test_duplicate_label_rejected(self):
        with pytest.raises(DimensionMismatch):
            SystemSpec.of([("A", 2), ("A", 2)])

    def test_zero_dim_rejected(self):
        with pytest.raises(DimensionMismatch):
            SystemSpec.of([("A", 0)])

    def test_iospec_shape_check(self):
        specs = IOSpec.of([("A", 2)], [("B", 2)])
        specs.check_shape(np.eye(2))
        with pytest.raises(DimensionMismatch):
            specs.check_shape(np.eye(3))


class TestMatrixOps:
    """稠密矩阵运算"""

    def test_kron_first_factor_most_significant(self):
        m = kron(X, np.eye(2))
        # |0,1⟩ = 1 → |1,1⟩ = 3
        assert m[3, 1] == 1

    def test_partial_trace_of_product(self):
        rho = np.diag([0.25, 0.75]).astype(complex)
        sigma = np.diag([1.0, 0.0, 0.0]).astype(complex)
        spec = SystemSpec.of([("A", 2), ("B", 3)])
        assert np.allclose(partial_trace(kron(rho, sigma), spec, ["A"]), rho)
        assert np.allclose(partial_trace(kron(rho, sigma), spec, ["B"]), sigma)

    def test_permute_systems_swaps_factors(self):
        spec = SystemSpec.of([("A", 2), ("B", 3)])
        a = np.diag([1, 2]).astype(complex)
        b = np.diag([3, 4, 5]).astype(complex)
        assert np.allclose(permute_systems(kron(a, b), spec, ["B", "A"]), kron(b, a))

    def test_permute_rows_unknown_label(self):
        spec = SystemSpec.of([("A", 2), ("B", 2)])
        with pytest.raises(UnknownLabel):
            permute_rows(np.eye(4), spec, ["A", "C"])

    def test_is_unitary(self):
        assert is_unitary(H)[0]
        ok, residual = is_unitary(np.diag([1.0, 0.5]))
        assert not ok and residual > 0.1

    def test_operator_schmidt_rank(self):
        assert operator_schmidt(kron(H, Z), 2, 2).rank == 1
        cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
        schmidt = operator_schmidt(cnot, 2, 2)
        assert schmidt.rank == 2
        assert np.allclose(schmidt.reconstruct(), cnot)

    def test_phase_aligned_distance_ignores_global_phase(self):
        assert phase_aligned_distance(H, np.exp(0.7j) * H) < 1e-12
        assert phase_aligned_distance(H, X) > 0.1


class TestCMatrix:
    """cmatrix/1 编解码"""

    def test_encode(self):
        doc = to_cmatrix(np.array([[1j, 0], [0, 1]]))
        assert doc["format"] == "cmatrix/1"
        assert doc["rows"] == 2 and doc["cols"] == 2
        assert doc["data"][0] == [0.0, 1.0]

    def test_decode_ignores_extra_fields(self):
        doc = to_cmatrix(H)
        doc["specs"] = {"inputs": [["A", 2]], "outputs": [["B", 2]]}
        assert np.allclose(from_cmatrix(doc), H)

    def test_decode_rejects_bad_length(self):
        with pytest.raises(ParseError):
            from_cmatrix({"format": "cmatrix/1", "rows": 2, "cols": 2, "data": [[1, 0]]})

    def test_decode_rejects_nan(self):
        with pytest.raises(ParseError):
            from_cmatrix({"format": "cmatrix/1", "rows": 1, "cols": 1, "data": [[float("nan"), 0]]})

    def test_canonical_dumps_is_deterministic(self):
        a = canonical_dumps({"b": 0.1, "a": [1, 2]})
        b = canonical_dumps({"a": [1, 2], "b": 0.1})
        assert a == b
        assert json.loads(a)["b"] == 0.1

    def test_canonical_dumps_uses_17_significant_digits(self):
        text = canonical_dumps({"x": 0.1, "y": 1.0, "n": 3, "z": np.float64(-2.5e-20)})
        assert '"x": 0.10000000000000001' in text
        assert '"y": 1.0' in text
        assert '"n": 3' in text
        assert 'e-20' in text
        assert json.loads(text) == {"x": 0.1, "y": 1.0, "n": 3, "z": -2.5e-20}

    def test_canonical_dumps_rejects_nan(self):
        with pytest.raises(ValueError):
            canonical_dumps({"x": float("nan")})
