"""
测试命令行：各子命令的产物与退出码
"""
import json

import numpy as np
import pytest

from pkg.cli.cli import main, specs_sidecar, unitary_document
from pkg.genlab.genlab import named_example
from pkg.tensor.tensor import canonical_dumps, from_cmatrix


def write_unitary(path, name, **kwargs):
    u, specs = named_example(name, **kwargs)
    path.write_text(canonical_dumps(unitary_document(u, specs)))
    return str(path)


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def cnot_pair(tmp_path):
    return write_unitary(tmp_path / "cnot_pair.json", "cnot_pair")


class TestAnalyze:
    """analyze"""

    def test_identity(self, tmp_path):
        src = write_unitary(tmp_path / "id.json", "identity", n=2)
        out = tmp_path / "out.json"
        assert main(["analyze", src, "--out", str(out)]) == 0
        doc = read_json(out)
        assert doc["structure"]["parents"] == {"B1": ["A1"], "B2": ["A2"]}
        assert doc["classification"]["tag"] == "Product"

    def test_cnot_pair(self, cnot_pair, tmp_path):
        out = tmp_path / "out.json"
        assert main(["analyze", cnot_pair, "--out", str(out)]) == 0
        doc = read_json(out)
        assert doc["structure"]["parents"]["B2"] == ["A1", "A2", "A3"]
        assert doc["influence"]["B3"]["A1"] is False
        assert doc["classification"]["tag"] == "CCC"

    def test_dot(self, cnot_pair, tmp_path):
        out = tmp_path / "out.dot"
        assert main(["analyze", cnot_pair, "--format", "dot", "--out", str(out)]) == 0
        assert out.read_text().startswith("digraph")

    def test_not_unitary(self, tmp_path):
        doc = unitary_document(np.diag([1.0, 0.5]), named_example("identity", n=1)[1])
        src = tmp_path / "bad.json"
        src.write_text(canonical_dumps(doc))
        assert main(["analyze", str(src)]) == 3

    def test_bad_json(self, tmp_path):
        src = tmp_path / "bad.json"
        src.write_text("{not json")
        assert main(["analyze", str(src)]) == 2

    def test_missing_specs(self, tmp_path):
        u, specs = named_example("cnot_pair")
        src = tmp_path / "bare.json"
        src.write_text(canonical_dumps({k: v for k, v in unitary_document(u, specs).items() if k != "specs"}))
        assert main(["analyze", str(src)]) == 2

    def test_tol_out_of_range(self, cnot_pair):
        assert main(["analyze", cnot_pair, "--tol", "0.5"]) == 2


class TestDecomposeVerify:
    """decompose / verify / eval"""

    def test_round_trip(self, cnot_pair, tmp_path):
        diagram = tmp_path / "d.json"
        assert main(["decompose", cnot_pair, "--seed", "1", "--out", str(diagram)]) == 0
        assert read_json(diagram)["format"] == "xdiagram/1"

        verdict = tmp_path / "v.json"
        assert main(["verify", cnot_pair, str(diagram), "--out", str(verdict)]) == 0
        doc = read_json(verdict)
        assert doc["pass"] and doc["faithful"]
        assert all(row["path"] == row["influence"] for row in doc["pairs"])

        evaluated = tmp_path / "e.json"
        assert main(["eval", str(diagram), "--out", str(evaluated)]) == 0
        u, _ = named_example("cnot_pair")
        v = from_cmatrix(read_json(evaluated))
        phase = np.vdot(v.ravel(), u.ravel())
        assert np.allclose(v * phase / abs(phase), u, atol=1e-8)

    def test_verify_against_other_unitary(self, cnot_pair, tmp_path):
        diagram = tmp_path / "d.json"
        assert main(["decompose", cnot_pair, "--out", str(diagram)]) == 0
        other = write_unitary(tmp_path / "id.json", "identity", n=3)
        verdict = tmp_path / "v.json"
        assert main(["verify", other, str(diagram), "--out", str(verdict)]) == 4
        assert read_json(verdict)["pass"] is False

    def test_verify_tampered_diagram(self, cnot_pair, tmp_path):
        diagram = tmp_path / "d.json"
        assert main(["decompose", cnot_pair, "--out", str(diagram)]) == 0
        doc = read_json(diagram)
        matrix = next(iter(doc["nodes"][0]["matrices"].values()))
        matrix["data"] = [[2 * re, 2 * im] for re, im in matrix["data"]]
        diagram.write_text(canonical_dumps(doc))
        assert main(["verify", cnot_pair, str(diagram)]) == 2

    def test_unsupported_is_not_an_error(self, tmp_path):
        src = tmp_path / "u44.json"
        assert main(["generate", "--tag", "U44_1", "--seed", "2", "--out", str(src)]) == 0
        out = tmp_path / "out.json"
        assert main(["decompose", str(src), "--out", str(out)]) == 0
        assert read_json(out)["status"] == "unsupported"

    def test_dot_only_for_structure_commands(self, cnot_pair, tmp_path):
        assert main(["dual", cnot_pair, "--format", "dot"]) == 2


class TestGenerate:
    """generate / dual"""

    def test_tag(self, tmp_path):
        out = tmp_path / "ccc.json"
        assert main(["generate", "--tag", "CCC", "--seed", "3", "--out", str(out)]) == 0
        doc = read_json(out)
        assert doc["structure"]["parents"]["B2"] == ["A1", "A2", "A3"]
        assert read_json(tmp_path / specs_sidecar("ccc.json"))["specs"] == doc["specs"]

    def test_deterministic_per_seed(self, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["generate", "--tag", "CCC", "--seed", "3", "--out", str(first)]) == 0
        assert main(["generate", "--tag", "CCC", "--seed", "3", "--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_example(self, tmp_path):
        out = tmp_path / "p.json"
        assert main(["generate", "--example", "product", "--seed", "4", "--out", str(out)]) == 0
        assert read_json(out)["structure"]["parents"] == {"B1": ["A1"], "B2": ["A2"]}

    def test_structure_with_dims(self, tmp_path):
        src = tmp_path / "s.json"
        src.write_text(json.dumps({"inputs": ["A1", "A2"], "outputs": ["B1", "B2"],
                                   "parents": {"B1": ["A1", "A2"], "B2": ["A2"]},
                                   "dims": {"A1": 2, "A2": 4, "B1": 4, "B2": 2}}))
        out = tmp_path / "u.json"
        assert main(["generate", str(src), "--seed", "5", "--out", str(out)]) == 0
        assert read_json(out)["structure"]["parents"] == {"B1": ["A1", "A2"], "B2": ["A2"]}

    def test_impossible_dims(self, tmp_path):
        src = tmp_path / "s.json"
        src.write_text(json.dumps({"inputs": ["A1", "A2"], "outputs": ["B1", "B2"],
                                   "parents": {"B1": ["A1", "A2"], "B2": ["A2"]},
                                   "dims": {"A1": 2, "A2": 2, "B1": 2, "B2": 2}}))
        assert main(["generate", str(src)]) == 5

    def test_needs_one_source(self, tmp_path):
        assert main(["generate", "--tag", "CCC", "--example", "swap"]) == 2

    def test_dual(self, cnot_pair, tmp_path):
        out = tmp_path / "dual.json"
        assert main(["dual", cnot_pair, "--out", str(out)]) == 0
        doc = read_json(out)
        u, _ = named_example("cnot_pair")
        assert np.allclose(from_cmatrix(doc), u.conj().T)
        assert doc["specs"]["inputs"] == [["B1", 2], ["B2", 2], ["B3", 2]]
