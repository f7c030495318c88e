import json

import pytest

from bellforge.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def derived_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "bilocal22.json"
    assert main(["derive", "--scenario", "bilocal22", "-o", str(path)]) == 0
    return path


def test_derive_is_byte_identical(derived_file, tmp_path, capsys):
    again = tmp_path / "again.json"
    code, out, _ = run(capsys, "derive", "--scenario", "bilocal22", "-o", str(again))
    assert code == 0
    assert again.read_bytes() == derived_file.read_bytes()
    assert out.count("<= 0") == 4
    doc = json.loads(derived_file.read_text())
    assert doc["format"] == "bellforge.derivation/1" and len(doc["inequalities"]) == 4


def test_verify_passes(derived_file, capsys):
    code, out, _ = run(capsys, "verify", "--scenario", "bilocal22", "--ineq", str(derived_file),
                       "--models", "300", "--workers", "1")
    assert code == 0


def test_verify_flags_tampering(derived_file, tmp_path, capsys):
    doc = json.loads(derived_file.read_text())
    for term in doc["all_inequalities"][0]["monomials"]:
        if not term["vars"]:
            term["coeff"] = "5"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, _ = run(capsys, "verify", "--scenario", "bilocal22", "--ineq", str(bad), "--models", "50",
                     "--workers", "1")
    assert code == 1


def test_malformed_document_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "bellforge.derivation/1", "inequalities": [{"monomials": [[1]]}]}))
    code, _, err = run(capsys, "verify", "--scenario", "bilocal22", "--ineq", str(bad))
    assert code == 2 and "malformed" in err


def test_local_bound(capsys):
    code, out, _ = run(capsys, "local-bound", "--scenario", "bilocal33", "--functional", "absI+absJ")
    assert code == 0 and out.strip().endswith("10")


def test_evaluate_violation_and_relaxation(capsys):
    code, out, _ = run(capsys, "evaluate", "--ineq", "bilocal-22", "--data", "I=2,J=2")
    assert code == 1 and "violated" in out
    code, out, _ = run(capsys, "evaluate", "--ineq", "bilocal-22-relaxed", "--data", "I=2,J=2", "--relax", "1")
    assert code == 0 and "violated" not in out


def test_evaluate_with_derived_file(derived_file, capsys):
    code, out, _ = run(capsys, "evaluate", "--ineq", str(derived_file), "--data", "I=1,J=1")
    assert code == 0


def test_gns_json(tmp_path, capsys):
    path = tmp_path / "gns.json"
    code, _, _ = run(capsys, "gns", "--scenario", "chsh", "-o", str(path))
    assert code == 0
    doc = json.loads(path.read_text())
    assert len(doc["vertices"]) == 24
    assert all(len(v["p"]) == len(doc["coordinates"]) for v in doc["vertices"])


def test_chsh_demo(capsys):
    code, out, _ = run(capsys, "chsh-demo")
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["gns", "--scenario", "bilocal22", "--fix", "A=3/2"],
    ["derive", "--scenario", "no-such-scenario"],
    ["evaluate", "--ineq", "no-such-family", "--data", "I=1"],
    ["evaluate", "--ineq", "bilocal-22", "--data", "E[A0]=2"],
    ["derive", "--scenario", "chsh"],
    ["derive", "--scenario", "bilocal22", "--case-limit", "0"],
])
def test_bad_input_exits_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_resource_limit_exits_3(capsys):
    code, _, err = run(capsys, "gns", "--scenario", "chsh", "--vertex-limit", "3")
    assert code == 3 and err
