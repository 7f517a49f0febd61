import json
import subprocess
import sys
from pathlib import Path

import pytest

from ordercsp.cli import run

PRED = Path(__file__).resolve().parent.parent / "predicates"


def out_of(capsys, argv):
    rc = run(argv)
    cap = capsys.readouterr()
    return rc, cap.out, cap.err


def test_verify_betweenness(capsys):
    rc, out, _ = out_of(capsys, ["verify", "--phi", str(PRED / "betweenness.pred"), "--relax", "L",
                                 "--mix", "1/2 I + 1/2 D"])
    assert rc == 0
    assert "p = 1/2" in out


def test_verify_json_bound_and_lp(capsys):
    rc, out, _ = out_of(capsys, ["verify", "--phi", "betweenness", "--mix", "1/2 I + 1/2 D",
                                 "--bound", "--sufficient", "--json"])
    doc = json.loads(out)
    assert rc == 0 and doc["p"] == "1/2" and doc["upper_bound"] == "1/2"
    assert doc["sufficient"] is None  # the LP certifies nothing for Betweenness


def test_classify_arity3(capsys):
    rc, out, _ = out_of(capsys, ["classify", "--arity", "3", "--json"])
    doc = json.loads(out)
    assert rc == 0
    assert (doc["classes"], doc["tractable"], doc["precedence"], doc["nontrivial_LR"]) == (11, 4, 3, 3)


def test_classify_export(capsys, tmp_path):
    p = tmp_path / "a3.csv"
    rc, _, _ = out_of(capsys, ["classify", "--arity", "3", "--export", str(p), "--format", "csv"])
    assert rc == 0 and len(p.read_text().splitlines()) == 12


def test_density(capsys):
    rc, out, _ = out_of(capsys, ["density", "--rho", "1 2", "--combo", "1 U"])
    assert rc == 0 and out.strip().endswith("1/2")
    rc, out, _ = out_of(capsys, ["density", "--rho", "1 2", "--combo", "1 U", "--json"])
    assert json.loads(out)["density"] == "1/2"


def test_relax_json(capsys):
    rc, out, _ = out_of(capsys, ["relax", "--phi", "betweenness", "--json"])
    doc = json.loads(out)
    assert rc == 0
    assert doc["L"]["sat"] == ["1 2 3", "1 3 2", "2 3 1", "3 2 1"]
    assert doc["eps"]["nontrivial"] is False


def test_flags_sos(capsys):
    rc, out, _ = out_of(capsys, ["flags", "--sos"])
    assert rc == 0 and "1/3" in out


def test_sample_reproducible(capsys):
    argv = ["sample", "--mix", "1/2 I + 1/2 D", "--n", "12", "--seed", "3", "--json"]
    a = out_of(capsys, argv)[1]
    b = out_of(capsys, argv)[1]
    assert a == b and sorted(map(int, json.loads(a)["sigma"].split())) == list(range(1, 13))


def test_popt_reproducible_and_threads(capsys, tmp_path):
    argv = ["popt", "--phi", "betweenness", "--seed", "1", "--restarts", "4", "--starts", "2", "--json"]
    a = json.loads(out_of(capsys, argv)[1])
    b = json.loads(out_of(capsys, argv + ["--threads", "2"])[1])
    assert a["p"] == b["p"] and a["mixture_text"] == b["mixture_text"]
    assert a["p"] == "1/2"


def test_solve(capsys, tmp_path):
    inst = tmp_path / "i.txt"
    inst.write_text("vars 4\nbtw 1 2 3\nbtw 2 3 4\nbtw 4 1 2\n")
    argv = ["solve", "--instance", str(inst), "--relax", "L", "--mix", "1/2 I + 1/2 D", "--json"]
    rc, out, _ = out_of(capsys, argv + ["--seed", "5"])
    assert rc == 0
    rc, out2, _ = out_of(capsys, argv + ["--derandomize"])
    assert rc == 0 and json.loads(out2)["satisfied"] >= 2


@pytest.mark.parametrize("argv", [
    ["sample", "--mix", "1 I", "--n", "3"],  # missing seed
    ["popt", "--phi", "betweenness"],
    ["classify", "--arity", "3", "--sweep", "2"],
    ["density", "--rho", "1 2"],
    ["nosuchcommand"],
])
def test_usage_errors_exit_2(capsys, argv):
    rc, _, err = out_of(capsys, argv)
    assert rc == 2 and err


@pytest.mark.parametrize("argv", [
    ["verify", "--phi", "no_such_predicate_file", "--mix", "1 I"],
    ["density", "--rho", "1 1", "--combo", "1 U"],
    ["classify", "--arity", "5"],
    ["verify", "--phi", "betweenness", "--mix", "1/2 I + 1/3 D"],
])
def test_domain_errors_exit_1(capsys, argv):
    rc, _, err = out_of(capsys, argv)
    assert rc == 1 and err


def test_help_and_version(capsys):
    assert run(["--help"]) == 0
    assert run(["--version"]) == 0


def test_entry_point_subprocess():
    r = subprocess.run([sys.executable, "-m", "ordercsp.cli", "density", "--rho", "2 1", "--combo", "1 D"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip().endswith("1")
