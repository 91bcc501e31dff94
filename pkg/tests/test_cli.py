import io
import json
import math
import subprocess
import sys

import pytest

from icsmon import cli
from icsmon.model import CriticalStream
from icsmon.offline import InfeasibleError, OfflinePlan, StreamRoute, solve_exact
from icsmon.topogen import Instance, reserve_standard_fraction, tiny_instance


def call(*argv):
    buf = io.StringIO()
    code = cli.main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


@pytest.fixture(scope="module")
def cesnet_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "cesnet.json"
    assert call("gen", "cesnet", "--alpha", 0.7, "--out", path)[0] == 0
    return path


def _feasible_tiny_seed():
    for seed in range(50):
        try:
            solve_exact(tiny_instance(seed))
            return seed
        except InfeasibleError:
            pass
    raise AssertionError("no feasible tiny seed")


@pytest.mark.parametrize(
    "name, line",
    [
        ("cesnet", "vertices=501 links=920 streams=770 q=35"),
        ("attmpls", "vertices=726 links=1357 streams=1100 q=50"),
    ],
)
def test_gen_counts(tmp_path, name, line):
    code, text = call("gen", name, "--alpha", 0.7, "--out", tmp_path / "i.json")
    assert code == 0 and text.startswith(line)
    assert Instance.load(tmp_path / "i.json").q == int(line.rsplit("=", 1)[1])


def test_gen_q_target_miss_warns(tmp_path, capsys):
    code, text = call("gen", "uninet", "--q-target", 95, "--out", tmp_path / "u.json")
    assert code == 0 and "q=51" in text
    assert "nearest" in capsys.readouterr().err


def test_tiny_plan_verifies(tmp_path):
    seed = _feasible_tiny_seed()
    inst, plan = tmp_path / "tiny.json", tmp_path / "plan.json"
    assert call("gen", "tiny", "--seed", seed, "--out", inst)[0] == 0
    code, text = call("plan", inst, "--mode", "exact", "--out", plan)
    assert code == 0 and json.loads(text)["status"] == "exact"
    code, text = call("verify", inst, plan)
    assert code == 0 and json.loads(text) == []


def test_verify_reports_violations(tmp_path, line):
    inst = tmp_path / "line.json"
    Instance(line, (CriticalStream(0, 0, 3, 10**6),)).save(inst)
    bad = tmp_path / "bad.json"
    OfflinePlan((StreamRoute(0, (0, 1, 2, 3), True, 1, (1, 2, 4)),)).save(bad)
    code, text = call("verify", inst, bad)
    assert code == 2
    assert json.loads(text)[0]["code"] == "op_not_last_hop"


def test_infeasible_exit(tmp_path, line):
    inst = tmp_path / "line.json"
    Instance(line, (CriticalStream(0, 0, 3, 10**9),)).save(inst)
    assert call("plan", inst, "--out", tmp_path / "p.json")[0] == 3


def test_exact_on_cesnet_is_refused(cesnet_file, tmp_path, capsys):
    assert call("plan", cesnet_file, "--out", tmp_path / "p.json")[0] == 4
    assert "export-lp" in capsys.readouterr().err


def test_export_lp(cesnet_file, tmp_path):
    code, text = call("plan", cesnet_file, "--mode", "export-lp", "--out", tmp_path / "m.lp")
    assert code == 0
    summary = json.loads(text)
    assert summary["binaries"] == 2 * 770 * 1840
    first = (tmp_path / "m.lp").read_bytes()
    call("plan", cesnet_file, "--mode", "export-lp", "--out", tmp_path / "m2.lp")
    assert (tmp_path / "m2.lp").read_bytes() == first


def test_simulate_and_report(cesnet_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code, text = call("simulate", cesnet_file, "--seed", 4, "--out", a)
    assert code == 0 and json.loads(text)["violations"] == 0
    assert call("simulate", cesnet_file, "--seed", 4, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()

    dens = tmp_path / "d.csv"
    assert call("report", a, "--density-out", dens)[0] == 0
    rows = dens.read_text().splitlines()[1:]
    assert math.isclose(sum(float(r.split(",")[2]) for r in rows), 1.0, abs_tol=1e-9)


def test_stdin_protocol(tmp_path, line, monkeypatch):
    inst = tmp_path / "line.json"
    reserve_standard_fraction(Instance(line, ()), 0.5).save(inst)
    monkeypatch.setattr(sys, "stdin", io.StringIO("ADMIT 0 3\nADMIT 0 3 1.5\nREMOVE 0\nREMOVE 9\nBOGUS\nDUMP\n"))
    code, text = call("simulate", inst, "--stdin")
    replies = [json.loads(l) for l in text.splitlines()]
    assert code == 0 and len(replies) == 6
    assert replies[0]["assignment"] == {"0": 5_000_000}
    assert replies[1]["assignment"] == {"0": 2_500_000, "1": 2_500_000}
    assert replies[2]["assignment"] == {"1": 5_000_000}
    assert not replies[3]["ok"] and not replies[4]["ok"]
    assert [s["id"] for s in replies[5]["state"]["streams"]] == [1]


@pytest.mark.parametrize(
    "argv",
    [
        ["gen", "nowhere.graphml", "--out", "x.json"],
        ["plan", "missing.json", "--out", "p.json"],
        ["plan", "x.json", "--flow-table", "abc", "--out", "p.json"],
        ["report", "missing.csv"],
        ["frobnicate"],
    ],
)
def test_input_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    try:
        code = call(*argv)[0]
    except SystemExit as exc:
        code = exc.code
    assert code == 4


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "icsmon.cli", "gen", "tiny", "--seed", "1", "--out", str(tmp_path / "t.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and proc.stdout.startswith("vertices=")
