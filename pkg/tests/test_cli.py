import csv
import io
import json
import subprocess
import sys
from dataclasses import replace

import pytest

from jumprep.branching import BranchSystem
from jumprep.catalog import get_entry
from jumprep.cli import RunConfig, dumps, main, run_verify_all
from jumprep.interval_dynamics import UNIT, Moebius


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def corrupted_entry(tmp_path):
    # first branch no longer inverts the attached tent coding map
    tent = get_entry("tent")
    bs = BranchSystem(UNIT, branches=(Moebius(-3, 5, 0, 5), Moebius(1, 0, 0, 2)), coding_map=tent.map)
    bad = replace(tent, name="bad_tent", branch_system=bs)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad.to_json()))
    return str(path)


def test_catalog_list_and_show(capsys):
    code, out, _ = run(capsys, "catalog", "list")
    assert code == 0 and json.loads(out)[0] == "tent"
    code, out, _ = run(capsys, "catalog", "show", "gauss")
    assert code == 0 and json.loads(out)["name"] == "gauss"


def test_unknown_name_exits_2(capsys):
    code, _, err = run(capsys, "catalog", "show", "nope")
    assert code == 2 and "nope" in err
    code, _, _ = run(capsys, "figure", "nope")
    assert code == 2


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["jump"])
    assert exc.value.code == 2
    code, _, _ = run(capsys, "verify-all", "--grid", "1", "--entry", "tent")
    assert code == 2


def test_jump_apply(capsys):
    code, out, _ = run(capsys, "jump", "apply", "--map", "farey", "--x", "3/8")
    data = json.loads(out)
    assert code == 0 and data["entry_time"] == 1 and data["jump"] == "2/3"
    code, out, _ = run(capsys, "jump", "--map", "farey", "--set", "1/2,1", "--x", "0.375", "--backend", "float")
    assert json.loads(out)["jump"].startswith("0.666666")


def test_jump_verify(capsys):
    code, out, _ = run(capsys, "jump", "verify", "--map", "farey", "--against", "gauss", "--samples", "200")
    assert code == 0 and json.loads(out)["max_deviation"] == 0
    code, out, _ = run(capsys, "jump", "verify", "--map", "farey", "--against", "chan_tau2", "--samples", "200")
    assert code == 1


def test_cuntz_commands(capsys):
    code, out, _ = run(capsys, "cuntz", "check", "--map", "gauss", "--depth", "10")
    data = json.loads(out)
    assert code == 0 and data["partial_sum_tail"][0]["functions"]["one"]["residual_norm2"] == "1/11"
    code, out, _ = run(capsys, "cuntz", "embed", "--map", "farey", "--nmax", "5")
    assert code == 0 and json.loads(out)["ok"]
    code, out, _ = run(capsys, "cuntz", "check", "--map", "farey", "--emit", "csv", "--grid", "8",
                       "--word", "S2 S1", "--phi", "x")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["x", "value"] and len(rows) == 9


def test_measure_commands(capsys):
    code, out, _ = run(capsys, "measure", "invariance", "--map", "farey")
    assert code == 0 and json.loads(out)["max_abs_residual"] == 0
    code, out, _ = run(capsys, "measure", "invariance", "--map", "farey", "--density", "gamma")
    assert code == 1
    code, out, _ = run(capsys, "measure", "transport", "--map", "farey")
    assert code == 0 and json.loads(out)["integrable_output"]
    code, out, _ = run(capsys, "measure", "ulam", "--map", "tent", "--cells", "64")
    assert code == 0 and json.loads(out)["l1_to_catalog_density"] < 1e-10
    code, out, _ = run(capsys, "measure", "orbit", "--map", "gauss", "--steps", "20000", "--bins", "8")
    assert code == 0 and json.loads(out)["l1_to_catalog_density"] < 0.05
    code, _, _ = run(capsys, "measure", "invariance", "--map", "farey", "--density", "nope")
    assert code == 2


def test_figure_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "figure", "farey")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["x", "value"] and len(rows) == 1025
    values = {float(x): float(y) for x, y in rows[1:]}
    assert values[0.5] == 1.0 and values[1.0] == 0.0
    target = tmp_path / "farey.csv"
    assert main(["figure", "farey", "-o", str(target)]) == 0
    assert target.read_text() == out


def test_verify_all_single_entry_and_corrupted(capsys, corrupted_entry):
    code, out, _ = run(capsys, "verify-all", "--entry", corrupted_entry)
    report = json.loads(out)
    assert code == 1 and not report["ok"]
    assert report["first_failure"].startswith("bad_tent")
    code, out, _ = run(capsys, "verify-all", "--entry", "tent", "--samples", "50")
    assert code == 0 and json.loads(out)["ok"]


def test_run_verify_all_entries_is_deterministic():
    config = RunConfig(samples=50, seed=3)
    entries = [get_entry("farey"), get_entry("gauss")]
    assert dumps(run_verify_all(config, entries)) == dumps(run_verify_all(config, entries))


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(backend="quad")
    with pytest.raises(ValueError):
        RunConfig(depth=0)


def test_console_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "jumprep", "catalog", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "gauss" in res.stdout


def test_env_override(monkeypatch):
    from jumprep.cli import build_parser

    monkeypatch.setenv("JUMPREP_DEPTH", "17")
    args = build_parser().parse_args(["verify-all"])
    assert args.depth == 17
