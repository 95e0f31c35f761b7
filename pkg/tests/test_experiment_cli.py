import csv
import hashlib
import json
import shutil
import subprocess
import sys

import pytest

from swgibbs import diagram_engine as dg
from swgibbs.experiment_cli import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_OUTPUT,
    EXIT_USAGE,
    main,
    parse_float_list,
    parse_int_list,
    scaling_rows,
)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_list_parsing():
    assert parse_int_list("1..4") == [1, 2, 3, 4]
    assert parse_int_list("8,16, 32") == [8, 16, 32]
    assert parse_float_list("0.1,10") == [0.1, 10.0]
    with pytest.raises(ValueError):
        parse_int_list("4..1")
    with pytest.raises(ValueError):
        parse_int_list("a,b")


def test_diagrams_table(tmp_path):
    assert main(["--out", str(tmp_path), "diagrams", "--n", "1..3"]) == EXIT_OK
    rows = read_csv(tmp_path / "diagrams.csv")
    tad = [r for r in rows if r["kind"] == "tadpole" and r["N"] == "1"]
    assert float(tad[0]["value"]) == 10.0
    sun = [r for r in rows if r["kind"] == "sunset" and r["N"] == "3"]
    assert float(sun[0]["value"]) == pytest.approx(dg.sunset(3), rel=1e-15)
    man = json.loads((tmp_path / "diagrams.manifest.json").read_text())
    assert man["artifacts"]["diagrams.csv"] == digest(tmp_path / "diagrams.csv")


def test_diagrams_json_format(tmp_path):
    assert main(["--out", str(tmp_path), "--format", "json", "diagrams", "--n", "1..2", "--kinds", "tadpole"]) == 0
    data = json.loads((tmp_path / "diagrams.json").read_text())
    assert data["rows"][0]["value"] == 10.0
    assert len(data["config_hash"]) == 64


def test_scaling_rows_tadpole_ratio():
    rows, stats, passed = scaling_rows("tadpole", [8, 16, 32])
    assert passed
    assert rows[1]["ratio"] == stats[0] == pytest.approx(dg.tadpole(16) / dg.tadpole(8))


def test_scaling_command_writes_checks(tmp_path):
    code = main(["--out", str(tmp_path), "scaling", "--kind", "tadpole", "--n", "4,8,16"])
    assert code in (EXIT_OK, EXIT_CHECK)
    checks = read_csv(tmp_path / "scaling.checks.csv")
    assert checks and {c["passed"] for c in checks} <= {"true", "false"}
    assert code == (EXIT_OK if all(c["passed"] == "true" for c in checks) else EXIT_CHECK)


def test_stochastic_command_needs_seed(tmp_path):
    assert main(["--out", str(tmp_path), "singularity", "--n", "2", "--paths", "10"]) == EXIT_USAGE


def test_usage_errors(tmp_path):
    assert main(["--out", str(tmp_path), "diagrams", "--bogus"]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    assert main(["--spec", str(tmp_path / "missing.yaml"), "diagrams"]) == EXIT_USAGE


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("diagrams:\n  nonsense: 3\n")
    assert main(["--spec", str(bad), "--out", str(tmp_path), "diagrams"]) == EXIT_CONFIG
    assert main(["--out", str(tmp_path), "diagrams", "--n", "0..2"]) == EXIT_CONFIG
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    assert main(["--spec", str(lst), "diagrams"]) == EXIT_CONFIG


def test_output_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["--out", str(blocker / "sub"), "diagrams", "--n", "1"]) == EXIT_OUTPUT


def test_output_precedence(tmp_path, monkeypatch):
    spec = tmp_path / "spec.yaml"
    spec.write_text(f"out: {tmp_path / 'from_spec'}\ndiagrams:\n  n: '1..2'\n  kinds: tadpole\n")
    assert main(["--spec", str(spec), "diagrams"]) == 0
    rows = read_csv(tmp_path / "from_spec" / "diagrams.csv")
    assert [r["N"] for r in rows] == ["1", "2"]
    monkeypatch.setenv("SWGIBBS_OUT_DIR", str(tmp_path / "from_env"))
    assert main(["--spec", str(spec), "diagrams"]) == 0
    assert (tmp_path / "from_env" / "diagrams.csv").exists()
    assert main(["--spec", str(spec), "--out", str(tmp_path / "from_flag"), "diagrams", "--n", "3"]) == 0
    rows = read_csv(tmp_path / "from_flag" / "diagrams.csv")
    assert [r["N"] for r in rows] == ["3"]


def test_flat_spec_keys_apply(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"seed": 5, "paths": 40, "n": "2,4"}))
    assert main(["--spec", str(spec), "--out", str(tmp_path), "singularity", "--double"]) in (EXIT_OK, EXIT_CHECK)
    man = json.loads((tmp_path / "singularity.manifest.json").read_text())
    assert man["config"]["seed"] == 5 and man["config"]["params"]["paths"] == 40


@pytest.mark.parametrize(
    "args",
    [
        ["singularity", "--n", "2,4", "--paths", "64"],
        ["concentration", "--m", "2,4", "--paths", "16"],
        ["logz", "--lambda", "0.5", "--n", "2", "--paths", "1000"],
    ],
)
def test_reruns_are_byte_identical(tmp_path, args):
    a, b = tmp_path / "a", tmp_path / "b"
    ca = main(["--seed", "42", "--out", str(a)] + args)
    cb = main(["--seed", "42", "--out", str(b)] + args)
    assert ca == cb
    files = sorted(p.name for p in a.iterdir() if not p.name.endswith(".manifest.json"))
    assert files
    for f in files:
        assert digest(a / f) == digest(b / f)


def test_different_seed_changes_output(tmp_path):
    args = ["singularity", "--n", "2", "--paths", "32"]
    main(["--seed", "1", "--out", str(tmp_path / "a")] + args)
    main(["--seed", "2", "--out", str(tmp_path / "b")] + args)
    assert digest(tmp_path / "a" / "singularity.csv") != digest(tmp_path / "b" / "singularity.csv")


def test_console_script_runs(tmp_path):
    exe = shutil.which("swgibbs")
    cmd = [exe] if exe else [sys.executable, "-m", "swgibbs.experiment_cli"]
    res = subprocess.run(cmd + ["--out", str(tmp_path), "diagrams", "--n", "1"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "diagrams.csv").exists()
