import json
import subprocess
import sys

import numpy as np
import pytest

from sharplab import cli, constructions


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_sweep():
    assert cli.parse_sweep("2..5") == [2, 3, 4, 5]
    assert cli.parse_sweep("4,8,16") == [4, 8, 16]
    with pytest.raises(cli.ConfigError):
        cli.parse_sweep("5..2")
    with pytest.raises(cli.ConfigError):
        cli.parse_sweep("a..b")


def test_config_text_parsing():
    vals = cli.parse_config_text("# comment\nsigma = 0.25\nsweep = 2..4\ncontrol = true\nk_cap = none\n")
    assert vals == {"sigma": 0.25, "sweep": [2, 3, 4], "control": True, "k_cap": None}
    with pytest.raises(cli.ConfigError, match="unknown key 'bogus'"):
        cli.parse_config_text("bogus = 1")
    with pytest.raises(cli.ConfigError, match="duplicate"):
        cli.parse_config_text("J = 10\nJ = 11")
    with pytest.raises(cli.ConfigError, match="invalid value"):
        cli.parse_config_text("J = ten")
    with pytest.raises(cli.ConfigError, match="expected"):
        cli.parse_config_text("just words")


def test_dry_run_prints_resolved_config_and_touches_nothing(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sigma = 0.4\ntrials = 3\n")
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "peetre", "--config", str(cfg), "--seed", "7", "--sweep", "2..4",
                       "--grid-exp", "13", "--set", "M=6", "--out", str(out_dir), "--dry-run")
    assert code == 0
    resolved = json.loads(out)
    assert resolved["sigma"] == 0.4 and resolved["trials"] == 3 and resolved["seed"] == 7
    assert resolved["sweep"] == [2, 3, 4] and resolved["J"] == 13 and resolved["M"] == 6
    assert not out_dir.exists()


def test_flags_override_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("trials = 3\nseed = 1\n")
    code, out, _ = run(capsys, "peetre", "--config", str(cfg), "--trials", "5", "--dry-run")
    assert code == 0 and json.loads(out)["trials"] == 5 and json.loads(out)["seed"] == 1


@pytest.mark.parametrize("argv,needle", [
    (["peetre", "--set", "bogus=1"], "unknown key"),
    (["sobolev", "--set", "sigma=0.25"], "d/p < sigma <= d/q"),
    (["peetre", "--set", "q=3"], "q <= p"),
    (["oscillatory", "--set", "b=0.4"], "b = gamma d"),
    (["peetre", "--config", "/nonexistent/cfg"], "cannot read config"),
    (["peetre", "--sweep", "x"], "cannot parse sweep"),
])
def test_invalid_configuration_exits_2(capsys, argv, needle):
    code, out, err = run(capsys, *argv, "--dry-run")
    assert code == 2 and needle in err and out == ""


def test_config_for_other_scenario_rejected(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = sobolev\n")
    code, _, err = run(capsys, "peetre", "--config", str(cfg))
    assert code == 2 and "sobolev" in err


def test_bad_subcommand_exits_2(capsys):
    assert cli.main(["nope"]) == 2


def test_run_writes_outputs(capsys, tmp_path):
    out_dir = tmp_path / "res"
    code, out, err = run(capsys, "peetre", "--grid-exp", "10", "--sweep", "1..3", "--trials", "2",
                         "--out", str(out_dir))
    assert code == 0
    assert "slope" in out and out.splitlines()[0].split()[0] == "N"
    assert "wrote" in err
    assert (out_dir / "results.csv").read_text().startswith("scenario,")
    meta = json.loads((out_dir / "meta.json").read_text())
    assert meta["scenario"] == "peetre" and meta["config"]["J"] == 10


def test_unwritable_output_exits_1(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "peetre", "--grid-exp", "10", "--sweep", "1..3", "--trials", "1",
                       "--out", str(blocker / "sub"))
    assert code == 1 and "runtime failure" in err


def test_verify_all_groups_pass(capsys):
    code, out, _ = run(capsys, "verify")
    assert code == 0
    rows = [line.split() for line in out.splitlines()[1:]]
    assert [r[0] for r in rows] == list(cli.VERIFY_GROUPS)
    assert all(r[1] == "pass" for r in rows)


def test_verify_single_group(capsys):
    code, out, _ = run(capsys, "verify", "--group", "norms")
    rows = out.splitlines()[1:]
    assert code == 0 and len(rows) == 1 and rows[0].startswith("norms")


def test_verify_unknown_group(capsys):
    code, _, err = run(capsys, "verify", "--group", "nope")
    assert code == 2 and "unknown verify group" in err


def test_verify_detects_corrupted_mollifier_profile(capsys, monkeypatch):
    good = constructions.bump_profile

    def corrupted(t):
        t = np.asarray(t, dtype=float)
        return good(t) + 0.01 * ((t > 0.3) & (t <= 0.5))

    monkeypatch.setattr(constructions, "bump_profile", corrupted)
    code, out, err = run(capsys, "verify", "--group", "mollifier", "--group", "norms")
    status = {line.split()[0]: line.split()[1] for line in out.splitlines()[1:]}
    assert code == 1
    assert status == {"mollifier": "FAIL", "norms": "pass"}
    assert "'mollifier'" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sharplab.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "sharplab" in proc.stdout
