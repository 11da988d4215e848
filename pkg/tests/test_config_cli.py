import csv
import json
import math
import os
import subprocess
import sys
import time

import pytest

from hacal import cli
from hacal.channel import SystemConfig
from hacal.config import load_config, parse_config
from hacal.crc import OverheadReport
from hacal.errors import ValidationError
from hacal.evaluation import CSV_HEADER
from hacal.hac import SolverSettings

SMALL = """
[system]
n_t = 16
n_r = 16
m_t = 4
m_r = 4
k_paths = 2
cal_snr_db = 30
data_snr_db = 40
q_dr = 4
q_da = 15
p_da = 15

[experiment]
sweep_kind = rate-vs-data-snr
sweep_values = 20, 40
trials = 2
methods = HAC, OracleHAC, Perfect, None
n_streams = 2
"""


def write_config(tmp_path, text=SMALL, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(argv):
    return cli.main([str(a) for a in argv])


def read_dir(path):
    return {name: (path / name).read_bytes() for name in sorted(os.listdir(path))}


# config parsing


def test_empty_config_gives_defaults():
    run_cfg = parse_config("")
    assert run_cfg.system == SystemConfig()
    assert run_cfg.solver == SolverSettings()
    assert run_cfg.experiment == {}
    assert load_config(None).system == SystemConfig()


def test_config_units_converted_once():
    run_cfg = parse_config("[system]\nnoise_var = 2\ncal_snr_db = 20\ndata_snr_db = 30\n"
                           "[mismatch]\nphase_range_deg = 45\nredraw_per_trial = no\n")
    assert math.isclose(run_cfg.system.pilot_power, 200.0)
    assert math.isclose(run_cfg.system.data_power, 2000.0)
    assert math.isclose(run_cfg.mismatch.phase_range, math.pi / 4)
    assert run_cfg.mismatch.redraw_per_trial is False


def test_config_solver_and_experiment_sections():
    run_cfg = parse_config("[solver]\nc_dr = 2+1j\nupdate_order = u2-first\nmax_outer = 7\n"
                           "[experiment]\nsweep_kind = cal-snr\nsweep_values = 0, 10\nmethods = HAC\n")
    assert run_cfg.solver.c_dr == 2 + 1j and run_cfg.solver.max_outer == 7
    spec = run_cfg.experiment_spec(3)
    assert spec.sweep_values == (0.0, 10.0) and spec.methods == ("HAC",) and spec.master_seed == 3


@pytest.mark.parametrize("text, fragment", [
    ("[system]\nn_tx = 4\n", "n_tx"),
    ("[sytem]\nn_t = 4\n", "sytem"),
    ("[system]\nn_t = four\n", "n_t"),
    ("[system]\nm_t = 64\n", "m_t"),
    ("[solver]\nupdate_order = backwards\n", "update_order"),
    ("[mismatch]\nredraw_per_trial = maybe\n", "redraw_per_trial"),
    ("n_t = 4\n", "malformed"),
])
def test_config_errors_name_the_problem(text, fragment):
    with pytest.raises(ValidationError, match=fragment):
        parse_config(text)


def test_experiment_section_required_for_sweeps():
    with pytest.raises(ValidationError, match="sweep_kind"):
        parse_config("").experiment_spec(0)


def test_missing_config_file(tmp_path):
    with pytest.raises(ValidationError, match="cannot read"):
        load_config(str(tmp_path / "absent.ini"))


# command line


def test_help_lists_all_commands(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    for name in cli.COMMANDS:
        assert name in out
    assert set(cli.COMMANDS) == {"calibrate", "sweep", "crlb", "overhead", "replay"}


def test_bad_arguments_exit_one(capsys):
    assert run(["frobnicate"]) == 1
    assert run(["overhead", "--seed", "-4"]) == 1
    assert run(["overhead", "--format", "xml"]) == 1
    assert run([]) == 1
    assert "error" in capsys.readouterr().err


def test_overhead_printed_and_written(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["overhead", "--out", out]) == 0
    printed = capsys.readouterr().out
    assert "8192" in printed and "1032" in printed
    with open(out / "overhead.csv", newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["method", "overhead", "complexity"]
    assert rows[1][:2] == ["CRC", "8192"] and rows[2][:2] == ["HAC", "1032"]


def test_overhead_json_roundtrip(tmp_path):
    out = tmp_path / "o"
    assert run(["overhead", "--out", out, "--format", "json"]) == 0
    text = (out / "overhead.json").read_text()
    report = OverheadReport.from_json(text)
    assert (report.crc_overhead, report.hac_overhead) == (8192, 1032)
    assert json.loads(report.to_json()) == json.loads(text)


def test_calibrate_writes_outputs(tmp_path):
    out = tmp_path / "c"
    assert run(["calibrate", "--config", write_config(tmp_path), "--out", out, "--seed", 3]) == 0
    names = set(os.listdir(out))
    assert {"scenario.json", "calibration_downlink.json", "calibration_uplink.json",
            "diagnostics.csv", "objective_trace.csv"} <= names
    with open(out / "diagnostics.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [r["direction"] for r in rows] == ["downlink", "uplink"]
    assert all(float(r["nmse_rx_digital"]) < 1e-20 for r in rows)
    scenario = json.loads((out / "scenario.json").read_text())
    assert scenario["seed"] == 3 and scenario["system"]["n_t"] == 16


def test_calibrate_rejects_short_pilots(tmp_path, capsys):
    path = write_config(tmp_path, SMALL.replace("q_da = 15", "q_da = 14"))
    assert run(["calibrate", "--config", path, "--out", tmp_path / "c"]) == 1
    assert "q_da=14 violates q_da >= n_tx - k_paths + 1 = 15" in capsys.readouterr().err


def test_unknown_key_exits_one(tmp_path, capsys):
    path = write_config(tmp_path, SMALL + "bogus_knob = 3\n")
    assert run(["sweep", "--config", path, "--out", tmp_path / "s"]) == 1
    assert "bogus_knob" in capsys.readouterr().err


def test_solver_failure_exits_two(tmp_path, monkeypatch, capsys):
    from hacal.errors import SolverError

    def fail(manifest):
        raise SolverError("no estimate")

    monkeypatch.setitem(cli.HANDLERS, "crlb", fail)
    assert run(["crlb", "--out", tmp_path]) == 2
    assert "no estimate" in capsys.readouterr().err


def test_sweep_outputs_and_timing(tmp_path):
    out = tmp_path / "s"
    start = time.perf_counter()
    assert run(["sweep", "--config", write_config(tmp_path), "--out", out]) == 0
    assert time.perf_counter() - start < 60
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    methods = {line.split(",")[1] for line in lines[1:]}
    assert methods == {"HAC", "OracleHAC", "Perfect", "None"}
    meta = json.loads((out / "results.meta.json").read_text())
    assert meta["spec"]["trials"] == 2 and meta["failures"] == {}


def test_sweep_json_format(tmp_path):
    out = tmp_path / "s"
    assert run(["sweep", "--config", write_config(tmp_path), "--out", out, "--format", "json"]) == 0
    data = json.loads((out / "results.json").read_text())
    assert set(data) == {"rows", "failures"}
    assert set(data["rows"][0]) == set(CSV_HEADER.split(","))


def test_replay_matches_sweep_point(tmp_path):
    path = write_config(tmp_path)
    assert run(["replay", "--config", path, "--out", tmp_path / "r", "--value-index", 1, "--trial", 1]) == 0
    with open(tmp_path / "r" / "trial.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert {r["method"] for r in rows} == {"HAC", "OracleHAC", "Perfect", "None"}
    assert all(r["sweep_value"] == "40.0" for r in rows)
    assert run(["replay", "--config", path, "--out", tmp_path / "r", "--trial", 2]) == 1


def test_crlb_command(tmp_path):
    out = tmp_path / "b"
    assert run(["crlb", "--config", write_config(tmp_path), "--out", out]) == 0
    with open(out / "crlb.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    counts = {}
    for r in rows:
        counts[r["coefficient"]] = counts.get(r["coefficient"], 0) + 1
        assert float(r["bound"]) >= 0
    assert counts == {"crlb_u1": 3, "crlb_t1": 4, "crlb_u2": 16, "crlb_t2": 16}


@pytest.mark.parametrize("command", ["calibrate", "sweep", "crlb", "overhead", "replay"])
def test_commands_byte_deterministic(tmp_path, command):
    path = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run([command, "--config", path, "--out", out, "--seed", 17]) == 0
    assert read_dir(a) == read_dir(b)


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hacal.cli", "overhead", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "8192" in proc.stdout
