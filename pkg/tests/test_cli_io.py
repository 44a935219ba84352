import csv
import math

import pytest

from qcascade.cli import main
from qcascade.config import RunConfig, apply_overrides, format_config, parse_config
from qcascade.errors import ConfigError
from qcascade.io import emit_records, format_float
from qcascade.observables import CorrelationRecord
from qcascade.scenarios import SystemParams

FAST = ["--set", "escalate=false", "--set", "cutoff_s=2", "--set", "cutoff_t=2", "--set", "n_max=3"]


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.params == SystemParams() and cfg.scenario == "cascaded"


def test_default_value_override_is_a_no_op():
    assert parse_config("gamma_t = 0.5\n") == RunConfig()


def test_comments_blank_lines_and_types():
    cfg = parse_config("# header\n\nkappa_t = 0.01  # loss\nescalate = FALSE\nworkers=3\nscenario = coherent\n")
    assert cfg.params.kappa_t == 0.01 and cfg.escalate is False and cfg.workers == 3
    assert cfg.scenario == "coherent"


@pytest.mark.parametrize("text,needle", [
    ("kappa_s = -1", "kappa_s"),
    ("kappa = 1", "unknown key 'kappa'"),
    ("g_s = fast", "g_s: expected a number"),
    ("cutoff_t = 0", "cutoff_t"),
    ("cutoff_t = 2.5", "cutoff_t: expected an integer"),
    ("scenario = squeezed", "scenario"),
    ("just words", "expected 'key = value'"),
    ("dt =", "missing value"),
    ("escalate = maybe", "true or false"),
])
def test_config_errors_name_line_and_key(text, needle):
    with pytest.raises(ConfigError) as err:
        parse_config("# ok\n" + text + "\n", source="run.cfg")
    assert needle in str(err.value)
    assert "run.cfg: line 2" in str(err.value)


def test_round_trip():
    cfg = parse_config("kappa_s = 0.0\npump_t = 0.3\nscenario = incoherent\npoints = 7\nescalate = false\n")
    assert parse_config(format_config(cfg)) == cfg
    assert parse_config(format_config(RunConfig())) == RunConfig()


def test_overrides():
    cfg = apply_overrides(RunConfig(), ["g_t=0.2", "points = 5"])
    assert cfg.params.g_t == 0.2 and cfg.points == 5
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), ["g_t"])
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), ["nope=1"])


def rec(pump, system, converged=True, n_max=3):
    g = {n: 1.0 / 3.0 * n for n in range(2, n_max + 1)}
    return CorrelationRecord(pump, system, 0.123456789012345, g, 6, 8, converged)


def test_emit_records_format(tmp_path):
    path = emit_records([rec(0.2, "target", False), rec(0.2, "source"), rec(0.1, "target")], tmp_path / "r.csv", 3)
    lines = path.read_text().splitlines()
    assert lines[0] == "pump_rate,system,mean_n,g2,g3,cutoff_s,cutoff_t,converged"
    assert lines[1].startswith("0.1,target,0.123456789012,")
    assert [l.split(",")[1] for l in lines[1:]] == ["target", "source", "target"]
    assert lines[3].endswith(",6,8,false") and lines[2].endswith(",6,8,true")
    assert lines[1].split(",")[3] == "0.666666666667"


def test_emit_records_missing_orders_and_errors(tmp_path):
    r = CorrelationRecord(0.1, "target", 0.0, {}, 2, 2, True)
    row = emit_records([r], tmp_path / "r.csv", 3).read_text().splitlines()[1]
    assert row == "0.1,target,0,,,2,2,true"
    with pytest.raises(ValueError):
        emit_records([], tmp_path / "x.csv")
    with pytest.raises(OSError):
        emit_records([r], tmp_path / "missing" / "x.csv")


def test_float_format_is_locale_free():
    assert format_float(1234567.0) == "1234567"
    assert format_float(1e-20) == "1e-20"
    assert format_float(math.nan) == ""


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as err:
        main(["bogus"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["sweep", "--pump", "0.1"])
    assert err.value.code == 1


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("kappa_s = -1\n")
    assert main(["sweep", "--config", str(cfg), "--output", str(tmp_path)]) == 1
    assert "kappa_s" in capsys.readouterr().err
    assert main(["sweep", "--config", str(tmp_path / "none.cfg")]) == 1


def test_cli_sweep_outputs(tmp_path, capsys):
    args = ["sweep", "--output", str(tmp_path), "--set", "points=3", "--set", "pump_min=0.01",
            "--set", "n_emitters_target=1"] + FAST
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "crossing:" in out
    first = (tmp_path / "records.csv").read_bytes()
    with open(tmp_path / "transition.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["pump", "source_g2dd", "target_g2dd"] and len(rows) == 4
    assert parse_config((tmp_path / "config.txt").read_text()).points == 3
    assert main(args) == 0
    assert (tmp_path / "records.csv").read_bytes() == first


def test_cli_unconverged_exit_code(tmp_path):
    args = ["sweep", "--output", str(tmp_path), "--set", "points=2", "--set", "max_time=1",
            "--set", "n_emitters_target=1"] + FAST
    assert main(args) == 2
    assert "false" in (tmp_path / "records.csv").read_text()


def test_cli_gn_spectrum(tmp_path):
    assert main(["gn-spectrum", "--pump", "0.1", "--output", str(tmp_path)] + FAST[:-2] + ["--set", "n_max=10"]) == 0
    with open(tmp_path / "gn_spectrum.csv") as fh:
        rows = list(csv.DictReader(fh))
    systems = {}
    for r in rows:
        systems.setdefault(r["system"], []).append(r)
    assert set(systems) == {"source", "target_1tls", "target_2tls", "thermal", "coherent", "fock"}
    assert all(len(v) == 10 for v in systems.values())
    assert [r["n"] for r in systems["source"]] == [str(n) for n in range(1, 11)]
    assert float(systems["thermal"][2]["g"]) == 6 and float(systems["fock"][1]["g"]) == 0.5


def test_cli_distribution(tmp_path):
    assert main(["distribution", "--output", str(tmp_path)] + FAST) == 0
    with open(tmp_path / "distribution.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert sum(float(r["target"]) for r in rows) == pytest.approx(1, abs=1e-8)


def test_cli_drive_compare(tmp_path):
    args = ["drive-compare", "--output", str(tmp_path), "--set", "points=2", "--set", "n_emitters_target=1"] + FAST
    assert main(args) == 0
    text = (tmp_path / "drive_compare.csv").read_text()
    assert ",coherent," in text and ",incoherent," in text


def test_cli_verify(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out
