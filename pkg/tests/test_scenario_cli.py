import csv
import json
import math
from pathlib import Path

import pytest

from heralded import cli, dispersion, pipeline, scenario, table
from heralded.errors import ConfigError
from heralded.estimators import EstimateReport

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "heralded" / "data" / "scenarios"

SMALL = """
[small]
analyses = estimates, histogram, dispersion, spectrum
outputs = json, csv, ttbin
seed = 17
duration = 0.05
pairs_per_pulse = 0.01
twin_measurement = yes
[small.signal]
transmission = 0.3
[small.idler]
transmission = 0.6
[small.spectrum]
points = 128
"""


def test_bundled_high_rate_scenario():
    scens = {s.name: s for s in scenario.load_scenarios(SCENARIOS / "scenario-a-highrate.ini")}
    s = scens["scenario-a-highrate"]
    assert s.config.pair_statistics.mean == 0.1
    assert s.config.signal.transmission == 0.39 and s.config.idler.transmission == 0.45
    assert s.config.signal_detector.dead_time == pytest.approx(108e-9, abs=1e-9)
    assert s.calibration == "scenario-a-lowpower"


def test_all_bundled_files_load():
    files = sorted(SCENARIOS.glob("*.ini"))
    assert len(files) >= 5
    for f in files:
        assert scenario.load_scenarios(f)


def test_empty_file(tmp_path):
    (tmp_path / "e.ini").write_text("# nothing here\n")
    with pytest.raises(ConfigError, match="no scenarios"):
        scenario.load_scenarios(tmp_path / "e.ini")


def test_transmission_bound():
    with pytest.raises(ConfigError, match=r"signal\.transmission.*\[0, 1\]"):
        scenario.parse_scenarios("[x]\nanalyses = estimates\n[x.signal]\ntransmission = 1.2\n")


@pytest.mark.parametrize("text,match", [
    ("[x]\nanalyses = estimates\nbogus = 1\n", "unknown key"),
    ("[x]\nanalyses = estimates\n[x.laser]\n", "unknown section"),
    ("[x]\nanalyses = estimates\n[y.pump]\n", "no parent"),
    ("[x]\noutputs = json\n", "missing required key 'analyses'"),
    ("[x]\nanalyses = plots\n", "analyses"),
    ("[x]\nanalyses = estimates\nseed = abc\n", "seed"),
    ("[x]\nanalyses = estimates\npairs_per_pulse = 0.01\n[x.pump]\nrep_rate = 0\n", "rep_rate"),
    ("[x]\nanalyses = estimates\n", "pairs_per_pulse"),
])
def test_validation_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        scenario.parse_scenarios(text)


def test_parse_error_reports_line():
    with pytest.raises(scenario.ScenarioParseError, match="line +3"):
        scenario.parse_scenarios("[x]\nanalyses = estimates\nnot a key value line\n")


def test_duplicate_names_rejected():
    with pytest.raises(scenario.ScenarioParseError):
        scenario.parse_scenarios("[x]\nanalyses = estimates\n[x]\nanalyses = spectrum\n")


def test_config_echo_round_trip():
    (s,) = scenario.parse_scenarios(SMALL)
    (again,) = scenario.parse_scenarios(scenario.scenario_to_ini(s))
    assert again.hash() == s.hash()
    assert again.config == s.config
    assert scenario.with_seed(s, 18).hash() != s.hash()
    assert scenario.with_seed(s, 18).config.seed == 18


def test_run_manifest_and_determinism(tmp_path):
    (s,) = scenario.parse_scenarios(SMALL)
    m1 = pipeline.run(s, tmp_path / "a")
    m2 = pipeline.run(s, tmp_path / "b")
    assert m1.config_hash == m2.config_hash == s.hash()
    expected = {"config.ini", "dispersion.csv", "histogram.csv", "peaks.json", "events.ttbin",
                "events.csv", "spectrum.csv", "report.json"}
    assert set(m1.files()) == expected
    for name in m1.files():
        a = tmp_path / "a" / "small" / name
        assert a.stat().st_size > 0
        assert a.read_bytes() == (tmp_path / "b" / "small" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "small" / "manifest.json").read_text())
    assert manifest["seed"] == 17 and manifest["config_hash"] == s.hash()


def test_dispersion_only_scenario(tmp_path):
    (s,) = scenario.load_scenarios(SCENARIOS / "dispersion.ini")
    m = pipeline.run(s, tmp_path)
    assert m.files() == ["config.ini", "dispersion.csv"]
    with open(tmp_path / s.output_dir / "dispersion.csv") as fh:
        rows = {r["quantity"]: float(r["value"]) for r in csv.DictReader(fh)}
    assert rows["ng_signal"] == pytest.approx(dispersion.group_index(0.81, 180), abs=1e-5)
    w = dispersion.walkoff(dispersion.CrystalSpec(0.01))
    assert rows["walkoff_mean"] == pytest.approx(w.walkoff_mean * 1e10, rel=1e-5)


def test_missing_calibration_names_scenario_and_stage(tmp_path):
    text = "[x]\nanalyses = estimates\npairs_per_pulse = 0.01\nduration = 0.01\n" \
           "calibration = nowhere\n"
    (s,) = scenario.parse_scenarios(text)
    with pytest.raises(pipeline.PipelineError) as info:
        pipeline.run(s, tmp_path)
    assert info.value.scenario == "x" and info.value.stage == "estimates"


def _fake_report(**kw):
    base = dict(name="r", heralding_efficiency=0.45, heralding_efficiency_sigma=0.01,
                herald_rate=4.4e6, p_from_rates=0.1, pump_power=7.5e-3, bandwidth_nm=2.8)
    base.update(kw)
    return EstimateReport(**base)


def test_table_this_work_row():
    cells = table.report_cells(_fake_report())
    assert cells[0] == "This work"
    assert cells[7] == "4.4·10^3" and cells[8] == "4.4·10^3 *"
    assert cells[9].startswith("45±") and cells[4] == "3" and cells[6] == "0.1"
    low = table.report_cells(_fake_report(p_from_rates=0.009, herald_rate=94e3))
    assert low[7] == "94" and low[8] == ""


def test_table_literature_rows():
    rows = {r.source: r for r in table.load_literature()}
    assert table.format_rate(rows["Bussieres"].scaled_rate()) == "63"
    assert table.format_rate(rows["Soujaeff"].scaled_rate()) == "260"
    assert rows["Slater"].cells()[8] == "-"
    text = table.table_one([_fake_report()])
    assert text.splitlines()[2].startswith("This work")
    assert "Castelletto" in text and "NR" in text


def test_table_missing_column(tmp_path):
    path = tmp_path / "lit.csv"
    path.write_text("source,year\nA,2000\n")
    with pytest.raises(table.TableError, match="missing column"):
        table.load_literature(path)


def test_round_half_up():
    assert table.round_half_up(62.5) == 63 and table.round_half_up(2.5) == 3
    assert table.format_rate(6500) == "6.5·10^3" and table.format_rate(9960) == "1·10^4"
    assert table.format_rate(math.nan) == "-"


def test_cli_run_and_table(tmp_path, capsys):
    ini = tmp_path / "s.ini"
    ini.write_text(SMALL)
    assert cli.main(["run", str(ini), "--out", str(tmp_path / "out"), "--seed", "3"]) == 0
    report = tmp_path / "out" / "small" / "report.json"
    assert json.loads((tmp_path / "out" / "small" / "manifest.json").read_text())["seed"] == 3
    assert cli.main(["table1", str(report)]) == 0
    assert "This work" in capsys.readouterr().out


def test_cli_scenario_selection_runs_calibration_first(tmp_path):
    text = SMALL.replace("[small", "[base") + SMALL.replace(
        "twin_measurement = yes", "calibration = base")
    ini = tmp_path / "two.ini"
    ini.write_text(text)
    assert cli.main(["run", str(ini), "--scenario", "small", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "base" / "report.json").exists()
    rep = EstimateReport.from_json(tmp_path / "small" / "report.json")
    assert rep.extras["t_810_source"] == "calibration:base"


def test_cli_dispersion(capsys):
    assert cli.main(["dispersion", "532", "810", "1550", "180", "0.01"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("quantity,value,unit") and "poling_period" in out


def test_cli_spectrum(tmp_path, capsys):
    assert cli.main(["spectrum", str(SCENARIOS / "spectra.ini"), "--out", str(tmp_path)]) == 0
    assert "spectrum-4cm-pulsed: idler FWHM" in capsys.readouterr().out
    assert (tmp_path / "spectrum-1cm-cw" / "spectrum.csv").exists()


@pytest.mark.parametrize("argv,code", [
    ([], 1),
    (["frobnicate"], 1),
    (["dispersion", "532", "810"], 1),
    (["run", "x.ini", "--workers", "0"], 1),
    (["run", "/nonexistent.ini"], 2),
    (["dispersion", "532", "800", "1550", "180", "0.01"], 2),
    (["dispersion", "532", "810", "1550", "300", "0.01"], 2),
    (["table1", "/nonexistent.json"], 2),
])
def test_cli_exit_codes(argv, code, capsys):
    assert cli.main(argv) == code if code != 1 else _exits(argv) == 1


def _exits(argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    return info.value.code


def test_cli_config_and_runtime_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\nanalyses = estimates\n[x.idler]\ntransmission = 1.2\n")
    assert cli.main(["run", str(bad)]) == 2
    missing = tmp_path / "missing.ini"
    missing.write_text("[x]\nanalyses = estimates\npairs_per_pulse = 0.01\nduration = 0.01\n"
                       "calibration = nowhere\n")
    assert cli.main(["run", str(missing), "--out", str(tmp_path)]) == 3
    assert cli.main(["run", str(missing), "--scenario", "nope"]) == 2
