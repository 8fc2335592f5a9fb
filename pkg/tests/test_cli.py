import csv

import pytest

from inattention import __version__
from inattention.cli import main


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gamma_prints_closed_form(capsys):
    assert main(["gamma", "--lambda-tilde", "1", "--rho", "1", "--sigma-pi2", "1"]) == 0
    out = capsys.readouterr().out.strip()
    assert float(out) == pytest.approx(0.5)


def test_missing_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["gamma", "--rho", "1", "--sigma-pi2", "1"])
    assert err.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert __version__ in capsys.readouterr().out


def test_fire_irf_reports_the_spell(tmp_path, capsys):
    assert main(["irf", "--fire", "--out", str(tmp_path), "--horizon", "30"]) == 0
    files = list(tmp_path.glob("irf_*.csv"))
    assert len(files) == 1
    rows = read(files[0])
    assert len(rows) == 30
    assert sum(int(r["elb_flag"]) for r in rows) == 5


def test_irf_without_a_bounded_path_is_a_numerical_failure(tmp_path):
    assert main(["irf", "--gamma", "0.3", "--out", str(tmp_path)]) == 1


def test_zero_shock_gives_a_flat_response(tmp_path):
    assert main(["irf", "--gamma", "0.3", "--size-sd", "0", "--name", "flat",
                 "--out", str(tmp_path), "--horizon", "10"]) == 0
    rows = read(next(tmp_path.glob("*flat*.csv")))
    assert all(float(r["pi_annualized"]) == 0 for r in rows)


def test_irf_output_is_byte_identical_across_runs(tmp_path):
    for d in ("a", "b"):
        assert main(["irf", "--gamma", "0.3", "--size-sd", "1", "--rho-belief", "0.95",
                     "--name", "x", "--out", str(tmp_path / d)]) == 0
    a, b = (next((tmp_path / d).glob("*.csv")).read_bytes() for d in ("a", "b"))
    assert a == b


def test_estimate_from_a_simulated_panel(tmp_path):
    ini = tmp_path / "panel.ini"
    ini.write_text("[panel]\nN = 20\nT = 60\nseed = 3\n")
    assert main(["estimate", "--simulate", str(ini), "--estimator", "ols",
                 "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "estimates.csv")
    assert len(rows) == 1 and 0 < float(rows[0]["gamma_hat"]) < 1


def test_rolling_estimates_from_a_panel_file(tmp_path):
    ini = tmp_path / "panel.ini"
    ini.write_text("[panel]\nN = 20\nT = 160\ndrop_initial = 0\n")
    assert main(["estimate", "--simulate", str(ini), "--window", "40",
                 "--out", str(tmp_path)]) == 0
    assert len(read(tmp_path / "estimates.csv")) == 121


def test_malformed_panel_names_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("forecaster_id,t,expectation,realized\n1,1,2.0,1.0\n1,2,oops,1.0\n")
    assert main(["estimate", "--panel", str(bad), "--out", str(tmp_path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\nkapa = 0.05\n")
    assert main(["gamma", "--config", str(ini), "--lambda-tilde", "1", "--rho", "1",
                 "--sigma-pi2", "1"]) == 2
    assert "kapa" in capsys.readouterr().err


def test_non_positive_tolerance_is_rejected(tmp_path):
    assert main(["ramsey", "--tol", "-1", "--out", str(tmp_path)]) == 2


def test_report_on_empty_directory_warns(tmp_path, capsys):
    assert main(["report", "--in", str(tmp_path), "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().err


def test_report_rejects_unknown_tables(tmp_path):
    (tmp_path / "junk.csv").write_text("a,b\n1,2\n")
    assert main(["report", "--in", str(tmp_path), "--out", str(tmp_path)]) == 2


def test_report_tidies_and_draws(tmp_path):
    runs = tmp_path / "runs"
    assert main(["irf", "--fire", "--out", str(runs)]) == 0
    assert main(["report", "--in", str(runs), "--out", str(tmp_path), "--no-figures"]) == 0
    assert (tmp_path / "report_irf.csv").exists()
    assert not list(tmp_path.glob("*.png"))
    assert main(["report", "--in", str(runs), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report_irf.png").stat().st_size > 0


@pytest.mark.slow
def test_ramsey_without_bound_never_binds(tmp_path):
    assert main(["ramsey", "--gamma-list", "0.3", "--elb", "off", "--grid", "5", "--quad", "3",
                 "--sim-T", "2000", "--horizon", "8", "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "ergodic.csv")
    assert all(float(r["elb_frequency"]) == 0 for r in rows)
    assert len(read(tmp_path / "ramsey_path_gamma0.3_elboff.csv")) == 8
