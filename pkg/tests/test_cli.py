import hashlib
import json

import pytest

from transindex import cli


def run(tmp_path, *argv):
    return cli.main(list(argv) + ["--out", str(tmp_path)])


def test_missing_seed_is_config_error(tmp_path, capsys):
    assert run(tmp_path, "fourier") == cli.EXIT_CONFIG
    assert "seed is required" in capsys.readouterr().err


def test_bad_flag_value_is_config_error(tmp_path):
    assert run(tmp_path, "index", "--seed", "x") == cli.EXIT_CONFIG
    assert run(tmp_path, "nonsense", "--seed", "1") == cli.EXIT_CONFIG


def test_unknown_space_reported_with_origin(tmp_path, capsys):
    assert run(tmp_path, "fourier", "--seed", "1", "--space", "moebius") == cli.EXIT_CONFIG
    assert "(--space)" in capsys.readouterr().err


def test_config_file_errors_carry_line_numbers(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[experiment]\nseed = 3\n\nt = -0.5\n")
    assert run(tmp_path, "index", "--config", str(cfg)) == cli.EXIT_CONFIG
    assert f"{cfg}:4" in capsys.readouterr().err
    cfg.write_text("[experiment]\nseed = 3\nwidth = 2\n")
    assert run(tmp_path, "index", "--config", str(cfg)) == cli.EXIT_CONFIG
    assert f"{cfg}:3: unknown key" in capsys.readouterr().err
    cfg.write_text("[experiment]\nseed = three\n")
    assert run(tmp_path, "index", "--config", str(cfg)) == cli.EXIT_CONFIG
    cfg.write_text("[other]\nseed = 1\n")
    assert run(tmp_path, "index", "--config", str(cfg)) == cli.EXIT_CONFIG


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[experiment]\nseed = 3\nspace = hopf\nm-max = 5\n")
    c = cli.load_config(["fourier", "--config", str(cfg), "--space", "lens-3"])
    assert c.space == "lens-3" and c.m_max == 5 and c.seed == 3


def test_t_grid_parsing():
    assert list(cli.parse_t_grid("0.1:0.3:3")) == pytest.approx([0.1, 0.2, 0.3])
    for bad in ("0.1:0.2", "-1:1:3", "0.3:0.1:2", "a:b:c"):
        with pytest.raises(ValueError):
            cli.parse_t_grid(bad)


def test_fourier_outputs_and_manifest(tmp_path, capsys):
    assert run(tmp_path, "fourier", "--seed", "1", "--space", "lens-3", "--m-max", "1") == cli.EXIT_OK
    out = tmp_path / "fourier"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 1
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    rows = (out / "fourier.csv").read_text().splitlines()
    assert rows[0] == "m,I_m"
    assert [float(r.split(",")[1]) for r in rows[1:]] == pytest.approx([-2.0, 1.0, 4.0])
    assert "I_m" in capsys.readouterr().out


def test_index_command_is_byte_stable(tmp_path):
    args = ("index", "--seed", "4", "--space", "flat-torus", "--paths", "300")
    assert run(tmp_path / "a", *args) == cli.EXIT_OK
    assert run(tmp_path / "b", *args) == cli.EXIT_OK
    for name in ("report.json", "densities.csv"):
        assert (tmp_path / "a" / "index" / name).read_bytes() == \
            (tmp_path / "b" / "index" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "index" / "report.json").read_text())
    assert report["verdict"] == "pass" and report["seed"] == 4


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["fourier", "--seed", "1", "--space", "hopf", "--m-max", "0"]) == cli.EXIT_OK
    assert (tmp_path / "env" / "fourier" / "manifest.json").exists()


def test_heat_table_columns(tmp_path):
    assert run(tmp_path, "heat", "--seed", "2", "--space", "flat-torus", "--t-grid", "0.1:0.2:2",
               "--points", "3", "--bounds") == cli.EXIT_OK
    header = (tmp_path / "heat" / "kernel.csv").read_text().splitlines()[0]
    assert header == "t,x0,x1,y0,y1,value,oracle,rel_err,resolved"
    assert json.loads((tmp_path / "heat" / "bounds.json").read_text())["far_violations"] == 0


def test_failed_verdict_exit_code(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.HANDLERS, "sample", lambda cfg, em: (False, {}))
    assert run(tmp_path, "sample", "--seed", "1") == cli.EXIT_VERDICT


def test_unwritable_output_is_config_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["fourier", "--seed", "1", "--m-max", "0", "--out", str(blocker)]) == cli.EXIT_CONFIG


def test_csv_floats_round_trip():
    text = cli.dumps_csv(["a", "b"], [[0.1 + 0.2, True]])
    assert text.splitlines()[1] == f"{0.1 + 0.2!r},true"


def test_quick_suite_summary_rows(tmp_path):
    assert run(tmp_path, "suite", "--quick", "--seed", "3", "--paths", "200") == cli.EXIT_OK
    rows = (tmp_path / "suite" / "spaces.csv").read_text().splitlines()
    assert rows[0].split(",")[:4] == ["space", "p", "euler", "geometric"]
    assert [r.split(",")[0] for r in rows[1:]] == list(cli.SUITE_SPACES)
    assert all(r.endswith(",true") for r in rows[1:])


def test_crash_exit_code(tmp_path, monkeypatch):
    def boom(cfg, em):
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.HANDLERS, "sample", boom)
    assert run(tmp_path, "sample", "--seed", "1") == cli.EXIT_CRASH
