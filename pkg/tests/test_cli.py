import json
import os
from math import pi

import pytest

from hybridem.cli_io import (
    EXIT_CHECK, EXIT_CONFIG, ConfigError, main, parse_config, read_config_file,
)


def write(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def test_defaults(monkeypatch):
    monkeypatch.delenv("HYBRIDEM_OUT", raising=False)
    cfg = parse_config("eigen")
    assert (cfg.N, cfg.r, cfg.m, cfg.eps, cfg.mu, cfg.sigma) == (16, 2, 3, 1.0, 1.0, 2.0)
    assert not cfg.nonconforming
    assert cfg.out == "hybridem-out"
    monkeypatch.setenv("HYBRIDEM_OUT", "/tmp/elsewhere")
    assert parse_config("eigen").out == "/tmp/elsewhere"


def test_time_defaults_and_t_end():
    cfg = parse_config("time")
    assert cfg.dt == pi / 512 and cfg.steps == 1024
    assert cfg.t_end == pytest.approx(2 * pi)
    assert parse_config("time", overrides={"dt": 0.1, "t_end": 1.0}).steps == 10
    with pytest.raises(ConfigError):
        parse_config("time", overrides={"dt": 0.1, "steps": 3, "t_end": 1.0})


def test_file_and_override_precedence(tmp_path):
    path = write(tmp_path, "[run]\nN = 4\nr = 3\n[eigen]\nsigma = 2.5\n")
    cfg = parse_config("eigen", path, {"N": 8})
    assert (cfg.N, cfg.r, cfg.sigma) == (8, 3, 2.5)
    assert "sigma = 2.5" in cfg.echo


@pytest.mark.parametrize("text", [
    "[run]\nfoo = 1\n", "[nosuch]\nN = 2\n", "[run]\nN = two\n", "not an ini",
])
def test_bad_files(tmp_path, text):
    with pytest.raises(ConfigError):
        read_config_file(write(tmp_path, text))


@pytest.mark.parametrize("over", [{"r": 6}, {"N": 0}, {"mult_degree": 7}, {"eps": -1.0}])
def test_validation(over):
    with pytest.raises(ConfigError):
        parse_config("eigen", overrides=over)


def test_nonconforming_flag(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["time", "--N", "2", "--mult-degree", "2", "--steps", "4",
                 "--out", str(out)]) == 0
    meta = json.loads((out / "time-metadata.json").read_text())
    assert meta["nonconforming"] is True
    assert meta["kernel_nullity"] > meta["conforming_dim"]
    assert (out / "time-series.csv").exists()


def test_mesh_info(tmp_path, capsys):
    assert main(["mesh-info", "--N", "16", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("512 cells")
    meta = json.loads((tmp_path / "mesh-info-metadata.json").read_text())
    assert meta["cells"] == 512


def test_eigen_command(tmp_path, capsys):
    assert main(["eigen", "--N", "4", "--out", str(tmp_path), "--vtk-stride", "1"]) == 0
    lines = (tmp_path / "eigen.csv").read_text().splitlines()
    assert lines[0].startswith("r,N,omega2")
    assert float(lines[1].split(",")[2]) == pytest.approx(2.1313458810832517, rel=1e-10)
    assert (tmp_path / "eigenmode.vtk").exists()


def test_convergence_command(tmp_path, capsys):
    assert main(["convergence", "--r-list", "2", "--N-list", "2,4",
                 "--out", str(tmp_path)]) == 0
    text = (tmp_path / "convergence.csv").read_text().splitlines()
    assert text[0] == "r,N,err_H,rate_H,err_Hhat,rate_Hhat,err_D,rate_D,err_Dhat,rate_Dhat"
    assert len(text) == 3


def test_exit_codes(tmp_path, capsys, monkeypatch):
    assert main(["eigen", "--r", "9", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "error[config]" in capsys.readouterr().err
    import hybridem.selfcheck as sc
    monkeypatch.setattr(sc, "SUITES", {"always fails": lambda: (False, "forced")})
    assert main(["check", "--out", str(tmp_path)]) == EXIT_CHECK
    assert "error[check]" in capsys.readouterr().err


def test_check_passes(tmp_path, capsys):
    assert main(["check", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out
    assert os.path.exists(tmp_path / "check-metadata.json")
