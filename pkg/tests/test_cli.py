import numpy as np
import pytest

from fracball.cli import build_parser, main
from fracball.config import default_config, emit_config, parse_config


def test_constants(capsys):
    assert main(["constants", "--dim", "2", "--alpha", "0.5", "--sigma", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "0.15915494" in out and "c(sigma, alpha)" in out


@pytest.mark.parametrize("kind,ref", [("torsion", 2 / np.pi), ("gamma", 1 / (2 * np.pi) / 0.6 ** 3)])
def test_kernel(capsys, kind, ref):
    assert main(["kernel", kind, "--x", "0 1", "--s", "0.1"] if kind == "torsion"
                else ["kernel", kind, "--x", "0 0.5", "--s", "0.1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(ref, rel=1e-6)


def test_kernel_error_exit_code(capsys):
    assert main(["kernel", "green", "--x", "0 1.5", "--y", "0 1.5"]) == 2
    assert "error" in capsys.readouterr().err


def test_fracop(capsys):
    assert main(["fracop", "--x", "0.5 0", "--sigma", "0.5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    a, b = (float(l.split("=")[1]) for l in lines)
    assert a == pytest.approx(b, rel=1e-3)


def test_greenop_and_solve(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FRACBALL_CACHE_DIR", str(tmp_path / "cache"))
    assert main(["greenop", "--resolution", "8"]) == 0
    assert "torsion_sup_rel_error" in capsys.readouterr().out
    out = tmp_path / "solve"
    assert main(["solve", "--resolution", "8", "--s", "0.2", "--out", str(out)]) == 0
    assert (out / "solution.csv").read_text().startswith("x1,x2,u\n")
    assert "converged,true" in (out / "report.csv").read_text()
    assert main(["solve", "--resolution", "8", "--s", "0", "--p", "1.2", "--out", str(out)]) == 2


def test_experiment_emit_config(capsys, tmp_path):
    assert main(["experiment", "E4_constants", "--emit-config", "--out", str(tmp_path)]) == 0
    cfg = parse_config(capsys.readouterr().out)
    assert cfg == default_config("E4_constants", str(tmp_path))


def test_experiment_config_mismatch(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(emit_config(default_config("E4_constants")))
    assert main(["experiment", "E2_blowup", "--config", str(p)]) == 2


def test_experiment_subcritical_exit(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(emit_config(default_config("E1_exponent")).replace("params.p = 3.0", "params.p = 1.4"))
    assert main(["experiment", "E1_exponent", "--config", str(p), "--out", str(tmp_path)]) == 2


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
