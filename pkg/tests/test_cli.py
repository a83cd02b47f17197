import csv
import json

import pytest

from stoqmps.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from stoqmps.config import ConfigError, parse_config

BASE = """\
model: {name: sdim, V: 0.0}
temperatures: [1.0]
q: [1]
tau_max: 2
kind: [psa, csa]
optimizer:
  n_batch: 2
sampler: {shots: 200}
correlators: {basis: Z, max_distance: 2}
oracle: {L: 6, temperatures: [0.5, 1.0]}
"""


def _write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(path):
    lines = path.read_text().splitlines()
    header = [l for l in lines if l.startswith("# ")]
    return header, list(csv.DictReader(l for l in lines if not l.startswith("# ")))


def test_parse_defaults_and_conversion():
    cfg = parse_config(BASE + "seed: 4\n")
    assert cfg.model == {"model": "sdim", "V": 0.0}
    assert cfg.hamiltonian.name == "sdim"
    assert cfg.optimizer.seed == 4 and cfg.sampler.seed == 4
    assert cfg.kind == ["psa", "csa"] and cfg.tau_max == 2
    assert parse_config("model: heisenberg\ntemperatures: 1\nq: 2\n").q == [2]


@pytest.mark.parametrize("text,line,path", [
    (BASE.replace("  n_batch: 2", "  n_batch: 2\n  bogus: 1"), 8, "optimizer.bogus"),
    (BASE.replace("q: [1]", "q: [1, -2]"), 3, "q.1"),
    (BASE.replace("tau_max: 2", "tau_max: two"), 4, "tau_max"),
    (BASE.replace("kind: [psa, csa]", "kind: [psa, xyz]"), 5, "kind.1"),
    (BASE + "geometry: spiral\n", 11, "geometry"),
    (BASE.replace("V: 0.0", "V: 0.0, W: 1"), 1, "model.W"),
    (BASE + "correlators2: {}\n", 11, "correlators2"),
])
def test_errors_name_line_and_key(text, line, path):
    with pytest.raises(ConfigError) as err:
        parse_config(text, "run.yaml")
    assert str(err.value).startswith(f"run.yaml:{line}: {path}: ")


def test_missing_required_key():
    with pytest.raises(ConfigError, match="missing required key 'q'"):
        parse_config("model: sdim\ntemperatures: [1]\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        parse_config("model: [sdim\n")


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, BASE.replace("  n_batch: 2", "  n_batch: 2\n  bogus: 1"), "bad.yaml")
    assert main(["optimize", "--config", bad]) == EXIT_CONFIG
    assert f"{bad}:8: optimizer.bogus: unknown key" in capsys.readouterr().err
    assert main(["optimize", "--config", str(tmp_path / "none.yaml")]) == EXIT_CONFIG
    good = _write(tmp_path, BASE)
    assert main(["optimize", "--config", good, "--jobs", "0"]) == EXIT_CONFIG
    assert main(["sample", "--config", good, "--out", str(tmp_path / "empty")]) == EXIT_RUNTIME
    assert "missing run artifact" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["optimize"])


def test_optimize_resume_and_sample(tmp_path, capsys):
    cfg = _write(tmp_path, BASE)
    out = tmp_path / "out"
    assert main(["optimize", "--config", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
    first = json.loads(capsys.readouterr().out)
    assert first["levels_computed"] == 4
    header, rows = _rows(out / "optimize.csv")
    assert header[0].startswith("# stoqmps ") and header[1] == "# seed: 3"
    assert json.loads(header[2][len("# config: "):])["seed"] == 3
    assert len(rows) == 4 and {r["kind"] for r in rows} == {"psa", "csa"}
    assert all(float(r["min_visited_f"]) >= float(r["f_exact"]) - 1e-8 for r in rows)
    assert (out / "depth_psa_q1_T1.csv").exists() and (out / "psa_vs_csa.csv").exists()
    level = json.loads((out / "sdim/psa/q1/T1/tau02.json").read_text())
    assert level["complete"] and level["tau"] == 2

    # a second invocation resumes from the saved levels and reproduces the same numbers
    assert main(["optimize", "--config", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["levels_computed"] == 0
    assert _rows(out / "optimize.csv")[1] == rows

    assert main(["sample", "--config", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
    _, sample = _rows(out / "sample.csv")
    assert {r["observable"] for r in sample} >= {"XX", "Z", "energy[X]", "energy[Z]", "free_energy"}
    _, corr = _rows(out / "correlators.csv")
    assert [r["observable"] for r in corr[:3]] == ["Z", "ZZ(r=1)", "ZZ(r=2)"]


def test_oracle_and_scan(tmp_path, capsys):
    cfg = _write(tmp_path, BASE.replace("tau_max: 2", "tau_max: 1").replace("[psa, csa]", "psa"))
    out = tmp_path / "out"
    assert main(["oracle", "--config", cfg, "--out", str(out)]) == EXIT_OK
    _, rows = _rows(out / "oracle_sdim_L6.csv")
    assert [float(r["T"]) for r in rows] == [0.5, 1.0]
    assert all(float(r["relative_difference"]) < 0.05 for r in rows)
    assert main(["scan", "--config", cfg, "--out", str(out)]) == EXIT_OK
    _, scan = _rows(out / "scan_psa_q1.csv")
    assert len(scan) == 1 and scan[0]["tau"] == "1"
