import json
import subprocess
import sys

import numpy as np
import pytest

from djcg.cli import main

JC_MODEL = {"realization": "spin_boson", "epsilons": [1.0], "omega": 1.0, "V": 0.5}
SB3_MODEL = {"realization": "spin_boson", "epsilons": [0.3, 1.2, 2.6], "omega": 1.7, "V": 0.6}


def write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, *extra):
    out = tmp_path / f"{command}.json"
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    doc = json.loads(out.read_text()) if out.exists() else None
    return code, doc


def test_spectrum_document(tmp_path):
    code, doc = run(tmp_path, "spectrum", {"model": SB3_MODEL, "sector": {"M_range": [0, 2]}})
    assert code == 0
    assert set(doc) == {"model", "sector", "states", "tables", "diagnostics"}
    assert [s["M"] for s in doc["states"]] == [0] + [1] * 4 + [2] * 7
    for s in doc["states"]:
        assert s["residual"] <= 1e-12
        assert len(s["lambda_particle"]) == len(s["lambda_hole"]) == len(s["charges"]) == 3
    assert len(doc["tables"]["states"]["rows"]) == 12


def test_resonant_vacuum_is_a_warning(tmp_path, capsys):
    code, doc = run(tmp_path, "spectrum", {"model": JC_MODEL, "sector": {"M_range": [0, 1]}})
    assert code == 0
    assert doc["states"][0]["norm_product"] == 0.0
    assert any(d["level"] == "warning" for d in doc["diagnostics"])
    assert "zero norm product" in capsys.readouterr().err


def test_jc_form_factors(tmp_path):
    cfg = {"model": JC_MODEL, "formfactors": {"operators": ["Splus", "Bdag"], "bra_M": 1, "ket_M": 0}}
    code, doc = run(tmp_path, "formfactors", cfg)
    assert code == 0
    col = lambda name: [row[1] for row in doc["tables"][name]["rows"]]
    assert col("Splus[k=0].unnormalized") == pytest.approx([1.0, 1.0], abs=1e-12)
    assert col("Bdag.unnormalized") == pytest.approx([-1.0, 1.0], abs=1e-12)
    assert {s["role"] for s in doc["states"]} == {"bra", "ket"}


def test_diagonal_form_factors(tmp_path):
    cfg = {"model": JC_MODEL, "formfactors": {"operators": ["Sz", "NumberB"], "bra_M": 1, "ket_M": 1}}
    code, doc = run(tmp_path, "formfactors", cfg)
    assert code == 0
    sz = np.array([r[1:] for r in doc["tables"]["Sz[k=0].normalized"]["rows"]])
    nb = np.array([r[1:] for r in doc["tables"]["NumberB.normalized"]["rows"]])
    assert np.allclose(np.diag(sz), 0.0, atol=1e-12)
    assert np.allclose(np.diag(nb), 0.5, atol=1e-12)


def test_csv_output(tmp_path):
    cfg = {"model": SB3_MODEL, "formfactors": {"operators": ["Sz"], "bra_M": 1, "ket_M": 1, "sites": [0, 2]}}
    out = tmp_path / "ff.csv"
    assert main(["formfactors", "--config", write(tmp_path, cfg), "--out", str(out), "--format", "csv"]) == 0
    names = sorted(p.name for p in tmp_path.glob("ff.*.csv"))
    assert names == ["ff.Sz_k_0__normalized.csv", "ff.Sz_k_0__unnormalized.csv", "ff.Sz_k_2__normalized.csv", "ff.Sz_k_2__unnormalized.csv"]
    lines = (tmp_path / names[0]).read_text().splitlines()
    assert lines[0] == "bra,ket_0,ket_1,ket_2,ket_3"
    assert len(lines) == 5


def test_csv_needs_out(tmp_path):
    cfg = {"model": JC_MODEL, "sector": {"M": 1}, "output": {"format": "csv"}}
    assert main(["spectrum", "--config", write(tmp_path, cfg)]) == 1


def test_initial_round_trip(tmp_path):
    cfg = {"model": SB3_MODEL, "sector": {"M": 2}}
    _, first = run(tmp_path, "spectrum", cfg)
    prev = tmp_path / "prev.json"
    prev.write_text(json.dumps(first))
    code, second = run(tmp_path, "spectrum", cfg, "--initial", str(prev))
    assert code == 0
    for a, b in zip(first["states"], second["states"]):
        assert np.allclose(a["lambda_particle"], b["lambda_particle"], rtol=0, atol=1e-12)


def test_precision_flag(tmp_path):
    _, doc = run(tmp_path, "spectrum", {"model": SB3_MODEL, "sector": {"M": 1}}, "--precision", "4")
    for v in doc["states"][0]["lambda_particle"]:
        assert v == float(f"{v:.4g}")
    assert main(["spectrum", "--config", write(tmp_path, {"model": SB3_MODEL, "sector": {"M": 1}}), "--precision", "30"]) == 1


def test_stdout_json(tmp_path, capsys):
    assert main(["spectrum", "--config", write(tmp_path, {"model": JC_MODEL, "sector": {"M": 1}})]) == 0
    assert len(json.loads(capsys.readouterr().out)["states"]) == 2


@pytest.mark.parametrize(
    "cfg",
    [
        {"model": JC_MODEL, "sector": {"M": 1}, "typo": 1},
        {"model": {**JC_MODEL, "colour": "red"}, "sector": {"M": 1}},
        {"model": {**SB3_MODEL, "epsilons": [0.3, 0.3, 1.0]}, "sector": {"M": 1}},
        {"model": JC_MODEL, "sector": {"M": 1, "M_range": [0, 1]}},
        {"model": JC_MODEL, "sector": {"M": -1}},
        {"model": JC_MODEL},
        {"model": {"realization": "spin_only", "epsilons": [0.0, 1.0], "g": 0.5}, "sector": {"M": 3}},
        {"model": {"realization": "spin_only", "epsilons": [0.0, 1.0], "g": 0.5},
         "formfactors": {"operators": ["Bdag"], "bra_M": 1, "ket_M": 0}},
        {"model": SB3_MODEL, "formfactors": {"operators": ["Splus"], "bra_M": 1, "ket_M": 1}},
        {"model": SB3_MODEL, "formfactors": {"operators": ["Sx"], "bra_M": 1, "ket_M": 1}},
        {"model": SB3_MODEL, "formfactors": {"operators": ["Sz"], "bra_M": 1, "ket_M": 1, "sites": [3]}},
        {"model": SB3_MODEL, "scan": {"parameter": "g", "grid": [0.1, 0.2], "M": 1}},
        {"verify": {"tolerances": {"nonsense": 1.0}}},
        {"verify": {"max_sector_dimension": 5}},
    ],
)
def test_configuration_errors(tmp_path, cfg, capsys):
    assert main(["formfactors" if "formfactors" in cfg else "scan" if "scan" in cfg else "verify" if "verify" in cfg else "spectrum",
                 "--config", write(tmp_path, cfg)]) == 1
    assert "config error" in capsys.readouterr().err


def test_duplicate_levels_are_named(tmp_path, capsys):
    cfg = {"model": {**SB3_MODEL, "epsilons": [0.3, 1.2, 1.2]}, "sector": {"M": 1}}
    assert main(["spectrum", "--config", write(tmp_path, cfg)]) == 1
    assert "1" in capsys.readouterr().err


def test_convergence_failure_keeps_partial_output(tmp_path):
    cfg = {"model": SB3_MODEL, "sector": {"M_range": [0, 1]}, "solver": {"max_newton_iters": 1, "newton_tol": 1e-300}}
    code, doc = run(tmp_path, "spectrum", cfg)
    assert code == 2
    assert any(d["level"] == "error" for d in doc["diagnostics"])


def test_scan_command(tmp_path):
    cfg = {"model": SB3_MODEL, "scan": {"parameter": "V", "grid": {"start": 0.1, "stop": 0.6, "num": 6}, "M": 1}}
    code, doc = run(tmp_path, "scan", cfg)
    assert code == 0
    assert len(doc["tables"]["scan"]["rows"]) == 6 * 4
    assert max(s["residual"] for s in doc["states"]) <= 1e-12


def test_verify_failure_exit_code(tmp_path):
    tight = {"verify": {"tolerances": {"form_factors": 1e-30}}}
    code, doc = run(tmp_path, "verify", tight)
    assert code == 4
    rows = doc["tables"]["checks"]["rows"]
    failed = [r[0] for r in rows if not r[3]]
    assert failed and all("form factors" in name for name in failed)


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "djcg.cli", "spectrum", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "--initial" in res.stdout
