import json
import subprocess
import sys

import numpy as np
import pytest

from sobodec.cli import main, resolve_threads
from sobodec.corpus import random_function
from sobodec.grid import box_domain
from sobodec.io import read_json, read_sgf1, write_json, write_sgf1

SMALL = {
    "corpus": {
        "generator": "bubble",
        "K": 6,
        "domain": {"kind": "box", "lower": [-2], "upper": [2], "h": 1 / 32},
        "params": {"scale_max": 8},
        "exponents": {"q": 1.5, "p": 2.5, "N": 1, "p_star": 5.0},
    },
    "decompose": {"q": 1.5, "p": 2.5, "p_star": 5.0},
    "assert": {"properties": False},
}


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    write_json(path, SMALL)
    return str(path)


def test_generate_is_deterministic(tmp_path, cfg_file):
    for name in ("a", "b"):
        assert main(["generate", "--config", cfg_file, "--out", str(tmp_path / name), "--no-figures"]) == 0
    for f in ["input_001.sgf", "input_006.sgf", "norms.csv", "manifest.json"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert not (tmp_path / "a" / "members.png").exists()


def test_seed_override_changes_random_corpus(tmp_path):
    cfg = {"corpus": {"generator": "random", "K": 3, "domain": {"kind": "box", "lower": [-1], "upper": [1], "h": 1 / 16}}}
    path = tmp_path / "r.json"
    write_json(path, cfg)
    for s in ("1", "2"):
        assert main(["generate", "--config", str(path), "--seed", s, "--out", str(tmp_path / s), "--no-figures"]) == 0
    assert (tmp_path / "1" / "input_001.sgf").read_bytes() != (tmp_path / "2" / "input_001.sgf").read_bytes()


def test_decompose_writes_components(tmp_path, cfg_file, capsys):
    out = tmp_path / "d"
    assert main(["decompose", "--config", cfg_file, "--out", str(out)]) == 0
    man = read_json(out / "manifest.json")
    L = len(man["k3"])
    assert man["reconstruction_error"] <= 1e-12
    assert (out / f"U4_{L:03d}.sgf").exists()
    assert (out / "properties.csv").read_text().startswith("check,rule,tail,bound,pass\n")
    assert (out / "components_last.png").exists()
    assert "reconstruction error" in capsys.readouterr().out


def test_threads_from_environment(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("SOBODEC_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    out = tmp_path / "d"
    assert main(["decompose", "--config", cfg_file, "--out", str(out), "--no-figures"]) == 0
    assert read_json(out / "manifest.json")["config"]["threads"] == 3
    monkeypatch.delenv("SOBODEC_THREADS")
    assert resolve_threads(None) == 1


def test_diagnose(tmp_path, cfg_file):
    out = tmp_path / "g"
    assert main(["diagnose", "--config", cfg_file, "--out", str(out), "--no-figures"]) == 0
    rep = read_json(out / "diagnose.json")
    assert "vanishing_check" in rep and rep["moduli"]


def test_verify_truncation(tmp_path):
    dom = box_domain(-2, 2, 1 / 32)
    f = tmp_path / "u.sgf"
    write_sgf1(f, random_function(dom, np.random.default_rng(0)))
    out = tmp_path / "t"
    code = main(["verify-truncation", "--input", str(f), "--family", "above", "--levels", "1,2,4", "--out", str(out), "--no-figures"])
    rep = read_json(out / "truncation.json")
    assert code == 0 and rep["pass"]
    assert [r["level"] for r in rep["rows"]] == [1.0, 2.0, 4.0]


def test_orthogonality_from_decomposition(tmp_path, cfg_file):
    d = tmp_path / "d"
    assert main(["decompose", "--config", cfg_file, "--out", str(d), "--no-figures"]) == 0
    out = tmp_path / "o"
    assert main(["orthogonality", "--input", str(d), "--config", cfg_file, "--out", str(out), "--no-figures"]) == 0
    assert (out / "residual_F.csv").read_text().startswith("n,lower,upper")
    assert (out / "residual_E.csv").exists()


def test_q_one_exits_2(tmp_path, capsys):
    cfg = json.loads(json.dumps(SMALL))
    cfg["decompose"] = {"q": 1.0, "p": 1.0}
    path = tmp_path / "bad.json"
    write_json(path, cfg)
    assert main(["decompose", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("sobodec decompose: error: q must exceed 1")


def test_unknown_preset_exits_2(tmp_path):
    assert main(["pipeline", "--preset", "nope", "--out", str(tmp_path / "x")]) == 2


def test_zero_preset_pipeline(tmp_path):
    out = tmp_path / "z"
    proc = subprocess.run([sys.executable, "-m", "sobodec.cli", "pipeline", "--preset", "zero", "--out", str(out), "--no-figures"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    s = read_json(out / "summary.json")
    assert s["pass"] and s["reconstruction_error"] == 0.0
    assert read_sgf1(out / "decomposition" / "U0_001.sgf").is_zero()
