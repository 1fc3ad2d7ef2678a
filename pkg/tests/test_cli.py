import json
import subprocess
import sys

import numpy as np
import pytest

from platelab.cli import main
from platelab.config import validate_config
from platelab.errors import ConfigError
from platelab.grid import Grid2D
from platelab.report import dumps_report, read_node_array, write_node_array


def _cfg(tmp_path, body, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps({"schema_version": 1, **body}, indent=2))
    return p


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema_version": 1,\n  "grid": {"n1": 9,,}\n}\n')
    assert main(["analyze-load", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert ":3:" in capsys.readouterr().err


def test_schema_violation_reports_line(tmp_path, capsys):
    p = _cfg(tmp_path, {"grid": {"n1": 9, "n2": 9}, "model": {"lambda": 1.0, "nu": 0.3}})
    assert main(["analyze-load", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "nu" in err and f"{p}:" in err
    with pytest.raises(ConfigError):
        validate_config({"schema_version": 2})
    with pytest.raises(ConfigError):
        validate_config({"schema_version": 1, "domain": {"bounds": [1, 0, 0, 1]}})


def test_unknown_subcommand_exits_one(capsys):
    assert main(["frobnicate"]) == 1


def test_analyze_load_example_b(tmp_path):
    out = tmp_path / "o"
    p = _cfg(tmp_path, {"grid": {"n1": 17, "n2": 17}})
    assert main(["analyze-load", "--config", str(p), "--out", str(out)]) == 0
    rep = _report(out)
    assert rep["results"]["dim"] == 1 and rep["results"]["compatibility_ok"]
    assert rep["results"]["max_value"] == pytest.approx(1 / 12, abs=1e-12)
    assert {"load.png", "load.nodes"} <= set(rep["files"])
    assert (out / "timing.json").exists()


def test_zero_moment_regime(tmp_path):
    out = tmp_path / "o"
    p = _cfg(tmp_path, {"grid": {"n1": 17, "n2": 17}, "load": {"catalog": "zero_moment"}})
    assert main(["analyze-load", "--config", str(p), "--out", str(out)]) == 0
    assert _report(out)["results"]["dim"] == 3
    assert main(["minimize", "--config", str(p), "--out", str(out)]) == 0
    assert _report(out)["results"]["verdict"] == "not applicable"


def test_incompatible_load_routed_to_kirchhoff(tmp_path):
    out = tmp_path / "o"
    p = _cfg(tmp_path, {"grid": {"n1": 17, "n2": 17}, "load": {"catalog": "twist"}})
    assert main(["stability", "--config", str(p), "--out", str(out)]) == 0
    res = _report(out)["results"]
    assert res["regime"] == "kirchhoff" and res["s1_probe"]["certified_failure"]


def test_load_from_node_file(tmp_path):
    g = Grid2D.square(17)
    f = np.zeros(g.shape + (3,))
    f[..., 2] = g.coords[0]
    write_node_array(tmp_path / "f.nodes", g, f)
    out = tmp_path / "o"
    p = _cfg(tmp_path, {"grid": {"n1": 17, "n2": 17}, "load": {"file": str(tmp_path / "f.nodes")}})
    assert main(["analyze-load", "--config", str(p), "--out", str(out)]) == 0
    assert _report(out)["results"]["dim"] == 1
    p = _cfg(tmp_path, {"grid": {"n1": 9, "n2": 9}, "load": {"file": str(tmp_path / "f.nodes")}}, "c2.json")
    assert main(["analyze-load", "--config", str(p), "--out", str(out)]) == 1


def test_node_array_roundtrip(tmp_path, rng):
    g = Grid2D((-1.0, 2.0, 0.0, 0.5), 7, 5)
    vals = rng.standard_normal(g.shape + (3,))
    write_node_array(tmp_path / "a.nodes", g, vals)
    g2, v2 = read_node_array(tmp_path / "a.nodes")
    assert g2 == g and np.array_equal(v2, vals)
    write_node_array(tmp_path / "s.nodes", g, vals[..., 0])
    assert np.array_equal(read_node_array(tmp_path / "s.nodes")[1], vals[..., 0])
    (tmp_path / "bad.nodes").write_text("hello\n")
    with pytest.raises(ConfigError):
        read_node_array(tmp_path / "bad.nodes")


def test_embed_commands(tmp_path):
    out = tmp_path / "o"
    p = _cfg(tmp_path, {"grid": {"n1": 33, "n2": 33}, "embed": {"profile": "quadratic", "amplitude": 0.3,
                                                               "hessian": [[1.0, 0.0], [0.0, 1.0]]}})
    assert main(["embed", "--config", str(p), "--out", str(out)]) == 1
    assert "error" in _report(out)
    p = _cfg(tmp_path, {"grid": {"n1": 17, "n2": 17}, "embed": {"profile": "zero"}}, "z.json")
    assert main(["embed", "--config", str(p), "--out", str(out)]) == 0
    res = _report(out)["results"]
    assert res["flat"] and res["isometry_residual"] < 1e-14
    _, y = read_node_array(out / "y.nodes")
    np.testing.assert_allclose(y[..., 2], 0.0)


def test_scaling_rigid_is_degenerate(tmp_path):
    out = tmp_path / "o"
    p = _cfg(tmp_path, {"grid": {"n1": 9, "n2": 9}, "scaling": {"family": "rigid"}})
    assert main(["scaling", "--config", str(p), "--out", str(out)]) == 0
    res = _report(out)["results"]
    assert res["degenerate"] and max(res["energy"]) <= 1e-12


def test_minimize_reports_are_byte_identical(tmp_path):
    p = _cfg(tmp_path, {"grid": {"n1": 9, "n2": 9}, "minimize": {"n_starts": 2, "maxiter": 100}})
    texts = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["minimize", "--config", str(p), "--out", str(out), "--seed", "3"]) == 0
        texts.append(((out / "report.json").read_bytes(), (out / "u.nodes").read_bytes()))
    assert texts[0] == texts[1]
    assert _report(tmp_path / "o0")["seed"] == 3


def test_report_serialization_non_finite():
    text = dumps_report({"a": float("nan"), "b": np.float64(np.inf), "c": np.arange(2)})
    assert json.loads(text) == {"a": "nan", "b": "inf", "c": [0, 1]}


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "platelab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "platelab" in out.stdout
