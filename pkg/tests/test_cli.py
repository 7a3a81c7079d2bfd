import json

import numpy as np
import pytest

from acoustoelectric.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def report(text):
    rows = dict(line.split(None, 1) for line in text.strip().splitlines() if line.strip())
    return {k: v.strip() for k, v in rows.items()}


def config_file(tmp_path, **data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return p


def test_forward_zero_source(tmp_path, capsys):
    cfg = config_file(tmp_path, beta=0.5, source={"kind": "zero"}, mesh={"nx": 8, "ny": 10})
    code, out, _ = run(capsys, "forward", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0
    assert float(report(out)["max_abs_H1"]) == 0.0
    u0 = np.loadtxt(tmp_path / "o" / "u0.csv", delimiter=",", skiprows=1)
    assert np.all(u0[:, 2] == 0)


def test_forward_preset(tmp_path, capsys):
    code, out, _ = run(capsys, "forward", "--preset", "experiment1", "--mesh", "16x20",
                       "--out", tmp_path)
    rep = report(out)
    assert code == 0 and float(rep["min_abs_det"]) > 0 and float(rep["max_abs_H1"]) > 0


def test_missing_beta(tmp_path, capsys):
    cfg = config_file(tmp_path, mesh={"nx": 8, "ny": 10})
    code, _, err = run(capsys, "reconstruct", "--config", cfg)
    assert code == 2 and "'beta'" in err


def test_bad_json_location(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"beta": 0.5,\n "mesh": }')
    code, _, err = run(capsys, "forward", "--config", p)
    assert code == 2 and ":2:" in err


def test_config_and_preset_conflict(tmp_path, capsys):
    cfg = config_file(tmp_path, beta=0.5)
    code, _, _ = run(capsys, "forward", "--config", cfg, "--preset", "default")
    assert code == 2


def test_reconstruct_noiseless(tmp_path, capsys):
    code, out, _ = run(capsys, "reconstruct", "--mesh", "16x20", "--out", tmp_path)
    assert code == 0 and float(report(out)["relative_l2_error"]) <= 0.05
    assert (tmp_path / "J0_hat.csv").exists()


def test_beta_one(tmp_path, capsys):
    code, _, err = run(capsys, "reconstruct", "--beta", "1", "--mesh", "8x10", "--out", tmp_path)
    assert code == 3 and "beta" in err


def test_parallel_sources(tmp_path, capsys):
    cfg = config_file(tmp_path, beta=0.5, sources={"theta": [0.4, 0.4]}, mesh={"nx": 8, "ny": 10})
    code, _, _ = run(capsys, "reconstruct", "--config", cfg, "--out", tmp_path)
    assert code == 3


def test_unknown_experiment(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "5"])
    assert exc.value.code == 2
    assert "1, 2, 3, 4" in capsys.readouterr().err


def test_bad_mesh_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["forward", "--mesh", "12by3"])
    assert exc.value.code == 2


def test_experiment_one_prints_both_errors(tmp_path, capsys):
    code, out, _ = run(capsys, "experiment", "1", "--mesh", "32x40", "--out", tmp_path)
    rep = report(out)
    assert code == 0
    assert float(rep["optimized_error"]) <= float(rep["initial_error"])
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["initial_error"] == pytest.approx(float(rep["initial_error"]), rel=1e-5)


def test_optimize_flag_helps_oblique(tmp_path, capsys):
    _, out0, _ = run(capsys, "reconstruct", "--preset", "experiment2", "--mesh", "32x40",
                     "--out", tmp_path / "a")
    _, out1, _ = run(capsys, "reconstruct", "--preset", "experiment2", "--mesh", "32x40",
                     "--optimize", "--out", tmp_path / "b")
    assert float(report(out1)["relative_l2_error"]) < float(report(out0)["relative_l2_error"])


def test_experiment_four_halves_error(tmp_path, capsys):
    code, out, _ = run(capsys, "experiment", "4", "--mesh", "32x40", "--out", tmp_path)
    rep = report(out)
    assert code == 0 and float(rep["optimized_error"]) <= 0.5 * float(rep["initial_error"])


def test_reruns_are_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "experiment", "2", "--mesh", "16x20", "--out", tmp_path / d)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_optimize_sources_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "optimize-sources", "--preset", "experiment2", "--mesh", "16x20",
                       "--out", tmp_path)
    assert code == 0
    for name in ("g1.csv", "g2.csv", "history.csv", "v1.csv", "v2.csv", "report.json"):
        assert (tmp_path / name).exists()
    rep = report(out)
    assert float(rep["final_min_abs_det"]) >= float(rep["initial_min_abs_det"])


def test_validate_small(tmp_path, capsys):
    code, out, _ = run(capsys, "validate", "--mesh", "16x20", "--out", tmp_path)
    assert code == 0 and "FAIL" not in out
    assert json.loads((tmp_path / "validate.json").read_text())


def test_validate_detects_sign_flip(tmp_path, capsys):
    code, out, err = run(capsys, "validate", "--mesh", "16x20", "--flip-h2", "--out", tmp_path)
    assert code == 4 and "FAIL" in out and "validation failed" in err
