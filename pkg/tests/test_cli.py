"""Tests for the command line harness."""

import json

import numpy as np
import pytest

from pfnet.cli import main, parse_observation
from pfnet.graph import NetworkError
from pfnet.io_viz import read_matrix_csv, write_matrix_csv


def run_cli(*argv):
    return main(list(argv))


# -- observation syntax ------------------------------------------------------------


def test_parse_observation_forms():
    assert parse_observation("X:3=S2") == ("X", 3, None, 2)
    assert parse_observation("X1:5:2=0.75") == ("X1", 5, 2, 0.75)


def test_parse_observation_errors():
    for bad in ("X:3", "X:3=2", "X=S2", "X:1:2:3=4"):
        with pytest.raises(NetworkError):
            parse_observation(bad)


# -- run command --------------------------------------------------------------------


def test_run_writes_artifact_layout(tmp_path):
    out = tmp_path / "out"
    rc = run_cli("run", "chain-deterministic", "--out", str(out), "--seed", "0")
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["experiment"] == "chain-deterministic/full"
    assert summary["passed"] is True
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == "iteration,equation,rmse,total_cost"
    assert (out / "img" / "X.ppm").read_bytes().startswith(b"P6\n")
    assert (out / "img" / "H.ppm").exists()
    assert (out / "img" / "W.ppm").exists()
    assert (out / "fig" / "X.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert (out / "fig" / "trace.png").exists()


def test_run_same_seed_byte_identical_traces(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("run", "chain-deterministic", "--out", str(a), "--seed", "3") == 0
    assert run_cli("run", "chain-deterministic", "--out", str(b), "--seed", "3") == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()


def test_run_failing_criterion_exits_1(tmp_path):
    # one iteration cannot converge, so the criterion fails
    rc = run_cli(
        "run",
        "chain-deterministic",
        "--out",
        str(tmp_path / "out"),
        "--iters",
        "1",
    )
    assert rc == 1
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["passed"] is False


def test_run_unknown_experiment_exits_2(tmp_path):
    assert run_cli("run", "no-such-thing", "--out", str(tmp_path / "o")) == 2


def test_run_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "regex-hier", "bogus": 1}))
    assert run_cli("run", "regex-hier", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2


def test_run_config_experiment_mismatch_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "regex-hier"}))
    assert (
        run_cli("run", "chain-deterministic", "--config", str(cfg), "--out", str(tmp_path / "o"))
        == 2
    )


def test_run_flag_overrides_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "chain-deterministic", "max_iters": 1}))
    out = tmp_path / "out"
    rc = run_cli(
        "run", "chain-deterministic", "--config", str(cfg), "--iters", "500", "--out", str(out)
    )
    assert rc == 0  # the flag restored a workable budget


def test_run_variant_flag(tmp_path):
    out = tmp_path / "out"
    rc = run_cli(
        "run",
        "chain-deterministic",
        "--variant",
        "partial-x4",
        "--out",
        str(out),
    )
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["experiment"] == "chain-deterministic/partial-x4"
    assert summary["inferred_path"] == summary["expected_path"]


# -- custom networks -----------------------------------------------------------------


def custom_config(tmp_path, observe=("X:1=S1",)):
    w_csv = tmp_path / "w.csv"
    basis = np.array(
        [
            [1, 0, 0, 0],
            [0, 1, 0, 0],
            [0, 0, 1, 0],
            [0, 0, 0, 1],
            [0, 0, 0, 1],
            [1, 0, 0, 0],
            [0, 1, 0, 0],
            [0, 0, 1, 0],
        ],
        dtype=float,
    )
    write_matrix_csv(basis, w_csv)
    return {
        "experiment": "custom",
        "max_iters": 3000,
        "network": {
            "variables": [
                {"id": "X", "dim": 4, "role": "hidden", "slices": 10},
                {"id": "H", "dim": 4, "role": "hidden", "slices": 9},
            ],
            "blocks": [{"id": "W", "csv": str(w_csv)}],
            "equations": [
                {
                    "id": "chain",
                    "child": [["X", 0], ["X", 1]],
                    "parents": ["H"],
                    "blocks": ["W"],
                    "n_cols": 9,
                }
            ],
        },
        "observe": list(observe),
    }


def test_custom_network_run(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(custom_config(tmp_path)))
    out = tmp_path / "out"
    rc = run_cli("run", "custom", "--config", str(cfg_path), "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True


def test_custom_observation_matrix_file(tmp_path):
    cfg = custom_config(tmp_path, observe=())
    obs = tmp_path / "x.csv"
    path = [1, 2, 3, 4, 1, 2, 3, 4, 1, 2]
    x = np.zeros((4, 10))
    for c, s in enumerate(path):
        x[s - 1, c] = 1.0
    write_matrix_csv(x, obs)
    cfg["observations"] = {"X": str(obs)}
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = run_cli("run", "custom", "--config", str(cfg_path), "--out", str(tmp_path / "o"))
    assert rc == 0


def test_custom_observation_shape_mismatch_exits_2(tmp_path):
    cfg = custom_config(tmp_path, observe=())
    obs = tmp_path / "x.csv"
    write_matrix_csv(np.zeros((3, 10)), obs)
    cfg["observations"] = {"X": str(obs)}
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg))
    assert run_cli("run", "custom", "--config", str(cfg_path), "--out", str(tmp_path / "o")) == 2


def test_custom_component_level_observation(tmp_path):
    cfg = custom_config(tmp_path, observe=("X:1:1=1.0", "X:1:2=0.0"))
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg))
    assert run_cli("run", "custom", "--config", str(cfg_path), "--out", str(tmp_path / "o")) == 0


# -- validate ------------------------------------------------------------------------


def test_validate_named_experiment(capsys):
    assert run_cli("validate", "regex-hier") == 0
    out = capsys.readouterr().out
    assert "valid network with 3 levels" in out
    assert "equation E3" in out


def test_validate_custom_reports_levels(tmp_path, capsys):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(custom_config(tmp_path)))
    assert run_cli("validate", "custom", "--config", str(cfg_path)) == 0
    out = capsys.readouterr().out
    assert "level 1: X(4x10)" in out
    assert "level 2: H(4x9)" in out


def test_validate_invalid_custom_network(tmp_path, capsys):
    cfg = custom_config(tmp_path)
    cfg["network"]["equations"][0]["blocks"] = ["missing"]
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg))
    assert run_cli("validate", "custom", "--config", str(cfg_path)) == 1
