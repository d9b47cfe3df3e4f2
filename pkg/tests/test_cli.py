"""Experiment runner: config round-trips, artifacts, determinism, exit codes."""

import csv
import json
import time

import numpy as np
import pytest

from rpnn_parareal.cli import (
    ComparisonTable,
    ConfigError,
    ExperimentConfig,
    benchmark_defaults,
    compare_with_serial,
    main,
    run_experiment,
    timing_harness,
)


def _tiny_sir_config(out_dir, **extra):
    data = {
        "benchmark": "sir",
        "t_end": 2.0,
        "mesh": {"kind": "uniform", "intervals": 2},
        "rpnn": {"seed": 7},
        "out_dir": str(out_dir),
        "dense_samples": 50,
        **extra,
    }
    return ExperimentConfig.from_dict(data)


def test_benchmark_defaults_cover_paper_setups():
    rober = benchmark_defaults("rober")
    assert rober["mesh"]["blocks"] == [[0.0, 1.0, 100], [1.0, 100.0, 33]]
    assert rober["fine"] == {"kind": "implicit-euler", "dt": 1e-4,
                             "newton_tol": 1e-12, "newton_max_iter": 50}
    lorenz = benchmark_defaults("lorenz")
    assert lorenz["mesh"]["intervals"] == 250
    assert lorenz["fine"]["dt"] == 10.0 / 14500.0
    arenstorf = benchmark_defaults("arenstorf")
    assert arenstorf["t_end"] == 17.0 and arenstorf["mesh"]["intervals"] == 125
    burgers = benchmark_defaults("burgers")
    assert burgers["fine"]["dt"] == 1.0 / 500.0 and burgers["mesh"]["intervals"] == 50
    brusselator = benchmark_defaults("brusselator")
    assert brusselator["mesh"]["intervals"] == 32 and brusselator["fine"]["dt"] == 12.0 / 640.0
    sir = benchmark_defaults("sir")
    assert sir["t_end"] == 10.0 and sir["fine"]["dt"] == 1e-2
    assert sir["tol"] == 1e-4 and sir["max_it"] == 20
    assert sir["rpnn"]["gauss_newton_floor"] is True
    assert rober["rpnn"]["gauss_newton_floor"] is False
    assert arenstorf["max_it"] == 40


def test_config_round_trip(tmp_path):
    config = _tiny_sir_config(tmp_path)
    again = ExperimentConfig.from_dict(config.to_dict())
    assert again == config


def test_config_rejects_bad_input():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"benchmark": "heat"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"benchmark": "sir", "turbo": True})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"benchmark": "sir", "mesh": {"kind": "random"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"benchmark": "sir", "tol": -1.0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(
            {"benchmark": "sir", "initial_state": [1.0, float("nan"), 0.0]}
        )


def test_wrong_length_initial_state_rejected_at_run(tmp_path):
    config = _tiny_sir_config(tmp_path, initial_state=[1.0, 2.0])
    with pytest.raises(ConfigError):
        run_experiment(config)


def test_run_experiment_writes_all_artifacts(tmp_path):
    artifact = run_experiment(_tiny_sir_config(tmp_path))
    for name in ("nodes", "dense", "errors", "reference", "compare", "timings", "meta"):
        assert artifact.files[name].exists(), name
    with open(artifact.files["nodes"]) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["t", "x1", "x2", "x3"]
    assert len(rows) == 1 + 3  # header + N+1 nodes
    # float round-trip: parsing reproduces the in-memory values bitwise
    for n, row in enumerate(rows[1:]):
        assert float(row[0]) == artifact.result.mesh.nodes[n]
        for j in range(3):
            assert float(row[j + 1]) == artifact.result.node_states[n, j]


def test_meta_config_echo_reparses_equal(tmp_path):
    config = _tiny_sir_config(tmp_path)
    run_experiment(config)
    with open(tmp_path / "meta.json") as handle:
        meta = json.load(handle)
    assert ExperimentConfig.from_dict(meta["config"]) == config
    assert meta["seed"] == 7 and meta["seed_pinned"] is True
    assert meta["converged"] is True


def test_nodes_csv_byte_identical_across_workers(tmp_path):
    paths = []
    for workers in (1, 4, 1):
        out = tmp_path / f"w{workers}_{len(paths)}"
        run_experiment(_tiny_sir_config(out, workers=workers))
        paths.append(out / "nodes.csv")
    blobs = [path.read_bytes() for path in paths]
    assert blobs[0] == blobs[1] == blobs[2]


def test_rober_nodes_carry_scaled_column(tmp_path):
    data = {
        "benchmark": "rober",
        "t_end": 1.0,
        "mesh": {"kind": "blocks", "blocks": [[0.0, 0.5, 2], [0.5, 1.0, 1]]},
        "fine": {"kind": "implicit-euler", "dt": 1e-3},
        "rpnn": {"seed": 3},
        "out_dir": str(tmp_path),
        "dense_samples": 20,
    }
    artifact = run_experiment(ExperimentConfig.from_dict(data))
    with open(artifact.files["nodes"]) as handle:
        rows = list(csv.reader(handle))
    assert rows[0][-1] == "x2_scaled_1e4"
    x2 = artifact.result.node_states[1, 1]
    assert float(rows[2][-1]) == 1e4 * x2


def test_certify_attaches_certificates(tmp_path):
    run_experiment(_tiny_sir_config(tmp_path, certify=True))
    with open(tmp_path / "meta.json") as handle:
        meta = json.load(handle)
    certs = meta["certificates"]
    assert len(certs) == 2
    for cert in certs:
        assert cert["total"] >= cert["eps_term"] >= 0.0


def test_compare_with_serial():
    nodes = np.zeros((4, 2))
    table = compare_with_serial(nodes, nodes.copy())
    assert isinstance(table, ComparisonTable)
    assert table.max_euclidean == 0.0 and table.global_max_abs == 0.0
    perturbed = nodes.copy()
    perturbed[2] = [3.0, 4.0]
    table = compare_with_serial(perturbed, nodes)
    assert table.euclidean[2] == pytest.approx(5.0)
    assert table.max_euclidean == pytest.approx(5.0)
    assert table.global_max_abs == pytest.approx(4.0)
    with pytest.raises(ValueError):
        compare_with_serial(np.zeros((3, 2)), np.zeros((4, 2)))


def test_timing_harness_statistics():
    stats = timing_harness(lambda: None, 1)
    assert stats["mean"] == stats["min"] == stats["max"]
    assert stats["stddev"] == 0.0

    stats = timing_harness(lambda: time.sleep(0.05), 3)
    assert 0.03 <= stats["mean"] <= 0.12
    assert stats["min"] <= stats["mean"] <= stats["max"]
    with pytest.raises(ValueError):
        timing_harness(lambda: None, 0)


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_main_exit_codes(tmp_path, capsys):
    # config error
    assert main(["--benchmark", "sir", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad)]) == 2

    # success
    good = tmp_path / "good.json"
    good.write_text(json.dumps({
        "benchmark": "sir",
        "t_end": 2.0,
        "mesh": {"kind": "uniform", "intervals": 2},
        "out_dir": str(tmp_path / "ok"),
        "dense_samples": 20,
    }))
    assert main(["--config", str(good), "--seed", "5"]) == 0
    out = capsys.readouterr().out
    assert "state ordering" in out

    # nonconvergence: iteration cap of 1 means no correction sweeps ever run
    assert main(["--config", str(good), "--seed", "5", "--max-it", "1",
                 "--tol", "1e-300", "--out", str(tmp_path / "stuck")]) == 3

    # numerical failure: coarse RK4 step on a chaotic system overflows
    blow = tmp_path / "blow.json"
    blow.write_text(json.dumps({
        "benchmark": "lorenz",
        "t_end": 10.0,
        "mesh": {"kind": "uniform", "intervals": 4},
        "fine": {"kind": "rk4", "dt": 2.5},
        "out_dir": str(tmp_path / "blow"),
        "dense_samples": 20,
    }))
    assert main(["--config", blow.as_posix(), "--seed", "0"]) == 4


def test_main_flag_overrides(tmp_path):
    out = tmp_path / "flags"
    code = main([
        "--benchmark", "sir", "--out", str(out), "--seed", "11",
        "--workers", "2", "--tol", "1e-3", "--max-it", "15", "--trace",
    ])
    assert code == 0
    with open(out / "meta.json") as handle:
        meta = json.load(handle)
    cfg = meta["config"]
    assert cfg["tol"] == 1e-3 and cfg["max_it"] == 15
    assert cfg["workers"] == 2 and cfg["trace"] is True
    assert meta["seed"] == 11


def test_unpinned_seed_is_fresh_but_recorded(tmp_path):
    config = _tiny_sir_config(tmp_path)
    config.rpnn["seed"] = None
    artifact = run_experiment(config)
    assert artifact.meta["seed_pinned"] is False
    assert isinstance(artifact.meta["seed"], int)


def test_timings_json_structure(tmp_path):
    run_experiment(_tiny_sir_config(tmp_path, repeats=2))
    with open(tmp_path / "timings.json") as handle:
        timings = json.load(handle)
    assert timings["repeats"] == 2
    for phase in ("zeroth_sweep", "fine_sweeps", "coarse_sweeps", "total"):
        stats = timings["phases"][phase]
        assert stats["min"] <= stats["mean"] <= stats["max"]
    assert timings["avg_coarse_step_zeroth"]["mean"] > 0.0
    assert timings["total_average"] > 0.0
    assert timings["serial_reference"] > 0.0
