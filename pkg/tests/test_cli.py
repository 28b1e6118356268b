import importlib.util
import json
import math
import os

import numpy as np
import pytest

import scr_cli
import scr_commands
from config_settings import PROJECT_ROOT
from constants import EXIT_CONFIG_ERROR, EXIT_OK, SweepAxis
from edge_core import csv_helper, scenario, sweep_queue
from edge_core.errors import ConfigError, SchemaError
from edge_core.sweep_queue import STATUS_ERROR, STATUS_OK, SweepJob, run_jobs


def _write_config(tmp_path, n_users=3, n_servers=2, seed=7):
    path = tmp_path / f"config-{n_users}x{n_servers}.json"
    path.write_text(json.dumps({
        "schema_version": 1,
        "scenario": {"n_users": n_users, "n_servers": n_servers, "seed": seed},
    }))
    return str(path)


def _generate(tmp_path, n_users=3, n_servers=2, seed=7):
    out = str(tmp_path / f"scenario-{n_users}x{n_servers}-{seed}.json")
    assert scr_commands.cmd_generate(_write_config(tmp_path, n_users, n_servers, seed), out=out) == EXIT_OK
    return out


def _small_sweep_spec(tmp_path):
    spec = {
        "schema_version": 1,
        "scenario_config": {"n_users": 3, "n_servers": 2, "seed": 7},
        "algorithms": ["gucaa", "gucro"],
        "sweep": {"axis": "b_max", "values": [10e6, 20e6]},
    }
    path = tmp_path / "small_sweep.json"
    path.write_text(json.dumps(spec))
    return str(path)


# ── generate ─────────────────────────────────────────────────────────────────

def test_generate_writes_identical_bytes_for_same_seed(tmp_path):
    first = _generate(tmp_path)
    data = open(first, "rb").read()
    second = _generate(tmp_path)
    assert first == second
    assert open(second, "rb").read() == data
    assert scenario.load(first).N == 3


def test_generate_seed_override(tmp_path):
    config = _write_config(tmp_path)
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert scr_commands.cmd_generate(config, seed=1, out=a) == EXIT_OK
    assert scr_commands.cmd_generate(config, seed=2, out=b) == EXIT_OK
    assert scenario.scenario_hash(scenario.load(a)) != scenario.scenario_hash(scenario.load(b))


def test_generate_reports_missing_field_as_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema_version": 1, "scenario": {"n_servers": 2}}))
    assert scr_commands.cmd_generate(str(path), out=str(tmp_path / "x.json")) == EXIT_CONFIG_ERROR


# ── solve ────────────────────────────────────────────────────────────────────

def test_solve_gucaa_writes_solution_trace_and_chart(tmp_path):
    scn_path = _generate(tmp_path, 10, 2, 2024)
    out = tmp_path / "solve"
    assert scr_commands.cmd_solve(scn_path, algorithm="gucaa", out=str(out)) == EXIT_OK

    doc = json.loads((out / "solution-gucaa.json").read_text())
    assert doc["algorithm"] == "gucaa"
    assert doc["violations"] == []
    assert doc["problem_size"]["part1_variables"] == 31
    _, allocation = scenario.load_with_allocation(str(out / "solution-gucaa.json"))
    assert allocation.x.sum(axis=0).tolist() == [5, 5]

    lines = (out / "trace-gucaa.csv").read_text().splitlines()
    assert lines[0].startswith("# scenario_hash=")
    assert lines[1].split(",")[0] == "iter"
    assert (out / "convergence-gucaa.svg").read_text().lstrip().startswith("<?xml")


def test_solve_oracle_on_large_scenario_is_refused(tmp_path):
    scn_path = _generate(tmp_path, 10, 2, 2024)
    code = scr_commands.cmd_solve(scn_path, algorithm="oracle", out=str(tmp_path / "oracle"))
    assert code == EXIT_CONFIG_ERROR


def test_solve_rejects_unknown_algorithm_and_bad_epsilon(tmp_path):
    scn_path = _generate(tmp_path)
    assert scr_commands.cmd_solve(scn_path, algorithm="simplex", out=str(tmp_path / "o")) == EXIT_CONFIG_ERROR
    assert scr_commands.cmd_solve(scn_path, epsilon=0.0, out=str(tmp_path / "o")) == EXIT_CONFIG_ERROR
    assert scr_commands.cmd_solve(str(tmp_path / "missing.json"), out=str(tmp_path / "o")) == EXIT_CONFIG_ERROR


# ── experiment specs ─────────────────────────────────────────────────────────

def test_experiment_spec_parses_weights_and_defaults_seed():
    spec = scr_commands.ExperimentSpec.from_dict({
        "scenario_config": {"n_users": 4, "n_servers": 2, "seed": 9},
        "algorithms": ["dashf"],
        "sweep": {"axis": "weights", "values": [[0.5, 0.005], [0.1, 0.009]]},
    })
    assert spec.axis is SweepAxis.WEIGHTS
    assert spec.values == ((0.5, 0.005), (0.1, 0.009))
    assert spec.seeds == (9,)
    assert scr_commands.point_label(spec.axis, spec.values[0]) == "0.5/0.005"


@pytest.mark.parametrize("data,path", [
    ({"algorithms": ["simplex"]}, "algorithms[0]"),
    ({"sweep": {"axis": "latency"}}, "sweep.axis"),
    ({"sweep": {"axis": "b_max", "values": [1e7, -5.0]}}, "sweep.values[1]"),
    ({"sweep": {"axis": "weights", "values": [[0.5, 0.0]]}}, "sweep.values[0]"),
    ({"seeds": [1, "two"]}, "seeds"),
    ({"epsilon": 0}, "epsilon"),
    ({"schema_version": 3}, "schema_version"),
])
def test_experiment_spec_schema_errors(data, path):
    with pytest.raises(SchemaError) as err:
        scr_commands.ExperimentSpec.from_dict(dict(data, scenario_config={"n_users": 2, "n_servers": 1}))
    assert err.value.path == path


def test_experiment_spec_needs_algorithms_and_values():
    cfg = scenario.ScenarioConfig(n_users=2, n_servers=1)
    with pytest.raises(ConfigError):
        scr_commands.ExperimentSpec(config=cfg, algorithms=())
    with pytest.raises(ConfigError):
        scr_commands.ExperimentSpec(config=cfg, algorithms=("dashf",), axis=SweepAxis.B_MAX)


def test_shipped_experiment_specs_load():
    from config_settings import CONFIG_PATH
    bmax = scr_commands.load_experiment(os.path.join(CONFIG_PATH, "bmax_sweep.json"))
    assert bmax.axis is SweepAxis.B_MAX and len(bmax.algorithms) == 5
    weights = scr_commands.load_experiment(os.path.join(CONFIG_PATH, "weights_sweep.json"))
    assert weights.values[0] == (0.5, 0.005)


def test_build_jobs_orders_algorithm_point_seed():
    spec = scr_commands.ExperimentSpec(
        config=scenario.ScenarioConfig(n_users=2, n_servers=1),
        algorithms=("gucaa", "rucaa"), axis=SweepAxis.B_MAX, values=(1e7, 2e7), seeds=(1, 2),
    )
    jobs, digest = scr_commands.build_jobs(spec)
    assert [(j.algorithm, j.value, j.seed) for j in jobs[:4]] == [
        ("gucaa", "10000000.0", 1), ("gucaa", "10000000.0", 2),
        ("gucaa", "20000000.0", 1), ("gucaa", "20000000.0", 2),
    ]
    assert [j.index for j in jobs] == list(range(8))
    assert jobs[2].scenario.b_max[0] == 2e7
    assert len(digest) == 16


# ── sweep harness ────────────────────────────────────────────────────────────

def test_small_sweep_writes_rows_with_means(tmp_path):
    out = tmp_path / "sweep"
    assert scr_commands.cmd_sweep(_small_sweep_spec(tmp_path), out=str(out)) == EXIT_OK
    meta, rows = csv_helper.read_csv(str(out / "sweep.csv"))
    assert "scenario_hash" in meta and "tool_version" in meta
    assert len(rows) == 4
    assert all(r["status"] == STATUS_OK for r in rows)
    for r in rows:
        assert float(r["scr_mean"]) == pytest.approx(float(r["scr"]))
    assert (out / "sweep.svg").exists()


def test_run_jobs_order_does_not_depend_on_worker_count(small_scenario):
    def batch():
        return [SweepJob(index=i, algorithm=a, scenario=small_scenario, seed=7)
                for i, a in enumerate(["gucaa", "rucaa", "aauco"])]
    serial = run_jobs(batch(), 1)
    threaded = run_jobs(batch(), 3)
    assert [o.job.algorithm for o in threaded] == ["gucaa", "rucaa", "aauco"]
    assert [o.solution.scr for o in serial] == [o.solution.scr for o in threaded]


def test_refused_job_is_labelled_not_raised(default_scenario):
    [outcome] = run_jobs([SweepJob(index=0, algorithm="oracle", scenario=default_scenario)], 1)
    assert outcome.status == "refused"
    assert outcome.solution is None and "limit" in outcome.error


@pytest.mark.parametrize("workers", [1, 2])
@pytest.mark.parametrize("failure", [FloatingPointError("overflow in exp"), np.linalg.LinAlgError("not positive definite")])
def test_unexpected_failure_is_recorded_for_any_worker_count(monkeypatch, small_scenario, workers, failure):
    def broken(*args, **kwargs):
        raise failure
    monkeypatch.setattr(sweep_queue, "run_algorithm", broken)
    jobs = [SweepJob(index=i, algorithm="gucaa", scenario=small_scenario) for i in range(2)]
    outcomes = run_jobs(jobs, workers)
    assert [o.status for o in outcomes] == [STATUS_ERROR, STATUS_ERROR]
    assert all(type(failure).__name__ in o.error for o in outcomes)


# ── csv helper ───────────────────────────────────────────────────────────────

def test_format_value_cells():
    assert csv_helper.format_value(None) == ""
    assert csv_helper.format_value(math.nan) == ""
    assert csv_helper.format_value(True) == "true"
    assert csv_helper.format_value(3) == "3"
    assert csv_helper.format_value(0.1) == "0.1"
    assert float(csv_helper.format_value(1 / 3)) == 1 / 3


def test_attach_means_skips_failed_rows():
    rows = [
        {"algorithm": "dashf", "value": "1.0", "status": "ok", "scr": 2.0, "T_total": 1.0, "E_total": 1.0, "V": 1.0},
        {"algorithm": "dashf", "value": "1.0", "status": "ok", "scr": 4.0, "T_total": 3.0, "E_total": 1.0, "V": 1.0},
        {"algorithm": "dashf", "value": "1.0", "status": "infeasible", "scr": None, "T_total": None,
         "E_total": None, "V": None},
        {"algorithm": "gucaa", "value": "1.0", "status": "error", "scr": None, "T_total": None,
         "E_total": None, "V": None},
    ]
    csv_helper.attach_means(rows)
    assert rows[2]["scr_mean"] == 3.0 and rows[2]["T_total_mean"] == 2.0
    assert rows[3]["scr_mean"] is None


def test_read_csv_requires_metadata_line(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        csv_helper.read_csv(str(path))
    with pytest.raises(SchemaError):
        csv_helper.read_csv(str(tmp_path / "absent.csv"))


def test_retry_script_reruns_failed_rows(tmp_path):
    spec_path = _small_sweep_spec(tmp_path)
    out = tmp_path / "sweep"
    assert scr_commands.cmd_sweep(spec_path, out=str(out)) == EXIT_OK
    csv_path = str(out / "sweep.csv")
    meta, rows = csv_helper.load_sweep_rows(csv_path)
    rows[1].update(status="error", scr=None, T_total=None, E_total=None, V=None, iterations=None)
    csv_helper.write_sweep_csv(csv_path, rows, meta["scenario_hash"])

    module_spec = importlib.util.spec_from_file_location(
        "retry_failed_points", os.path.join(PROJECT_ROOT, "retry_failed_points.py"))
    retry_module = importlib.util.module_from_spec(module_spec)
    module_spec.loader.exec_module(retry_module)
    assert retry_module.retry(spec_path, csv_path, 1) == EXIT_OK

    meta_after, rows_after = csv_helper.load_sweep_rows(csv_path)
    assert meta_after["scenario_hash"] == meta["scenario_hash"]
    assert [r["status"] for r in rows_after] == [STATUS_OK] * 4
    assert rows_after[1]["scr"] > 0 and rows_after[1]["iterations"] is not None


# ── entry point ──────────────────────────────────────────────────────────────

def test_main_generate(tmp_path):
    out = str(tmp_path / "main.json")
    assert scr_cli.main(["--log-level", "WARNING", "generate", _write_config(tmp_path), "--out", out]) == EXIT_OK
    assert os.path.exists(out)


def test_parser_rejects_unknown_algorithm():
    with pytest.raises(SystemExit):
        scr_cli.build_parser().parse_args(["solve", "s.json", "--algorithm", "simplex"])


@pytest.mark.slow
def test_compare_rerun_is_byte_identical(tmp_path):
    scn_path = _generate(tmp_path, 10, 2, 2024)
    first, second = tmp_path / "c1", tmp_path / "c2"
    assert scr_commands.cmd_compare(scn_path, out=str(first)) == EXIT_OK
    assert scr_commands.cmd_compare(scn_path, out=str(second), jobs=2) == EXIT_OK
    assert (first / "comparison.csv").read_bytes() == (second / "comparison.csv").read_bytes()


@pytest.mark.slow
def test_heavier_delay_weight_gives_shorter_delay():
    spec = scr_commands.ExperimentSpec(
        config=scenario.ScenarioConfig(), algorithms=("dashf",), axis=SweepAxis.WEIGHTS,
        values=((0.5, 0.005), (0.1, 0.009)),
    )
    rows, _ = scr_commands.run_sweep(spec, jobs=1)
    assert [r["status"] for r in rows] == [STATUS_OK, STATUS_OK]
    assert rows[0]["T_total"] < rows[1]["T_total"]


@pytest.mark.slow
def test_larger_topology_solves_with_convergence_chart(tmp_path):
    scn_path = str(tmp_path / "topology-20x3.json")
    config = os.path.join(PROJECT_ROOT, "src", "config", "topology_20x3.json")
    assert scr_commands.cmd_generate(config, out=scn_path) == EXIT_OK
    out = tmp_path / "solve-20x3"
    assert scr_commands.cmd_solve(scn_path, algorithm="dashf", out=str(out)) == EXIT_OK

    doc = json.loads((out / "solution-dashf.json").read_text())
    assert doc["violations"] == []
    lines = (out / "trace-dashf.csv").read_text().splitlines()
    header = lines[1].split(",")
    scrs = [float(line.split(",")[header.index("scr")]) for line in lines[2:]]
    assert all(b >= a * (1 - 1e-8) for a, b in zip(scrs, scrs[1:]))
    svg = (out / "convergence-dashf.svg").read_text()
    assert svg.count('id="axes_') == 3
