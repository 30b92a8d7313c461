"""Benchmark harness and CLI: summary math on hand-built traces, CSV
round-trips, config validation, end-to-end smoke runs on a small budget."""
import json

import numpy as np
import pytest

from fmopt import ConfigurationError, OptimizerId
from fmopt.bench import (
    BenchmarkConfig,
    TRACE_COLUMNS,
    fluence_path,
    read_trace_csv,
    run_benchmark,
    summarize,
    trace_path,
    write_trace_csv,
)
from fmopt.cli import main
from fmopt.optimizers import (
    ConvergenceTrace,
    IterationRecord,
    OptimizerConfig,
    Termination,
)


def _rows(costs, start_elapsed=0.0):
    return [
        {"iteration": i, "cost": c, "gradient_norm": 1.0,
         "elapsed_seconds": start_elapsed + 0.1 * i, "function_evals": i + 1}
        for i, c in enumerate(costs)
    ]


def test_summarize_threshold_crossings():
    traces = {
        ("c", "A"): _rows([100.0, 10.0, 1.0]),
        ("c", "B"): _rows([100.0, 50.0, 1.005]),
    }
    s = summarize(traces)
    # best final cost 1.0 -> threshold 1.01
    assert s["c"]["A"]["iterations_to_threshold"] == 2
    assert s["c"]["B"]["iterations_to_threshold"] == 2
    assert s["c"]["A"]["final_cost"] == 1.0
    assert s["c"]["A"]["time_to_threshold"] == pytest.approx(0.2)


def test_summarize_unreached_marked_none():
    traces = {
        ("c", "A"): _rows([10.0, 1.0]),
        ("c", "B"): _rows([10.0, 5.0]),
    }
    s = summarize(traces)
    assert s["c"]["B"]["iterations_to_threshold"] is None
    assert s["c"]["B"]["time_to_threshold"] is None


def test_summarize_single_trace_self_reference():
    s = summarize({("c", "A"): _rows([10.0, 2.0, 1.0])})
    assert s["c"]["A"]["iterations_to_threshold"] == 2


def test_summarize_empty_trace_rejected():
    with pytest.raises(ConfigurationError):
        summarize({("c", "A"): []})


def test_trace_csv_round_trip(tmp_path):
    records = tuple(
        IterationRecord(i, 10.0 / (i + 1), 0.5**i, 0.01 * i, i + 1) for i in range(5)
    )
    trace = ConvergenceTrace(OptimizerId.GD, "c", records, np.zeros(3),
                             Termination.MAX_ITERATIONS)
    path = tmp_path / "trace_c__GD.csv"
    write_trace_csv(path, trace)
    rows = read_trace_csv(path)
    assert len(rows) == 5
    for r, rec in zip(rows, records):
        assert r["iteration"] == rec.iteration
        assert r["cost"] == rec.cost  # %.17g preserves doubles exactly
        assert r["gradient_norm"] == rec.gradient_norm
        assert r["function_evals"] == rec.function_evals


def test_trace_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("iteration,cost\n0,1.0\n")
    with pytest.raises(ConfigurationError) as err:
        read_trace_csv(path)
    assert "gradient_norm" in str(err.value)


def test_config_from_dict_defaults_and_overrides():
    cfg = BenchmarkConfig.from_dict(
        {
            "cases": ["multi_ptv"],
            "optimizers": ["LBFGS", {"id": "Adam", "max_iterations": 7}],
        },
        output_dir="out",
    )
    assert cfg.optimizers[0].id is OptimizerId.LBFGS
    assert cfg.optimizers[0].max_iterations == 200
    assert cfg.optimizers[1].id is OptimizerId.ADAM
    assert cfg.optimizers[1].max_iterations == 7


@pytest.mark.parametrize(
    "doc,field",
    [
        ({"optimizers": ["GD"]}, "cases"),
        ({"cases": ["multi_ptv"]}, "optimizers"),
        ({"cases": ["bogus"], "optimizers": ["GD"]}, "bogus"),
        ({"cases": ["multi_ptv"], "optimizers": ["NoSuchOpt"]}, "NoSuchOpt"),
        ({"cases": ["multi_ptv"], "optimizers": [{"max_iterations": 3}]}, "id"),
    ],
)
def test_config_validation_names_offender(doc, field):
    with pytest.raises(ConfigurationError) as err:
        BenchmarkConfig.from_dict(doc)
    assert field in str(err.value)


def test_config_missing_file():
    with pytest.raises(ConfigurationError):
        BenchmarkConfig.from_json_file("/no/such/config.json")


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    """One real case, two optimizers, tiny budgets; shared by smoke tests."""
    out = tmp_path_factory.mktemp("bench")
    config = BenchmarkConfig(
        cases=("multi_ptv",),
        optimizers=(
            OptimizerConfig.default_for(OptimizerId.GD, max_iterations=3),
            OptimizerConfig.default_for(OptimizerId.ADAM, max_iterations=5),
        ),
        output_dir=out,
        repetitions=1,
    )
    summary = run_benchmark(config)
    return out, summary


def test_run_benchmark_outputs(small_run):
    out, summary = small_run
    tp = trace_path(out, "multi_ptv", OptimizerId.GD)
    assert tp.name == "trace_multi_ptv__GD.csv"
    rows = read_trace_csv(tp)
    assert len(rows) == 4  # iteration 0 + 3
    assert [r["iteration"] for r in rows] == [0, 1, 2, 3]
    b = np.loadtxt(fluence_path(out, "multi_ptv", OptimizerId.GD))
    assert b.shape == (900,)
    assert (out / "summary.json").exists()
    assert (out / "goals_multi_ptv.json").exists()
    assert (out / "cache" / "multi_ptv.dij").exists()
    assert summary["multi_ptv"]["GD"]["iterations"] == 3


def test_summary_recomputed_from_files_matches(small_run):
    out, summary = small_run
    on_disk = json.loads((out / "summary.json").read_text())
    for opt, entry in on_disk["multi_ptv"].items():
        assert entry["final_cost"] == summary["multi_ptv"][opt]["final_cost"]
        traces = {
            ("multi_ptv", o): read_trace_csv(trace_path(out, "multi_ptv", OptimizerId.parse(o)))
            for o in on_disk["multi_ptv"]
        }
        redo = summarize(traces)
        assert redo["multi_ptv"][opt]["final_cost"] == entry["final_cost"]
        assert (redo["multi_ptv"][opt]["iterations_to_threshold"]
                == entry["iterations_to_threshold"])


def test_cli_list_commands(capsys):
    assert main(["list-optimizers"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "NewtonCG" in out and len(out) == 15
    assert main(["list-cases"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["multi_ptv", "head_neck", "prostate", "icm_prostate"]


def test_cli_missing_config_fails(capsys, tmp_path):
    code = main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "error:" in capsys.readouterr().err
    assert not list(tmp_path.glob("trace_*"))  # no partial outputs


def test_cli_run_and_dvh(tmp_path, capsys):
    config = {
        "cases": ["multi_ptv"],
        "optimizers": [{"id": "GD", "max_iterations": 2}],
        "repetitions": 1,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    capsys.readouterr()
    trace = out / "trace_multi_ptv__GD.csv"
    assert trace.exists()
    fig = out / "convergence_multi_ptv.png"
    assert fig.exists() and fig.stat().st_size > 0
    dvh_out = tmp_path / "dvh"
    assert main(["dvh", "--case", "multi_ptv", "--trace", str(trace),
                 "--out", str(dvh_out)]) == 0
    printed = capsys.readouterr().out
    assert "PASS" in printed or "FAIL" in printed
    csvs = list(dvh_out.glob("dvh_*.csv"))
    assert len(csvs) == 1
    header = csvs[0].read_text().splitlines()[0]
    assert header == "structure,dose_gy,volume_fraction"
    assert (dvh_out / "goals_multi_ptv.json").exists()
    pngs = list(dvh_out.glob("dvh_*.png"))
    assert len(pngs) == 1 and pngs[0].stat().st_size > 0


def test_cli_dvh_bad_trace(tmp_path, capsys):
    bad = tmp_path / "trace_x__GD.csv"
    bad.write_text("iteration,cost\n0,1\n")
    assert main(["dvh", "--case", "multi_ptv", "--trace", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err
