import numpy as np
import pytest

from uncaps.cli import main
from uncaps.experiment import (ConfigError, ExperimentConfig, build_config,
                               config_as_flat, env_overrides, export_results,
                               load_config, parse_config_text, read_summary,
                               read_trace, run_experiment, trace_filename)

TINY_CONFIG = """
# desk-scale test configuration
plant.dimension = 2
plant.noise_std = 0.05
search.iterations = 1
search.opt_samples = 3
search.n_features = 32
search.acq_restarts = 4
search.rff_restarts = 2
search.horizon = 10
jumpstart.episodes = 3
jumpstart.horizon = 10
dr.samples = 8
run.variants = StandardBO
run.seeds = 50
"""


def tiny_config(**overrides) -> ExperimentConfig:
    flat = parse_config_text(TINY_CONFIG)
    cfg = build_config(flat)
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


# --- config parsing -------------------------------------------------------------

def test_defaults_follow_protocol():
    cfg = ExperimentConfig()
    assert cfg.iterations == 25
    assert cfg.n_init == 3
    assert cfg.ut_k == 2.0
    assert cfg.opt_samples == 250
    assert cfg.n_features == 2000
    assert cfg.seeds == (50, 100, 150, 500, 1000)


def test_parse_rejects_unknown_key_with_location():
    with pytest.raises(ConfigError, match="line:3|<config>:3"):
        parse_config_text("\n\nsearch.wobble = 3\n", source="<config>")


def test_parse_rejects_malformed_line():
    with pytest.raises(ConfigError, match=":1"):
        parse_config_text("just some words")


def test_parse_rejects_bad_value():
    with pytest.raises(ConfigError, match="search.iterations"):
        build_config({"search.iterations": "many"})


def test_duplicate_seeds_rejected():
    with pytest.raises(ConfigError):
        build_config({"run.seeds": "1,2,2"})


def test_unknown_variant_rejected():
    with pytest.raises(ConfigError):
        build_config({"run.variants": "UncAPS,Bogus"})


def test_env_override_mapping():
    out = env_overrides({"UNCAPS_SEARCH__N_INIT": "5",
                         "UNCAPS_RUN__SEEDS": "1,2",
                         "UNCAPS_NUMBA": "0",
                         "PATH": "/bin"})
    assert out == {"search.n_init": "5", "run.seeds": "1,2"}
    with pytest.raises(ConfigError):
        env_overrides({"UNCAPS_NOPE": "1"})


def test_load_config_applies_env_override(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(TINY_CONFIG)
    cfg = load_config(path, environ={"UNCAPS_SEARCH__ITERATIONS": "2"})
    assert cfg.iterations == 2
    assert cfg.dimension == 2


def test_config_flat_round_trip():
    cfg = tiny_config()
    again = build_config(config_as_flat(cfg))
    assert again == cfg


# --- running ---------------------------------------------------------------------

def test_single_cell_cardinality(tmp_path):
    cfg = tiny_config()
    table, traces = run_experiment(cfg)
    assert len(table.rows) == 1
    assert table.rows[0].variant == "StandardBO"
    assert len(traces) == 1
    assert traces[0].thetas.shape == (4, 2)  # 3 init + 1 BO evaluation
    export_results(table, traces, tmp_path, cfg)
    trace = read_trace(tmp_path / trace_filename("StandardBO", 50))
    assert len(trace["iter"]) == 4
    np.testing.assert_array_equal(trace["best_y"],
                                  np.maximum.accumulate(trace["y"]))


def test_ga_variant_cell_round_trips(tmp_path):
    cfg = tiny_config(variants=("UncAPS+GA",))
    table, traces = run_experiment(cfg)
    assert table.rows[0].variant == "UncAPS+GA"
    export_results(table, traces, tmp_path, cfg)
    trace = read_trace(tmp_path / trace_filename("UncAPS+GA", 50))
    assert len(trace["iter"]) == 4


def test_dr_cell_has_no_trace(tmp_path):
    cfg = tiny_config(variants=("DR",))
    table, traces = run_experiment(cfg)
    assert len(table.rows) == 1
    assert table.rows[0].best_y is None
    assert traces == []
    export_results(table, traces, tmp_path, cfg)
    rows = read_summary(tmp_path / "summary.csv")
    assert rows[0]["best_y"] == ""


def test_byte_identical_reruns(tmp_path):
    cfg = tiny_config(variants=("UncAPS", "DR"))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        table, traces = run_experiment(cfg)
        export_results(table, traces, out, cfg)
    for name in [trace_filename("UncAPS", 50), "summary.csv", "manifest.json"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_parallel_jobs_match_sequential(tmp_path):
    cfg = tiny_config(variants=("StandardBO", "DR"), seeds=(50, 100))
    table_seq, traces_seq = run_experiment(cfg, jobs=1)
    table_par, traces_par = run_experiment(cfg, jobs=2)
    for a, b in zip(table_seq.rows, table_par.rows):
        assert a.variant == b.variant and a.seed == b.seed
        assert a.jumpstart_mean == b.jumpstart_mean
        assert a.best_y == b.best_y
    for ta, tb in zip(traces_seq, traces_par):
        np.testing.assert_array_equal(ta.thetas, tb.thetas)
        np.testing.assert_array_equal(ta.rewards, tb.rewards)


def test_manifest_reruns_byte_identically(tmp_path):
    cfg = tiny_config()
    out1 = tmp_path / "first"
    table, traces = run_experiment(cfg)
    export_results(table, traces, out1, cfg)

    cfg2 = load_config(out1 / "manifest.json", environ={})
    assert cfg2 == cfg
    out2 = tmp_path / "second"
    table2, traces2 = run_experiment(cfg2)
    export_results(table2, traces2, out2, cfg2)
    for name in [trace_filename("StandardBO", 50), "summary.csv",
                 "manifest.json"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


# --- export ------------------------------------------------------------------------

def test_empty_variant_list_yields_header_only_summary(tmp_path):
    cfg = tiny_config(variants=())
    table, traces = run_experiment(cfg)
    export_results(table, traces, tmp_path, cfg)
    text = (tmp_path / "summary.csv").read_text()
    assert text.splitlines() == ["variant,seed,jumpstart_mean,jumpstart_stderr,best_y"]


def test_summary_round_trip_formatting(tmp_path):
    cfg = tiny_config(variants=("StandardBO", "DR"), seeds=(50, 100))
    table, traces = run_experiment(cfg)
    export_results(table, traces, tmp_path, cfg)
    rows = read_summary(tmp_path / "summary.csv")
    data_rows = [r for r in rows if r["seed"] != "aggregate"]
    assert len(data_rows) == 4
    for row, cell in zip(data_rows, table.rows):
        assert row["variant"] == cell.variant
        assert row["jumpstart_mean"] == f"{cell.jumpstart_mean:.6g}"
        assert row["jumpstart_stderr"] == f"{cell.jumpstart_stderr:.6g}"
    agg_rows = [r for r in rows if r["seed"] == "aggregate"]
    assert [r["variant"] for r in agg_rows] == ["StandardBO", "DR"]
    for agg, (variant, mean, stderr) in zip(agg_rows, table.aggregates()):
        assert agg["variant"] == variant
        assert agg["jumpstart_mean"] == f"{mean:.6g}"


def test_trace_full_precision_round_trip(tmp_path):
    cfg = tiny_config()
    table, traces = run_experiment(cfg)
    export_results(table, traces, tmp_path, cfg)
    trace = read_trace(tmp_path / trace_filename("StandardBO", 50))
    np.testing.assert_array_equal(trace["y"], traces[0].rewards)
    np.testing.assert_array_equal(trace["theta_1"], traces[0].thetas[:, 0])


# --- CLI ---------------------------------------------------------------------------

def test_cli_run_success(tmp_path, capsys):
    path = tmp_path / "exp.cfg"
    path.write_text(TINY_CONFIG)
    out = tmp_path / "results"
    code = main(["run", str(path), "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr()
    assert "StandardBO" in captured.out
    assert (out / "summary.csv").exists()
    assert (out / "manifest.json").exists()
    assert (out / "timings.csv").exists()


def test_cli_override_seeds_and_variants(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(TINY_CONFIG)
    out = tmp_path / "results"
    code = main(["run", str(path), "--out", str(out),
                 "--seeds", "7", "--variants", "DR"])
    assert code == 0
    rows = read_summary(out / "summary.csv")
    assert rows[0]["variant"] == "DR" and rows[0]["seed"] == "7"


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("search.iterations = banana\n")
    assert main(["run", str(path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_cli_missing_config_exit_code(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.cfg")]) == 1


def test_cli_write_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "exp.cfg"
    path.write_text(TINY_CONFIG)
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    code = main(["run", str(path), "--out", str(blocker / "sub")])
    assert code == 2
    assert "failure" in capsys.readouterr().err
