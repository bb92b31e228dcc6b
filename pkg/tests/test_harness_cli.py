import json
import subprocess
import sys

import numpy as np
import pytest

from hdxcodes.cli import EXIT_INVALID, EXIT_OK, cli_main
from hdxcodes.common import HashSubset
from hdxcodes.dp_code import KmsAccess
from hdxcodes.harness import (BipartiteEdges, ConfigError, ExperimentConfig, aggregate_records, config_from_dict,
                              kms_edge_keys, load_config, measure_congestion, measure_sampler, read_report,
                              run_experiment)
from hdxcodes.kms_complex import KmsComplex


def test_complete_bipartite_has_zero_gap():
    est = measure_sampler(np.ones((6, 9)))
    assert est.value == pytest.approx(0.0, abs=1e-6)
    assert not est.partial


def test_disconnected_graph_has_unit_gap():
    M = np.zeros((4, 4))
    M[:2, :2] = 1
    M[2:, 2:] = 1
    assert measure_sampler(M).value == pytest.approx(1.0, abs=1e-6)


def test_gap_matches_dense_svd():
    rng = np.random.default_rng(0)
    M = (rng.random((40, 30)) < 0.3).astype(float)
    M = M[M.sum(1) > 0][:, M.sum(0) > 0]
    N = M / np.sqrt(np.outer(M.sum(1), M.sum(0)))
    want = np.linalg.svd(N, compute_uv=False)[1]
    assert measure_sampler(BipartiteEdges.from_matrix(M), rng=rng).value == pytest.approx(want, abs=1e-4)


def test_monte_carlo_mode_runs():
    est = measure_sampler(np.ones((5, 5)), mode="monte_carlo", budget=50)
    assert 0.0 <= est.value <= 1.0
    with pytest.raises(ValueError):
        measure_sampler(np.ones((2, 2)), mode="nope")


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0).validate()
    with pytest.raises(ConfigError):
        config_from_dict({"trails": 3})
    with pytest.raises(ConfigError):
        config_from_dict({"q": "four"})
    with pytest.raises(ConfigError):
        config_from_dict({"channel": "two_planted", "eps": 0.5})
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.toml")
    assert config_from_dict({"eps": 1}).eps == 1.0


def test_kms_bad_edge_fraction_matches_measure():
    access = KmsAccess(KmsComplex(2, 3, 2), 1, 2, 3)
    rng = np.random.default_rng(1)
    mu = 0.1
    bad = HashSubset(("unit", 1), mu)
    keys = set()
    for _ in range(300):
        a, b = access.random_hyperedge(rng), access.random_hyperedge(rng)
        keys.update(kms_edge_keys(access, access.router.route_randomized(a, b, rng)))
    frac = np.mean([bad(k) for k in keys])
    assert abs(frac - mu) <= 3 * np.sqrt(mu * (1 - mu) / len(keys))


def test_congestion_counts_failures_separately():
    from hdxcodes.common import RoutePath

    def route(a, b, rng):
        return RoutePath([a, b], "test", fail=a == 0)

    est = measure_congestion(route, lambda r: (int(r.integers(2)), 5), lambda e: True, 200,
                             np.random.default_rng(2), bound=1.0)
    assert est.hits + est.failures == 200
    assert est.within


def _small_cfg(tmp_path, **kw):
    base = dict(system="subspace", q=2, d=2, trials=3, seed=7, ell_in=4, route_trials=50,
                sampler_graphs=2, out=str(tmp_path / "rep"))
    base.update(kw)
    return config_from_dict(base)


def test_report_aggregates_recompute_from_records(tmp_path):
    cfg = _small_cfg(tmp_path)
    report = run_experiment(cfg)
    records, summary = read_report(cfg.out)
    assert records == report.records
    assert summary["aggregates"] == aggregate_records(records)
    assert summary["config"]["seed"] == 7 and not summary["partial"]


def test_report_is_deterministic(tmp_path):
    a = run_experiment(_small_cfg(tmp_path, out=str(tmp_path / "a")))
    b = run_experiment(_small_cfg(tmp_path, out=str(tmp_path / "b")))
    assert a.records == b.records


def _write_config(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return str(path)


CONFIG = 'system = "subspace"\nq = 2\nd = 2\ntrials = 2\nroute_trials = 40\nsampler_graphs = 2\nell_in = 4\n'


@pytest.mark.parametrize("command", ["build", "sampler", "route", "decode", "bench"])
def test_cli_commands_succeed(tmp_path, capsys, command):
    cfg = _write_config(tmp_path, CONFIG)
    code = cli_main([command, "--config", cfg, "--out", str(tmp_path / "out"), "--json"])
    assert code == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert isinstance(out, dict) and out


def test_cli_invalid_inputs(tmp_path, capsys):
    cfg = _write_config(tmp_path, CONFIG)
    assert cli_main(["frobnicate", "--config", cfg]) == EXIT_INVALID
    assert cli_main(["build", "--config", str(tmp_path / "missing.toml")]) == EXIT_INVALID
    assert cli_main(["build"]) == EXIT_INVALID
    assert cli_main(["decode", "--config", cfg, "--trials", "0"]) == EXIT_INVALID
    bad = _write_config(tmp_path, CONFIG + "colour = 3\n")
    assert cli_main(["build", "--config", bad]) == EXIT_INVALID
    kms_two = _write_config(tmp_path, 'system = "kms"\nq = 2\nd = 3\nchannel = "two_planted"\neps = 0.2\n')
    assert cli_main(["decode", "--config", kms_two]) == EXIT_INVALID
    sampler_kms = _write_config(tmp_path, 'system = "kms"\nq = 2\nd = 3\n')
    assert cli_main(["sampler", "--config", sampler_kms]) == EXIT_INVALID
    capsys.readouterr()


def test_cli_runtime_failure_exit_code(tmp_path):
    # the config layer accepts any q; the group construction rejects odd characteristic at run time
    cfg = _write_config(tmp_path, 'system = "kms"\nq = 3\nd = 3\n')
    code = cli_main(["build", "--config", cfg])
    assert code == 2


def test_module_entry_point(tmp_path):
    cfg = _write_config(tmp_path, CONFIG)
    proc = subprocess.run([sys.executable, "-m", "hdxcodes", "build", "--config", cfg, "--json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["checks_passed"] == 2
