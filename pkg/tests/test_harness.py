import csv
import json

import numpy as np
import pytest
from scipy import stats

from dpmarket.harness import ExperimentConfig, ConfigError, load_config, run_experiment
from dpmarket.harness.cli import main
from dpmarket.harness.config import parse_config_text
from dpmarket.harness.emit import emit, format_cell, write_csv
from dpmarket.harness.experiments import Table, mean_ci
from dpmarket.harness.trials import couple_correlation, make_trial, stream

SMALL = dict(trials=3, sample_size=400)


# -- config --------------------------------------------------------------------


def test_parse_config_text():
    text = """
    # comment
    experiment = proc-risk
    trials = 7   # inline
    deltas = 0.5, 0.9
    rho = -1, 1
    population = none
    """
    values = parse_config_text(text)
    assert values == dict(experiment="proc-risk", trials=7, deltas=(0.5, 0.9), rho=(-1, 1), population=None)
    cfg = ExperimentConfig(**values)
    assert cfg.rhos == (-1, 1) and cfg.populations == ("finite", "infinite")


@pytest.mark.parametrize("text", [
    "trials 3",
    "bogus = 1",
    "trials = 3\ntrials = 4",
    "trials = many",
    "delta = nan",
    "deltas = ",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize("bad", [
    dict(experiment="nope"), dict(trials=0), dict(n_owners=13), dict(seed=-1), dict(family="cauchy"),
    dict(rho=(2,)), dict(delta=1.0), dict(population="some"), dict(budget_multiples=(0.0,)),
    dict(theta_bars=()), dict(bins=1), dict(alpha_range=(3.0, 1.0)),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_defaults_mirror_setup():
    cfg = ExperimentConfig()
    assert (cfg.trials, cfg.n_owners, cfg.alpha_range, cfg.beta_range) == (50, 8, (10.0, 16.0), (1.0, 3.0))
    assert cfg.budget_multiples == pytest.approx(np.arange(1, 11) / 10)
    assert cfg.deltas == (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)
    assert cfg.eps_bars[0] == pytest.approx(0.1) and cfg.eps_bars[-1] == pytest.approx(100.0)
    assert cfg.delta_dp == 1e-15


def test_load_config_overrides(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("trials = 4\nseed = 3\n")
    cfg = load_config(path, seed=9, trials=None)
    assert cfg.trials == 4 and cfg.seed == 9
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


# -- coupling and streams ------------------------------------------------------


def test_couple_correlation_extremes():
    rng = np.random.default_rng(1)
    values = rng.normal(size=8)
    up = couple_correlation(values, 2.0, 1, rng)
    down = couple_correlation(values, 2.0, -1, rng)
    assert stats.spearmanr(up, values)[0] == pytest.approx(1.0)
    assert stats.spearmanr(down, values)[0] == pytest.approx(-1.0)
    assert np.all((up >= 0) & (up <= 2.0))


def test_couple_correlation_independent():
    rng = np.random.default_rng(2)
    values = rng.normal(size=8)
    rhos = [stats.spearmanr(couple_correlation(values, 1.0, 0, rng), values)[0] for _ in range(10_000)]
    assert abs(np.mean(rhos)) < 0.05


def test_couple_correlation_keeps_marginal():
    # the same uniforms are rearranged, never changed
    values = np.arange(8.0)
    draws = [np.sort(couple_correlation(values, 1.0, r, np.random.default_rng(3))) for r in (-1, 0, 1)]
    assert np.array_equal(draws[0], draws[1]) and np.array_equal(draws[1], draws[2])
    with pytest.raises(ValueError):
        couple_correlation([1.0, np.inf], 1.0, 1, 0)


def test_streams_are_independent_of_order():
    a = stream(0, "gaussian", 5, 1).uniform(size=3)
    stream(0, "gaussian", 4, 1).uniform(size=100)
    assert np.array_equal(a, stream(0, "gaussian", 5, 1).uniform(size=3))
    assert not np.array_equal(a, stream(0, "gaussian", 5, 2).uniform(size=3))


def test_trial_isolation_of_data():
    args = (8, 300, (10.0, 16.0), (1.0, 3.0), 64)
    t2 = make_trial(11, "gaussian", 2, *args)
    make_trial.cache_clear()
    t2_again = make_trial(11, "gaussian", 2, *args)
    assert np.array_equal(t2.draws, t2_again.draws)
    assert not np.array_equal(t2.draws, make_trial(11, "gaussian", 1, *args).draws)


# -- emit ----------------------------------------------------------------------


def test_format_cell():
    assert format_cell(True) == "1"
    assert format_cell(np.int64(3)) == "3"
    assert format_cell(0.1) == "0.1"
    assert float(format_cell(np.float64(1 / 3))) == 1 / 3


def test_empty_table_is_header_only(tmp_path):
    cfg = ExperimentConfig()
    emit({"empty": Table(("a", "b"))}, tmp_path, cfg, 0.0)
    assert (tmp_path / "empty.csv").read_text() == "a,b\n"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["files"]["empty.csv"]["rows"] == 0
    assert {"config", "seed", "version", "wall_clock_seconds"} <= manifest.keys()


def test_write_error_names_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        write_csv(tmp_path / "missing" / "x.csv", ("a",), [])


def test_mean_ci():
    m, lo, hi = mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0 and lo < 2.0 < hi
    assert mean_ci([5.0])[0] == 5.0


# -- runs ----------------------------------------------------------------------


def _csvs(path):
    return {p.name: p.read_bytes() for p in sorted(path.glob("*.csv"))}


@pytest.fixture(scope="module")
def exo_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    cfg = ExperimentConfig(experiment="proc-exo", **SMALL)
    outs = {}
    for name, c in (("a", cfg), ("b", cfg), ("par", cfg.replace(workers=2))):
        make_trial.cache_clear()
        run_experiment(c, base / name)
        outs[name] = base / name
    return outs


def test_rerun_byte_identical(exo_runs):
    assert _csvs(exo_runs["a"]) == _csvs(exo_runs["b"])


def test_workers_byte_identical(exo_runs):
    assert _csvs(exo_runs["a"]) == _csvs(exo_runs["par"])


def test_proc_exo_schema_and_budgets(exo_runs):
    with open(exo_runs["a"] / "proc_exo_rho+0.csv") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = list(reader)
    assert header == ["budget", "mechanism", "mean_wd", "ci_lo", "ci_hi", "mean_n_selected"]
    budgets = sorted({float(r[0]) for r in body})
    theta_bar = 1.0  # proc-exo default when theta_bar is unset
    assert len(budgets) == 10
    assert budgets == pytest.approx([m * theta_bar * 8 for m in ExperimentConfig().budget_multiples])
    manifest = json.loads((exo_runs["a"] / "manifest.json").read_text())
    assert manifest["config"]["trials"] == 3 and "reference_data" in manifest


def test_removing_a_trial_leaves_others(tmp_path, exo_runs):
    run_experiment(ExperimentConfig(experiment="proc-exo", trials=2, sample_size=400), tmp_path)
    with open(tmp_path / "proc_exo_trials.csv") as fh:
        fewer = list(csv.reader(fh))
    with open(exo_runs["a"] / "proc_exo_trials.csv") as fh:
        full = [r for r in csv.reader(fh) if r[0] in ("trial", "0", "1")]
    assert fewer == full


@pytest.mark.parametrize("experiment", [
    "val-lipschitz", "val-corr", "val-shapley", "val-hoeffding", "proc-exo-dist",
    "proc-dp", "proc-endo", "proc-joint", "proc-risk", "proc-approx",
])
def test_every_experiment_runs(tmp_path, experiment):
    cfg = ExperimentConfig(experiment=experiment, trials=2, sample_size=300, family="gaussian")
    tables, manifest = run_experiment(cfg, tmp_path)
    assert tables and manifest.exists()
    for name, table in tables.items():
        assert (tmp_path / f"{name}.csv").exists()
        assert all(len(row) == len(table.columns) for row in table.rows)


def test_endogenous_bound_feasibility(tmp_path):
    tables, _ = run_experiment(ExperimentConfig(experiment="proc-endo", trials=3, sample_size=400), tmp_path)
    t = tables["proc_endo_trials"]
    col = {c: i for i, c in enumerate(t.columns)}
    for row in t.rows:
        if row[col["mechanism"]] != "exogenous" and not row[col["outside"]]:
            assert row[col["expected_cost"]] <= row[col["b_ref"]] + 1e-9


# -- CLI -----------------------------------------------------------------------


def test_cli_success(tmp_path, capsys):
    code = main(["proc-exo", "--trials", "2", "--out", str(tmp_path / "o"), "--seed", "4", "--rho", "0"])
    assert code == 0
    assert (tmp_path / "o" / "proc_exo_rho+0.csv").exists()
    assert not (tmp_path / "o" / "proc_exo_rho+1.csv").exists()


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("trials = zero\n")
    assert main(["proc-exo", "--config", str(bad)]) == 2
    assert main(["proc-exo", "--trials", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["not-an-experiment"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["proc-exo", "--rho", "x"])
    assert exc.value.code == 2


def test_cli_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["proc-exo", "--trials", "1", "--out", str(blocker / "sub")]) == 3
    assert "file" in capsys.readouterr().err
