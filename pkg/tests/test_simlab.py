import csv
import json

import numpy as np
import pytest

from drove.fixtures import default_coefficients
from drove.simlab import (
    DEFAULT_LAMBDA_GRID,
    SimConfig,
    generate_dataset,
    run_table1,
    run_table2,
    run_table3,
    selection_metrics,
    true_optimal_value,
    true_rule_value,
    write_coverage_long_csv,
    write_report_json,
    write_table_csv,
)

_CAT_STEP = 0.1 / np.sqrt(2.0 / 3.0)

TINY = dict(
    n=400,
    n_test=60,
    noise_sd=0.3,
    replications=2,
    seed=31,
    lambda_grid=(0.01, 0.003, 0.001),
    estimators=("oracle", "drove"),
)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n=10)
    with pytest.raises(ValueError):
        SimConfig(n_test=1)
    with pytest.raises(ValueError):
        SimConfig(noise_sd=-0.1)
    with pytest.raises(ValueError):
        SimConfig(replications=0)
    with pytest.raises(ValueError):
        SimConfig(split=0.0)
    with pytest.raises(ValueError):
        SimConfig(lambda_grid=())
    with pytest.raises(ValueError):
        SimConfig(estimators=("drove", "ridge"))
    with pytest.raises(ValueError):
        SimConfig(beta_star=(1.0, 2.0))
    with pytest.raises(ValueError):
        SimConfig(beta_star=tuple([float("nan")] * 99))


def test_config_round_trip_and_alias():
    cfg = SimConfig(**TINY)
    again = SimConfig.from_dict(cfg.to_dict())
    assert again == cfg
    aliased = SimConfig.from_dict({"n": 400, "N": 77})
    assert aliased.n_test == 77
    with pytest.raises(ValueError):
        SimConfig.from_dict({"N": 77, "n_test": 88})
    with pytest.raises(ValueError):
        SimConfig.from_dict({"bandwidth": 1.0})
    assert np.array_equal(cfg.coefficients(), default_coefficients())
    custom = SimConfig.from_dict({"beta_star": [0.0] * 99})
    assert np.array_equal(custom.coefficients(), np.zeros(99))


def test_generate_dataset_deterministic():
    cfg = SimConfig(**TINY)
    obs1, test1 = generate_dataset(cfg, 0)
    obs2, test2 = generate_dataset(cfg, 0)
    assert obs1.X.tobytes() == obs2.X.tobytes()
    assert obs1.A.tobytes() == obs2.A.tobytes()
    assert obs1.Y.tobytes() == obs2.Y.tobytes()
    assert test1.tobytes() == test2.tobytes()
    obs3, _ = generate_dataset(cfg, 1)
    assert obs1.Y.tobytes() != obs3.Y.tobytes()


def test_generate_dataset_noiseless_and_covariate_support():
    cfg = SimConfig(n=500, n_test=20, noise_sd=0.0, replications=1, seed=5)
    obs, X_test = generate_dataset(cfg, 0)
    from drove.design import build_design
    from drove.fixtures import fixture_grid

    design = build_design(obs, fixture_grid())
    assert np.array_equal(obs.Y, design.matrix @ default_coefficients())
    assert X_test.shape == (20, 9)

    # intercept, scaled binary, scaled three-level, continuous
    assert np.all(obs.X[:, 0] == 1.0)
    for j in (1, 2, 3):
        assert set(np.unique(obs.X[:, j])) <= {-0.1, 0.1}
    for j in (4, 5):
        vals = np.unique(np.round(obs.X[:, j], 12))
        assert set(vals) <= set(np.round([-_CAT_STEP, 0.0, _CAT_STEP], 12))
    for j in (6, 7, 8):
        assert 0.05 < obs.X[:, j].std() < 0.2
    # actions live on the grid
    assert set(np.round(np.unique(obs.A), 12)) <= set(np.round(np.linspace(0, 1, 11), 12))


def test_action_assignment_frequencies():
    cfg = SimConfig(n=20000, n_test=2, noise_sd=0.1, replications=1, seed=123)
    obs, _ = generate_dataset(cfg, 0)
    p = 1.0 / 11.0
    bound = 3.0 * np.sqrt(p * (1 - p) / cfg.n)
    levels = np.linspace(0, 1, 11)
    for level in levels:
        freq = float(np.mean(obs.A == level))
        assert abs(freq - p) <= bound


def test_selection_metrics_match_naive_recount():
    rng = np.random.default_rng(8)
    for _ in range(25):
        p = int(rng.integers(5, 40))
        beta_star = rng.normal(size=p) * (rng.random(p) < 0.6)
        beta_hat = beta_star + rng.normal(0, 0.1, p) * (rng.random(p) < 0.7)
        m = selection_metrics(beta_hat, beta_star)
        fp = fn = n_zero = n_sig = 0
        for bh, bs in zip(beta_hat, beta_star):
            if bs == 0.0:
                n_zero += 1
                if abs(bh) > 1e-4:
                    fp += 1
            else:
                n_sig += 1
                if abs(bh) <= 1e-4:
                    fn += 1
        assert m["fp_over_n"] == (fp / n_zero if n_zero else 0.0)
        assert m["fn_over_p"] == (fn / n_sig if n_sig else 0.0)
        assert m["l2"] == pytest.approx(np.linalg.norm(beta_hat - beta_star), rel=1e-12)
        assert m["l1"] == pytest.approx(np.abs(beta_hat - beta_star).sum(), rel=1e-12)


def test_run_table1_structure_and_determinism():
    cfg = SimConfig(**TINY)
    report = run_table1(cfg)
    assert report["study"] == "accuracy"
    assert [r["estimator"] for r in report["rows"]] == ["oracle", "drove"]
    assert len(report["per_rep"]) == 2
    # stored coefficient vectors reproduce the stored metrics exactly
    beta_star = cfg.coefficients()
    for rep_row in report["per_rep"]:
        for kind in cfg.estimators:
            stored = rep_row[kind]
            again = selection_metrics(np.asarray(stored["beta_hat"]), beta_star)
            assert again["l2"] == stored["l2"]
            assert again["fp_over_n"] == stored["fp_over_n"]
            assert again["fn_over_p"] == stored["fn_over_p"]
    # oracle knows the truth, so its false positives are structural zeros
    oracle_row = report["rows"][0]
    assert oracle_row["nonconverged"] == 0

    again = run_table1(cfg)
    assert json.dumps(report, sort_keys=True, default=float) == json.dumps(
        again, sort_keys=True, default=float
    )


def test_run_table1_parallel_matches_serial():
    cfg = SimConfig(**TINY)
    serial = run_table1(cfg)
    parallel = run_table1(SimConfig(**{**TINY, "jobs": 2}))
    s = json.loads(json.dumps(serial, sort_keys=True, default=float))
    q = json.loads(json.dumps(parallel, sort_keys=True, default=float))
    s["config"].pop("jobs")
    q["config"].pop("jobs")
    assert s == q


def test_truth_quadrature_caching_and_degenerate_profile():
    v1 = true_optimal_value(n_draws=50_000, seed=4242)
    v2 = true_optimal_value(n_draws=50_000, seed=4242)
    assert v1 == v2
    v3 = true_optimal_value(n_draws=50_000, seed=4243)
    assert v1 != v3

    # with every interaction block zeroed there is nothing to gain over
    # the reference level: the optimal value is the mean main effect and
    # every fixed rule attains it
    beta = default_coefficients()
    beta[9:] = 0.0
    opt = true_optimal_value(n_draws=50_000, seed=11, beta_star=beta)
    assert opt == pytest.approx(beta[0], abs=0.02)
    for rule in (0.0, 0.5, 1.0):
        rv = true_rule_value(rule, n_draws=50_000, seed=11, beta_star=beta)
        assert rv == pytest.approx(opt, abs=1e-12)
    # a constant rule can never beat the pointwise best rule
    full = true_optimal_value(n_draws=50_000, seed=11)
    assert full >= true_rule_value(0.6, n_draws=50_000, seed=11)


def test_run_table2_fields(tmp_path):
    cfg = SimConfig(**{**TINY, "estimators": ("drove",)})
    report = run_table2(cfg, alphas=(0.1, 0.05), n_draws=30_000, quad_seed=2)
    assert report["study"] == "optimal-value"
    assert report["quadrature"] == {"draws": 30_000, "seed": 2}
    assert set(report["coverage"]) == {repr(0.1), repr(0.05)}
    for value in report["coverage"].values():
        assert 0.0 <= value <= 1.0
    ses = [r["se"] for r in report["per_rep"]]
    assert report["mean_se"] == pytest.approx(float(np.mean(ses)))
    for r in report["per_rep"]:
        assert r["se"] == pytest.approx(r["sigma"] / np.sqrt(cfg.n))
        assert r["lambda"] in cfg.lambda_grid

    write_table_csv(report, tmp_path / "t2.csv")
    lines = (tmp_path / "t2.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ")
    assert json.loads(lines[0][len("# config: "):]) == report["config"]
    assert lines[1].split(",")[:3] == ["alpha", "true_value", "coverage"]
    assert len(lines) == 2 + 2  # one row per alpha

    write_coverage_long_csv(report, tmp_path / "cov.csv")
    with open(tmp_path / "cov.csv") as fh:
        fh.readline()  # config comment
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * cfg.replications  # alphas x reps, one target
    for row in rows:
        assert row["covered"] in ("0", "1")
        lo, hi, truth = float(row["ci_lower"]), float(row["ci_upper"]), float(row["truth"])
        assert (row["covered"] == "1") == (lo <= truth <= hi)


def test_run_table3_fields(tmp_path):
    cfg = SimConfig(**{**TINY, "estimators": ("drove",)})
    report = run_table3(cfg, rules=(0.2, 0.8), alphas=(0.05,), n_draws=30_000, quad_seed=2)
    assert report["study"] == "value-difference"
    assert [row["rule"] for row in report["rows"]] == [0.2, 0.8]
    for row in report["rows"]:
        assert set(row["coverage"]) == {repr(0.05)}
        assert row["mean_se"] == pytest.approx(row["mean_sigma"] / np.sqrt(cfg.n))
    for r in report["per_rep"]:
        assert set(r["rules"]) == {repr(0.2), repr(0.8)}

    write_table_csv(report, tmp_path / "t3.csv")
    lines = (tmp_path / "t3.csv").read_text().splitlines()
    assert lines[1].split(",")[:2] == ["rule", "alpha"]
    assert len(lines) == 2 + 2  # rules x alphas

    write_coverage_long_csv(report, tmp_path / "cov3.csv")
    with open(tmp_path / "cov3.csv") as fh:
        fh.readline()
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 1 * cfg.replications
    assert {row["target"] for row in rows} == {"rule_0.2", "rule_0.8"}


def test_report_json_round_trip(tmp_path):
    cfg = SimConfig(**TINY)
    report = run_table1(cfg)
    path = tmp_path / "report.json"
    write_report_json(report, path)
    loaded = json.loads(path.read_text())
    assert loaded["study"] == "accuracy"
    assert loaded["config"] == cfg.to_dict()
    assert len(loaded["per_rep"]) == cfg.replications


def test_writer_validation(tmp_path):
    with pytest.raises(ValueError):
        write_table_csv({"study": "mystery", "config": {}}, tmp_path / "x.csv")
    with pytest.raises(ValueError):
        write_coverage_long_csv({"study": "accuracy", "config": {}}, tmp_path / "x.csv")


def test_default_lambda_grid_shape():
    grid = np.asarray(DEFAULT_LAMBDA_GRID)
    assert grid.size == 16
    assert np.all(np.diff(grid) > 0)
    assert grid[0] == pytest.approx(1.5e-4)
    assert grid[-1] == pytest.approx(1.5e-2)
