import numpy as np
import pytest

from drove.design import (
    ActionGrid,
    InteractionDesign,
    build_design,
    identity_penalty_matrix,
    null_space_basis,
)
from drove.estimators import (
    ConvergenceError,
    EstimationError,
    EstimatorKind,
    check_minimal_signal,
    fit,
    fit_glla,
    init_strength_report,
    null_partition,
    penalized_objective,
    tune_lambda,
)
from drove.fixtures import (
    FIXTURE_D,
    default_coefficients,
    fixture_grid,
    fixture_penalty_matrix,
    true_null_rows,
)
from drove.penalties import PenaltySpec
from drove.simlab import SimConfig, generate_dataset
from drove.solver import SolverSettings


def _fixture_sample(n=1000, noise=0.3, rep=0):
    cfg = SimConfig(n=n, n_test=2, noise_sd=noise, replications=1, seed=555)
    obs, _ = generate_dataset(cfg, rep)
    return obs, build_design(obs, fixture_grid())


def test_null_rows_annihilate_refit():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample()
    model = fit_glla(obs.Y, design, op, PenaltySpec("scad", 0.003), on_nonconvergence="keep")
    gaps = np.abs(op.submatrix(model.null_rows) @ model.beta)
    assert gaps.size > 0
    assert np.max(gaps) < 1e-10
    # and the free directions reproduce the detected dimension
    assert model.null_basis.shape == (op.p, model.s_hat)


def test_oracle_equals_restricted_least_squares():
    op = fixture_penalty_matrix()
    null_rows = true_null_rows(op)
    obs, design = _fixture_sample(n=800, noise=0.5)
    model = fit("oracle", obs.Y, design, op, true_null=null_rows)
    U0 = null_space_basis(op.submatrix(null_rows), op.p)
    theta = np.linalg.lstsq(design.matrix @ U0, obs.Y, rcond=None)[0]
    assert np.max(np.abs(model.beta - U0 @ theta)) < 1e-10
    assert model.kind == "oracle"
    assert model.lam is None
    assert model.s_hat == 23
    assert model.converged and model.sweeps == 0
    # dispersion is the degrees-of-freedom corrected residual mean square
    expected = float(model.residuals @ model.residuals / (800 - 23))
    assert model.dispersion == pytest.approx(expected, rel=1e-12)


def test_fit_dispatch_validation():
    op = fixture_penalty_matrix()
    op_unit = identity_penalty_matrix(FIXTURE_D, fixture_grid())
    obs, design = _fixture_sample(n=300, noise=1.0)
    spec = PenaltySpec("scad", 0.01)
    with pytest.raises(ValueError):
        fit("nope", obs.Y, design, op, spec)
    with pytest.raises(ValueError):
        fit("drove", obs.Y, design, op_unit, spec)
    with pytest.raises(ValueError):
        fit("std-scad", obs.Y, design, op, spec)
    with pytest.raises(ValueError):
        fit("drove", obs.Y, design, op, PenaltySpec("l1", 0.01))
    with pytest.raises(ValueError):
        fit("drove", obs.Y, design, op, None)
    with pytest.raises(ValueError):
        fit("oracle", obs.Y, design, op)
    with pytest.raises(ValueError):
        fit_glla(obs.Y, design, op, PenaltySpec("l1", 0.01))
    with pytest.raises(ValueError):
        fit_glla(obs.Y, design, op, spec, init=np.zeros(5))
    assert EstimatorKind("drove") is EstimatorKind.DROVE


def test_refit_needs_enough_observations():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample(n=300)
    small = design.subset(np.arange(50))
    # no null rows leaves all 99 directions free, more than 50 observations
    with pytest.raises(EstimationError):
        fit("oracle", obs.Y[:50], small, op, true_null=np.array([], dtype=int))


def test_l1_kinds_keep_shrinkage():
    op_unit = identity_penalty_matrix(FIXTURE_D, fixture_grid())
    obs, design = _fixture_sample(n=600, noise=0.3)
    model = fit("std-lasso", obs.Y, design, op_unit, PenaltySpec("l1", 0.002))
    assert model.kind == "std-lasso"
    assert model.penalty.family == "l1"
    # the penalized solution is returned untouched: detected null rows do
    # not annihilate it exactly, they only classify it
    pre = model.diagnostics["pre_refit_beta"]
    assert np.array_equal(model.beta, pre)
    # shrinkage pulls the strong staircase below the oracle magnitude
    beta_star = default_coefficients()
    strong = np.abs(beta_star) > 1.0
    assert np.mean(np.abs(model.beta[strong]) < np.abs(beta_star[strong])) > 0.8


def test_glla_reaches_true_partition_on_strong_signal():
    op = fixture_penalty_matrix()
    beta_star = default_coefficients()
    oracle_mask = np.abs(np.asarray(op.rows @ beta_star)).ravel() < 1e-12
    settings = SolverSettings(primal_tol=1e-12, dual_tol=1e-12, max_iterations=600000)
    cfg = SimConfig(n=2000, n_test=2, noise_sd=3e-7, replications=1, seed=20260823)
    for rep in range(3):
        obs, _ = generate_dataset(cfg, rep)
        design = build_design(obs, fixture_grid())
        model = fit_glla(
            obs.Y, design, op, PenaltySpec("scad", 3e-8),
            settings=settings, on_nonconvergence="keep",
        )
        found = np.zeros(op.K, dtype=bool)
        found[model.null_rows] = True
        assert np.array_equal(found, oracle_mask)
        history = model.diagnostics["partition_history"]
        hits = [i for i, part in enumerate(history) if np.array_equal(part, oracle_mask)]
        assert hits and hits[0] <= 2


def test_glla_nonconvergence_paths():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample(n=300, noise=1.0)
    spec = PenaltySpec("scad", 0.01)
    # zero sweeps can never stabilize the partition
    with pytest.raises(ConvergenceError):
        fit_glla(obs.Y, design, op, spec, max_sweeps=0)
    model = fit_glla(obs.Y, design, op, spec, max_sweeps=0, on_nonconvergence="keep")
    assert not model.converged
    assert model.sweeps == 0


def test_penalized_objective_manual():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample(n=200, noise=0.5)
    rng = np.random.default_rng(1)
    beta = rng.normal(0, 0.2, op.p)
    spec = PenaltySpec("mcp", 0.05)
    from drove.penalties import penalty_value

    resid = obs.Y - design.matrix @ beta
    manual = 0.5 / 200 * resid @ resid
    manual += float(np.sum(penalty_value(spec, np.abs(np.asarray(op.rows @ beta)).ravel())))
    assert penalized_objective(obs.Y, design, op, spec, beta) == pytest.approx(manual, rel=1e-12)


def test_null_partition_threshold():
    op = identity_penalty_matrix(1, ActionGrid.uniform(3))
    beta = np.array([1.0, 1e-8, 0.5])
    mask = null_partition(op, beta)
    assert list(mask) == [False, True, False]


def test_tune_lambda_deterministic():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample(n=500, noise=0.3)
    grid = [0.01, 0.003, 0.001]
    a = tune_lambda("drove", obs.Y, design, op, PenaltySpec("scad", 1.0), grid, seed=4)
    b = tune_lambda("drove", obs.Y, design, op, PenaltySpec("scad", 1.0), grid, seed=4)
    assert a.lambda_best == b.lambda_best
    assert a.model.beta.tobytes() == b.model.beta.tobytes()
    assert a.split_seed == 4
    # table is scanned from the largest level down
    assert [e["lam"] for e in a.table] == sorted(grid, reverse=True)
    assert all(np.isfinite(e["val_mse"]) for e in a.table if e["converged"])
    # the winner is the first minimizer in scan order
    best = min(e["val_mse"] for e in a.table if e["converged"])
    first = next(e["lam"] for e in a.table if e["converged"] and e["val_mse"] == best)
    assert a.lambda_best == first


def test_tune_lambda_tie_breaks_to_larger_level():
    # an all-zero outcome fits beta = 0 exactly on every split and at every
    # level, so all validation errors tie; the tie must go to the larger
    # (sparser) level
    matrix = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    Y = np.zeros(5)
    design = InteractionDesign(matrix, 1, 2)
    op = identity_penalty_matrix(1, ActionGrid.uniform(2))
    result = tune_lambda(
        "std-scad", Y, design, op, PenaltySpec("scad", 1.0), [0.1, 0.3], seed=0
    )
    mses = [e["val_mse"] for e in result.table]
    assert mses[0] == mses[1]
    assert result.lambda_best == 0.3
    assert np.array_equal(result.model.beta, np.zeros(2))


def test_tune_lambda_validation():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample(n=100, noise=0.5)
    spec = PenaltySpec("scad", 1.0)
    with pytest.raises(ValueError):
        tune_lambda("oracle", obs.Y, design, op, spec, [0.1])
    with pytest.raises(ValueError):
        tune_lambda("drove", obs.Y, design, op, spec, [])
    with pytest.raises(ValueError):
        tune_lambda("drove", obs.Y, design, op, spec, [0.1], split=1.5)


def test_check_minimal_signal():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample(n=800, noise=0.2)
    model = fit_glla(obs.Y, design, op, PenaltySpec("scad", 0.003), on_nonconvergence="keep")
    report = check_minimal_signal(model, op)
    assert report.active_rows == op.K - model.null_rows.size
    gaps = np.abs(np.asarray(op.rows @ model.beta)).ravel()
    active = np.ones(op.K, dtype=bool)
    active[model.null_rows] = False
    assert report.min_gap_half == pytest.approx(0.5 * gaps[active].min())
    assert report.ratio == pytest.approx(report.min_gap_half / model.lam)

    # an all-null fit reports no surviving gap
    empty = fit("oracle", obs.Y, design, op, true_null=np.arange(op.K))
    empty_report = check_minimal_signal(empty, op)
    assert empty_report.min_gap_half is None
    assert empty_report.active_rows == 0


def test_model_accessors():
    op = fixture_penalty_matrix()
    obs, design = _fixture_sample(n=500, noise=0.4)
    model = fit("oracle", obs.Y, design, op, true_null=true_null_rows(op))
    assert model.p == 99
    assert np.array_equal(model.psi_main(), model.beta[:9])
    assert np.array_equal(model.psi_level(2), model.beta[9:18])
    assert np.array_equal(model.psi_level(11), model.beta[90:99])
    with pytest.raises(ValueError):
        model.psi_level(1)
    with pytest.raises(ValueError):
        model.psi_level(12)
    assert model.nonzero_count() == int(np.sum(np.abs(model.beta) > 1e-4))


def test_init_strength_report():
    op = fixture_penalty_matrix()
    beta_star = default_coefficients()
    null_rows = true_null_rows(op)
    spec = PenaltySpec("scad", 0.01)
    strong = init_strength_report(beta_star, op, null_rows, spec)
    assert strong.passed
    assert strong.signal_min >= strong.signal_bound
    weak = init_strength_report(0.001 * beta_star, op, null_rows, spec)
    assert not weak.passed
