"""Monte-Carlo laboratory for the discretized treatment-rule pipeline.

Three studies, mirroring the usual reporting layout:

* accuracy (:func:`run_table1`): coefficient error and selection rates per
  estimator, each replication tuning its penalty level on a held-out split;
* optimal-value coverage (:func:`run_table2`): sandwich confidence
  intervals for the value of the estimated best rule, scored against the
  true optimal value obtained by Monte-Carlo quadrature;
* value-difference coverage (:func:`run_table3`): the same for the value
  gap between the estimated best rule and fixed reference rules.

Every replication derives its generator from ``(seed, rep)`` through a
seed-sequence spawn, so serial and parallel runs produce byte-identical
reports.  Covariates follow a fixed scheme — an intercept, three
Bernoulli(1/2), two uniform three-level categoricals, three standard
normals — scaled by population constants so each non-intercept column has
mean 0 and standard deviation 0.1 exactly in law, keeping rows iid (which
the value confidence intervals rely on).  Actions are assigned uniformly
over the grid.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import (
    ActionGrid,
    ObservationSet,
    build_design,
    build_policy_features,
    identity_penalty_matrix,
)
from .estimators import EstimatorKind, fit, tune_lambda
from .fixtures import (
    FIXTURE_D,
    default_coefficients,
    fixture_grid,
    fixture_penalty_matrix,
    validate_fixture,
)
from .inference import estimate_optimal_value, value_difference
from .penalties import PenaltySpec

ZERO_THRESHOLD = 1e-4
DEFAULT_LAMBDA_GRID = tuple(np.geomspace(1.5e-4, 1.5e-2, 16))
DEFAULT_ESTIMATORS = ("oracle", "drove", "std-scad", "std-lasso")
DEFAULT_ALPHAS = (0.1, 0.05, 0.01)
DEFAULT_QUADRATURE_DRAWS = 2_000_000
DEFAULT_QUADRATURE_SEED = 7_070_707


@dataclass(frozen=True)
class SimConfig:
    """Settings for one simulation study.

    ``n`` is the estimation sample size, ``n_test`` the fresh covariate
    sample each replication evaluates rules on (``N`` is accepted as an
    alias when loading from JSON).  ``noise_sd`` scales the Gaussian
    outcome noise.  ``beta_star`` overrides the default coefficient
    fixture (length p, same block layout); leave ``None`` for the shipped
    fixture.  ``lambda_grid`` is shared by all tuned estimators;
    ``split`` is the training fraction of the tuning split.  ``jobs`` > 1
    runs replications in worker processes; results are identical either
    way.
    """

    n: int = 2000
    n_test: int = 5000
    noise_sd: float = 0.5
    replications: int = 100
    seed: int = 20260823
    estimators: tuple[str, ...] = DEFAULT_ESTIMATORS
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    split: float = 0.8
    beta_star: tuple[float, ...] | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.n < 22 or self.n_test < 2:
            raise ValueError("sample sizes too small for the 11-level design")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if not 0 < self.split < 1:
            raise ValueError("split must be in (0, 1)")
        if len(self.lambda_grid) == 0:
            raise ValueError("lambda_grid must not be empty")
        known = {k.value for k in EstimatorKind}
        bad = [e for e in self.estimators if e not in known]
        if bad:
            raise ValueError(f"unknown estimator kinds {bad}; known: {sorted(known)}")
        summary = validate_fixture()
        if self.beta_star is not None:
            arr = np.asarray(self.beta_star, dtype=float)
            if arr.shape != (summary.p,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"beta_star must be {summary.p} finite values")

    def coefficients(self) -> np.ndarray:
        if self.beta_star is None:
            return default_coefficients()
        return np.asarray(self.beta_star, dtype=float)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_test": self.n_test,
            "noise_sd": self.noise_sd,
            "replications": self.replications,
            "seed": self.seed,
            "estimators": list(self.estimators),
            "lambda_grid": [float(l) for l in self.lambda_grid],
            "split": self.split,
            "beta_star": None if self.beta_star is None else [float(b) for b in self.beta_star],
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        if "N" in data:
            if "n_test" in data:
                raise ValueError("give either N or n_test, not both")
            data["n_test"] = data.pop("N")
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown SimConfig fields {sorted(extra)}")
        for key in ("estimators", "lambda_grid", "beta_star"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------

# Population scale factors putting every non-intercept covariate at mean 0,
# sd 0.1 exactly in law: Bernoulli(1/2) has sd 1/2, uniform {0,1,2} has
# sd sqrt(2/3).
_BINARY_SCALE = 0.1 / 0.5
_CATEGORICAL_SCALE = 0.1 / np.sqrt(2.0 / 3.0)


def _covariate_sample(rng: np.random.Generator, n: int) -> np.ndarray:
    """Typed covariate matrix with unit intercept and sd-0.1 columns."""
    X = np.empty((n, FIXTURE_D))
    X[:, 0] = 1.0
    for j in (1, 2, 3):
        X[:, j] = (rng.integers(0, 2, n) - 0.5) * _BINARY_SCALE
    for j in (4, 5):
        X[:, j] = (rng.integers(0, 3, n) - 1.0) * _CATEGORICAL_SCALE
    for j in (6, 7, 8):
        X[:, j] = rng.normal(0.0, 0.1, n)
    return X


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep),)))


def generate_dataset(cfg: SimConfig, rep: int):
    """Replication ``rep``'s estimation data and fresh test covariates.

    Returns ``(obs, X_test)`` where ``obs`` bundles covariates, uniformly
    assigned grid actions, and outcomes ``Y = design @ beta_star + eps``.
    """
    grid = fixture_grid()
    beta = cfg.coefficients()
    rng = _rep_rng(cfg.seed, rep)
    X = _covariate_sample(rng, cfg.n)
    A = grid.levels[rng.integers(0, grid.n_levels, cfg.n)]
    design = build_design(ObservationSet(X, A, np.zeros(cfg.n)), grid)
    Y = design.matrix @ beta + rng.normal(0.0, cfg.noise_sd, cfg.n)
    X_test = _covariate_sample(rng, cfg.n_test)
    return ObservationSet(X, A, Y), X_test


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def selection_metrics(beta_hat: np.ndarray, beta_star: np.ndarray) -> dict:
    """Coefficient error norms plus selection rates at the 1e-4 threshold."""
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    beta_star = np.asarray(beta_star, dtype=float).ravel()
    err = beta_hat - beta_star
    zero_true = beta_star == 0.0
    zero_hat = np.abs(beta_hat) <= ZERO_THRESHOLD
    n_neg = int(zero_true.sum())
    n_pos = int((~zero_true).sum())
    return {
        "l2": float(np.linalg.norm(err)),
        "l1": float(np.abs(err).sum()),
        "fp_over_n": float(np.sum(~zero_hat & zero_true)) / n_neg if n_neg else 0.0,
        "fn_over_p": float(np.sum(zero_hat & ~zero_true)) / n_pos if n_pos else 0.0,
    }


def _table1_rep(cfg_dict: dict, rep: int) -> dict:
    cfg = SimConfig.from_dict(cfg_dict)
    grid = fixture_grid()
    op = fixture_penalty_matrix()
    op_unit = identity_penalty_matrix(FIXTURE_D, grid)
    beta_star = cfg.coefficients()
    null_rows = np.flatnonzero(np.asarray(np.abs(op.rows @ beta_star) < 1e-12).ravel())
    obs, _ = generate_dataset(cfg, rep)
    design = build_design(obs, grid)
    out: dict = {"rep": rep}
    for kind in cfg.estimators:
        if kind == "oracle":
            model = fit("oracle", obs.Y, design, op, true_null=null_rows)
            lam = None
        else:
            use_op = op if kind in ("drove", "genlasso") else op_unit
            family = "scad" if kind in ("drove", "std-scad") else "l1"
            result = tune_lambda(
                kind,
                obs.Y,
                design,
                use_op,
                PenaltySpec(family, 1.0),
                cfg.lambda_grid,
                split=cfg.split,
                seed=cfg.seed + rep,
            )
            model, lam = result.model, result.lambda_best
        row = selection_metrics(model.beta, beta_star)
        row["lambda"] = lam
        row["converged"] = bool(model.converged)
        row["beta_hat"] = [float(b) for b in model.beta]
        out[kind] = row
    return out


def _run_reps(worker, cfg: SimConfig) -> list[dict]:
    """Run ``worker(cfg_dict, rep)`` for every replication, in rep order."""
    cfg_dict = cfg.to_dict()
    reps = range(cfg.replications)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(worker, [cfg_dict] * cfg.replications, reps))
    else:
        results = [worker(cfg_dict, rep) for rep in reps]
    return sorted(results, key=lambda r: r["rep"])


def run_table1(cfg: SimConfig) -> dict:
    """Accuracy study: per-estimator error norms and selection rates."""
    per_rep = _run_reps(_table1_rep, cfg)
    rows = []
    for kind in cfg.estimators:
        arr = np.array(
            [[r[kind]["l2"], r[kind]["l1"], r[kind]["fp_over_n"], r[kind]["fn_over_p"]] for r in per_rep]
        )
        nonconv = sum(0 if r[kind]["converged"] else 1 for r in per_rep)
        mean = arr.mean(axis=0)
        sd = arr.std(axis=0, ddof=1) if len(per_rep) > 1 else np.zeros(4)
        rows.append(
            {
                "estimator": kind,
                "l2_mean": float(mean[0]),
                "l2_sd": float(sd[0]),
                "l1_mean": float(mean[1]),
                "l1_sd": float(sd[1]),
                "fp_over_n_mean": float(mean[2]),
                "fp_over_n_sd": float(sd[2]),
                "fn_over_p_mean": float(mean[3]),
                "fn_over_p_sd": float(sd[3]),
                "nonconverged": nonconv,
            }
        )
    return {
        "study": "accuracy",
        "config": cfg.to_dict(),
        "replications": cfg.replications,
        "rows": rows,
        "per_rep": per_rep,
    }


# ---------------------------------------------------------------------------
# Quadrature truths
# ---------------------------------------------------------------------------

_TRUTH_CACHE: dict = {}


def _true_scores(X: np.ndarray, beta_star: np.ndarray, grid: ActionGrid) -> np.ndarray:
    d = X.shape[1]
    base = X @ beta_star[:d]
    scores = np.zeros((X.shape[0], grid.n_levels))
    for k in range(2, grid.n_levels + 1):
        lo = d * (k - 1)
        scores[:, k - 1] = X @ beta_star[lo : lo + d]
    return base[:, None] + scores


def true_optimal_value(
    n_draws: int = DEFAULT_QUADRATURE_DRAWS,
    seed: int = DEFAULT_QUADRATURE_SEED,
    beta_star: np.ndarray | None = None,
) -> float:
    """True expected outcome of the best rule, by Monte-Carlo quadrature."""
    grid = fixture_grid()
    beta = default_coefficients() if beta_star is None else np.asarray(beta_star, dtype=float)
    key = ("optimal", int(n_draws), int(seed), beta.tobytes())
    if key not in _TRUTH_CACHE:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
        X = _covariate_sample(rng, int(n_draws))
        _TRUTH_CACHE[key] = float(np.max(_true_scores(X, beta, grid), axis=1).mean())
    return _TRUTH_CACHE[key]


def true_rule_value(
    rule,
    n_draws: int = DEFAULT_QUADRATURE_DRAWS,
    seed: int = DEFAULT_QUADRATURE_SEED,
    beta_star: np.ndarray | None = None,
) -> float:
    """True expected outcome of a fixed rule, by Monte-Carlo quadrature."""
    grid = fixture_grid()
    beta = default_coefficients() if beta_star is None else np.asarray(beta_star, dtype=float)
    key = ("rule", repr(float(rule)), int(n_draws), int(seed), beta.tobytes())
    if key not in _TRUTH_CACHE:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
        X = _covariate_sample(rng, int(n_draws))
        features = build_policy_features(X, grid, rule)
        _TRUTH_CACHE[key] = float((features @ beta).mean())
    return _TRUTH_CACHE[key]


# ---------------------------------------------------------------------------
# Coverage studies
# ---------------------------------------------------------------------------


def _fit_drove_tuned(cfg: SimConfig, rep: int):
    grid = fixture_grid()
    op = fixture_penalty_matrix()
    obs, X_test = generate_dataset(cfg, rep)
    design = build_design(obs, grid)
    result = tune_lambda(
        "drove",
        obs.Y,
        design,
        op,
        PenaltySpec("scad", 1.0),
        cfg.lambda_grid,
        split=cfg.split,
        seed=cfg.seed + rep,
    )
    return result.model, X_test, result.lambda_best


def _coverage_by_alpha(per_rep: list[dict], truth: float, n: int, alphas, key_prefix: str = "") -> dict:
    from scipy.stats import norm

    out = {}
    for alpha in alphas:
        q = float(norm.ppf(1.0 - alpha / 2.0))
        hits = []
        for r in per_rep:
            row = r if not key_prefix else r["rules"][key_prefix]
            half = q * row["sigma"] / np.sqrt(n)
            hits.append(row["point"] - half <= truth <= row["point"] + half)
        out[repr(float(alpha))] = float(np.mean(hits))
    return out


def _table2_rep(cfg_dict: dict, rep: int) -> dict:
    cfg = SimConfig.from_dict(cfg_dict)
    model, X_test, lam = _fit_drove_tuned(cfg, rep)
    est = estimate_optimal_value(model, X_test, fixture_grid())
    return {
        "rep": rep,
        "point": est.point,
        "sigma": est.sigma,
        "se": est.se,
        "lambda": lam,
        "converged": bool(model.converged),
    }


def run_table2(
    cfg: SimConfig,
    alphas: tuple[float, ...] = DEFAULT_ALPHAS,
    n_draws: int = DEFAULT_QUADRATURE_DRAWS,
    quad_seed: int = DEFAULT_QUADRATURE_SEED,
) -> dict:
    """Coverage of the optimal-value intervals against the quadrature truth."""
    truth = true_optimal_value(n_draws=n_draws, seed=quad_seed, beta_star=cfg.coefficients())
    per_rep = _run_reps(_table2_rep, cfg)
    sigmas = np.array([r["sigma"] for r in per_rep])
    points = np.array([r["point"] for r in per_rep])
    ses = np.array([r["se"] for r in per_rep])
    return {
        "study": "optimal-value",
        "config": cfg.to_dict(),
        "quadrature": {"draws": n_draws, "seed": quad_seed},
        "true_value": truth,
        "alphas": [float(a) for a in alphas],
        "coverage": _coverage_by_alpha(per_rep, truth, cfg.n, alphas),
        "mean_point": float(points.mean()),
        "mean_sigma": float(sigmas.mean()),
        "mean_se": float(ses.mean()),
        "sd_sigma": float(sigmas.std(ddof=1)) if len(per_rep) > 1 else 0.0,
        "nonconverged": sum(0 if r["converged"] else 1 for r in per_rep),
        "per_rep": per_rep,
    }


def _table3_rep(cfg_dict: dict, rep: int, rules: tuple[float, ...]) -> dict:
    cfg = SimConfig.from_dict(cfg_dict)
    model, X_test, lam = _fit_drove_tuned(cfg, rep)
    grid = fixture_grid()
    out = {"rep": rep, "lambda": lam, "converged": bool(model.converged), "rules": {}}
    for rule in rules:
        est = value_difference(model, X_test, grid, rule)
        out["rules"][repr(float(rule))] = {
            "point": est.point,
            "sigma": est.sigma,
            "se": est.se,
        }
    return out


def run_table3(
    cfg: SimConfig,
    rules: tuple[float, ...] = (0.3, 0.7),
    alphas: tuple[float, ...] = DEFAULT_ALPHAS,
    n_draws: int = DEFAULT_QUADRATURE_DRAWS,
    quad_seed: int = DEFAULT_QUADRATURE_SEED,
) -> dict:
    """Coverage of value-difference intervals for fixed reference rules.

    ``rules`` are constant actions in [0, 1]; each is compared against the
    estimated best rule, with the true gap computed by quadrature.
    """
    rules = tuple(float(r) for r in rules)
    beta_star = cfg.coefficients()
    optimal = true_optimal_value(n_draws=n_draws, seed=quad_seed, beta_star=beta_star)
    truths = {
        repr(r): optimal - true_rule_value(r, n_draws=n_draws, seed=quad_seed, beta_star=beta_star)
        for r in rules
    }
    cfg_dict = cfg.to_dict()
    reps = range(cfg.replications)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(
                pool.map(_table3_rep, [cfg_dict] * cfg.replications, reps, [rules] * cfg.replications)
            )
    else:
        results = [_table3_rep(cfg_dict, rep, rules) for rep in reps]
    per_rep = sorted(results, key=lambda r: r["rep"])
    rows = []
    for r in rules:
        key = repr(r)
        sigmas = np.array([p["rules"][key]["sigma"] for p in per_rep])
        points = np.array([p["rules"][key]["point"] for p in per_rep])
        rows.append(
            {
                "rule": r,
                "true_difference": truths[key],
                "coverage": _coverage_by_alpha(per_rep, truths[key], cfg.n, alphas, key_prefix=key),
                "mean_point": float(points.mean()),
                "mean_sigma": float(sigmas.mean()),
                "mean_se": float(sigmas.mean() / np.sqrt(cfg.n)),
            }
        )
    return {
        "study": "value-difference",
        "config": cfg.to_dict(),
        "quadrature": {"draws": n_draws, "seed": quad_seed},
        "alphas": [float(a) for a in alphas],
        "rows": rows,
        "nonconverged": sum(0 if r["converged"] else 1 for r in per_rep),
        "per_rep": per_rep,
    }


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _config_comment(report: dict) -> str:
    return "# config: " + json.dumps(report["config"], sort_keys=True)


def write_table_csv(report: dict, path) -> None:
    """Flat CSV of a study's summary rows, config embedded as a comment."""
    study = report["study"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_config_comment(report) + "\n")
        writer = csv.writer(fh)
        if study == "accuracy":
            header = [
                "estimator",
                "l2_mean",
                "l2_sd",
                "l1_mean",
                "l1_sd",
                "fp_over_n_mean",
                "fp_over_n_sd",
                "fn_over_p_mean",
                "fn_over_p_sd",
                "nonconverged",
            ]
            writer.writerow(header)
            for row in report["rows"]:
                writer.writerow([_fmt(row[h]) for h in header])
        elif study == "optimal-value":
            writer.writerow(["alpha", "true_value", "coverage", "mean_point", "mean_sigma", "mean_se"])
            for alpha in report["alphas"]:
                writer.writerow(
                    [
                        _fmt(float(alpha)),
                        _fmt(report["true_value"]),
                        _fmt(report["coverage"][repr(float(alpha))]),
                        _fmt(report["mean_point"]),
                        _fmt(report["mean_sigma"]),
                        _fmt(report["mean_se"]),
                    ]
                )
        elif study == "value-difference":
            writer.writerow(
                ["rule", "alpha", "true_difference", "coverage", "mean_point", "mean_sigma", "mean_se"]
            )
            for row in report["rows"]:
                for alpha in report["alphas"]:
                    writer.writerow(
                        [
                            _fmt(row["rule"]),
                            _fmt(float(alpha)),
                            _fmt(row["true_difference"]),
                            _fmt(row["coverage"][repr(float(alpha))]),
                            _fmt(row["mean_point"]),
                            _fmt(row["mean_sigma"]),
                            _fmt(row["mean_se"]),
                        ]
                    )
        else:
            raise ValueError(f"unknown study {study!r}")


def write_coverage_long_csv(report: dict, path) -> None:
    """Plot-ready long CSV: one row per (target, alpha, replication)."""
    from scipy.stats import norm

    study = report["study"]
    if study not in ("optimal-value", "value-difference"):
        raise ValueError("coverage CSV applies to the coverage studies only")
    n = report["config"]["n"]
    targets: list[tuple[str, float, str]] = []
    if study == "optimal-value":
        targets.append(("optimal", report["true_value"], ""))
    else:
        targets.extend((f"rule_{row['rule']}", row["true_difference"], repr(row["rule"])) for row in report["rows"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_config_comment(report) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["target", "alpha", "rep", "point", "se", "ci_lower", "ci_upper", "truth", "covered"])
        for name, truth, key in targets:
            for alpha in report["alphas"]:
                q = float(norm.ppf(1.0 - alpha / 2.0))
                for r in report["per_rep"]:
                    row = r if not key else r["rules"][key]
                    se = row["sigma"] / np.sqrt(n)
                    lo, hi = row["point"] - q * se, row["point"] + q * se
                    writer.writerow(
                        [
                            name,
                            _fmt(float(alpha)),
                            r["rep"],
                            _fmt(row["point"]),
                            _fmt(se),
                            _fmt(lo),
                            _fmt(hi),
                            _fmt(truth),
                            _fmt(bool(lo <= truth <= hi)),
                        ]
                    )


def write_report_json(report: dict, path) -> None:
    """Full report with per-replication diagnostics, deterministically keyed."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


__all__ = [
    "DEFAULT_ALPHAS",
    "DEFAULT_ESTIMATORS",
    "DEFAULT_LAMBDA_GRID",
    "DEFAULT_QUADRATURE_DRAWS",
    "DEFAULT_QUADRATURE_SEED",
    "SimConfig",
    "ZERO_THRESHOLD",
    "generate_dataset",
    "run_table1",
    "run_table2",
    "run_table3",
    "selection_metrics",
    "true_optimal_value",
    "true_rule_value",
    "write_coverage_long_csv",
    "write_report_json",
    "write_table_csv",
]
