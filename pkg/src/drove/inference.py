"""Decision rules and value inference from a fitted model.

Given fitted coefficients, the estimated best action for covariates ``x``
maximizes the level scores ``s_1 = 0`` and ``s_k = psi_k' x`` (k >= 2);
ties resolve to the smallest action.  The estimated value of following the
best rule on a fresh covariate sample is the average fitted outcome under
the induced actions.

The variance of that average has two parts.  The *model* part propagates
coefficient noise through the heteroskedasticity-robust sandwich computed
on the estimation sample (restricted to the detected signal subspace).
The *population* part accounts for averaging over finitely many test
covariates and scales with ``n / N``.  Intervals use normal quantiles.

All inference here assumes the test covariates are a fresh sample,
independent of the estimation data; the command-line layer enforces
disjointness of record ids for file inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .design import ActionGrid, build_policy_features, level_index, resolve_actions
from .estimators import FittedModel


class InferenceError(RuntimeError):
    pass


def _check_test_matrix(model: FittedModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise InferenceError(
            f"test covariates must be (N, {model.d}), got {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise InferenceError("test covariates contain non-finite entries")
    return X


def _level_scores(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """Score matrix with one column per grid level (reference level = 0)."""
    n = X.shape[0]
    scores = np.zeros((n, model.n_levels))
    for k in range(2, model.n_levels + 1):
        scores[:, k - 1] = X @ model.psi_level(k)
    return scores


def optimal_policy(model: FittedModel, X, grid: ActionGrid) -> np.ndarray:
    """Estimated best action per covariate row (ties -> smallest action)."""
    X = _check_test_matrix(model, X)
    if grid.n_levels != model.n_levels:
        raise InferenceError(
            f"grid has {grid.n_levels} levels but the model was fit with {model.n_levels}"
        )
    scores = _level_scores(model, X)
    # argmax returns the first maximizer, which is the smallest level/action
    return grid.levels[np.argmax(scores, axis=1)]


def optimal_q(model: FittedModel, X) -> np.ndarray:
    """Fitted outcome under the estimated best action, per covariate row."""
    X = _check_test_matrix(model, X)
    scores = _level_scores(model, X)
    return X @ model.psi_main() + np.max(scores, axis=1)


@dataclass
class ValueEstimate:
    """Point estimate and (optionally) a sandwich confidence interval."""

    point: float
    se: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    alpha: float | None = None
    sigma: float | None = None
    model_term: float | None = None
    population_term: float | None = None
    n_obs: int | None = None
    n_test: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _sandwich_quadratic(model: FittedModel, contrast: np.ndarray) -> float:
    """n * c' U0 B^{-1} M B^{-1} U0' c for a coefficient-space contrast c."""
    if model.s_hat == 0:
        return 0.0
    c = model.null_basis.T @ contrast
    mid = model.bread_inverse @ model.meat @ model.bread_inverse
    return float(model.n_obs * c @ mid @ c)


def _interval(point: float, sigma: float, n: int, alpha: float) -> tuple[float, float, float]:
    se = sigma / np.sqrt(n)
    zq = float(scipy.stats.norm.ppf(1.0 - alpha / 2.0))
    return se, point - zq * se, point + zq * se


def estimate_optimal_value(
    model: FittedModel, X_test, grid: ActionGrid, alpha: float = 0.05
) -> ValueEstimate:
    """Average value of the estimated best rule on a fresh covariate sample.

    The reported ``sigma`` is the square root of the summed model and
    population variance components; the standard error is
    ``sigma / sqrt(n)`` with ``n`` the estimation sample size.
    """
    X = _check_test_matrix(model, X_test)
    if not 0 < alpha < 1:
        raise InferenceError(f"alpha must be in (0, 1), got {alpha}")
    N = X.shape[0]
    actions = optimal_policy(model, X, grid)
    features = build_policy_features(X, grid, actions)
    mean_feature = features.mean(axis=0)
    point = float(model.beta @ mean_feature)

    model_term = _sandwich_quadratic(model, mean_feature)
    q_values = features @ model.beta
    population_term = (
        model.n_obs / N * float(np.var(q_values, ddof=1)) if N > 1 else 0.0
    )
    sigma = float(np.sqrt(model_term + population_term))
    se, lo, hi = _interval(point, sigma, model.n_obs, alpha)
    return ValueEstimate(
        point=point,
        se=se,
        ci_lower=lo,
        ci_upper=hi,
        alpha=alpha,
        sigma=sigma,
        model_term=model_term,
        population_term=population_term,
        n_obs=model.n_obs,
        n_test=N,
    )


def evaluate_rule(model: FittedModel, X_test, grid: ActionGrid, rule) -> ValueEstimate:
    """Plug-in average value of an arbitrary rule (point estimate only)."""
    X = _check_test_matrix(model, X_test)
    features = build_policy_features(X, grid, rule)
    point = float(model.beta @ features.mean(axis=0))
    return ValueEstimate(point=point, n_obs=model.n_obs, n_test=X.shape[0])


def value_difference(
    model: FittedModel, X_test, grid: ActionGrid, rule, alpha: float = 0.05
) -> ValueEstimate:
    """Value gap between the estimated best rule and a reference rule.

    Positive values favour the estimated rule.  The sandwich contrast uses
    the difference of mean policy features, and the population component
    uses the variance of the pointwise value differences.
    """
    X = _check_test_matrix(model, X_test)
    if not 0 < alpha < 1:
        raise InferenceError(f"alpha must be in (0, 1), got {alpha}")
    N = X.shape[0]
    best_actions = optimal_policy(model, X, grid)
    best_features = build_policy_features(X, grid, best_actions)
    ref_features = build_policy_features(X, grid, rule)
    contrast = best_features.mean(axis=0) - ref_features.mean(axis=0)
    point = float(model.beta @ contrast)

    model_term = _sandwich_quadratic(model, contrast)
    diffs = (best_features - ref_features) @ model.beta
    population_term = (
        model.n_obs / N * float(np.var(diffs, ddof=1)) if N > 1 else 0.0
    )
    sigma = float(np.sqrt(model_term + population_term))
    se, lo, hi = _interval(point, sigma, model.n_obs, alpha)
    return ValueEstimate(
        point=point,
        se=se,
        ci_lower=lo,
        ci_upper=hi,
        alpha=alpha,
        sigma=sigma,
        model_term=model_term,
        population_term=population_term,
        n_obs=model.n_obs,
        n_test=N,
    )


# ---------------------------------------------------------------------------
# Coefficient contrasts
# ---------------------------------------------------------------------------


@dataclass
class ContrastRow:
    estimate: float
    se: float
    ci_lower: float
    ci_upper: float
    in_signal_span: bool
    degenerate: bool


def contrast_ci(model: FittedModel, contrasts, alpha: float = 0.05) -> list[ContrastRow]:
    """Sandwich confidence intervals for rows of a contrast matrix.

    Each row ``w`` yields an interval for ``w' beta``.  Rows outside the
    detected signal subspace trigger a warning (their component orthogonal
    to the subspace is estimated as exactly zero); all-zero rows are
    flagged as degenerate.  More rows than free directions is an error.
    """
    if not 0 < alpha < 1:
        raise InferenceError(f"alpha must be in (0, 1), got {alpha}")
    W = np.atleast_2d(np.asarray(contrasts, dtype=float))
    if W.shape[1] != model.p:
        raise InferenceError(f"contrast rows must have length {model.p}")
    if W.shape[0] > max(model.s_hat, 1):
        raise InferenceError(
            f"{W.shape[0]} contrasts exceed the {model.s_hat} free directions"
        )
    zq = float(scipy.stats.norm.ppf(1.0 - alpha / 2.0))
    U0 = model.null_basis
    mid = (
        model.bread_inverse @ model.meat @ model.bread_inverse
        if model.s_hat
        else np.zeros((0, 0))
    )
    rows: list[ContrastRow] = []
    for w in W:
        norm = float(np.linalg.norm(w))
        degenerate = norm == 0.0
        if degenerate:
            in_span = True
        else:
            proj = U0 @ (U0.T @ w) if model.s_hat else np.zeros_like(w)
            in_span = bool(np.linalg.norm(w - proj) <= 1e-8 * norm)
            if not in_span:
                warnings.warn(
                    "contrast has a component outside the detected signal "
                    "subspace; that component is estimated as exactly zero",
                    stacklevel=2,
                )
        cw = U0.T @ w if model.s_hat else np.zeros(0)
        var = float(cw @ mid @ cw) if model.s_hat else 0.0
        se = float(np.sqrt(max(var, 0.0)))
        est = float(w @ model.beta)
        rows.append(
            ContrastRow(
                estimate=est,
                se=se,
                ci_lower=est - zq * se,
                ci_upper=est + zq * se,
                in_signal_span=in_span,
                degenerate=degenerate,
            )
        )
    return rows


def policy_table(model: FittedModel, X_test, grid: ActionGrid) -> dict:
    """Small summary of the estimated rule on a test sample."""
    X = _check_test_matrix(model, X_test)
    actions = optimal_policy(model, X, grid)
    idx = level_index(grid, actions)
    counts = np.bincount(idx, minlength=grid.n_levels + 1)[1:]
    return {
        "actions": actions,
        "level_counts": counts,
        "mean_action": float(actions.mean()),
    }


__all__ = [
    "ContrastRow",
    "InferenceError",
    "ValueEstimate",
    "contrast_ci",
    "estimate_optimal_value",
    "evaluate_rule",
    "optimal_policy",
    "optimal_q",
    "policy_table",
    "value_difference",
    "resolve_actions",
]
