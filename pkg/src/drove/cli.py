"""Command-line workflows around the estimation library.

Five subcommands::

    drove fit       --train data.csv --out dir    fit a model, write model.json
    drove policy    --model m --test t --out dir  recommended action per row
    drove value     --model m --test t --out dir  optimal-value estimate + CI
    drove compare   --model m --test t --out dir  strategy table with CIs
    drove simulate  --config c.json --out dir     Monte-Carlo study reports

Data files are UTF-8 CSVs with a header and '.' decimals.  Training data
uses the columns ``id, a, y, x1..xd`` in that order; test data uses
``id, x1..xd`` with optional ``a`` and ``y`` columns after ``id``.
Categorical covariates must be pre-encoded numerically.  Actions ``a``
must lie in [0, 1].

Exit codes are a stable contract: 0 success, 2 input error (schema
problems are reported with row and column), 3 numerical non-convergence
(the model is still written, flagged as not converged).  All randomness
derives from the ``--seed`` flag or the seed inside the simulation
config; outputs are byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, simlab
from .design import (
    COEF,
    FUSE,
    ActionGrid,
    ObservationSet,
    PenaltyMatrix,
    build_design,
    build_penalty_matrix,
    identity_penalty_matrix,
)
from .estimators import (
    ConvergenceError,
    EstimationError,
    FittedModel,
    check_minimal_signal,
    fit,
    tune_lambda,
)
from .inference import (
    InferenceError,
    estimate_optimal_value,
    evaluate_rule,
    optimal_policy,
    optimal_q,
    value_difference,
)
from .penalties import PenaltySpec

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3

_DEFAULT_FAMILY = {"drove": "scad", "genlasso": "l1", "std-scad": "scad", "std-lasso": "l1"}


class InputError(Exception):
    """A problem with user-supplied files or flags (exit code 2)."""


# ---------------------------------------------------------------------------
# Observation CSVs
# ---------------------------------------------------------------------------


def _cell_float(name: str, lineno: int, column: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{name}: row {lineno}: column '{column}': not a number: {text!r}") from None
    if not np.isfinite(value):
        raise InputError(f"{name}: row {lineno}: column '{column}': non-finite value {text!r}")
    return value


def read_observations_csv(path, *, need_actions: bool = False, need_outcomes: bool = False) -> dict:
    """Parse an observation CSV into ids and numeric arrays.

    Returns a dict with ``ids`` (strings), ``X`` (n, d), and ``A``/``Y``
    arrays or ``None`` when the optional columns are absent.  Any schema
    problem raises :class:`InputError` naming the offending row/column.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    name = path.name
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{name}: empty file (missing header)") from None
        if not header or header[0] != "id":
            found = repr(header[0]) if header else "nothing"
            raise InputError(f"{name}: first column must be 'id', found {found}")
        pos = 1
        has_a = pos < len(header) and header[pos] == "a"
        pos += has_a
        has_y = pos < len(header) and header[pos] == "y"
        pos += has_y
        if need_actions and not has_a:
            raise InputError(f"{name}: missing column 'a' (expected header id,a,y,x1..xd)")
        if need_outcomes and not has_y:
            raise InputError(f"{name}: missing column 'y' (expected header id,a,y,x1..xd)")
        x_names = header[pos:]
        if not x_names:
            raise InputError(f"{name}: no covariate columns (expected x1, x2, ...)")
        for j, col in enumerate(x_names, start=1):
            if col != f"x{j}":
                raise InputError(f"{name}: expected column 'x{j}' at position {pos + j}, found {col!r}")
        d = len(x_names)

        ids: list[str] = []
        a_vals: list[float] = []
        y_vals: list[float] = []
        x_rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{name}: row {lineno}: expected {len(header)} fields, found {len(row)}"
                )
            ids.append(row[0])
            c = 1
            if has_a:
                a = _cell_float(name, lineno, "a", row[c])
                if not 0.0 <= a <= 1.0:
                    raise InputError(f"{name}: row {lineno}: column 'a': {a!r} outside [0, 1]")
                a_vals.append(a)
                c += 1
            if has_y:
                y_vals.append(_cell_float(name, lineno, "y", row[c]))
                c += 1
            x_rows.append([_cell_float(name, lineno, x_names[j], row[c + j]) for j in range(d)])
    if not ids:
        raise InputError(f"{name}: no data rows")
    return {
        "ids": ids,
        "X": np.asarray(x_rows, dtype=float),
        "A": np.asarray(a_vals, dtype=float) if has_a else None,
        "Y": np.asarray(y_vals, dtype=float) if has_y else None,
    }


def write_observations_csv(path, ids, X, A=None, Y=None) -> None:
    """Write observations in the CSV layout ``fit``/``compare`` ingest.

    Floats are written with ``repr`` so a read-back reproduces them
    bit-for-bit.
    """
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["id"]
        if A is not None:
            header.append("a")
        if Y is not None:
            header.append("y")
        header.extend(f"x{j}" for j in range(1, X.shape[1] + 1))
        writer.writerow(header)
        for i, row_id in enumerate(ids):
            row = [str(row_id)]
            if A is not None:
                row.append(repr(float(A[i])))
            if Y is not None:
                row.append(repr(float(Y[i])))
            row.extend(repr(float(v)) for v in X[i])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


def fit_standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column affine transform to mean 0, sd 0.1.

    Constant columns (an intercept, for instance) pass through untouched.
    Returns ``(centers, factors)`` with the transform ``(x - c) * f``.
    """
    X = np.asarray(X, dtype=float)
    centers = X.mean(axis=0)
    sds = X.std(axis=0)
    constant = sds <= 1e-12
    factors = np.where(constant, 1.0, 0.1 / np.where(constant, 1.0, sds))
    centers = np.where(constant, 0.0, centers)
    return centers, factors


def apply_standardizer(X: np.ndarray, centers, factors) -> np.ndarray:
    return (np.asarray(X, dtype=float) - np.asarray(centers)) * np.asarray(factors)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def model_to_dict(model: FittedModel, grid: ActionGrid, centers, factors, train_ids, run_config) -> dict:
    penalty = model.penalty
    return {
        "format": "drove-model",
        "format_version": 1,
        "package_version": __version__,
        "kind": model.kind,
        "penalty": None
        if penalty is None
        else {"family": penalty.family, "lam": penalty.lam, "shape": penalty.shape},
        "lambda": model.lam,
        "grid": [float(v) for v in grid.levels],
        "d": int(model.d),
        "n_levels": int(model.n_levels),
        "n_obs": int(model.n_obs),
        "s_hat": int(model.s_hat),
        "converged": bool(model.converged),
        "sweeps": int(model.sweeps),
        "dispersion": float(model.dispersion),
        "beta": [float(b) for b in model.beta],
        "null_rows": [int(r) for r in model.null_rows],
        "null_basis": [[float(v) for v in row] for row in model.null_basis],
        "bread_inverse": [[float(v) for v in row] for row in model.bread_inverse],
        "meat": [[float(v) for v in row] for row in model.meat],
        "standardization": {
            "centers": [float(c) for c in centers],
            "factors": [float(f) for f in factors],
        },
        "train_ids": [str(i) for i in train_ids],
        "config": run_config,
    }


def load_model(path) -> dict:
    """Read a model file back into a live :class:`FittedModel` plus context.

    Returns a dict with ``model``, ``grid``, ``centers``, ``factors`` and
    ``train_ids``.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"model file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InputError(f"{path.name}: invalid JSON: {exc}") from None
    if not isinstance(data, dict) or data.get("format") != "drove-model":
        raise InputError(f"{path.name}: not a model file (missing format marker)")
    p = len(data["beta"])
    s = int(data["s_hat"])
    penalty = data.get("penalty")
    model = FittedModel(
        beta=np.asarray(data["beta"], dtype=float),
        null_rows=np.asarray(data["null_rows"], dtype=np.int64),
        null_basis=np.asarray(data["null_basis"], dtype=float).reshape(p, s),
        s_hat=s,
        residuals=np.zeros(0),
        dispersion=float(data["dispersion"]),
        kind=str(data["kind"]),
        lam=None if data["lambda"] is None else float(data["lambda"]),
        penalty=None if penalty is None else PenaltySpec(penalty["family"], penalty["lam"], penalty["shape"]),
        n_obs=int(data["n_obs"]),
        d=int(data["d"]),
        n_levels=int(data["n_levels"]),
        converged=bool(data["converged"]),
        sweeps=int(data["sweeps"]),
        bread_inverse=np.asarray(data["bread_inverse"], dtype=float).reshape(s, s),
        meat=np.asarray(data["meat"], dtype=float).reshape(s, s),
        diagnostics={"source": str(path)},
    )
    std = data.get("standardization") or {}
    return {
        "model": model,
        "grid": ActionGrid(np.asarray(data["grid"], dtype=float)),
        "centers": np.asarray(std.get("centers", np.zeros(model.d)), dtype=float),
        "factors": np.asarray(std.get("factors", np.ones(model.d)), dtype=float),
        "train_ids": [str(i) for i in data.get("train_ids", [])],
    }


# ---------------------------------------------------------------------------
# Fit summary
# ---------------------------------------------------------------------------


def _g(value: float) -> str:
    return format(float(value), ".10g")


def fused_group_lines(model: FittedModel, op: PenaltyMatrix) -> list[str]:
    """One line per covariate describing its detected level groups."""
    null = np.zeros(op.K, dtype=bool)
    null[model.null_rows] = True
    fuse_row = {}
    coef_row = {}
    for idx in range(op.K):
        key = (int(op.covariates[idx]), int(op.levels[idx]))
        if op.kinds[idx] == FUSE:
            fuse_row[key] = idx
        elif op.kinds[idx] == COEF:
            coef_row[key] = idx
    lines = []
    for j in range(model.d):
        parts = [f"main={_g(model.beta[j])}"]
        k = 2
        while k <= model.n_levels:
            end = k
            while end < model.n_levels:
                idx = fuse_row.get((j, end))
                if idx is None or not null[idx]:
                    break
                end += 1
            coef_idx = coef_row.get((j, k))
            is_zero = coef_idx is not None and null[coef_idx]
            value = "0" if is_zero else _g(model.beta[(k - 1) * model.d + j])
            span = f"{k}" if end == k else f"{k}-{end}"
            parts.append(f"L{span}={value}")
            k = end + 1
        lines.append(f"x{j + 1}: " + ", ".join(parts))
    return lines


def fit_summary_text(model: FittedModel, op: PenaltyMatrix, lam_note: str, config: dict) -> str:
    signal = check_minimal_signal(model, op)
    lines = [
        f"estimator: {model.kind}"
        + (f" ({model.penalty.family})" if model.penalty is not None else ""),
        f"observations: {model.n_obs}, covariates: {model.d}, levels: {model.n_levels}",
        f"lambda: {_g(model.lam) if model.lam is not None else 'none'} ({lam_note})",
        f"converged: {'yes' if model.converged else 'NO - results are flagged'}"
        + f" ({model.sweeps} sweeps)",
        f"nonzero coefficients: {model.nonzero_count()} of {model.p} (threshold 0.0001)",
        f"free dimensions (s_hat): {model.s_hat}",
    ]
    if signal.min_gap_half is None:
        lines.append("minimal surviving gap: none (all effects fused/zero)")
    elif signal.ratio is None:
        lines.append(f"minimal surviving gap: {_g(signal.min_gap_half)}")
    else:
        lines.append(
            f"minimal surviving gap: {_g(signal.min_gap_half)}"
            f" ({_g(signal.ratio)}x the penalty level)"
        )
    lines.append("detected level groups (L2..L{}):".format(model.n_levels))
    lines.extend("  " + line for line in fused_group_lines(model, op))
    lines.append("config: " + json.dumps(config, sort_keys=True))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Shared command plumbing
# ---------------------------------------------------------------------------


def _resolve_grid(args) -> ActionGrid:
    if getattr(args, "grid", None):
        levels = _parse_float_list(args.grid, "--grid")
        try:
            return ActionGrid(np.asarray(levels, dtype=float))
        except ValueError as exc:
            raise InputError(f"--grid: {exc}") from None
    n_levels = getattr(args, "levels", None) or 11
    try:
        return ActionGrid.uniform(n_levels)
    except ValueError as exc:
        raise InputError(f"--levels: {exc}") from None


def _parse_float_list(text: str, flag: str) -> list[float]:
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            out.append(float(piece))
        except ValueError:
            raise InputError(f"{flag}: not a number: {piece!r}") from None
    if not out:
        raise InputError(f"{flag}: empty list")
    return out


def _check_overlap(train_ids, test_ids, allow: bool) -> None:
    if allow:
        return
    overlap = sorted(set(train_ids) & set(test_ids))
    if overlap:
        shown = ", ".join(overlap[:3]) + (", ..." if len(overlap) > 3 else "")
        raise InputError(
            f"test ids overlap training ids ({len(overlap)} shared: {shown}); "
            "pass --allow-overlap to proceed"
        )


def _load_model_and_test(args) -> dict:
    bundle = load_model(args.model)
    data = read_observations_csv(args.test)
    if data["X"].shape[1] != bundle["model"].d:
        raise InputError(
            f"test data has {data['X'].shape[1]} covariates but the model expects {bundle['model'].d}"
        )
    _check_overlap(bundle["train_ids"], data["ids"], args.allow_overlap)
    bundle["test"] = data
    bundle["X_test"] = apply_standardizer(data["X"], bundle["centers"], bundle["factors"])
    return bundle


def _write_csv(path, header, rows, config: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _base_config(args, **extra) -> dict:
    cfg = {"command": args.command, "package_version": __version__}
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    if args.lam is not None and args.lambda_grid is not None:
        raise InputError("give either --lambda or --lambda-grid, not both")
    data = read_observations_csv(args.train, need_actions=True, need_outcomes=True)
    grid = _resolve_grid(args)
    d = data["X"].shape[1]
    if args.standardize:
        centers, factors = fit_standardizer(data["X"])
    else:
        centers, factors = np.zeros(d), np.ones(d)
    obs = ObservationSet(apply_standardizer(data["X"], centers, factors), data["A"], data["Y"])
    design = build_design(obs, grid)
    kind = args.estimator
    op = (
        build_penalty_matrix(d, grid)
        if kind in ("drove", "genlasso")
        else identity_penalty_matrix(d, grid)
    )
    family = args.penalty or _DEFAULT_FAMILY[kind]

    if args.lam is not None:
        lambdas = None
        model = fit(kind, obs.Y, design, op, PenaltySpec(family, args.lam), on_nonconvergence="keep")
        lam_note = "fixed by --lambda"
    else:
        lambdas = (
            _parse_float_list(args.lambda_grid, "--lambda-grid")
            if args.lambda_grid
            else list(simlab.DEFAULT_LAMBDA_GRID)
        )
        result = tune_lambda(
            kind, obs.Y, design, op, PenaltySpec(family, 1.0), lambdas, seed=args.seed
        )
        model = result.model
        lam_note = f"selected from {len(lambdas)} candidates (seed {args.seed})"

    config = _base_config(
        args,
        train=str(args.train),
        estimator=kind,
        penalty=family,
        grid=[float(v) for v in grid.levels],
        selected_lambda=model.lam,
        lambda_grid=lambdas,
        seed=args.seed,
        standardize=bool(args.standardize),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = model_to_dict(model, grid, centers, factors, data["ids"], config)
    (out / "model.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "fit_summary.txt").write_text(fit_summary_text(model, op, lam_note, config), encoding="utf-8")
    if not model.converged:
        print(
            f"warning: fit did not converge; model written to {out / 'model.json'} and flagged",
            file=sys.stderr,
        )
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_policy(args) -> int:
    bundle = _load_model_and_test(args)
    model, grid, X = bundle["model"], bundle["grid"], bundle["X_test"]
    actions = optimal_policy(model, X, grid)
    q_values = optimal_q(model, X)
    config = _base_config(args, model=str(args.model), test=str(args.test))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        [row_id, repr(float(a)), repr(float(q))]
        for row_id, a, q in zip(bundle["test"]["ids"], actions, q_values)
    ]
    _write_csv(out / "policy.csv", ["id", "action", "q_value"], rows, config)
    return EXIT_OK


def cmd_value(args) -> int:
    bundle = _load_model_and_test(args)
    est = estimate_optimal_value(bundle["model"], bundle["X_test"], bundle["grid"], alpha=args.alpha)
    config = _base_config(args, model=str(args.model), test=str(args.test), alpha=args.alpha)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"config": config, "estimate": est.to_dict()}
    (out / "value.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    bundle = _load_model_and_test(args)
    model, grid, X = bundle["model"], bundle["grid"], bundle["X_test"]
    est_opt = estimate_optimal_value(model, X, grid, alpha=args.alpha)
    rows: list[list[str]] = [["optimal", repr(est_opt.point), "", "", ""]]
    strategies: list[tuple[str, object]] = [
        (f"fixed_{_g(level)}", float(level)) for level in grid.levels
    ]
    if bundle["test"]["A"] is not None:
        strategies.append(("observed", bundle["test"]["A"]))
    for label, rule in strategies:
        point = evaluate_rule(model, X, grid, rule).point
        diff = value_difference(model, X, grid, rule, alpha=args.alpha)
        rows.append(
            [
                label,
                repr(float(point)),
                repr(float(diff.point)),
                repr(float(diff.ci_lower)),
                repr(float(diff.ci_upper)),
            ]
        )
    config = _base_config(args, model=str(args.model), test=str(args.test), alpha=args.alpha)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "compare.csv",
        ["strategy", "value", "difference", "ci_lower", "ci_upper"],
        rows,
        config,
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise InputError(f"config file not found: {cfg_path}")
    try:
        raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InputError(f"{cfg_path.name}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError(f"{cfg_path.name}: simulation config must be a JSON object")
    rules = tuple(float(r) for r in raw.pop("rules", (0.3, 0.7)))
    alphas = tuple(float(a) for a in raw.pop("alphas", simlab.DEFAULT_ALPHAS))
    tables = [int(t) for t in raw.pop("tables", (1, 2, 3))]
    n_draws = int(raw.pop("quadrature_draws", simlab.DEFAULT_QUADRATURE_DRAWS))
    quad_seed = int(raw.pop("quadrature_seed", simlab.DEFAULT_QUADRATURE_SEED))
    if any(t not in (1, 2, 3) for t in tables):
        raise InputError(f"tables must be a subset of [1, 2, 3], got {tables}")
    try:
        cfg = simlab.SimConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{cfg_path.name}: invalid simulation config: {exc}") from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "config": cfg.to_dict(),
        "rules": list(rules),
        "alphas": list(alphas),
        "tables": tables,
        "quadrature_draws": n_draws,
        "quadrature_seed": quad_seed,
        "package_version": __version__,
    }
    (out / "resolved_config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if 1 in tables:
        report = simlab.run_table1(cfg)
        simlab.write_table_csv(report, out / "table1.csv")
        simlab.write_report_json(report, out / "table1.json")
    if 2 in tables:
        report = simlab.run_table2(cfg, alphas=alphas, n_draws=n_draws, quad_seed=quad_seed)
        simlab.write_table_csv(report, out / "table2.csv")
        simlab.write_report_json(report, out / "table2.json")
        simlab.write_coverage_long_csv(report, out / "coverage_table2.csv")
    if 3 in tables:
        report = simlab.run_table3(cfg, rules=rules, alphas=alphas, n_draws=n_draws, quad_seed=quad_seed)
        simlab.write_table_csv(report, out / "table3.csv")
        simlab.write_report_json(report, out / "table3.json")
        simlab.write_coverage_long_csv(report, out / "coverage_table3.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drove",
        description="Discretized-action policy learning: fit, decide, evaluate, simulate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model from a training CSV")
    p_fit.add_argument("--train", required=True, help="training CSV (id,a,y,x1..xd)")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.add_argument("--grid", help="comma-separated action levels, e.g. 0,0.25,0.5,0.75,1")
    p_fit.add_argument("--levels", type=int, help="uniform grid with this many levels (default 11)")
    p_fit.add_argument("--penalty", choices=["scad", "mcp", "l1"], help="penalty family")
    p_fit.add_argument("--lambda", dest="lam", type=float, help="fixed penalty level (skips tuning)")
    p_fit.add_argument("--lambda-grid", help="comma-separated candidate levels for tuning")
    p_fit.add_argument(
        "--estimator",
        choices=["drove", "genlasso", "std-scad", "std-lasso"],
        default="drove",
    )
    p_fit.add_argument("--seed", type=int, default=0, help="seed for the tuning split")
    p_fit.add_argument(
        "--standardize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="rescale covariate columns to sd 0.1 (constant columns untouched)",
    )
    p_fit.set_defaults(func=cmd_fit)

    for name, handler, needs_alpha in (
        ("policy", cmd_policy, False),
        ("value", cmd_value, True),
        ("compare", cmd_compare, True),
    ):
        p = sub.add_parser(name, help=f"{name} from a fitted model and test CSV")
        p.add_argument("--model", required=True, help="model.json written by fit")
        p.add_argument("--test", required=True, help="test CSV (id[,a][,y],x1..xd)")
        p.add_argument("--out", required=True, help="output directory")
        if needs_alpha:
            p.add_argument("--alpha", type=float, default=0.05, help="CI significance level")
        p.add_argument(
            "--allow-overlap",
            action="store_true",
            help="permit test ids that also appear in the training data",
        )
        p.set_defaults(func=handler)

    p_sim = sub.add_parser("simulate", help="run the Monte-Carlo studies from a config JSON")
    p_sim.add_argument("--config", required=True, help="SimConfig JSON file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (EstimationError, InferenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
