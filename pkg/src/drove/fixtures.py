"""Built-in synthetic coefficient profile for the simulation laboratory.

The profile covers nine covariates (an always-on intercept, three binary,
two three-level categorical, three continuous) on an eleven-level action
grid.  Per covariate it specifies a main effect plus a piecewise-constant
staircase of interaction effects across action levels, all as integer
multiples of a single signal unit (0.8).  Integer bookkeeping makes the
truly-zero penalty gaps exact, so the structural summary (zero counts,
null-space rank, minimal signal) is reproducible to the digit:

* ``p = 99`` coefficients, 55 of them zero;
* 180 penalty rows, whose truly-null subset has rank 76;
* 23 free directions; minimal half-gap ``0.4``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import ActionGrid, PenaltyMatrix, build_penalty_matrix

SIGNAL_UNIT = 0.8
FIXTURE_LEVELS = 11
FIXTURE_D = 9

# main effect per covariate, in signal units
_MAIN = np.array([2, -2, 2, 4, -2, 2, 2, -4, -2], dtype=np.int64)

# Interaction staircase per covariate (rows) over levels k = 2..11 (columns).
# Four deliberate constraints shape these values.  Each guards against a
# direction in which the fused penalty is locally flat or outright profits
# from misclassifying truly-null gaps, which would trap the reweighted fits
# in a systematically wrong partition:
#
# * All nonzero values and all jumps between adjacent levels span at least
#   two signal units, except the single 5 -> 4 step in the intercept row:
#   that one-unit jump realizes the minimal half-gap 0.4.
# * Every main effect is nonzero.  A covariate whose interactions form a
#   run of equal values but whose main is zero invites the penalty to
#   shrink the run into the main (m unit rows plus two boundary jumps
#   traded against one main row), activating a true zero.
# * For every covariate whose interactions contain zeros, zero is a strict
#   L1-median of the ten interaction values pooled with the negated main
#   effect.  Otherwise shifting the covariate's common interaction value
#   into its main effect fits everywhere but the reference level while
#   lowering the penalty.  (The always-active intercept row is exempt:
#   with no zeros to protect, that shift only rescales active values.)
# * Zeros adjacent to active values appear only in the grid interior and
#   runs of equal values outside the intercept row stay short.  An active
#   value next to a zero at either grid edge leaves that edge coefficient
#   on an exactly flat penalty direction, and long runs' interior jumps
#   carry only weak restoring force against splitting.
_PROFILES = np.array(
    [
        [2, 2, 2, 2, 2, 5, 4, 4, 4, 4],  # intercept: dose staircase, small step back
        [0, 0, 0, -2, -2, 2, 2, 0, 0, 0],  # binary: dip then rebound
        [0, 0, 0, 4, 4, -2, -2, 0, 0, 0],  # binary: ridge then drop
        [0, 0, 0, 2, 2, 2, 0, 0, 0, 0],  # binary: mid-dose bump
        [0, 0, 0, 2, 2, -4, -4, 0, 0, 0],  # categorical: bump then drop
        [0, 0, 0, -4, -4, -4, 0, 0, 0, 0],  # categorical: deep mid shelf
        [0, 0, 0, -4, -4, 2, 2, 0, 0, 0],  # continuous: dip then rebound
        [0, 0, 0, 0, 0, 0, 0, 0, 0, 0],  # continuous: main effect only
        [0, 0, 0, 4, 4, 4, 0, 0, 0, 0],  # continuous: mid-dose ridge
    ],
    dtype=np.int64,
)


def fixture_grid() -> ActionGrid:
    return ActionGrid.uniform(FIXTURE_LEVELS)


def fixture_penalty_matrix() -> PenaltyMatrix:
    return build_penalty_matrix(FIXTURE_D, fixture_grid())


def integer_coefficients() -> np.ndarray:
    """Stacked integer profile: main block then one block per level >= 2."""
    blocks = [_MAIN] + [_PROFILES[:, k - 2] for k in range(2, FIXTURE_LEVELS + 1)]
    return np.concatenate(blocks)


def default_coefficients() -> np.ndarray:
    """The float coefficient vector (integer profile times the signal unit)."""
    return SIGNAL_UNIT * integer_coefficients().astype(float)


def true_null_rows(op: PenaltyMatrix | None = None) -> np.ndarray:
    """Indices of penalty rows with exactly zero gap at the fixture truth."""
    op = op or fixture_penalty_matrix()
    gaps = op.rows @ integer_coefficients().astype(float)
    return np.flatnonzero(gaps == 0.0)


@dataclass(frozen=True)
class FixtureSummary:
    p: int
    n_zero: int
    n_penalty_rows: int
    null_row_count: int
    null_rank: int
    free_directions: int
    min_half_gap: float


def summarize_coefficients(
    beta: np.ndarray, op: PenaltyMatrix, zero_tol: float = 0.0
) -> FixtureSummary:
    """Structural summary of a coefficient vector under a penalty operator."""
    beta = np.asarray(beta, dtype=float).ravel()
    gaps = np.abs(op.rows @ beta)
    null_mask = gaps <= zero_tol
    null_rows = op.submatrix(np.flatnonzero(null_mask))
    rank = int(np.linalg.matrix_rank(null_rows)) if null_rows.size else 0
    active = gaps[~null_mask]
    min_half = float(0.5 * active.min()) if active.size else float("inf")
    return FixtureSummary(
        p=int(beta.size),
        n_zero=int(np.sum(beta == 0.0) if zero_tol == 0.0 else np.sum(np.abs(beta) <= zero_tol)),
        n_penalty_rows=op.K,
        null_row_count=int(null_mask.sum()),
        null_rank=rank,
        free_directions=int(beta.size - rank),
        min_half_gap=min_half,
    )


def validate_fixture() -> FixtureSummary:
    """Assert the documented structural facts about the built-in profile.

    Called by the simulation laboratory at configuration time; raising here
    means the shipped profile was altered.
    """
    op = fixture_penalty_matrix()
    beta = default_coefficients()
    summary = summarize_coefficients(beta, op)
    checks = {
        "p": (summary.p, 99),
        "zero coefficients": (summary.n_zero, 55),
        "penalty rows": (summary.n_penalty_rows, 180),
        "null-space rank": (summary.null_rank, 76),
        "free directions": (summary.free_directions, 23),
    }
    for name, (got, want) in checks.items():
        if got != want:
            raise AssertionError(f"fixture {name}: got {got}, expected {want}")
    if abs(summary.min_half_gap - 0.4) > 1e-12:
        raise AssertionError(
            f"fixture minimal half-gap: got {summary.min_half_gap!r}, expected 0.4"
        )
    return summary
