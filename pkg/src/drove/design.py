"""Action grids, interaction designs and the structured penalty matrix.

The regression model treats a continuous action ``a`` in ``[0, 1]`` through
a grid of levels ``0 = A_1 < A_2 < ... < A_L = 1``.  An observation with
action in the half-open bin ``[A_k, A_{k+1})`` activates level ``k`` (a
sentinel strictly above 1 closes the last bin, so ``a == 1`` lands in bin
``L``).  The mean outcome is

    m(x, a) = psi_0' x + sum_{k >= 2} psi_k' x * 1{a in bin k},

with the first level absorbed as reference (``psi_1 == 0``).  Stacking
``beta = (psi_0, psi_2, ..., psi_L)`` gives ``p = d * L`` coefficients and
the row layout built by :func:`build_design`.

The penalty matrix has one unit row per coefficient plus, for every
covariate, rows coupling adjacent interaction levels ``k`` and ``k + 1``
(``+1/-1`` entries).  Zeroed unit rows encode exclusion of a coefficient;
zeroed coupling rows encode equality of adjacent level effects, i.e. fusion
of neighbouring bins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

COEF = "coef"
FUSE = "fuse"


# ---------------------------------------------------------------------------
# Grids and observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ActionGrid:
    """Strictly increasing action levels spanning [0, 1].

    ``upper_sentinel`` is any value > 1 closing the final half-open bin;
    it defaults to one trailing step above the last level.
    """

    levels: np.ndarray
    upper_sentinel: float = field(default=0.0)

    def __post_init__(self) -> None:
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim != 1 or levels.size < 2:
            raise ValueError("grid needs at least two levels")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("grid levels must be strictly increasing")
        if levels[0] != 0.0 or levels[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1")
        object.__setattr__(self, "levels", levels)
        sentinel = self.upper_sentinel
        if sentinel <= 1.0:
            sentinel = float(levels[-1] + (levels[-1] - levels[-2]))
        object.__setattr__(self, "upper_sentinel", float(sentinel))

    @classmethod
    def uniform(cls, n_levels: int) -> "ActionGrid":
        """Evenly spaced grid with ``n_levels`` levels from 0 to 1."""
        if n_levels < 2:
            raise ValueError("need at least two levels")
        return cls(np.linspace(0.0, 1.0, n_levels))

    @property
    def n_levels(self) -> int:
        return int(self.levels.size)

    def __len__(self) -> int:  # pragma: no cover - convenience
        return self.n_levels


def level_index(grid: ActionGrid, actions) -> np.ndarray | int:
    """Map actions in [0, 1] to 1-based bin indices ``k``.

    An action belongs to bin ``k`` when it falls in ``[A_k, A_{k+1})``;
    ``a == 1`` maps to the last bin ``L``.  Raises for actions outside
    ``[0, 1]``.
    """
    a = np.asarray(actions, dtype=float)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    if np.any(~np.isfinite(a)) or np.any(a < 0.0) or np.any(a > 1.0):
        bad = a[(~np.isfinite(a)) | (a < 0.0) | (a > 1.0)]
        raise ValueError(f"actions must lie in [0, 1]; offending values {bad[:5]}")
    idx = np.searchsorted(grid.levels, a, side="right")
    idx = np.minimum(idx, grid.n_levels)  # guards a == 1 exactly
    idx = np.maximum(idx, 1)
    return int(idx[0]) if scalar else idx.astype(np.int64)


@dataclass
class ObservationSet:
    """Covariates, actions and outcomes for one estimation sample."""

    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.A = np.asarray(self.A, dtype=float).ravel()
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d array (n, d)")
        n = self.X.shape[0]
        if self.A.shape[0] != n or self.Y.shape[0] != n:
            raise ValueError(
                f"inconsistent sample sizes: X has {n} rows, "
                f"A has {self.A.shape[0]}, Y has {self.Y.shape[0]}"
            )
        for name, arr in (("X", self.X), ("A", self.A), ("Y", self.Y)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n_obs(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])


# ---------------------------------------------------------------------------
# Interaction design
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class InteractionDesign:
    """Dense design with the main-effect block followed by level blocks.

    Column layout: columns ``0..d-1`` hold the raw covariates (main
    effects); for each level ``k = 2..L`` the block ``(k-1)*d..k*d-1``
    holds the covariates masked to observations in bin ``k``.
    """

    matrix: np.ndarray
    d: int
    n_levels: int
    _gram: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_obs(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def p(self) -> int:
        return int(self.matrix.shape[1])

    def block_slice(self, k: int) -> slice:
        """Column slice for the main block (``k == 0``) or level ``k >= 2``."""
        if k == 0:
            return slice(0, self.d)
        if 2 <= k <= self.n_levels:
            return slice((k - 1) * self.d, k * self.d)
        raise ValueError(f"no coefficient block for level {k}")

    def gram(self) -> np.ndarray:
        """Cached ``X'X / n`` for repeated solver calls on the same sample."""
        if self._gram is None:
            self._gram = self.matrix.T @ self.matrix / self.n_obs
        return self._gram

    def subset(self, rows: np.ndarray) -> "InteractionDesign":
        return InteractionDesign(self.matrix[rows], self.d, self.n_levels)


def _interaction_matrix(X: np.ndarray, bins: np.ndarray, n_levels: int) -> np.ndarray:
    n, d = X.shape
    out = np.zeros((n, d * n_levels))
    out[:, :d] = X
    for k in range(2, n_levels + 1):
        mask = bins == k
        if np.any(mask):
            out[np.ix_(mask, np.arange((k - 1) * d, k * d))] = X[mask]
    return out


def build_design(obs: ObservationSet, grid: ActionGrid) -> InteractionDesign:
    """Expand observed (X, A) into the main + per-level interaction design."""
    bins = level_index(grid, obs.A)
    matrix = _interaction_matrix(obs.X, bins, grid.n_levels)
    return InteractionDesign(matrix, obs.d, grid.n_levels)


def resolve_actions(X: np.ndarray, rule) -> np.ndarray:
    """Turn a decision rule into an action per row of ``X``.

    ``rule`` may be a scalar action, an array of length ``n``, or a
    callable applied to each covariate row.
    """
    n = X.shape[0]
    if callable(rule):
        actions = np.asarray([float(rule(X[i])) for i in range(n)], dtype=float)
    else:
        actions = np.asarray(rule, dtype=float)
        if actions.ndim == 0:
            actions = np.full(n, float(actions))
    if actions.shape != (n,):
        raise ValueError(f"rule produced shape {actions.shape}, expected ({n},)")
    return actions


def build_policy_features(X: np.ndarray, grid: ActionGrid, rule) -> np.ndarray:
    """Design rows for covariates ``X`` when actions follow ``rule``.

    Row ``i`` equals the design row that observation ``(X_i, rule(X_i))``
    would produce, so ``features @ beta`` evaluates the fitted mean outcome
    under the rule.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    actions = resolve_actions(X, rule)
    bins = level_index(grid, actions)
    return _interaction_matrix(X, bins, grid.n_levels)


# ---------------------------------------------------------------------------
# Penalty matrix
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PenaltyMatrix:
    """Sparse stack of unit rows and adjacent-level coupling rows.

    Attributes
    ----------
    rows : scipy.sparse.csr_matrix
        The ``K x p`` penalty operator.
    kinds : ndarray of str
        ``"coef"`` for unit rows, ``"fuse"`` for coupling rows.
    levels : ndarray of int
        The level ``k`` each row refers to (0 for main-effect unit rows;
        for fuse rows the lower of the coupled pair).
    covariates : ndarray of int
        0-based covariate index each row touches.
    """

    rows: scipy.sparse.csr_matrix
    kinds: np.ndarray
    levels: np.ndarray
    covariates: np.ndarray
    d: int
    n_levels: int

    @property
    def K(self) -> int:
        return int(self.rows.shape[0])

    @property
    def p(self) -> int:
        return int(self.rows.shape[1])

    def dense(self) -> np.ndarray:
        return self.rows.toarray()

    def row_norms(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.rows.multiply(self.rows).sum(axis=1)).ravel())

    def submatrix(self, row_idx) -> np.ndarray:
        """Dense submatrix of the selected rows."""
        row_idx = np.asarray(row_idx, dtype=np.int64)
        return self.rows[row_idx].toarray()


def _column_of(k: int, j: int, d: int) -> int:
    # main block for k == 0; interaction block for k >= 2 (no block for k == 1)
    return j if k == 0 else (k - 1) * d + j


def build_penalty_matrix(d: int, grid: ActionGrid) -> PenaltyMatrix:
    """Unit rows for every coefficient plus per-covariate coupling rows.

    For ``d`` covariates and ``L`` levels this yields ``p = d * L`` unit
    rows followed by ``d * (L - 2)`` coupling rows (levels ``k`` vs
    ``k + 1`` for ``k = 2..L-1``), so ``K = p + d * (L - 2)``.
    """
    L = grid.n_levels
    p = d * L
    data, row_ind, col_ind = [], [], []
    kinds, levels, covariates = [], [], []
    r = 0
    # unit rows, one per coefficient, in coefficient order
    for k in [0] + list(range(2, L + 1)):
        for j in range(d):
            data.append(1.0)
            row_ind.append(r)
            col_ind.append(_column_of(k, j, d))
            kinds.append(COEF)
            levels.append(k)
            covariates.append(j)
            r += 1
    # coupling rows between adjacent interaction levels
    for k in range(2, L):
        for j in range(d):
            data.extend([1.0, -1.0])
            row_ind.extend([r, r])
            col_ind.extend([_column_of(k, j, d), _column_of(k + 1, j, d)])
            kinds.append(FUSE)
            levels.append(k)
            covariates.append(j)
            r += 1
    rows = scipy.sparse.csr_matrix(
        (data, (row_ind, col_ind)), shape=(r, p), dtype=float
    )
    return PenaltyMatrix(
        rows=rows,
        kinds=np.asarray(kinds),
        levels=np.asarray(levels, dtype=np.int64),
        covariates=np.asarray(covariates, dtype=np.int64),
        d=d,
        n_levels=L,
    )


def identity_penalty_matrix(d: int, grid: ActionGrid) -> PenaltyMatrix:
    """Unit rows only (plain coefficient-wise penalization, no coupling)."""
    full = build_penalty_matrix(d, grid)
    keep = full.kinds == COEF
    idx = np.flatnonzero(keep)
    return PenaltyMatrix(
        rows=full.rows[idx].tocsr(),
        kinds=full.kinds[idx],
        levels=full.levels[idx],
        covariates=full.covariates[idx],
        d=d,
        n_levels=full.n_levels,
    )


# ---------------------------------------------------------------------------
# Null-space utilities
# ---------------------------------------------------------------------------


def null_space_basis(rows: np.ndarray, p: int | None = None) -> np.ndarray:
    """Orthonormal basis of the null space of a stack of penalty rows.

    ``rows`` is a dense ``(m, p)`` array (possibly with ``m == 0``).  For
    an empty stack the identity basis is returned.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        if p is None:
            raise ValueError("need the ambient dimension for an empty row stack")
        return np.eye(p)
    basis = scipy.linalg.null_space(rows)
    return basis


def signal_space_split(rows: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases (U0, U1) of the null space and row space.

    ``U0`` spans directions unconstrained by the rows; ``U1`` spans the row
    space, so the coordinate ``U1' beta`` vanishes exactly when every row
    annihilates ``beta``.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        return np.eye(p), np.zeros((p, 0))
    u, s, vt = scipy.linalg.svd(rows, full_matrices=True)
    tol = max(rows.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return vt[rank:].T, vt[:rank].T


def min_nonzero_eigenvalue(mat: np.ndarray, tol: float | None = None) -> float:
    """Smallest nonzero eigenvalue of a symmetric PSD matrix."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return float("nan")
    vals = scipy.linalg.eigvalsh(mat)
    if tol is None:
        tol = mat.shape[0] * np.finfo(float).eps * max(vals[-1], 1.0)
    nonzero = vals[vals > tol]
    return float(nonzero[0]) if nonzero.size else float("nan")
