"""Penalty families for sparse and fused effect estimation.

Three families are supported: the two folded-concave penalties (SCAD and
MCP) and the plain L1 penalty.  Each family is described by a
:class:`PenaltySpec` holding the regularization level ``lam`` and, for the
folded-concave families, a shape parameter ``a`` that controls where the
penalty flattens out.

Conventions used throughout:

* penalties act on nonnegative gap magnitudes ``t = |d' beta|``;
* at kink points the derivative is taken as the left limit;
* the scaled derivative ``rho_prime = p'(t) / lam`` equals 1 at ``t = 0+``
  for every family, and is defined to be 0 when ``lam == 0`` (no penalty,
  no reweighting).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

FAMILIES = ("scad", "mcp", "l1")

_DEFAULT_SHAPE = {"scad": 3.7, "mcp": 3.0, "l1": None}


@dataclass(frozen=True)
class PenaltySpec:
    """Choice of penalty family, level and shape.

    Parameters
    ----------
    family : str
        One of ``"scad"``, ``"mcp"``, ``"l1"``.
    lam : float
        Penalty level, must be >= 0.
    shape : float, optional
        Concavity parameter ``a``.  Defaults to 3.7 for SCAD and 3.0 for
        MCP; ignored for L1.  SCAD requires ``a > 2``, MCP ``a > 1``.
    """

    family: str = "scad"
    lam: float = 0.1
    shape: float | None = None

    def __post_init__(self) -> None:
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise ValueError(
                f"unknown penalty family {self.family!r}; expected one of {FAMILIES}"
            )
        object.__setattr__(self, "family", fam)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"penalty level must be finite and >= 0, got {self.lam}")
        shape = self.shape
        if shape is None:
            shape = _DEFAULT_SHAPE[fam]
        if fam == "scad" and shape <= 2:
            raise ValueError(f"SCAD shape parameter must exceed 2, got {shape}")
        if fam == "mcp" and shape <= 1:
            raise ValueError(f"MCP shape parameter must exceed 1, got {shape}")
        if fam == "l1":
            shape = None
        object.__setattr__(self, "shape", shape)

    def with_lam(self, lam: float) -> "PenaltySpec":
        """Return a copy of this spec at a different penalty level."""
        return replace(self, lam=lam)

    @property
    def is_folded_concave(self) -> bool:
        return self.family in ("scad", "mcp")


def _check_nonnegative(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("penalties are defined on nonnegative gap magnitudes")
    return t


def penalty_value(spec: PenaltySpec, t) -> np.ndarray | float:
    """Evaluate the penalty ``p_lam(t)`` elementwise for ``t >= 0``.

    Closed forms (lam > 0, a the shape parameter):

    * L1:    ``lam * t``
    * SCAD:  ``lam * t`` on ``[0, lam]``;
             ``(2*a*lam*t - t^2 - lam^2) / (2*(a - 1))`` on ``(lam, a*lam]``;
             ``lam^2 * (a + 1) / 2`` beyond ``a*lam``.
    * MCP:   ``lam * t - t^2 / (2*a)`` on ``[0, a*lam]``;
             ``a * lam^2 / 2`` beyond ``a*lam``.
    """
    t = _check_nonnegative(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    lam, a = spec.lam, spec.shape

    if spec.family == "l1":
        out = lam * t
    elif spec.family == "scad":
        out = np.where(
            t <= lam,
            lam * t,
            np.where(
                t <= a * lam,
                (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0)),
                0.5 * lam * lam * (a + 1.0),
            ),
        )
    else:  # mcp
        out = np.where(t <= a * lam, lam * t - t * t / (2.0 * a), 0.5 * a * lam * lam)
    return float(out[0]) if scalar else out


def penalty_derivative(spec: PenaltySpec, t) -> np.ndarray | float:
    """Derivative ``p'_lam(t)`` with the left-limit convention at kinks."""
    out = rho_prime(spec, t)
    return spec.lam * out


def rho_prime(spec: PenaltySpec, t) -> np.ndarray | float:
    """Scaled derivative ``p'_lam(t) / lam``, used as reweighting weights.

    For every family ``rho_prime(0+) == 1``.  At kink points the left limit
    is used, so e.g. SCAD gives exactly 1 at ``t == lam``.  By convention
    the result is 0 when ``lam == 0``.
    """
    t = _check_nonnegative(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    lam, a = spec.lam, spec.shape

    if lam == 0:
        out = np.zeros_like(t)
    elif spec.family == "l1":
        out = np.ones_like(t)
    elif spec.family == "scad":
        out = np.where(
            t <= lam,
            1.0,
            np.maximum(a * lam - t, 0.0) / ((a - 1.0) * lam),
        )
    else:  # mcp
        out = np.maximum(1.0 - t / (a * lam), 0.0)
    return float(out[0]) if scalar else out


def flat_threshold(spec: PenaltySpec) -> float:
    """Gap magnitude beyond which the penalty derivative vanishes.

    Returns ``a * lam`` for SCAD/MCP and ``inf`` for L1 (its derivative
    never vanishes).
    """
    if spec.family == "l1":
        return float("inf")
    return spec.shape * spec.lam


# ---------------------------------------------------------------------------
# Folded-concave assumption diagnostics
# ---------------------------------------------------------------------------


@dataclass
class AssumptionReport:
    """Outcome of the folded-concave sanity checks on a gap grid."""

    passed: bool
    messages: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:  # pragma: no cover - convenience
        return self.passed


def check_concave_profile(
    value_fn: Callable[[np.ndarray], np.ndarray],
    slope_fn: Callable[[np.ndarray], np.ndarray],
    grid: Sequence[float],
    tol: float = 1e-10,
) -> AssumptionReport:
    """Check a (value, slope) pair for the folded-concave shape on a grid.

    The checks are: value vanishes at 0, value is nondecreasing, slope is
    nonnegative and nonincreasing (concavity away from the origin).  This
    operates on plain callables so fabricated penalties can be probed in
    tests; use :func:`check_penalty_assumptions` for a :class:`PenaltySpec`.
    """
    grid = np.asarray(sorted(set(float(g) for g in grid)), dtype=float)
    if grid.size < 2 or grid[0] < 0:
        raise ValueError("need at least two nonnegative grid points")
    messages: list[str] = []

    values = np.asarray(value_fn(grid), dtype=float)
    slopes = np.asarray(slope_fn(grid), dtype=float)

    if grid[0] == 0.0 and abs(values[0]) > tol:
        messages.append(f"value at 0 is {values[0]:.3e}, expected 0")
    if np.any(np.diff(values) < -tol):
        messages.append("penalty value is not nondecreasing on the grid")
    if np.any(slopes < -tol):
        messages.append("penalty slope takes negative values on the grid")
    if np.any(np.diff(slopes) > tol):
        messages.append("penalty slope is not nonincreasing (profile not concave)")
    return AssumptionReport(passed=not messages, messages=messages)


def check_penalty_assumptions(
    spec: PenaltySpec, grid: Sequence[float] | None = None
) -> AssumptionReport:
    """Run :func:`check_concave_profile` for a configured penalty spec."""
    if grid is None:
        top = spec.lam * ((spec.shape or 2.0) + 2.0) if spec.lam > 0 else 1.0
        grid = np.linspace(0.0, max(top, 1e-6), 201)
    report = check_concave_profile(
        lambda t: penalty_value(spec, t),
        lambda t: penalty_derivative(spec, t),
        grid,
    )
    if spec.lam > 0:
        start = rho_prime(spec, 0.0)
        if abs(start - 1.0) > 1e-12:
            report.messages.append(f"rho_prime(0+) is {start}, expected 1")
            report.passed = False
    return report
