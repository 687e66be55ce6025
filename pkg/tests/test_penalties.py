import numpy as np
import pytest

from drove.penalties import (
    AssumptionReport,
    PenaltySpec,
    check_concave_profile,
    check_penalty_assumptions,
    flat_threshold,
    penalty_derivative,
    penalty_value,
    rho_prime,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        PenaltySpec("huber", 0.1)
    with pytest.raises(ValueError):
        PenaltySpec("scad", -0.1)
    with pytest.raises(ValueError):
        PenaltySpec("scad", 0.1, shape=2.0)
    with pytest.raises(ValueError):
        PenaltySpec("mcp", 0.1, shape=1.0)
    with pytest.raises(ValueError):
        PenaltySpec("scad", float("nan"))
    # family is normalized, defaults filled in
    spec = PenaltySpec("SCAD", 0.2)
    assert spec.family == "scad"
    assert spec.shape == 3.7
    assert PenaltySpec("mcp", 0.2).shape == 3.0
    assert PenaltySpec("l1", 0.2, shape=9.0).shape is None
    assert spec.with_lam(0.5).lam == 0.5
    assert spec.with_lam(0.5).family == "scad"


def test_closed_form_values():
    lam = 0.4
    scad = PenaltySpec("scad", lam, shape=3.7)
    # linear part, interior of the quadratic part, and the plateau
    assert penalty_value(scad, 0.0) == 0.0
    assert abs(penalty_value(scad, 0.2) - lam * 0.2) < 1e-15
    t = 1.0
    a = 3.7
    expected = (2 * a * lam * t - t * t - lam * lam) / (2 * (a - 1))
    assert abs(penalty_value(scad, t) - expected) < 1e-15
    assert abs(penalty_value(scad, 100.0) - 0.5 * lam * lam * (a + 1)) < 1e-15

    mcp = PenaltySpec("mcp", lam, shape=3.0)
    assert abs(penalty_value(mcp, 0.5) - (lam * 0.5 - 0.25 / (2 * 3.0))) < 1e-15
    assert abs(penalty_value(mcp, 50.0) - 0.5 * 3.0 * lam * lam) < 1e-15

    l1 = PenaltySpec("l1", lam)
    assert abs(penalty_value(l1, 7.0) - lam * 7.0) < 1e-15


def test_negative_gap_rejected():
    spec = PenaltySpec("scad", 0.1)
    with pytest.raises(ValueError):
        penalty_value(spec, -1e-9)
    with pytest.raises(ValueError):
        rho_prime(spec, np.array([0.1, -0.2]))


def test_scalar_and_array_agree():
    spec = PenaltySpec("mcp", 0.3)
    ts = np.array([0.0, 0.1, 0.5, 1.2, 3.0])
    vals = penalty_value(spec, ts)
    for i, t in enumerate(ts):
        v = penalty_value(spec, float(t))
        assert isinstance(v, float)
        assert v == vals[i]


def test_derivative_matches_finite_differences():
    # central differences away from the kinks of each family
    h = 1e-6
    for seed in range(5):
        rng = np.random.default_rng(seed)
        for family in ("scad", "mcp", "l1"):
            lam = float(rng.uniform(0.05, 1.0))
            shape = None
            if family == "scad":
                shape = float(rng.uniform(2.2, 6.0))
            elif family == "mcp":
                shape = float(rng.uniform(1.2, 6.0))
            spec = PenaltySpec(family, lam, shape=shape)
            kinks = [0.0, flat_threshold(spec)]
            if family == "scad":
                kinks.append(lam)
            for _ in range(60):
                t = float(rng.uniform(1e-4, 3.0 * lam * (shape or 4.0)))
                if min(abs(t - k) for k in kinks if np.isfinite(k)) < 10 * h:
                    continue
                approx = (penalty_value(spec, t + h) - penalty_value(spec, t - h)) / (2 * h)
                exact = penalty_derivative(spec, t)
                assert abs(approx - exact) <= 1e-6, (family, lam, shape, t)


def test_rho_prime_boundary_conventions():
    for family in ("scad", "mcp", "l1"):
        spec = PenaltySpec(family, 0.25)
        assert rho_prime(spec, 0.0) == 1.0
    # left limit at the SCAD kink: still the full weight
    scad = PenaltySpec("scad", 0.25)
    assert rho_prime(scad, 0.25) == 1.0
    # zero penalty level means no reweighting at all
    assert rho_prime(PenaltySpec("scad", 0.0), 1.0) == 0.0
    assert penalty_derivative(PenaltySpec("mcp", 0.0), 1.0) == 0.0


def test_flat_threshold():
    assert flat_threshold(PenaltySpec("scad", 0.2, shape=3.7)) == pytest.approx(0.74)
    assert flat_threshold(PenaltySpec("mcp", 0.2, shape=3.0)) == pytest.approx(0.6)
    assert flat_threshold(PenaltySpec("l1", 0.2)) == float("inf")
    # derivative really vanishes beyond the threshold
    for family in ("scad", "mcp"):
        spec = PenaltySpec(family, 0.3)
        cut = flat_threshold(spec)
        assert penalty_derivative(spec, cut + 1e-9) == 0.0
        assert penalty_derivative(spec, 10 * cut) == 0.0


def test_value_continuous_at_region_boundaries():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lam = float(rng.uniform(0.05, 1.0))
        scad = PenaltySpec("scad", lam)
        mcp = PenaltySpec("mcp", lam)
        for spec, cut in ((scad, lam), (scad, scad.shape * lam), (mcp, mcp.shape * lam)):
            lo = penalty_value(spec, cut * (1 - 1e-10))
            hi = penalty_value(spec, cut * (1 + 1e-10))
            assert abs(hi - lo) < 1e-8


def test_assumption_checks():
    for family in ("scad", "mcp", "l1"):
        report = check_penalty_assumptions(PenaltySpec(family, 0.3))
        assert report.passed, report.messages
    # a convex profile is flagged: its slope increases
    bad = check_concave_profile(
        lambda t: t**2, lambda t: 2 * t, np.linspace(0.0, 1.0, 50)
    )
    assert isinstance(bad, AssumptionReport)
    assert not bad.passed
    assert any("not nonincreasing" in m for m in bad.messages)
    with pytest.raises(ValueError):
        check_concave_profile(lambda t: t, lambda t: t, [0.5])
