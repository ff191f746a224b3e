import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from localsieve import (
    Ball,
    BallFamily,
    Grid,
    GridFunction,
    GridMismatchError,
    TestDictionary,
    ball_commutator_maximal,
    bmo_norm,
    commutator_maximal_lower,
    default_scales,
    grand_maximal_lower,
    h1_norm_estimate,
    hl_maximal,
    lmo_norms,
    mean_bound_ratio,
    oscillation_report,
    weighted_tail_ratio,
)


@pytest.fixture(scope="module")
def grid():
    return Grid(1, 8.0, 1024)


@pytest.fixture(scope="module")
def family(grid):
    return BallFamily(grid)


def test_family_radii_are_dyadic(family):
    assert list(family.radii) == [2.0 ** k for k in range(-4, 3)]
    assert len(family) == 1538


def test_linear_small_ball_oscillation(grid, family):
    # mean |x - mean| over 2m+1 consecutive cells equals h m (m+1) / (2m+1)
    rep = oscillation_report(grid.sample(lambda p: p[..., 0]), family, 1)
    h = grid.spacing
    for row in rep.per_radius:
        if row["radius"] < 1:
            m = row["radius"] / h
            assert row["rule"] == "mean"
            assert row["sup_oscillation"] == pytest.approx(h * m * (m + 1) / (2 * m + 1), rel=1e-12)
        else:
            assert row["rule"] == "zero"


def test_constant_has_no_small_oscillation(grid, family):
    rep = oscillation_report(grid.constant(3.0), family)
    assert rep.bmo_loc == 0.0 and rep.lmo_loc == 0.0
    # the zero rule on large balls sees the constant itself
    assert rep.value == pytest.approx(3.0) and rep.large_mean == pytest.approx(3.0)
    assert rep.lmo == pytest.approx(3.0)


def test_power_means_are_ordered(grid, family):
    b = grid.sample(lambda p: np.log(np.abs(p[..., 0]) + 0.01))
    rep = oscillation_report(b, family)
    assert rep.bmo_p[1] <= rep.bmo_p[2] * (1 + 1e-12) <= rep.bmo_p[6] * (1 + 1e-12)
    assert bmo_norm(b, family, 2).value == pytest.approx(rep.bmo_p[2])
    assert lmo_norms(b, family).lmo_loc == pytest.approx(rep.lmo_loc)
    assert "bmo" in rep.to_dict()


def test_oscillation_rejects_bad_power(grid, family):
    with pytest.raises(ValueError):
        oscillation_report(grid.constant(1.0), family, 3)


def test_h1_estimate_frozen():
    g = Grid(1, 8.0, 512)
    f = g.sample(lambda p: (np.abs(p[..., 0]) < 0.25).astype(float))
    assert h1_norm_estimate(f) == pytest.approx(0.7841986000030539, rel=1e-10)
    assert h1_norm_estimate(f) >= 0.5 * 0.5  # at least a fraction of the L1 mass


def test_hl_maximal_of_indicator(grid, family):
    f = grid.sample(lambda p: (np.abs(p[..., 0]) < 0.25).astype(float))
    M = hl_maximal(f, family).values
    assert M.max() == pytest.approx(1.0)
    assert np.all(M >= 0)


def test_commutator_maximal_vanishes_for_constant_b(grid, family):
    f = grid.sample(lambda p: (np.abs(p[..., 0]) < 0.25).astype(float))
    assert np.all(ball_commutator_maximal(grid.constant(2.0), f, family).values == 0)
    d = TestDictionary(grid, scales=[0.25, 0.125])
    assert np.allclose(commutator_maximal_lower(grid.constant(2.0), f, d).values, 0.0)


def test_dictionary_lower_bound_grid_check(grid):
    d = TestDictionary(Grid(1, 8.0, 512), scales=[0.25])
    with pytest.raises(GridMismatchError):
        grand_maximal_lower(grid.constant(1.0), d)


def test_default_scales(grid):
    assert default_scales(grid) == [0.5, 0.25, 0.125, 0.0625, 0.03125]


def test_mean_bound_ratio(grid):
    ball = Ball((grid.axis[512],), 0.125)
    g = GridFunction(grid, ball.mask(grid).astype(float))
    ratio = mean_bound_ratio(g, ball)
    assert 0 < ratio < 3
    with pytest.raises(ValueError):
        mean_bound_ratio(grid.constant(1.0), ball)


def test_weighted_tail_ratio_converges(grid):
    b = grid.sample(lambda p: np.log(np.abs(p[..., 0]) + 0.01))
    rep = weighted_tail_ratio(b, Ball((0.0,), 0.125), 1.0, 1.0)
    assert rep.converging
    assert rep.ratio == pytest.approx(rep.numerator / rep.bmo)
    assert all(x > y for x, y in zip(rep.increments, rep.increments[1:]))


vals = arrays(np.float64, 128, elements=st.floats(-100, 100))


@given(vals, st.floats(-50, 50))
def test_small_ball_norms_ignore_constants(v, c):
    g = Grid(1, 4.0, 128)
    fam = BallFamily(g, stride=8)
    b = GridFunction(g, v)
    r0, r1 = oscillation_report(b, fam), oscillation_report(b + c, fam)
    assert r1.bmo_loc == pytest.approx(r0.bmo_loc, rel=1e-9, abs=1e-9)
    assert r1.lmo_loc == pytest.approx(r0.lmo_loc, rel=1e-9, abs=1e-9)


@given(vals, st.floats(-20, 20))
def test_oscillation_is_homogeneous(v, t):
    g = Grid(1, 4.0, 128)
    fam = BallFamily(g, stride=8)
    b = GridFunction(g, v)
    assert oscillation_report(b * t, fam).value == pytest.approx(abs(t) * oscillation_report(b, fam).value,
                                                                 rel=1e-9, abs=1e-9)


@given(vals, vals)
def test_hl_maximal_sublinear(u, v):
    g = Grid(1, 4.0, 128)
    fam = BallFamily(g, stride=8)
    f, h = GridFunction(g, u), GridFunction(g, v)
    lhs = hl_maximal(f + h, fam).values
    rhs = hl_maximal(f, fam).values + hl_maximal(h, fam).values
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-9)
