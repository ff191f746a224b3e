import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from localsieve import (
    Ball,
    Grid,
    GridFunction,
    GridMismatchError,
    PaddingContractError,
    check_support_margin,
    fourier_multiply,
    integrate,
    load_gfn,
    lp_norm,
    restrict_to_ball,
    save_gfn,
    unit_ball_volume,
)


def test_grid_geometry():
    g = Grid(1, 8.0, 1024)
    assert g.spacing == 1 / 64
    assert g.axis[0] == -8 + 1 / 128 and g.axis[-1] == 8 - 1 / 128
    assert g.refine().n == 2048
    d = g.doubled_box()
    assert (d.half_width, d.n, d.spacing) == (16.0, 2048, g.spacing)
    assert Grid(2, 1.0, 8).points.shape == (8, 8, 2)


@pytest.mark.parametrize("n", [7, 12, 0])
def test_grid_rejects_bad_size(n):
    with pytest.raises(ValueError):
        Grid(1, 1.0, n)


def test_grid_rejects_dim():
    with pytest.raises(ValueError):
        Grid(3, 1.0, 8)


def test_gridfunction_is_read_only_and_finite(small_grid):
    f = small_grid.constant(2.0)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        GridFunction(small_grid, np.full(32, np.nan))
    with pytest.raises(ValueError):
        GridFunction(small_grid, np.zeros(31))


def test_gridfunction_arithmetic(small_grid):
    f = small_grid.sample(lambda p: p[..., 0])
    g = small_grid.constant(3.0)
    assert np.allclose((f + g - g).values, f.values)
    assert np.allclose((2 * f).values, (f * 2).values)
    assert np.allclose((1 - f).values, 1 - f.values)
    assert np.allclose(abs(-f).values, np.abs(f.values))
    with pytest.raises(GridMismatchError):
        f + Grid(1, 2.0, 64).constant(1.0)


def test_ball_membership_and_measure(grid1):
    h = grid1.spacing
    ball = Ball((h / 2,), 0.125)
    assert ball.cell_count(grid1) == 17  # offsets -8..8
    assert ball.measure(grid1) == 17 * h
    assert ball.volume() == pytest.approx(0.25)
    assert ball.is_small and not Ball((0.0,), 1.0).is_small
    assert ball.dilate(4).radius == 0.5
    assert ball.inside_box(grid1) and not Ball((7.9,), 0.5).inside_box(grid1)


def test_ball_constant_rule(grid1):
    b = grid1.sample(lambda p: p[..., 0] + 5.0)
    small = Ball((grid1.axis[512],), 0.25)
    large = Ball((grid1.axis[512],), 2.0)
    assert small.c_b(b) == pytest.approx(small.mean(b))
    assert large.c_b(b) == 0.0


def test_ball_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        Ball((0.0,), 0.0)


def test_integrate_and_norms(grid1):
    f = grid1.sample(lambda p: np.exp(-p[..., 0] ** 2))
    assert integrate(f) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert lp_norm(f, 2) == pytest.approx(math.sqrt(math.sqrt(math.pi / 2)), rel=1e-12)
    assert lp_norm(f, math.inf) == pytest.approx(np.exp(-(grid1.spacing / 2) ** 2))
    ball = Ball((0.0,), 1.0)
    assert integrate(f, ball) + integrate(f, ~ball) == pytest.approx(integrate(f))
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)


def test_fourier_identity_and_shift(grid1):
    f = grid1.sample(lambda p: np.exp(-4 * p[..., 0] ** 2))
    assert np.allclose(fourier_multiply(f, lambda xi: np.ones(xi.shape[1:])).values, f.values)
    # multiplier exp(-2 pi i xi h) shifts by one cell
    h = grid1.spacing
    shifted = fourier_multiply(f, lambda xi: np.exp(-2j * np.pi * xi[0] * h))
    assert np.allclose(shifted.values, np.roll(f.values, 1), atol=1e-12)


def test_padding_contract(grid1):
    f = grid1.sample(lambda p: (np.abs(p[..., 0]) < 1).astype(float))
    assert check_support_margin(f) <= 1.0
    wide = grid1.sample(lambda p: (np.abs(p[..., 0]) < 3).astype(float))
    with pytest.raises(PaddingContractError):
        check_support_margin(wide)


def test_restrict_to_ball(grid1):
    f = grid1.constant(1.0)
    ball = Ball((0.0,), 0.5)
    r = restrict_to_ball(f, ball)
    assert integrate(r) == pytest.approx(ball.measure(grid1))


def test_gfn_roundtrip(tmp_path):
    g = Grid(2, 3.0, 16)
    f = GridFunction(g, np.random.default_rng(0).normal(size=g.shape))
    save_gfn(f, tmp_path / "f.gfn")
    back = load_gfn(tmp_path / "f.gfn")
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    raw = (tmp_path / "f.gfn").read_bytes()
    (tmp_path / "bad.gfn").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_gfn(tmp_path / "bad.gfn")


vectors = arrays(np.float64, 64, elements=st.floats(-1e3, 1e3))


@given(vectors, st.floats(-50, 50), st.sampled_from([1.0, 2.0, 3.0, math.inf]))
def test_norm_homogeneity(v, c, p):
    g = Grid(1, 4.0, 64)
    f = GridFunction(g, v)
    assert lp_norm(f * c, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-9, abs=1e-9)


@given(vectors, vectors, st.sampled_from([1.0, 1.5, 2.0, 6.0]))
def test_norm_triangle(u, v, p):
    g = Grid(1, 4.0, 64)
    f, h = GridFunction(g, u), GridFunction(g, v)
    assert lp_norm(f + h, p) <= (lp_norm(f, p) + lp_norm(h, p)) * (1 + 1e-12) + 1e-9


@given(vectors, vectors)
def test_holder(u, v):
    g = Grid(1, 4.0, 64)
    f, h = GridFunction(g, u), GridFunction(g, v)
    assert abs(integrate(f * h)) <= lp_norm(f, 2) * lp_norm(h, 2) * (1 + 1e-12) + 1e-9
