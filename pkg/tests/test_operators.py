import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from localsieve import (
    Grid,
    GridFunction,
    PaddingContractError,
    TruncatedOperator,
    adjoint_apply,
    apply_fourier_localized,
    apply_localized,
    apply_pv,
    difference_lattice,
    dyadic_eps_list,
    error_kernel_star,
    fourier_multiply,
    gaussian_psi,
    hilbert_kernel,
    hilbert_multiplier,
    integrate,
    local_riesz_goldberg,
    localize,
    lp_norm,
    mollify,
    riesz_multiplier,
    standard_bump,
)


def indicator(grid, a=1.0):
    return grid.sample(lambda p: (np.abs(p[..., 0]) < a).astype(float))


def hilbert_of_indicator(x):
    return np.log(np.abs((x + 1) / (x - 1))) / math.pi


def test_pv_of_indicator_frozen():
    g = Grid(1, 8.0, 2048)
    Tf = apply_pv(hilbert_kernel(), indicator(g))
    x = g.axis[1056]
    assert x == 0.25390625
    assert Tf.values[1056] == pytest.approx(0.16525527058950024, rel=1e-12)
    assert hilbert_of_indicator(x) == pytest.approx(0.16525620993229354, rel=1e-14)
    assert abs(Tf.values[1056] - hilbert_of_indicator(x)) < 1e-5


def test_pv_converges_away_from_jumps():
    errs = []
    for n in (512, 1024, 2048):
        g = Grid(1, 8.0, n)
        Tf = apply_pv(hilbert_kernel(), indicator(g)).values
        x = g.axis
        far = (np.abs(np.abs(x) - 1) > 0.25)
        errs.append(np.abs(Tf[far] - hilbert_of_indicator(x[far])).max())
    assert errs[0] > errs[1] > errs[2]


def test_truncation_radius_validation():
    g = Grid(1, 8.0, 256)
    with pytest.raises(ValueError):
        apply_pv(hilbert_kernel(), indicator(g), eps=g.spacing / 4)


def test_truncated_operator_matches_apply_pv():
    g = Grid(1, 8.0, 256)
    f = indicator(g)
    op = TruncatedOperator(hilbert_kernel(), 0.25)
    assert np.array_equal(op(f).values, apply_pv(hilbert_kernel(), f, 0.25).values)


def test_adjoint_of_odd_kernel_is_negation():
    g = Grid(1, 8.0, 256)
    f = indicator(g)
    assert np.allclose(adjoint_apply(hilbert_kernel(), f).values, -apply_pv(hilbert_kernel(), f).values)


def test_localized_equals_pv_of_product():
    g = Grid(1, 8.0, 512)
    f = indicator(g, 0.5)
    K, eta = hilbert_kernel(), standard_bump()
    assert np.allclose(apply_localized(K, eta, f).values, apply_pv(localize(K, eta), f).values)


def test_mollify_preserves_mass():
    g = Grid(1, 8.0, 512)
    f = indicator(g)
    assert integrate(mollify(gaussian_psi(), f)) == pytest.approx(integrate(f), rel=1e-10)


def test_fourier_localized_needs_padding():
    g = Grid(1, 8.0, 512)
    with pytest.raises(PaddingContractError):
        apply_fourier_localized(hilbert_kernel(), gaussian_psi(), indicator(g, 3.0))


def test_error_kernel_frozen_and_refines():
    K, eta, psi = hilbert_kernel(), standard_bump(), gaussian_psi()
    coarse = error_kernel_star(K, eta, psi, Grid(1, 8.0, 512))
    fine = error_kernel_star(K, eta, psi, Grid(1, 8.0, 2048))
    assert coarse.l1_norm == pytest.approx(1.0838249913282034, rel=1e-10)
    assert fine.l1_norm == pytest.approx(1.0956354279382174, rel=1e-10)
    assert coarse.k_star.grid.half_width == 16.0
    radii = [r for r, _ in coarse.shell_profile]
    masses = [m for _, m in coarse.shell_profile]
    assert radii == sorted(radii) and masses == sorted(masses)


def test_localized_and_fourier_versions_agree_up_to_k_star():
    g = Grid(1, 8.0, 1024)
    K, eta, psi = hilbert_kernel(), standard_bump(), gaussian_psi()
    k_l1 = error_kernel_star(K, eta, psi, g).l1_norm
    rng = np.random.default_rng(7)
    for _ in range(3):
        v = np.where(np.abs(g.axis) < 1.5, rng.normal(size=g.n), 0.0)
        f = GridFunction(g, v)
        diff = apply_localized(K, eta, f) - apply_fourier_localized(K, psi, f)
        assert lp_norm(diff, 1) <= 1.05 * k_l1 * lp_norm(f, 1)


def test_goldberg_requires_unit_cutoff_near_origin():
    g = Grid(1, 8.0, 256)
    f = indicator(g)
    half = lambda xi: np.full(xi.shape[1:], 0.5)
    with pytest.raises(ValueError):
        local_riesz_goldberg(1, half, f)
    plain = local_riesz_goldberg(1, 0.0, f, strict=False)
    assert np.allclose(plain.values, fourier_multiply(f, riesz_multiplier(1)).values)
    bump = lambda xi: (np.abs(xi[0]) < 1.0).astype(float)
    out = local_riesz_goldberg(1, bump, f)
    assert np.all(np.isfinite(out.values))


def test_hilbert_and_riesz_multipliers_are_opposite():
    xi = np.array([[-2.0, -0.5, 0.0, 1.0]])
    assert np.allclose(hilbert_multiplier(xi), -riesz_multiplier(1)(xi))


def test_difference_lattice_and_eps():
    lat = difference_lattice(Grid(1, 1.0, 8))
    assert lat.shape == (15, 1)
    assert lat[0, 0] == -7 * 0.25 and lat[7, 0] == 0.0
    eps = dyadic_eps_list(Grid(1, 8.0, 1024))
    assert eps[0] == 1.0 and eps[-1] == 1 / 64
    assert all(a == 2 * b for a, b in zip(eps, eps[1:]))


small = arrays(np.float64, 64, elements=st.floats(-10, 10))


@given(small, small, st.floats(-3, 3))
def test_pv_is_linear(u, v, c):
    g = Grid(1, 4.0, 64)
    K = hilbert_kernel()
    f, h = GridFunction(g, u), GridFunction(g, v)
    lhs = apply_pv(K, f * c + h).values
    rhs = c * apply_pv(K, f).values + apply_pv(K, h).values
    assert np.allclose(lhs, rhs, atol=1e-9)


@given(small, small)
def test_pv_odd_kernel_is_skew(u, v):
    g = Grid(1, 4.0, 64)
    K = hilbert_kernel()
    f, h = GridFunction(g, u), GridFunction(g, v)
    assert integrate(apply_pv(K, f) * h) == pytest.approx(-integrate(f * apply_pv(K, h)), abs=1e-8)


@given(st.integers(-20, 20))
def test_pv_commutes_with_translation(s):
    g = Grid(1, 8.0, 128)
    v = np.zeros(g.n)
    v[60:68] = 1.0
    K = hilbert_kernel()
    a = apply_pv(K, GridFunction(g, np.roll(v, s))).values
    b = apply_pv(K, GridFunction(g, v)).values
    # interior comparison avoids the box boundary
    lo, hi = 30, 98
    assert np.allclose(a[lo:hi], np.roll(b, s)[lo:hi], atol=1e-12)
