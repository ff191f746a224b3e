import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from localsieve import (
    B_FAMILY,
    Ball,
    BallFamily,
    Grid,
    GridFunction,
    ConfigurationError,
    GridMismatchError,
    InhomogeneousKernel,
    a_b_quantity,
    apply_inhomogeneous,
    apply_localized,
    bmo_norm,
    builtin_b,
    builtin_kernel,
    builtin_localizer,
    commutator_apply,
    commutator_certificate,
    commutator_l1_experiment,
    commutator_molecule_check,
    commutator_split,
    default_inhomogeneous_kernel,
    lp_norm,
    make_h1_atom,
    make_perez_h1b_atom,
    maximal_atom_experiment,
    random_atom_balls,
    sign_atom_identity,
    t_star_b_condition,
    t_star_function,
)


@pytest.fixture(scope="module")
def env():
    g = Grid(1, 8.0, 512)
    b = builtin_b("log", g)
    K = default_inhomogeneous_kernel()
    fam = BallFamily(g)
    ball = Ball((g.axis[256],), 0.125)
    return g, b, K, fam, ball


def test_builtin_b_family():
    g = Grid(1, 8.0, 256)
    assert set(B_FAMILY) == {"log", "cone", "random", "constant", "stepbump"}
    assert np.all(builtin_b("constant:2", g).values == 2.0)
    assert np.array_equal(builtin_b("cone", g).values, builtin_b("lipschitz", g).values)
    assert np.array_equal(builtin_b("random", g, seed=4).values, builtin_b("random", g, seed=4).values)
    with pytest.raises(ConfigurationError):
        builtin_b("nope", g)


def test_convolution_kernel_path_matches_localized(env):
    g, _, K, _, ball = env
    f = GridFunction(g, ball.mask(g).astype(float))
    expected = apply_localized(builtin_kernel("hilbert"), builtin_localizer("bump"), f)
    assert np.allclose(apply_inhomogeneous(K, f).values, expected.values, atol=1e-12)


def test_generic_inhomogeneous_kernel_matches_convolution(env):
    g, _, K, _, ball = env
    generic = InhomogeneousKernel(lambda x, y: K.convolution(x - y), dim=1)
    f = GridFunction(g, ball.mask(g).astype(float))
    assert np.allclose(apply_inhomogeneous(generic, f).values, apply_inhomogeneous(K, f).values, atol=1e-10)


def test_commutator_is_difference_of_split(env):
    g, b, K, _, ball = env
    a = make_perez_h1b_atom(g, ball, b, seed=0)
    first, second = commutator_split(b, K, a)
    assert np.allclose(commutator_apply(b, K, a).values, (first - second).values)
    # adding a constant to b leaves the commutator unchanged
    assert np.allclose(commutator_apply(b + 5.0, K, a).values, commutator_apply(b, K, a).values, atol=1e-12)


def test_commutator_with_constant_vanishes(env):
    g, _, K, _, ball = env
    a = make_h1_atom(g, ball, seed=0)
    assert np.allclose(commutator_apply(g.constant(3.0), K, a).values, 0.0, atol=1e-12)


def test_commutator_grid_mismatch(env):
    g, _, K, _, ball = env
    a = make_h1_atom(g, ball, seed=0)
    with pytest.raises(GridMismatchError):
        commutator_apply(builtin_b("log", Grid(1, 8.0, 256)), K, a)


def test_commutator_certificate(env):
    g, b, K, fam, ball = env
    a = make_perez_h1b_atom(g, ball, b, seed=0)
    bm = bmo_norm(b, fam).value
    cert = commutator_certificate(b, K, a, bm)
    assert cert.ratio == pytest.approx(cert.l1_norm / bm)
    assert cert.l1_norm == pytest.approx(lp_norm(commutator_apply(b, K, a), 1))


def test_l1_experiment_report(env):
    g, b, K, fam, _ = env
    rep = commutator_l1_experiment(b, K, 8, [0.125, 0.25], seed=0, family=fam)
    assert len(rep.rows) == 8
    assert rep.summary["trials"] == 8
    assert all(r["triangle_ok"] for r in rep.rows)
    again = commutator_l1_experiment(b, K, 8, [0.125, 0.25], seed=0, family=fam, threads=2)
    assert again.csv_text() == rep.csv_text()


def test_t_star_condition(env):
    g, b, K, _, ball = env
    cond = t_star_b_condition(K, b, ball)
    assert cond.passed
    assert cond.bound == pytest.approx(math.log(9.0))
    assert cond.oscillation <= cond.bound
    assert t_star_function(K, b, ball).grid == g
    with pytest.raises(ValueError):
        t_star_b_condition(K, b, Ball((0.0,), 2.0))


def test_molecule_check_cross_consistent(env):
    g, b, K, _, ball = env
    a = make_perez_h1b_atom(g, ball, b, seed=0)
    cert, cross = commutator_molecule_check(b, K, a, 0.3)
    assert cross["consistent"] and cross["condition_passed"]
    assert cert.multiple > 0


def test_maximal_experiment(env):
    _, b, _, fam, _ = env
    rep = maximal_atom_experiment(b, 4, [0.125], seed=0, family=fam)
    assert len(rep.rows) == 4
    for r in rep.rows:
        assert r["outside_2b"] == 0.0
        bmo = r["dict_l1"] / r["left"] - r["h1_abc"]
        assert r["right"] == pytest.approx(r["h1_abc"] / (r["dict_l1"] + bmo))
    with pytest.raises(ConfigurationError):
        maximal_atom_experiment(b * 0.0, 2, [0.125], family=fam)


def test_sign_atom_identity(env):
    _, b, _, _, ball = env
    lhs, rhs = sign_atom_identity(b, ball)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    with pytest.raises(ValueError):
        sign_atom_identity(b, Ball((0.0,), 1.0))


def test_a_b_quantity_finite(env):
    _, b, _, fam, _ = env
    value, ball = a_b_quantity(b, fam, max_balls=20)
    assert math.isfinite(value) and value > 0
    assert isinstance(ball, Ball)


def test_random_atom_balls_deterministic(env):
    _, _, _, fam, _ = env
    a = random_atom_balls(fam, [0.125, 0.25], 6, 3)
    assert a == random_atom_balls(fam, [0.125, 0.25], 6, 3)
    assert {x.radius for x in a} <= {0.125, 0.25}


@given(st.integers(0, 10_000), st.floats(-10, 10))
def test_commutator_ignores_constant_shift(seed, c):
    g = Grid(1, 4.0, 128)
    b = builtin_b("log", g)
    K = default_inhomogeneous_kernel()
    a = make_h1_atom(g, Ball((g.axis[64],), 0.25), seed=seed)
    assert np.allclose(commutator_apply(b + c, K, a).values, commutator_apply(b, K, a).values, atol=1e-9)


@given(st.integers(0, 10_000), st.floats(0.1, 10))
def test_commutator_scales_with_b(seed, t):
    g = Grid(1, 4.0, 128)
    b = builtin_b("log", g)
    K = default_inhomogeneous_kernel()
    a = make_h1_atom(g, Ball((g.axis[64],), 0.25), seed=seed)
    assert np.allclose(commutator_apply(b * t, K, a).values, t * commutator_apply(b, K, a).values, atol=1e-9)
