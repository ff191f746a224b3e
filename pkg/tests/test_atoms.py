import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from localsieve import (
    ATOM_KINDS,
    Atom,
    Ball,
    BallFamily,
    Grid,
    GridFunction,
    abc_cancellation_product,
    builtin_b,
    decompose_approx_atom,
    ell_one_bound,
    family_constant,
    integrate,
    make_approx_h1b_atom,
    make_h1_atom,
    make_perez_h1b_atom,
    sign_atom,
    validate_atom,
    validate_molecule,
)


@pytest.fixture(scope="module")
def setup():
    g = Grid(1, 8.0, 1024)
    b = builtin_b("log", g)
    ball = Ball((g.axis[512],), 0.125)
    return g, b, ball


def test_kinds():
    assert set(ATOM_KINDS) == {"goldberg", "approximate12", "perezH1b", "approxH1b"}


def test_atom_support_is_enforced(setup):
    g, _, ball = setup
    with pytest.raises(ValueError):
        Atom(g.constant(1.0), ball, "approximate12")
    with pytest.raises(ValueError):
        Atom(GridFunction(g, ball.mask(g).astype(float)), ball, "h1")


def test_h1_atom_certificate(setup):
    g, _, ball = setup
    a = make_h1_atom(g, ball, seed=1)
    cert = validate_atom(a)
    assert cert.ok
    assert cert.ratios["size"] <= 1 + 1e-12
    assert abs(integrate(a.values)) < 1e-12


def test_perez_atom_cancels_b(setup):
    g, b, ball = setup
    a = make_perez_h1b_atom(g, ball, b, seed=1)
    cert = validate_atom(a, b)
    assert cert.ok
    assert abs(integrate(a.values * b)) < 1e-12


def test_approx_atom_uses_budgets(setup):
    g, b, ball = setup
    cb = family_constant(b, BallFamily(g), [ball])
    a = make_approx_h1b_atom(g, ball, b, seed=2, c_b=cb)
    cert = validate_atom(a, b, c_b=cb)
    assert cert.ok
    assert cert.ratios["mean"] == pytest.approx(1.0)
    assert cert.ratios["b_moment"] == pytest.approx(0.5)


def test_ell_one_bound_frozen():
    assert ell_one_bound(0.125, 1) == pytest.approx(6.640956906507349, rel=1e-14)
    # 3 + 2 (log2(8) + 1) / log(9)
    assert ell_one_bound(0.125, 1) == pytest.approx(3 + 8 / math.log(9))


def test_decomposition_reconstructs(setup):
    g, b, ball = setup
    cb = family_constant(b, BallFamily(g), [ball])
    a = make_approx_h1b_atom(g, ball, b, seed=2, c_b=cb)
    res = decompose_approx_atom(a, b)
    assert res.k == 3
    assert res.bound == pytest.approx(ell_one_bound(0.125, 1))
    assert res.ell_one_sum <= res.bound
    assert np.abs(res.reconstruct().values - a.values.values).max() < 1e-12
    assert all(validate_atom(p, b, c_b=cb).ok for p in res.atoms)


def test_decomposition_rejects_large_ball(setup):
    g, b, _ = setup
    a = make_approx_h1b_atom(g, Ball((0.0,), 1.0), b)
    with pytest.raises(ValueError):
        decompose_approx_atom(a, b)


def test_sign_atom_pairing(setup):
    g, b, ball = setup
    a = sign_atom(ball, b)
    assert validate_atom(a, b).ok
    m = ball.mask(g)
    osc = np.abs(b.values[m] - b.values[m].mean()).mean()
    # pairing with b recovers the mean oscillation, up to the sign-mean correction
    assert integrate(a.values * b) == pytest.approx(osc, rel=1e-12)


def test_abc_product_holder(setup):
    g, b, ball = setup
    rep = abc_cancellation_product(make_perez_h1b_atom(g, ball, b, seed=1), b)
    for s in (1.0, 1.5):
        assert rep.norms[s] <= rep.holder[s] * (1 + 1e-12)
        assert rep.norms[s] <= rep.bmo_bound[s]


def test_molecule_of_an_atom(setup):
    g, _, ball = setup
    a = make_h1_atom(g, ball, seed=1)
    cert = validate_molecule(a.values, ball, 1.5, 0.75)
    assert cert.passed and cert.tail_converging
    assert cert.multiple == max(cert.ratios.values())


def test_molecule_rejects_wide_function(setup):
    g, _, ball = setup
    wide = g.sample(lambda p: np.exp(-np.abs(p[..., 0])) * np.sign(p[..., 0]))
    assert not validate_molecule(wide * 10, ball, 1.5, 0.75).passed


@given(st.integers(0, 10_000), st.sampled_from([2.0 ** -k for k in range(2, 6)]),
       st.integers(80, 170))
def test_decomposition_properties(seed, r, centre):
    g = Grid(1, 4.0, 256)
    b = builtin_b("log", g)
    ball = Ball((g.axis[centre],), r)
    cb = family_constant(b, BallFamily(g), [ball])
    a = make_approx_h1b_atom(g, ball, b, seed=seed, c_b=cb)
    res = decompose_approx_atom(a, b)
    assert res.ell_one_sum <= res.bound
    assert np.abs(res.reconstruct().values - a.values.values).max() < 1e-10
    # pieces on small balls cancel; the terminal piece lives on a unit ball
    for p in res.atoms:
        if p.ball.is_small:
            assert abs(integrate(p.values)) < 1e-10
        else:
            assert p.ball.radius == 1.0


@given(st.integers(0, 10_000))
def test_perez_atoms_always_certify(seed):
    g = Grid(1, 4.0, 256)
    b = builtin_b("log", g)
    a = make_perez_h1b_atom(g, Ball((g.axis[100],), 0.25), b, seed=seed)
    assert validate_atom(a, b).ok
