import numpy as np
import pytest

from fracdecay.grid import make_grid, GridFunction
from fracdecay.model import ModelSpec, SymbolSpec, PotentialSpec
from fracdecay.operators import OperatorHandle
from fracdecay.solvers import eig_small, spectral_function_apply
from fracdecay.funcalc import (BumpFunction, AlmostAnalyticExtension, QuadSpec,
                               hs_apply, check_weighted_resolvent, smooth_edge,
                               edge_taylor)


@pytest.fixture(scope="module")
def setup(reference_model):
    grid = make_grid(1, 64.0, 128)
    op = OperatorHandle(grid, reference_model)
    sd = eig_small(op)
    psi = BumpFunction.mourre_window()
    return grid, op, sd, psi


def test_smooth_edge_shape():
    u = np.array([-1.0, 0.0, 1e-6, 0.5, 1.0 - 1e-6, 1.0, 3.0])
    e = smooth_edge(u)
    assert np.all(e >= 0) and np.all(e <= 1)
    assert e[0] == 0 and e[1] == 0 and e[-1] == 1
    assert 0 < e[3] < 1


def test_edge_taylor_vs_finite_difference():
    u = np.linspace(0.15, 0.85, 11)
    tab = edge_taylor(u, 3)
    h = 1e-5
    fd1 = (smooth_edge(u + h) - smooth_edge(u - h)) / (2 * h)
    assert np.allclose(tab[1], fd1, rtol=1e-7, atol=1e-9)
    fd2 = (smooth_edge(u + h) - 2 * smooth_edge(u) + smooth_edge(u - h)) / h ** 2
    assert np.allclose(2 * tab[2], fd2, rtol=1e-4, atol=1e-5)


def test_bump_support_and_plateau():
    psi = BumpFunction.mourre_window()
    s = np.array([0.49, 0.5, 0.75, 1.0, 1.25, 1.5, 1.51])
    v = psi(s)
    assert v[0] == 0 and v[1] == 0 and v[-2] == 0 and v[-1] == 0
    assert v[2] == 1 and v[3] == 1 and v[4] == 1
    mid = psi(np.linspace(0.55, 1.45, 101))
    assert np.all(mid >= 0) and np.all(mid <= 1)


def test_standard_bump_profile():
    b = BumpFunction(-1.0, 1.0, profile="bump")
    assert np.isclose(b(0.0), 1.0)
    assert b(np.array([-1.0, 1.0])).max() == 0.0
    tab = b.taylor(np.linspace(-0.8, 0.8, 9), 2)
    h = 1e-5
    x = np.linspace(-0.8, 0.8, 9)
    fd = (b(x + h) - b(x - h)) / (2 * h)
    assert np.allclose(tab[1], fd, rtol=1e-6, atol=1e-8)


def test_extension_transfer_accuracy():
    psi = BumpFunction.mourre_window()
    ext = AlmostAnalyticExtension(psi)
    E = np.linspace(0.0, 2.5, 1501)
    assert np.max(np.abs(ext.transfer(E) - psi(E))) <= 1e-5
    tail = np.geomspace(2.5, 1e4, 100)
    assert np.max(np.abs(ext.transfer(tail))) <= 1e-8


def test_dbar_vanishes_like_yM():
    psi = BumpFunction.mourre_window()
    ext = AlmostAnalyticExtension(psi)
    M = ext.quad.taylor_degree
    x = np.array([0.6, 0.7, 1.3])
    v1 = ext.dbar_on_axis_factor(x, ext.height / 8)
    v2 = ext.dbar_on_axis_factor(x, ext.height / 16)
    assert np.allclose(v1 / v2, 2.0 ** M, rtol=1e-10)


def test_hs_vs_eigendecomposition(setup, rng):
    grid, op, sd, psi = setup
    u = GridFunction(grid, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    lam = 0.25
    exact = spectral_function_apply(sd, lambda E: psi(E / lam), u)
    out, info = hs_apply(op, psi, lam, u, solver="transfer")
    assert np.max(np.abs(out.values - exact.values)) <= 1e-5 * u.norm()
    out2, info2 = hs_apply(op, psi, lam, u, solver="lanczos")
    assert np.max(np.abs(out2.values - exact.values)) <= 1e-5 * u.norm()
    assert info["nodes"] == info2["nodes"]


def test_hs_window_below_spectrum(setup, rng):
    grid, op, sd, psi = setup
    neg = BumpFunction(-3.0, -1.5, -2.6, -1.9)
    u = GridFunction(grid, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    out, _ = hs_apply(op, neg, 1.0, u)
    assert out.norm() <= 1e-5 * u.norm()


def test_hs_linearity_and_commutes_with_p(setup, rng):
    grid, op, sd, psi = setup
    lam = 0.25
    u = GridFunction(grid, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    v = GridFunction(grid, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    a, b = 0.7 - 0.2j, 1.1j
    lin = hs_apply(op, psi, lam, u.with_values(a * u.values + b * v.values))[0]
    sep = a * hs_apply(op, psi, lam, u)[0].values + b * hs_apply(op, psi, lam, v)[0].values
    assert np.max(np.abs(lin.values - sep)) <= 1e-10 * (u.norm() + v.norm())
    pu = op.apply(hs_apply(op, psi, lam, u)[0])
    up = hs_apply(op, psi, lam, op.apply(u))[0]
    assert np.max(np.abs(pu.values - up.values)) <= 1e-6 * op.apply(u).norm()


def test_hs_aposteriori_estimates(setup, rng):
    grid, op, sd, psi = setup
    lam = 0.25
    u = GridFunction(grid, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    base, info = hs_apply(op, psi, lam, u)
    est = info["error_estimate"]
    half = hs_apply(op, psi, lam, u, quad=QuadSpec(delta_min=5e-4))[0]
    assert np.linalg.norm(half.values - base.values) * grid.dx ** 0.5 <= est
    for M in (6, 10):
        other = hs_apply(op, psi, lam, u, quad=QuadSpec(taylor_degree=M))[0]
        assert np.linalg.norm(other.values - base.values) * grid.dx ** 0.5 <= 2 * est


def test_weighted_resolvent_spectral_theorem(setup, rng):
    grid, op, sd, psi = setup
    r = check_weighted_resolvent(op, 0, 0.5, 1j, rng, sd=sd)
    assert r <= 1.0 + 1e-3


def test_weighted_resolvent_free_closed_form(free_model, rng):
    grid = make_grid(1, 64.0, 128)
    op = OperatorHandle(grid, free_model)
    sd = eig_small(op)
    lam, z = 0.5, 0.3 + 0.8j
    r = check_weighted_resolvent(op, 0, lam, z, rng, sd=sd)
    closed = np.max(1.0 / np.abs(op.p0_table - lam * z)) * lam * abs(z.imag)
    assert np.isclose(r, closed, rtol=1e-3)


def test_weighted_resolvent_bounded_sample(setup, rng):
    grid, op, sd, psi = setup
    ratios = [check_weighted_resolvent(op, L, lam, z, rng, sd=sd)
              for L in (1, 2)
              for lam in (0.25, 1.0)
              for z in (1j, 0.5 + 0.5j, 1.5 + 0.2j)]
    assert np.all(np.isfinite(ratios))
    assert max(ratios) < 10.0
