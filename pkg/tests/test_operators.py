import numpy as np
import pytest

from fracdecay.grid import make_grid, GridFunction, ConfigurationError
from fracdecay.model import ModelSpec, SymbolSpec, PotentialSpec
from fracdecay.operators import (OperatorHandle, DilationHandle, apply_commutator_PiA,
                                 composed_commutator_PiA, iterated_commutator_Bj,
                                 rescale_consistency_check, materialize_dense,
                                 dilate, DENSE_CAP)


def _gaussian(grid, width=1.0, k0=0.0):
    vals = np.exp(-grid.x_axis ** 2 / (2 * width ** 2)) * np.exp(1j * k0 * grid.x_axis)
    return GridFunction(grid, vals.astype(complex))


def test_plane_wave_eigenfunction(free_model, grid128):
    op = OperatorHandle(grid128, free_model)
    xi_j = grid128.xi_axis[5]
    u = GridFunction(grid128, np.exp(1j * xi_j * grid128.x_axis))
    out = op.apply(u)
    assert np.max(np.abs(out.values - xi_j ** 2 * u.values)) < 1e-12


def test_apply_matches_dense(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    mat = materialize_dense(op)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    assert np.allclose(op.apply(u).values, mat @ u.values, atol=1e-10)


def test_delta_column_value(reference_model, grid128):
    # P applied to the unit vector at x = 0: diagonal entry is mean of p0 plus V(0)
    op = OperatorHandle(grid128, reference_model)
    i0 = np.argmin(np.abs(grid128.x_axis))
    e = np.zeros(128, dtype=complex)
    e[i0] = 1.0
    out = op.apply(GridFunction(grid128, e))
    expected = np.mean(op.p0_table) + op.v_table[i0]
    assert np.isclose(out.values[i0].real, expected, rtol=1e-12)


def test_dilation_gaussian():
    g = make_grid(1, 32.0, 256)
    dil = DilationHandle(g)
    u = _gaussian(g)
    exact = -1j * (0.5 - g.x_axis ** 2) * np.exp(-g.x_axis ** 2 / 2)
    assert np.max(np.abs(dil.apply(u).values - exact)) < 1e-7


def test_dilation_on_locally_constant_plateau():
    g = make_grid(1, 32.0, 256)
    dil = DilationHandle(g)
    from fracdecay.funcalc import smooth_edge
    plateau = smooth_edge((8.0 - np.abs(g.x_axis)) / 4.0)   # 1 on |x| <= 4
    u = GridFunction(g, plateau.astype(complex))
    out = dil.apply(u)
    inner = np.abs(g.x_axis) <= 2.0
    assert np.max(np.abs(out.values[inner] + 0.5j)) < 1e-10


def test_dilation_symmetric(rng, grid128):
    dil = DilationHandle(grid128)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    val = u.inner(dil.apply(u))
    assert abs(val.imag) < 1e-10 * u.norm() ** 2


def test_commutator_closed_vs_composed(reference_model, grid128_fine):
    op = OperatorHandle(grid128_fine, reference_model)
    dil = DilationHandle(grid128_fine)
    u = _gaussian(grid128_fine, width=0.9, k0=0.3)
    c1 = apply_commutator_PiA(op, dil, u)
    c2 = composed_commutator_PiA(op, dil, u)
    assert np.max(np.abs(c1.values - c2.values)) <= 1e-6 * u.norm()


def test_commutator_free_euler_identity(free_model, grid128, rng):
    op = OperatorHandle(grid128, free_model)
    dil = DilationHandle(grid128)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    got = apply_commutator_PiA(op, dil, u)
    p0u = grid128.ifft(op.p0_table * grid128.fft(u.values))
    assert np.allclose(got.values, 2.0 * p0u, atol=1e-10)


def test_commutator_bessel_multiplier(grid128):
    model = ModelSpec(SymbolSpec("bessel", 0.5), PotentialSpec("zero"))
    op = OperatorHandle(grid128, model)
    dil = DilationHandle(grid128)
    xi_j = grid128.xi_axis[7]
    u = GridFunction(grid128, np.exp(1j * xi_j * grid128.x_axis))
    got = apply_commutator_PiA(op, dil, u)
    m = 0.5
    mult = 2 * m * xi_j ** 2 * (1 + xi_j ** 2) ** (m - 1)
    assert np.allclose(got.values, mult * u.values, atol=1e-10)


def test_bj_reduces_to_first_commutator(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model, mode="rescaled", lam=0.25)
    dil = DilationHandle(grid128, hbar=op.h)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    b1 = iterated_commutator_Bj(op, dil, 1, u)
    c = apply_commutator_PiA(op, dil, u)
    assert np.allclose(b1.values, 1j * c.values, atol=1e-12)


def test_bj_free_homogeneous_multiplier(free_model, grid128, rng):
    lam = 0.25
    op = OperatorHandle(grid128, free_model, mode="rescaled", lam=lam)
    dil = DilationHandle(grid128, hbar=op.h)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    for j in (1, 2, 3):
        got = iterated_commutator_Bj(op, dil, j, u)
        mult = (1j * op.h) ** j * 2.0 ** j * op.p0_table
        expected = grid128.ifft(mult * grid128.fft(u.values))
        assert np.allclose(got.values, expected, atol=1e-10)
        assert np.isfinite(got.norm())


def test_bj_nested_composition_oracle(reference_model, grid128_fine):
    # B_2 against the nested commutator of compositions on a localized state
    lam = 0.5
    op = OperatorHandle(grid128_fine, reference_model, mode="rescaled", lam=lam)
    dil = DilationHandle(grid128_fine, hbar=op.h)
    u = _gaussian(grid128_fine, width=0.8)

    def ad(v):
        return GridFunction(v.grid, dil.apply(op.apply(v)).values - op.apply(dil.apply(v)).values)

    nested = ad(ad(u))
    closed = iterated_commutator_Bj(op, dil, 2, u)
    assert np.max(np.abs(nested.values - closed.values)) <= 2e-5 * u.norm()


def test_bj_invalid_order(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model, mode="rescaled", lam=0.5)
    dil = DilationHandle(grid128, hbar=op.h)
    u = GridFunction(grid128, rng.standard_normal(128) + 0j)
    with pytest.raises(ConfigurationError):
        iterated_commutator_Bj(op, dil, 4, u)


def test_rescale_consistency(reference_model, grid128):
    u = _gaussian(grid128, width=3.0)
    assert rescale_consistency_check(reference_model, grid128, 1.0, u) == 0.0
    assert rescale_consistency_check(reference_model, grid128, 0.25, u) <= 1e-10


def test_rescale_free_exact(free_model, grid128, rng):
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    assert rescale_consistency_check(free_model, grid128, 0.37, u) <= 1e-12


def test_dilation_unitary(reference_model, grid128, rng):
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    big = dilate(reference_model, u, 0.25)
    assert np.isclose(big.norm(), u.norm(), rtol=1e-14)


def test_dense_hermitian_and_positive(reference_model, grid128):
    op = OperatorHandle(grid128, reference_model)
    mat = materialize_dense(op)
    assert np.max(np.abs(mat - mat.T)) <= 1e-12
    w = np.linalg.eigvalsh(mat)
    assert w[0] > 0


def test_dense_cap_enforced(reference_model):
    g = make_grid(1, 64.0, 8192)
    op = OperatorHandle(g, reference_model)
    with pytest.raises(ConfigurationError):
        materialize_dense(op)


def test_quadratic_form_nonnegative(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    for _ in range(5):
        u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
        val = u.inner(op.apply(u))
        assert abs(val.imag) < 1e-10 * u.norm() ** 2
        assert val.real >= 0


def test_mourre_form_positivity(reference_model, grid128, rng):
    # <u, [P, iA] u> >= c <u, p0(D) u> with C = 0 since -x.grad(V) >= 0
    op = OperatorHandle(grid128, reference_model)
    dil = DilationHandle(grid128)
    c_virial = 2.0
    for _ in range(5):
        width = rng.uniform(1.0, 4.0)
        u = _gaussian(grid128, width=width, k0=rng.uniform(-2, 2))
        lhs = np.real(u.inner(apply_commutator_PiA(op, dil, u)))
        p0u = grid128.ifft(op.p0_table * grid128.fft(u.values))
        rhs = np.real(np.vdot(u.values, p0u)) * grid128.dx
        assert lhs >= c_virial * rhs - 1e-8


def test_rescaled_tables(reference_model, grid128):
    # P_h = -h^2 Lap + V_h at mu = k = m = 1, lam = 1/4 -> h = 1/2
    lam = 0.25
    op = OperatorHandle(grid128, reference_model, mode="rescaled", lam=lam)
    assert np.isclose(op.h, 0.5)
    assert np.allclose(op.p0_table, op.h ** 2 * grid128.xi_axis ** 2)
    expected_v = (1.0 / lam) * (1 + (grid128.x_axis / lam) ** 2) ** -0.5
    assert np.allclose(op.v_table, expected_v)
