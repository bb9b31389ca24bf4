import numpy as np
import pytest

from fracdecay.grid import make_grid, GridFunction, ConfigurationError
from fracdecay.model import ModelSpec, SymbolSpec, PotentialSpec
from fracdecay.operators import OperatorHandle
from fracdecay.solvers import (SolveConfig, solve_shifted, resolvent_power_apply,
                               eig_small, spectral_function_apply, propagate,
                               operator_norm, clear_caches)


@pytest.fixture(autouse=True)
def _fresh_caches():
    yield
    clear_caches()


def test_solve_free_plane_wave(free_model, grid128):
    op = OperatorHandle(grid128, free_model)
    xi_j = grid128.xi_axis[9]
    u = GridFunction(grid128, np.exp(1j * xi_j * grid128.x_axis))
    z = 0.3 + 0.7j
    out = solve_shifted(op, z, u, SolveConfig(method="krylov"))
    assert np.max(np.abs(out.values - u.values / (xi_j ** 2 - z))) < 1e-6


def test_dense_vs_krylov(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    f = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    cfg = SolveConfig(tol=1e-10, method="krylov")
    u1 = solve_shifted(op, 1j, f, cfg)
    u2 = solve_shifted(op, 1j, f, SolveConfig(method="dense"))
    assert np.max(np.abs(u1.values - u2.values)) <= 10 * 1e-10 * f.norm()


def test_resolvent_identity(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    f = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    z, w = 0.5 + 1j, -0.8 + 0.25j
    cfg = SolveConfig(tol=1e-10)
    rz = solve_shifted(op, z, f, cfg)
    rw = solve_shifted(op, w, f, cfg)
    rzw = solve_shifted(op, z, rw, cfg)
    lhs = rz.values - rw.values
    rhs = (z - w) * rzw.values
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * f.norm()


def test_real_nonnegative_shift_rejected(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    f = GridFunction(grid128, rng.standard_normal(128) + 0j)
    with pytest.raises(ConfigurationError):
        solve_shifted(op, 0.5, f)
    solve_shifted(op, -0.5, f)   # negative real axis is in the resolvent set


def test_preconditioner_reduces_iterations(reference_model, rng):
    g = make_grid(1, 64.0, 256)
    op = OperatorHandle(g, reference_model)
    f = GridFunction(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    with_pc, without_pc = [], []
    solve_shifted(op, 2 + 0.5j, f, SolveConfig(method="krylov"), counter=with_pc)
    solve_shifted(op, 2 + 0.5j, f,
                  SolveConfig(method="krylov", preconditioner=False), counter=without_pc)
    assert len(with_pc) < len(without_pc)


def test_resolvent_power(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    f = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    cfg = SolveConfig(tol=1e-10)
    second = resolvent_power_apply(op, 1j, 2, f, cfg)
    once = solve_shifted(op, 1j, f, cfg)
    twice = solve_shifted(op, 1j, once, cfg)
    assert np.allclose(second.values, twice.values)
    sd = eig_small(op)
    oracle = spectral_function_apply(sd, lambda E: (E - 1j) ** -2.0, f)
    assert np.max(np.abs(second.values - oracle.values)) <= 1e-7 * f.norm()


def test_eig_small_quality(reference_model, grid128):
    op = OperatorHandle(grid128, reference_model)
    sd = eig_small(op)
    from fracdecay.operators import materialize_dense
    mat = materialize_dense(op)
    res = mat @ sd.eigenvectors - sd.eigenvectors * sd.eigenvalues[None, :]
    assert np.max(np.abs(res)) <= 1e-8
    gram = sd.eigenvectors.T @ sd.eigenvectors
    assert np.max(np.abs(gram - np.eye(128))) <= 1e-10
    assert sd.eigenvalues[0] > 0


def test_free_eigenvalues_are_multipliers(free_model, grid128):
    op = OperatorHandle(grid128, free_model)
    sd = eig_small(op)
    assert np.allclose(np.sort(sd.eigenvalues), np.sort(op.p0_table), atol=1e-10)


def test_attractive_negative_eigenvalue(attractive_model):
    g = make_grid(1, 50.0, 512)
    op = OperatorHandle(g, attractive_model)
    sd = eig_small(op)
    assert sd.eigenvalues[0] < 0
    # variational witness: a Gaussian trial state has negative Rayleigh quotient
    width = 1.2
    u = GridFunction(g, np.exp(-g.x_axis ** 2 / (2 * width ** 2)).astype(complex))
    q = np.real(u.inner(op.apply(u))) / u.norm() ** 2
    assert q < 0
    assert sd.eigenvalues[0] <= q


def test_spectral_function_examples(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    sd = eig_small(op)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    assert np.allclose(spectral_function_apply(sd, lambda E: np.ones_like(E), u).values,
                       u.values, atol=1e-10)
    proj = spectral_function_apply(sd, lambda E: (E < 0).astype(float), u)
    assert proj.norm() <= 1e-12


def test_propagate_identity_and_phase(free_model, grid128, rng):
    op = OperatorHandle(grid128, free_model)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    out0 = propagate(op, 0.0, u, method="spectral")
    assert np.allclose(out0.values, u.values, atol=1e-12)
    xi_j = grid128.xi_axis[11]
    pw = GridFunction(grid128, np.exp(1j * xi_j * grid128.x_axis))
    out = propagate(op, 2.5, pw, method="chebyshev")
    assert np.max(np.abs(out.values - np.exp(-1j * 2.5 * xi_j ** 2) * pw.values)) < 1e-8


def test_chebyshev_vs_spectral(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    a = propagate(op, 5.0, u, method="spectral")
    b = propagate(op, 5.0, u, method="chebyshev")
    assert np.max(np.abs(a.values - b.values)) <= 1e-7 * u.norm()


def test_propagate_unitarity(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    u = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    for t in (0.7, 3.0, 11.0):
        out = propagate(op, t, u, method="chebyshev")
        assert abs(out.norm() - u.norm()) <= 1e-8 * u.norm()


def test_adjoint_symmetry(reference_model, grid128, rng):
    op = OperatorHandle(grid128, reference_model)
    cfg = SolveConfig(tol=1e-10)
    f = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    g_ = GridFunction(grid128, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    z = 0.4 + 0.9j
    lhs = g_.inner(solve_shifted(op, z, f, cfg))
    rhs = np.conj(f.inner(solve_shifted(op, np.conj(z), g_, cfg)))
    assert abs(lhs - rhs) <= 1e-7 * f.norm() * g_.norm()


def test_operator_norm_diagonal(rng):
    d = np.linspace(0.1, 2.0, 50)
    apply_T = lambda v: d * v
    sigma, _, ok = operator_norm(apply_T, apply_T, 50, rng, tol=1e-6, maxit=500)
    assert ok
    assert np.isclose(sigma, 2.0, rtol=1e-3)
