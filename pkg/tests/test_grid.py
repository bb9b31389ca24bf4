import numpy as np
import pytest

from fracdecay.grid import (make_grid, weighted_norm, indicator_mask,
                            GridFunction, ConfigurationError)


def test_xi_lattice_integers_for_2pi_box():
    g = make_grid(1, 2 * np.pi, 16)
    assert np.allclose(np.sort(g.xi_axis), np.arange(-8, 8))


def test_spacing_and_ximax():
    g = make_grid(1, 16.0, 16)
    assert g.dx == 1.0
    assert np.isclose(g.xi_max, np.pi)


def test_2d_point_count():
    g = make_grid(2, 100.0, 256)
    assert g.size == 65536
    assert g.abs_x().shape == (256, 256)


@pytest.mark.parametrize("bad", [(3, 10.0, 64), (1, -1.0, 64), (1, 10.0, 48), (1, 10.0, 8)])
def test_invalid_grid_rejected(bad):
    with pytest.raises(ConfigurationError):
        make_grid(*bad)


def test_weighted_norm_zero_and_const():
    g = make_grid(1, 16.0, 16)
    z = GridFunction(g, np.zeros(16, dtype=complex))
    assert weighted_norm(z, 2.0) == 0.0
    u = GridFunction(g, np.ones(16, dtype=complex))
    assert np.isclose(weighted_norm(u, 0.0), 4.0)


def test_weighted_norm_direct_summation_oracle():
    g = make_grid(1, 16.0, 16)
    u = GridFunction(g, np.ones(16, dtype=complex))
    oracle = np.sqrt(np.sum(g.dx / (1.0 + g.x_axis ** 2)))
    assert np.isclose(weighted_norm(u, 1.0), oracle, rtol=1e-14)


def test_weighted_norm_monotone_in_s(rng):
    g = make_grid(1, 32.0, 64)
    u = GridFunction(g, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    vals = [weighted_norm(u, s) for s in (0.0, 0.5, 1.0, 2.0, 3.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_indicator_counts():
    g = make_grid(1, 16.0, 16)
    assert indicator_mask(g, 3.0).values.sum() == 7
    assert indicator_mask(g, 100.0).values.sum() == 16
    # the x-lattice always contains the origin; radius 0 keeps exactly it
    assert indicator_mask(g, 0.0).values.sum() == 1
    # just below the smallest nonzero |x_i| the ball is still only the origin
    assert indicator_mask(g, 0.5 * g.dx).values.sum() == 1


def test_indicator_monotone():
    g = make_grid(1, 32.0, 64)
    m1 = indicator_mask(g, 3.0).values
    m2 = indicator_mask(g, 7.0).values
    assert np.all(m1 <= m2)


def test_parseval(rng):
    g = make_grid(1, 37.0, 128)
    u = GridFunction(g, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    xnorm = u.norm()
    uhat = g.fft(u.values)
    xinorm = np.sqrt(np.sum(np.abs(uhat) ** 2) * g.dx ** 2 * g.dxi / (2 * np.pi))
    assert abs(xnorm - xinorm) <= 1e-12 * xnorm
