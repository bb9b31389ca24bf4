import numpy as np
import pytest

from fracdecay.grid import ConfigurationError
from fracdecay.model import (SymbolSpec, PotentialSpec, ModelSpec, p0_eval,
                             validate_symbol, validate_potential,
                             radial_derivative, potential_radial_derivative,
                             potential_taylor, symbol_taylor, bracket_power_taylor)


def test_p0_eval_examples():
    assert p0_eval(SymbolSpec("power", 1), 2.0) == 4.0
    assert np.isclose(p0_eval(SymbolSpec("bessel", 1.0), 2.0), 4.0)
    assert np.isclose(p0_eval(SymbolSpec("bessel", 0.5), 2.0), np.sqrt(5.0) - 1.0)


def test_degeneracy_indices():
    assert SymbolSpec("power", 3).k == 3
    assert SymbolSpec("bessel", 0.5).k == 1
    assert SymbolSpec("custom", 0, coeffs=(0.0, 2.0, 1.0)).k == 2


def test_validate_symbol_power_virial_exact():
    rep = validate_symbol(SymbolSpec("power", 1))
    assert rep.ok
    assert np.isclose(rep.constants["virial_ratio_inf"], 2.0)
    rep2 = validate_symbol(SymbolSpec("power", 2))
    assert np.isclose(rep2.constants["virial_ratio_inf"], 4.0)


def test_validate_symbol_bessel():
    rep = validate_symbol(SymbolSpec("bessel", 0.5))
    assert rep.ok
    assert abs(rep.constants["small_xi_slope"] - 2.0) <= 0.05
    # closed-form virial ratio: 2m|xi|^2(1+|xi|^2)^(m-1) / ((1+|xi|^2)^m - 1)
    xi = np.geomspace(1e-3, 32, 400)
    m = 0.5
    ratio = 2 * m * xi ** 2 * (1 + xi ** 2) ** (m - 1) / ((1 + xi ** 2) ** m - 1)
    assert np.isclose(rep.constants["virial_ratio_inf"], ratio.min(), rtol=1e-10)


def test_validate_symbol_for_documented_range():
    for m in (1, 2, 3):
        assert validate_symbol(SymbolSpec("power", m)).ok
    for m in (0.5, 1.0, 1.7):
        assert validate_symbol(SymbolSpec("bessel", m)).ok


def test_validate_potential_constants():
    rep = validate_potential(PotentialSpec("repulsive", 1.0, 1.0))
    assert rep.ok
    assert np.isclose(rep.constants["C1"], 1.0)
    assert np.isclose(rep.constants["C2"], 0.5)
    assert rep.constants["R0"] == 1.0
    rep2 = validate_potential(PotentialSpec("repulsive", 2.0, 1.0))
    assert np.isclose(rep2.constants["C1"], 2.0)


def test_attractive_contrast_mode():
    rep = validate_potential(PotentialSpec("attractive", 1.0, 1.0))
    assert not rep.ok
    assert rep.contrast_mode


def test_mu_range_enforced():
    with pytest.raises(ConfigurationError):
        ModelSpec(SymbolSpec("power", 1), PotentialSpec("repulsive", 1.0, 3.0))
    model = ModelSpec(SymbolSpec("power", 2), PotentialSpec("repulsive", 1.0, 3.0))
    assert 0 < model.mu_prime < 2


def test_p0_zero_only_at_origin():
    xi = np.geomspace(1e-3, 32, 200)
    for spec in (SymbolSpec("power", 2), SymbolSpec("bessel", 0.7),
                 SymbolSpec("custom", 0, coeffs=(1.0, 0.5))):
        assert np.all(p0_eval(spec, xi) > 0)
        assert p0_eval(spec, 0.0) == 0.0


def _fd(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_radial_derivative_matches_finite_differences():
    xi = np.linspace(0.3, 4.0, 17)
    for spec in (SymbolSpec("power", 2), SymbolSpec("bessel", 0.6),
                 SymbolSpec("custom", 0, coeffs=(0.3, 1.2))):
        exact = radial_derivative(spec, 1, xi ** 2)
        fd = xi * _fd(lambda s: p0_eval(spec, s), xi)
        assert np.allclose(exact, fd, rtol=1e-7, atol=1e-9)


def test_potential_radial_derivative_identity():
    pot = PotentialSpec("repulsive", 1.3, 0.8)
    x = np.linspace(-5, 5, 31)
    got = potential_radial_derivative(pot, 1, x ** 2)
    expected = -1.3 * 0.8 * x ** 2 * (1 + x ** 2) ** (-0.8 / 2 - 1)
    assert np.allclose(got, expected, rtol=1e-12)
    assert np.all(-got >= 0)


def test_taylor_tables_vs_finite_differences():
    x = np.linspace(-3, 3, 13)
    tab = bracket_power_taylor(x, 4, -0.5)
    f = lambda s: (1 + s ** 2) ** -0.5
    assert np.allclose(tab[0], f(x), rtol=1e-12)
    assert np.allclose(tab[1], _fd(f, x), rtol=1e-7, atol=1e-9)
    d2 = (f(x + 1e-4) - 2 * f(x) + f(x - 1e-4)) / 1e-8
    assert np.allclose(2 * tab[2], d2, rtol=1e-5, atol=1e-6)


def test_symbol_taylor_power_is_polynomial():
    xi = np.linspace(-2, 2, 9)
    tab = symbol_taylor(SymbolSpec("power", 2), xi, 5)
    assert np.allclose(tab[0], xi ** 4)
    assert np.allclose(tab[1], 4 * xi ** 3)
    assert np.allclose(tab[4], 1.0)
    assert np.allclose(tab[5], 0.0)


def test_potential_taylor_zero_sign():
    tab = potential_taylor(PotentialSpec("zero"), np.linspace(-1, 1, 5), 3)
    assert np.all(tab == 0)
