"""Periodic-box discretization of R^n (n = 1 or 2) with FFT frequencies.

The box is [-L/2, L/2)^n sampled at N points per axis; the frequency
lattice is the standard FFT one, xi_j = 2*pi*j/L for j in [-N/2, N/2).
All norms use the rectangle rule with quadrature weight dx^n, which is
spectrally accurate for smooth periodic data.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Grid", "GridFunction", "make_grid", "weighted_norm", "indicator_mask",
           "ConfigurationError"]


class ConfigurationError(ValueError):
    """Invalid discretization or model parameters."""


@dataclass(frozen=True)
class Grid:
    """Periodic truncation of R^n. Immutable; safe to share across workers."""
    n: int
    length: float
    npts: int
    x_axis: np.ndarray = field(repr=False)
    xi_axis: np.ndarray = field(repr=False)

    @property
    def dx(self):
        return self.length / self.npts

    @property
    def dxi(self):
        return 2.0 * np.pi / self.length

    @property
    def xi_max(self):
        return np.pi * self.npts / self.length

    @property
    def size(self):
        return self.npts ** self.n

    @property
    def shape(self):
        return (self.npts,) * self.n

    def x_mesh(self):
        """Coordinate arrays, one per axis, each of shape `self.shape`."""
        if self.n == 1:
            return (self.x_axis,)
        return np.meshgrid(*([self.x_axis] * self.n), indexing="ij")

    def xi_mesh(self):
        if self.n == 1:
            return (self.xi_axis,)
        return np.meshgrid(*([self.xi_axis] * self.n), indexing="ij")

    def abs_x(self):
        xs = self.x_mesh()
        return np.sqrt(sum(x ** 2 for x in xs))

    def abs_xi(self):
        xis = self.xi_mesh()
        return np.sqrt(sum(s ** 2 for s in xis))

    def jap_x(self):
        """Japanese bracket <x> = (1+|x|^2)^(1/2) on the lattice."""
        xs = self.x_mesh()
        return np.sqrt(1.0 + sum(x ** 2 for x in xs))

    def fft(self, u):
        return np.fft.fftn(u.reshape(self.shape)) if self.n > 1 else np.fft.fft(u)

    def ifft(self, u):
        return np.fft.ifftn(u.reshape(self.shape)) if self.n > 1 else np.fft.ifft(u)

    def key(self):
        return (self.n, float(self.length), int(self.npts))


@dataclass(frozen=True)
class GridFunction:
    """Complex-valued lattice function; norms carry the weight dx^n."""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(
                f"value shape {self.values.shape} does not match grid {self.grid.shape}")

    def norm(self):
        return float(np.sqrt(self.grid.dx ** self.grid.n * np.sum(np.abs(self.values) ** 2)))

    def inner(self, other):
        """<self, other>, conjugate-linear in the first slot."""
        return complex(self.grid.dx ** self.grid.n *
                       np.sum(np.conj(self.values) * other.values))

    def with_values(self, values):
        return GridFunction(self.grid, np.asarray(values))


def make_grid(n, length, npts):
    """Build a periodic grid; N must be an even power of two >= 16."""
    if n not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {n}")
    if length <= 0:
        raise ConfigurationError(f"box length must be positive, got {length}")
    npts = int(npts)
    if npts < 16 or (npts & (npts - 1)) != 0:
        raise ConfigurationError(f"points per axis must be a power of two >= 16, got {npts}")
    dx = length / npts
    x_axis = -length / 2 + dx * np.arange(npts)
    xi_axis = 2.0 * np.pi * np.fft.fftfreq(npts, d=dx)
    return Grid(n=n, length=float(length), npts=npts, x_axis=x_axis, xi_axis=xi_axis)


def weighted_norm(u, s):
    """|| <x>^(-s) u || with the rectangle-rule quadrature; s = 0 is plain L2."""
    w = u.grid.jap_x() ** (-s) if s != 0 else 1.0
    vals = w * u.values
    return float(np.sqrt(u.grid.dx ** u.grid.n * np.sum(np.abs(vals) ** 2)))


def indicator_mask(grid, radius):
    """Sharp indicator of {|x| <= radius} as a 0/1 grid function."""
    if radius < 0:
        raise ConfigurationError("indicator radius must be nonnegative")
    vals = (grid.abs_x() <= radius).astype(float)
    return GridFunction(grid, vals)
