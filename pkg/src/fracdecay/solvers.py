"""Shifted solves, eigendecomposition oracle, spectral functions, propagators,
and the power-iteration operator norm.

The Krylov path solves (P - z) u = f with preconditioned GMRES; the
preconditioner is the exact free resolvent (p0(xi) + |z| + 1)^(-1) applied
spectrally.  Boundary values (P - lam -+ i0)^(-1) are never solved directly:
experiments drive eps-sequences with a stagnation rule instead.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.special import jv

from .grid import GridFunction, ConfigurationError
from .operators import OperatorHandle, materialize_dense, DENSE_CAP

__all__ = ["SolveConfig", "SpectralData", "NumericalError", "solve_shifted",
           "resolvent_power_apply", "eig_small", "spectral_function_apply",
           "propagate", "operator_norm", "chebyshev_coefficients"]


class NumericalError(RuntimeError):
    """Solver failure; carries the residual history when available."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or []


@dataclass(frozen=True)
class SolveConfig:
    tol: float = 1e-8
    max_iterations: int = 4000
    method: str = "auto"           # 'auto' | 'krylov' | 'dense'
    preconditioner: bool = True

    def __post_init__(self):
        if not (0 < self.tol <= 1e-4):
            raise ConfigurationError("solver tolerance must lie in (0, 1e-4]")
        if self.method not in ("auto", "krylov", "dense"):
            raise ConfigurationError(f"unknown solve method {self.method!r}")


@dataclass
class SpectralData:
    """Full Hermitian eigendecomposition of a dense-materialized operator."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)   # orthonormal columns, real
    grid: object = None

    def project(self, vals):
        return self.eigenvectors.T @ np.asarray(vals).ravel()

    def synthesize(self, coef, like):
        return like.with_values((self.eigenvectors @ coef).reshape(like.grid.shape))


def _check_shift(z):
    z = complex(z)
    if z.imag == 0 and z.real >= 0:
        raise ConfigurationError(
            "shift on the nonnegative real axis: boundary values are reached "
            "only through eps-limits in experiments")
    return z


def solve_shifted(op, z, f, cfg=None, counter=None):
    """u with ||(P - z) u - f|| <= tol * ||f||."""
    cfg = cfg or SolveConfig()
    z = _check_shift(z)
    method = cfg.method
    if method == "auto":
        method = "dense" if op.grid.size <= DENSE_CAP else "krylov"
    if method == "dense":
        mat = _dense_cache(op)
        vals = np.linalg.solve(mat - z * np.eye(mat.shape[0]),
                               f.values.ravel().astype(complex))
        return f.with_values(vals.reshape(f.grid.shape))

    g = op.grid
    n = g.size
    shape_vec = (n,)

    def mv(v):
        arr = v.reshape(g.shape)
        return (op.apply_raw(arr) - z * arr).ravel()

    A = LinearOperator(shape=(n, n), matvec=mv, dtype=complex)
    M = None
    if cfg.preconditioner:
        free = 1.0 / (op.p0_table + abs(z) + 1.0)

        def pv(v):
            return g.ifft(free * g.fft(v.reshape(g.shape))).ravel()

        M = LinearOperator(shape=(n, n), matvec=pv, dtype=complex)

    residuals = []

    def cb(rk):
        residuals.append(float(rk))
        if counter is not None:
            counter.append(1)

    b = f.values.ravel().astype(complex)
    u, info = gmres(A, b, rtol=cfg.tol, atol=0.0, maxiter=cfg.max_iterations,
                    restart=80, M=M, callback=cb, callback_type="pr_norm")
    if info != 0:
        raise NumericalError(f"GMRES did not converge for shift z={z}", residuals)
    res = np.linalg.norm(mv(u) - b) / max(np.linalg.norm(b), 1e-300)
    if res > 10 * cfg.tol:
        raise NumericalError(f"residual {res:.2e} above tolerance for z={z}", residuals)
    return f.with_values(u.reshape(g.shape))


_DENSE_CACHE = {}


def _dense_cache(op):
    key = op.key()
    if key not in _DENSE_CACHE:
        if len(_DENSE_CACHE) > 8:
            _DENSE_CACHE.clear()
        _DENSE_CACHE[key] = materialize_dense(op)
    return _DENSE_CACHE[key]


def resolvent_power_apply(op, z, npow, f, cfg=None, counter=None):
    """(P - z)^(-npow) f by npow sequential solves; npow in 1..4."""
    if npow not in (1, 2, 3, 4):
        raise ConfigurationError("resolvent power must be in 1..4")
    out = f
    for _ in range(npow):
        out = solve_shifted(op, z, out, cfg, counter)
    return out


_EIG_CACHE = {}


def eig_small(op, cache=True):
    """Dense Hermitian eigendecomposition (the oracle for E(lam), E'(lam))."""
    key = op.key()
    if cache and key in _EIG_CACHE:
        return _EIG_CACHE[key]
    mat = _dense_cache(op)
    w, v = np.linalg.eigh(mat)
    sd = SpectralData(eigenvalues=w, eigenvectors=v, grid=op.grid)
    if cache:
        if len(_EIG_CACHE) > 6:
            _EIG_CACHE.clear()
        _EIG_CACHE[key] = sd
    return sd


def clear_caches():
    _EIG_CACHE.clear()
    _DENSE_CACHE.clear()


def spectral_function_apply(sd, f, u):
    """sum_i f(E_i) <v_i, u> v_i."""
    coef = sd.project(u.values)
    fe = np.asarray(f(sd.eigenvalues), dtype=complex)
    return sd.synthesize(fe * coef, u)


def chebyshev_coefficients(t, radius, tol=1e-13, max_terms=200000):
    """Coefficients c_k with e^(-i t (c + r s)) = e^(-i t c) sum_k c_k T_k(s).

    Valid for signed t through J_k(-x) = (-1)^k J_k(x).
    """
    tr = t * radius
    K = int(abs(tr) + 20 * abs(tr) ** (1.0 / 3.0) + 30)
    if K > max_terms:
        raise NumericalError(
            "Chebyshev degree overflow: lower the grid resolution (xi_max) or the time")
    k = np.arange(K + 1)
    c = 2.0 * (-1j) ** k * jv(k, tr)
    c[0] *= 0.5
    keep = np.nonzero(np.abs(c) > tol)[0]
    hi = int(keep[-1]) + 1 if len(keep) else 1
    return c[:hi]


def propagate(op, t, u, method="auto", sd=None, unitarity_tol=1e-8):
    """e^(-i t P) u; spectral method under the dense cap, else Chebyshev."""
    if method == "auto":
        method = "spectral" if op.grid.size <= DENSE_CAP else "chebyshev"
    if method == "spectral":
        sd = sd or eig_small(op)
        out = spectral_function_apply(sd, lambda E: np.exp(-1j * t * E), u)
    elif method == "chebyshev":
        bound = op.spectral_bound()
        center, radius = 0.5 * bound, 0.5 * bound * (1.0 + 1e-9) + 1e-12
        coef = chebyshev_coefficients(t, radius)
        # Clenshaw-free forward recurrence on shifted operator s = (P - c)/r
        vk_m1 = u.values.astype(complex)
        acc = coef[0] * vk_m1
        if len(coef) > 1:
            vk = (op.apply_raw(vk_m1) - center * vk_m1) / radius
            acc = acc + coef[1] * vk
            for k in range(2, len(coef)):
                vk_p1 = 2.0 * (op.apply_raw(vk) - center * vk) / radius - vk_m1
                acc = acc + coef[k] * vk_p1
                vk_m1, vk = vk, vk_p1
        out = u.with_values(np.exp(-1j * t * center) * acc)
    else:
        raise ConfigurationError(f"unknown propagation method {method!r}")
    n0, n1 = u.norm(), out.norm()
    if n0 > 0 and abs(n1 - n0) > unitarity_tol * n0:
        raise NumericalError(
            f"propagator lost unitarity: ||out||/||u|| = {n1/n0:.3e} at t={t}")
    return out


def operator_norm(apply_T, apply_Tstar, size, rng, tol=1e-4, maxit=50, stable=3):
    """Largest singular value of T via power iteration on T*T.

    Deterministic given the rng; stops after `stable` consecutive relative
    changes below tol.  Returns (sigma, iterations, converged).
    """
    v = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    v /= np.linalg.norm(v)
    sigma, run = 0.0, 0
    for it in range(1, maxit + 1):
        w = apply_Tstar(apply_T(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, it, True
        new = float(np.sqrt(nw))
        run = run + 1 if abs(new - sigma) <= tol * max(new, 1e-300) else 0
        sigma = new
        v = w / nw
        if run >= stable:
            return sigma, it, True
    return sigma, maxit, False
