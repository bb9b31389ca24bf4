"""Symbol and potential specifications with validation.

The principal symbol p0 is one of
  * power:  p0(xi) = |xi|^(2m), integer m >= 1, degeneracy k = m;
  * bessel: p0(xi) = (1+|xi|^2)^m - 1, real m > 0, degeneracy k = 1;
  * custom: even polynomial in |xi|^2 with nonnegative coefficients,
    degeneracy k = lowest power present.
The potential is V(x) = sign * c * <x>^(-mu).  Validation certifies the
ellipticity/virial properties of p0 and the repulsivity bounds of V with
empirical constants.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .grid import ConfigurationError

__all__ = ["SymbolSpec", "PotentialSpec", "ValidationReport", "ModelSpec",
           "p0_eval", "validate_symbol", "validate_potential",
           "power_law_fit_xy"]


@dataclass(frozen=True)
class SymbolSpec:
    kind: str                  # 'power' | 'bessel' | 'custom'
    m: float
    k: int = 0                 # degeneracy index at xi = 0; derived when 0
    coeffs: tuple = ()         # custom: coefficients of |xi|^2, |xi|^4, ...
    virial_c: float = 0.0      # filled by validate_symbol

    def __post_init__(self):
        if self.kind not in ("power", "bessel", "custom"):
            raise ConfigurationError(f"unknown symbol kind {self.kind!r}")
        if self.kind == "power":
            if self.m < 1 or self.m != int(self.m):
                raise ConfigurationError("power symbol needs integer m >= 1")
            object.__setattr__(self, "k", int(self.m))
        elif self.kind == "bessel":
            if self.m <= 0:
                raise ConfigurationError("bessel symbol needs m > 0")
            object.__setattr__(self, "k", 1)
        else:
            if not self.coeffs or any(c < 0 for c in self.coeffs) or all(c == 0 for c in self.coeffs):
                raise ConfigurationError("custom symbol needs nonnegative coefficients, not all zero")
            lowest = next(q + 1 for q, c in enumerate(self.coeffs) if c > 0)
            object.__setattr__(self, "k", lowest)
            object.__setattr__(self, "m", float(len(self.coeffs)))

    def key(self):
        return (self.kind, float(self.m), tuple(self.coeffs))


@dataclass(frozen=True)
class PotentialSpec:
    sign: str                  # 'repulsive' | 'attractive' | 'zero'
    c: float = 1.0
    mu: float = 1.0
    # empirical certificates for the repulsivity bounds, filled by validation
    C1: float = 0.0
    C2: float = 0.0
    R0: float = 0.0

    def __post_init__(self):
        if self.sign not in ("repulsive", "attractive", "zero"):
            raise ConfigurationError(f"unknown potential sign {self.sign!r}")
        if self.sign != "zero" and self.c <= 0:
            raise ConfigurationError("potential amplitude c must be positive")

    def amplitude(self):
        if self.sign == "zero":
            return 0.0
        return self.c if self.sign == "repulsive" else -self.c

    def key(self):
        return (self.sign, float(self.c), float(self.mu))


@dataclass(frozen=True)
class ModelSpec:
    symbol: SymbolSpec
    potential: PotentialSpec

    def __post_init__(self):
        mu, k = self.potential.mu, self.symbol.k
        if self.potential.sign != "zero" and not (0 < mu < 2 * k):
            raise ConfigurationError(
                f"decay exponent must satisfy 0 < mu < 2k = {2*k}, got mu = {mu}")

    @property
    def mu_prime(self):
        """mu' = mu/k, always in (0, 2) for validated specs."""
        return self.potential.mu / self.symbol.k

    def key(self):
        return self.symbol.key() + self.potential.key()


@dataclass
class ValidationReport:
    ok: bool
    constants: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    contrast_mode: bool = False


# -------------------- symbol evaluation and derivatives --------------------

def p0_eval(sym, xi):
    """Evaluate p0 at |xi| given componentwise or as |xi| array; exact formulas."""
    r2 = _abs2(xi)
    if sym.kind == "power":
        return r2 ** sym.m
    if sym.kind == "bessel":
        return (1.0 + r2) ** sym.m - 1.0
    out = np.zeros_like(r2)
    for q, c in enumerate(sym.coeffs):
        out = out + c * r2 ** (q + 1)
    return out


def _abs2(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim and xi.shape[-1] in (1, 2) and xi.ndim > 1:
        return np.sum(xi ** 2, axis=-1)
    return xi ** 2 if xi.ndim == 0 else np.asarray(xi) ** 2


def euler_pow(j, m_exp, r):
    """(2r d/dr)^j (1+r)^m for j in 0..3 (closed forms)."""
    r = np.asarray(r, dtype=float)
    m = m_exp
    if j == 0:
        return (1.0 + r) ** m
    if j == 1:
        return 2 * m * r * (1.0 + r) ** (m - 1)
    if j == 2:
        return 4 * m * r * (1.0 + r) ** (m - 1) + 4 * m * (m - 1) * r ** 2 * (1.0 + r) ** (m - 2)
    if j == 3:
        return (8 * m * r * (1.0 + r) ** (m - 1)
                + 24 * m * (m - 1) * r ** 2 * (1.0 + r) ** (m - 2)
                + 8 * m * (m - 1) * (m - 2) * r ** 3 * (1.0 + r) ** (m - 3))
    raise ConfigurationError("euler_pow supports orders 0..3")


def radial_derivative(sym, j, xi_abs2):
    """(xi . grad)^j p0 evaluated at |xi|^2; j in 0..3.

    For the power symbol this is (2m)^j p0; for bessel the Euler closed
    forms; for custom polynomials a termwise Euler operator.
    """
    r = np.asarray(xi_abs2, dtype=float)
    if sym.kind == "power":
        return (2.0 * sym.m) ** j * r ** sym.m
    if sym.kind == "bessel":
        if j == 0:
            return (1.0 + r) ** sym.m - 1.0
        return euler_pow(j, sym.m, r)
    out = np.zeros_like(r)
    for q, c in enumerate(sym.coeffs):
        out = out + c * (2.0 * (q + 1)) ** j * r ** (q + 1)
    return out


def potential_radial_derivative(pot, j, x_abs2):
    """(x . grad)^j V at |x|^2 for V = sign*c*<x>^(-mu); j in 0..3."""
    s = np.asarray(x_abs2, dtype=float)
    amp = pot.amplitude()
    if amp == 0.0:
        return np.zeros_like(s)
    if j == 0:
        return amp * (1.0 + s) ** (-pot.mu / 2)
    return amp * euler_pow(j, -pot.mu / 2, s)


# ---------------- 1D Taylor tables (series arithmetic, exact) ----------------

def _log_series(u):
    """Taylor coefficients of log(u(t)) given those of u; u[0] > 0."""
    order = u.shape[0] - 1
    g = np.zeros_like(u)
    g[0] = np.log(u[0])
    for k in range(1, order + 1):
        conv = np.zeros_like(u[0])
        for j in range(1, k):
            conv += j * g[j] * u[k - j]
        g[k] = (u[k] - conv / k) / u[0]
    return g


def _exp_series(g, scale=1.0, front=1.0):
    """Taylor coefficients of front*exp(scale*g(t)) given those of g."""
    order = g.shape[0] - 1
    h = np.zeros_like(g)
    h[0] = front * np.exp(scale * g[0])
    for k in range(1, order + 1):
        acc = np.zeros_like(g[0])
        for j in range(1, k + 1):
            acc += j * scale * g[j] * h[k - j]
        h[k] = acc / k
    return h


def bracket_power_taylor(xv, order, exponent, amp=1.0):
    """Coefficients d^k/dx^k [amp*(1+x^2)^(exponent)] / k!  (vectorized in x)."""
    xv = np.asarray(xv, dtype=float)
    if order == 0:
        return amp * (1.0 + xv ** 2)[None, :] ** exponent
    u = np.zeros((order + 1, len(xv)))
    u[0] = 1.0 + xv ** 2
    u[1] = 2.0 * xv
    if order >= 2:
        u[2] = 1.0
    g = _log_series(u)
    h = _exp_series(g, scale=exponent)
    return amp * h


def potential_taylor(pot, xv, order):
    """1D Taylor coefficients V^{(k)}(x)/k! of the potential."""
    if pot.sign == "zero":
        return np.zeros((order + 1, len(np.asarray(xv))))
    return bracket_power_taylor(xv, order, -pot.mu / 2, amp=pot.amplitude())


def symbol_taylor(sym, xiv, order):
    """1D Taylor coefficients p0^{(k)}(xi)/k! along a frequency axis."""
    xiv = np.asarray(xiv, dtype=float)
    if sym.kind == "power":
        m2 = int(2 * sym.m)
        out = np.zeros((order + 1, len(xiv)))
        for k in range(min(order, m2) + 1):
            out[k] = comb(m2, k) * xiv ** (m2 - k)
        return out
    if sym.kind == "bessel":
        t = bracket_power_taylor(xiv, order, sym.m)
        t[0] -= 1.0
        return t
    out = np.zeros((order + 1, len(xiv)))
    for q, c in enumerate(sym.coeffs):
        deg = 2 * (q + 1)
        for k in range(min(order, deg) + 1):
            out[k] += c * comb(deg, k) * xiv ** (deg - k)
    return out


# ------------------------------ validation ------------------------------

def power_law_fit_xy(xs, ys):
    """Least-squares slope and r^2 of log ys vs log xs."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ssr = float(np.sum((ly - pred) ** 2))
    sst = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 - ssr / max(sst, 1e-300)
    resid = float(np.max(np.abs(ly - pred))) if len(lx) else 0.0
    return float(coef[0]), float(coef[1]), r2, resid


def validate_symbol(sym, xi_samples=None, slope_tol=0.05):
    """Certify ellipticity, the small-frequency power, and the virial bound.

    Derivatives are analytic for the built-in kinds.  Fails if the virial
    ratio inf xi.grad(p0)/p0 is nonpositive at any sample or the fitted
    small-xi log-log slope is not within `slope_tol` of 2k.
    """
    if xi_samples is None:
        xi_samples = np.geomspace(1e-3, 32.0, 400)
    xi = np.asarray(xi_samples, dtype=float)
    xi = xi[xi > 0]
    r2 = xi ** 2
    p0 = radial_derivative(sym, 0, r2)
    dp = radial_derivative(sym, 1, r2)

    report = ValidationReport(ok=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        virial = np.where(p0 > 0, dp / np.where(p0 > 0, p0, 1.0), np.inf)
    vmin = float(np.min(virial[np.isfinite(virial)]))
    report.constants["virial_ratio_inf"] = vmin
    if np.any(dp <= 0) or vmin <= 0:
        report.ok = False
        report.failures.append("virial ratio xi.grad(p0)/p0 nonpositive on samples")

    large = xi >= 1.0
    if np.any(large):
        ell = p0[large] / (1.0 + r2[large]) ** sym.m
        report.constants["ellipticity_lower"] = float(np.min(ell))
        report.constants["ellipticity_upper"] = float(np.max(ell))
        if np.min(ell) <= 0:
            report.ok = False
            report.failures.append("lower ellipticity fails on |xi| >= 1")

    small = (xi >= 1e-3) & (xi <= 1e-1)
    if np.count_nonzero(small) >= 4:
        slope, _, _, _ = power_law_fit_xy(xi[small], p0[small])
        report.constants["small_xi_slope"] = slope
        if abs(slope - 2 * sym.k) > slope_tol:
            report.ok = False
            report.failures.append(
                f"small-xi slope {slope:.4f} not within {slope_tol} of 2k = {2*sym.k}")

    report.constants["k"] = sym.k
    return report


def validate_potential(pot, x_samples=None):
    """Certify the decay, lower and repulsivity bounds of V with constants.

    For the attractive sign the report is flagged as contrast mode: allowed
    only in decay/virial contrast experiments.
    """
    if x_samples is None:
        x_samples = np.concatenate([[0.0], np.geomspace(1e-2, 1e3, 400)])
    x = np.asarray(x_samples, dtype=float)
    s = x ** 2
    report = ValidationReport(ok=True)
    if pot.sign == "zero":
        report.constants.update({"C1": 0.0, "C2": 0.0, "R0": 0.0})
        return report
    if pot.sign == "attractive":
        report.ok = False
        report.contrast_mode = True
        report.failures.append("attractive potential: out of assumptions (contrast mode)")

    jap = np.sqrt(1.0 + s)
    mu = pot.mu
    # derivative bounds |d^a V| <= C_a <x>^(-mu-a) for a <= 2 (closed forms)
    V = potential_radial_derivative(pot, 0, s)
    dV = -pot.amplitude() * mu * x * (1.0 + s) ** (-mu / 2 - 1)
    d2V = -pot.amplitude() * mu * ((1.0 + s) ** (-mu / 2 - 1)
                                   - (mu + 2) * s * (1.0 + s) ** (-mu / 2 - 2))
    report.constants["C_alpha"] = {
        0: float(np.max(np.abs(V) * jap ** mu)),
        1: float(np.max(np.abs(dV) * jap ** (mu + 1))),
        2: float(np.max(np.abs(d2V) * jap ** (mu + 2))),
    }
    if pot.sign == "repulsive":
        report.constants["C1"] = float(np.min(V * jap ** mu))
        # -x.grad(V) = c*mu*|x|^2 <x>^(-mu-2) >= C2 <x>^(-mu) for |x| >= R0
        R0 = 1.0
        outside = np.concatenate([s[x >= R0], [R0 ** 2]])
        ratio = mu * pot.c * outside / (1.0 + outside)
        report.constants["C2"] = float(np.min(ratio))
        report.constants["R0"] = R0
        xgv = potential_radial_derivative(pot, 1, s)
        report.constants["neg_x_grad_V_min"] = float(np.min(-xgv))
        if np.min(-xgv) < -1e-14:
            report.ok = False
            report.failures.append("-x.grad(V) is not everywhere nonnegative")
    return report
