"""Phase-space calculus on the discrete torus (one dimension).

Covers the slowly varying metric g = dx^2/<x>^2 + <x>^mu' dxi^2/<xi>^2 and
its derived quantities, Weyl quantization and exact symbol extraction,
truncated Moyal products with derivative-table propagation, the parametrix
iteration for p + lam, symbol-class seminorm estimation, and the annular
cutoff used by the forbidden-region estimates.

Discrete Weyl conventions: the table path uses the cyclic midpoint
h = (2 i' + r) mod 2N with centered differences r, which makes quantize and
symbol_of exact mutual inverses on band-limited tables; the evaluator path
uses true (unwrapped) midpoints, which reproduces symmetrized polynomial
operators exactly.  Symbol tables live on the grid's (x_i, xi_j) lattice
with xi in FFT order; derivative tables propagate analytically through all
algebra, and spectral differentiation (with edge exclusion) is the fallback
for measured tables.
"""

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .grid import ConfigurationError
from .funcalc import smooth_edge
from .model import potential_taylor, symbol_taylor
from .solvers import eig_small

__all__ = ["MetricG", "metric_eval", "sigma_g", "sigma_g_variational",
           "check_metric_axioms", "SymbolTable", "symbol_from_function",
           "p_plus_lambda_table", "weyl_quantize", "weyl_symbol_of",
           "moyal_truncated", "parametrix_iterate", "seminorm_estimate",
           "make_cutoff_chi", "riesz_symbol_table", "interior_mask"]


# ------------------------------- metric -------------------------------

def sigma_g(mu_prime, x, xi):
    """Planck gain sigma_g = <x>^(mu'/2 - 1) <xi>^(-1); always <= 1."""
    jx = np.sqrt(1.0 + np.asarray(x, float) ** 2)
    jxi = np.sqrt(1.0 + np.asarray(xi, float) ** 2)
    return jx ** (mu_prime / 2.0 - 1.0) / jxi


def metric_eval(mu_prime, x, xi):
    """Closed-form coefficient pairs of g, g^A and the gain sigma_g at (x, xi).

    g   = gx dx^2 + gxi dxi^2,   gx = <x>^-2,           gxi = <x>^mu' <xi>^-2
    g^A = ax dx^2 + axi dxi^2,   ax = <xi>^2 <x>^-mu',  axi = <x>^2
    """
    if not (0 < mu_prime < 2):
        raise ConfigurationError("mu' must lie in (0, 2)")
    jx2 = 1.0 + np.asarray(x, float) ** 2
    jxi2 = 1.0 + np.asarray(xi, float) ** 2
    g = (jx2 ** -1.0, jx2 ** (mu_prime / 2.0) / jxi2)
    gA = (jxi2 * jx2 ** (-mu_prime / 2.0), jx2)
    return g, gA, sigma_g(mu_prime, x, xi)


def sigma_g_variational(mu_prime, x, xi, n=1):
    """sup_rho' g(rho')/g^A(rho') via the 2n x 2n generalized eigenproblem."""
    from scipy.linalg import eigh as geigh
    g, gA, _ = metric_eval(mu_prime, x, xi)
    G = np.diag([g[0]] * n + [g[1]] * n)
    GA = np.diag([gA[0]] * n + [gA[1]] * n)
    w = geigh(G, GA, eigvals_only=True)
    return float(np.sqrt(np.max(w)))


@dataclass(frozen=True)
class MetricG:
    mu_prime: float

    def __post_init__(self):
        if not (0 < self.mu_prime < 2):
            raise ConfigurationError("mu' must lie in (0, 2)")

    def eval(self, x, xi):
        return metric_eval(self.mu_prime, x, xi)

    def gain(self, x, xi):
        return sigma_g(self.mu_prime, x, xi)

    @property
    def temperateness_exponent(self):
        return 2.0 / (2.0 - self.mu_prime)


def _g_ratio_sup(mu_prime, rho_num, rho_den):
    """sup_tau g_num(tau)/g_den(tau) for the diagonal metric (closed form)."""
    gn, _, _ = metric_eval(mu_prime, *rho_num)
    gd, _, _ = metric_eval(mu_prime, *rho_den)
    return max(gn[0] / gd[0], gn[1] / gd[1])


def check_metric_axioms(mu_prime, n_samples=400, c_small=0.1, constant_cap=1e3,
                        seed=0):
    """Empirical constants for slow variation and A-temperateness.

    Samples cover |x|, |xi| in [0, 1e3] (log-spaced with random signs).  The
    temperateness inequality is tested at the exponent N = 2/(2 - mu');
    violation of the constant cap returns a failing report with a witness.
    """
    rng = np.random.default_rng(seed)
    mags = np.concatenate([[0.0], np.geomspace(1e-2, 1e3, 40)])
    pts = []
    for _ in range(n_samples):
        x = rng.choice(mags) * rng.choice([-1.0, 1.0])
        xi = rng.choice(mags) * rng.choice([-1.0, 1.0])
        pts.append((x, xi))
    report = {"ok": True, "mu_prime": mu_prime, "failures": []}

    # slow variation: displacements with g_rho(rho') <= c_small
    cmax = 1.0
    for (x, xi) in pts[: n_samples // 2]:
        g, _, _ = metric_eval(mu_prime, x, xi)
        dx = rng.uniform(-1, 1) * np.sqrt(c_small / g[0])
        dxi = rng.uniform(-1, 1) * np.sqrt(c_small / g[1])
        for (xn, xin) in ((x + dx, xi + dxi), (x - dx, xi - dxi)):
            r = _g_ratio_sup(mu_prime, (xn, xin), (x, xi))
            cmax = max(cmax, r, 1.0 / min(_g_ratio_sup(mu_prime, (x, xi), (xn, xin)), np.inf))
    report["slow_variation_constant"] = float(cmax)
    report["slow_variation_c"] = c_small
    if cmax > constant_cap:
        report["ok"] = False
        report["failures"].append(f"slow variation constant {cmax:.3g} above cap")

    # A-temperateness at the Appendix exponent
    Nexp = 2.0 / (2.0 - mu_prime)
    tmax = 0.0
    witness = None
    for i in range(n_samples):
        rho = pts[i]
        rhop = pts[(i * 7 + 3) % n_samples]
        _, gA, _ = metric_eval(mu_prime, *rhop)
        gap = gA[0] * (rho[0] - rhop[0]) ** 2 + gA[1] * (rho[1] - rhop[1]) ** 2
        ratio = _g_ratio_sup(mu_prime, rhop, rho) / (1.0 + gap) ** Nexp
        if ratio > tmax:
            tmax, witness = ratio, (rho, rhop)
    report["temperateness_constant"] = float(tmax)
    report["temperateness_exponent"] = Nexp
    if tmax > constant_cap:
        report["ok"] = False
        report["failures"].append(
            f"temperateness constant {tmax:.3g} above cap at {witness}")
    return report


# ------------------------- symbol tables (1D only) -------------------------

def _require_1d(grid):
    if grid.n != 1:
        raise ConfigurationError(
            "phase-space symbol tables are implemented for one dimension "
            "(two-dimensional tables would be 4-index and exceed the dense cap)")


@dataclass
class SymbolTable:
    """Sampled phase-space symbol a(x_i, xi_j) with derivative tables.

    `derivs[(a, b)]` holds d_x^a d_xi^b a when known analytically; missing
    orders fall back to spectral differentiation (`derivative`).
    """
    grid: object
    values: np.ndarray = field(repr=False)
    derivs: dict = field(default_factory=dict, repr=False)
    evaluator: object = None     # optional callable a(x, xi) for exact midpoints

    def __post_init__(self):
        _require_1d(self.grid)
        n = self.grid.npts
        if self.values.shape != (n, n):
            raise ConfigurationError("symbol table must have shape (N, N)")

    @property
    def max_order(self):
        if not self.derivs:
            return 0
        return max(a + b for a, b in self.derivs)

    def derivative(self, a, b):
        """d_x^a d_xi^b of the table; analytic if available, else spectral."""
        if a == 0 and b == 0:
            return self.values
        if (a, b) in self.derivs:
            return self.derivs[(a, b)]
        return spectral_derivative(self.grid, self.values, a, b)

    def has_analytic(self, order):
        return all((a, b) in self.derivs
                   for a in range(order + 1) for b in range(order + 1 - a)
                   if (a, b) != (0, 0))


def _axis_taper(axis_vals, half, plateau_frac):
    """Smooth window: 1 on |v| <= plateau_frac*half, 0 near |v| = half."""
    start = plateau_frac * half
    stop = 0.98 * half
    return smooth_edge((stop - np.abs(axis_vals)) / (stop - start))


def spectral_derivative(grid, table, a, b, apodize=0.1):
    """Periodic spectral differentiation of the (x, xi) table.

    Measured tables are generally not periodic-smooth (the weights and the
    decaying symbols have derivative kinks at the axis wrap), so the table is
    apodized over the outer `apodize` fraction first; the interior, which is
    all the seminorm sups look at, is untouched while the wrap ringing is
    suppressed.
    """
    out = np.asarray(table, dtype=complex)
    if apodize:
        tx = _axis_taper(grid.x_axis, grid.length / 2, 1 - 2 * apodize)
        txi = _axis_taper(grid.xi_axis, grid.xi_max, 1 - 2 * apodize)
        out = out * tx[:, None] * txi[None, :]
    if a:
        kx = grid.xi_axis      # conjugate to x
        out = np.fft.ifft((1j * kx[:, None]) ** a * np.fft.fft(out, axis=0), axis=0)
    if b:
        w = 2.0 * np.pi * np.fft.fftfreq(grid.npts, d=grid.dxi)
        out = np.fft.ifft((1j * w[None, :]) ** b * np.fft.fft(out, axis=1), axis=1)
    return out


def interior_mask(grid, edge_fraction=0.1):
    """Boolean (N, N) mask excluding the outer fraction of each axis."""
    lim_x = (1.0 - 2 * edge_fraction) * grid.length / 2
    lim_xi = (1.0 - 2 * edge_fraction) * grid.xi_max
    mx = np.abs(grid.x_axis) <= lim_x
    mxi = np.abs(grid.xi_axis) <= lim_xi
    return mx[:, None] & mxi[None, :]


def symbol_from_function(grid, fn, order=0, dfn=None):
    """Sample fn(x, xi) on the lattice; optional analytic derivative factory
    dfn(a, b) -> callable."""
    _require_1d(grid)
    X = grid.x_axis[:, None]
    XI = grid.xi_axis[None, :]
    vals = np.asarray(fn(X, XI), dtype=complex) * np.ones((grid.npts, grid.npts))
    derivs = {}
    if dfn is not None:
        for a in range(order + 1):
            for b in range(order + 1 - a):
                if (a, b) == (0, 0):
                    continue
                derivs[(a, b)] = np.asarray(dfn(a, b)(X, XI), dtype=complex) \
                    * np.ones((grid.npts, grid.npts))
    return SymbolTable(grid, vals, derivs, evaluator=fn)


def p_plus_lambda_table(model, grid, lam, order=9):
    """Symbol table of p(x, xi) + lam with analytic derivatives to `order`."""
    _require_1d(grid)
    n = grid.npts
    vtay = potential_taylor(model.potential, grid.x_axis, order)
    ptay = symbol_taylor(model.symbol, grid.xi_axis, order)
    vals = (vtay[0][:, None] + ptay[0][None, :] + lam).astype(complex)
    derivs = {}
    ones = np.ones(n)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            if (a, b) == (0, 0):
                continue
            if a and b:
                derivs[(a, b)] = np.zeros((n, n), dtype=complex)
            elif a:
                derivs[(a, 0)] = (factorial(a) * vtay[a][:, None] * ones[None, :]).astype(complex)
            else:
                derivs[(0, b)] = (factorial(b) * ones[:, None] * ptay[b][None, :]).astype(complex)

    def evaluator(x, xi):
        from .model import p0_eval, potential_radial_derivative
        return (p0_eval(model.symbol, np.abs(xi))
                + potential_radial_derivative(model.potential, 0, np.asarray(x) ** 2) + lam)

    return SymbolTable(grid, vals, derivs, evaluator=evaluator)


# ------------------- derivative-aware table algebra -------------------

def _common_keys(A, B):
    keys = set(A.derivs) & set(B.derivs)
    keys.add((0, 0))
    order = 0
    while all((a, b) in keys or (a, b) == (0, 0)
              for a in range(order + 2) for b in range(order + 2 - a)):
        order += 1
    return order


def table_mul(A, B):
    """Product with Leibniz-propagated derivative tables."""
    order = min(_common_keys(A, B), 12)
    derivs = {}
    for a in range(order + 1):
        for b in range(order + 1 - a):
            if (a, b) == (0, 0):
                continue
            acc = np.zeros_like(A.values)
            for i in range(a + 1):
                for j in range(b + 1):
                    acc = acc + comb(a, i) * comb(b, j) \
                        * A.derivative(i, j) * B.derivative(a - i, b - j)
            derivs[(a, b)] = acc
    ev = None
    if A.evaluator is not None and B.evaluator is not None:
        ev = lambda x, xi: A.evaluator(x, xi) * B.evaluator(x, xi)
    return SymbolTable(A.grid, A.values * B.values, derivs, evaluator=ev)


def table_recip(A):
    """1/A with derivative tables from the triangular reciprocal recursion."""
    order = 0
    while A.has_analytic(order + 1):
        order += 1
    w = {(0, 0): 1.0 / A.values}
    for total in range(1, order + 1):
        for a in range(total + 1):
            b = total - a
            acc = np.zeros_like(A.values)
            for i in range(a + 1):
                for j in range(b + 1):
                    if (i, j) == (0, 0):
                        continue
                    acc = acc + comb(a, i) * comb(b, j) \
                        * A.derivative(i, j) * w[(a - i, b - j)]
            w[(a, b)] = -w[(0, 0)] * acc
    vals = w.pop((0, 0))
    ev = None if A.evaluator is None else (lambda x, xi: 1.0 / A.evaluator(x, xi))
    return SymbolTable(A.grid, vals, w, evaluator=ev)


def table_axpy(alpha, A, beta=0.0, B=None):
    """alpha*A + beta*B (or alpha*A + beta) with derivative tables."""
    if B is None:
        derivs = {k: alpha * v for k, v in A.derivs.items()}
        return SymbolTable(A.grid, alpha * A.values + beta, derivs)
    keys = set(A.derivs) & set(B.derivs)
    derivs = {k: alpha * A.derivs[k] + beta * B.derivs[k] for k in keys}
    return SymbolTable(A.grid, alpha * A.values + beta * B.values, derivs)


def moyal_truncated(A, B, J):
    """Truncated Weyl product sum_{j<=J} (i/2)^j sum_{s+t=j} (-1)^s/(s!t!)
    d_xi^s d_x^t A * d_x^s d_xi^t B, with propagated derivative tables.

    Requires J in 0..3.  Uses analytic derivative tables when both factors
    carry them; otherwise spectral differentiation.
    """
    if J not in (0, 1, 2, 3):
        raise ConfigurationError("Moyal truncation order must be in 0..3")
    in_order = min(_common_keys(A, B), 12)
    out_order = max(in_order - J, 0)
    analytic = A.has_analytic(J) and B.has_analytic(J)
    out_order = out_order if analytic else 0

    def dA(i, j):
        return A.derivative(i, j)

    def dB(i, j):
        return B.derivative(i, j)

    derivs = {}
    vals = None
    for a in range(out_order + 1):
        for b in range(out_order + 1 - a):
            acc = np.zeros_like(A.values, dtype=complex)
            for j in range(J + 1):
                cj = (0.5j) ** j
                for s in range(j + 1):
                    t = j - s
                    coef = cj * (-1.0) ** s / (factorial(s) * factorial(t))
                    term = np.zeros_like(acc)
                    for i in range(a + 1):
                        for k in range(b + 1):
                            term = term + comb(a, i) * comb(b, k) \
                                * dA(i + t, k + s) * dB(a - i + s, b - k + t)
                    acc = acc + coef * term
            if (a, b) == (0, 0):
                vals = acc
            else:
                derivs[(a, b)] = acc
    return SymbolTable(A.grid, vals, derivs)


# --------------------- Weyl quantization / Wigner ---------------------

def _interp_half_x(table):
    """Trig interpolation of the x-axis to the 2N half lattice (exact for
    band-limited tables)."""
    N = table.shape[0]
    A = np.fft.fft(table, axis=0)
    Az = np.zeros((2 * N,) + table.shape[1:], dtype=complex)
    half = N // 2
    Az[:half] = A[:half]
    Az[half] = 0.5 * A[half]
    Az[2 * N - half] = 0.5 * A[half]
    Az[2 * N - half + 1:] = A[half + 1:]
    return np.fft.ifft(Az, axis=0) * 2.0


def _centered(r, N):
    return r if r < N // 2 else r - N


def weyl_quantize(table, use_evaluator="auto"):
    """Kernel K(i, i') of Op(a); Op(a)u(x) = sum_y K(x, y) u(y) dx.

    Table path (cyclic midpoints, centered differences) is the exact inverse
    of `weyl_symbol_of`.  With an evaluator, true unwrapped midpoints are
    used instead, which reproduces symmetrized polynomial operators exactly.
    """
    grid = table.grid
    N = grid.npts
    L = grid.length
    ip = np.arange(N)
    K = np.empty((N, N), dtype=complex)
    if use_evaluator == "auto":
        use_evaluator = table.evaluator is not None
    if use_evaluator:
        if table.evaluator is None:
            raise ConfigurationError("symbol table has no evaluator")
        mids = -L / 2 + (L / N) * 0.5 * np.arange(2 * N - 1)
        ah = np.asarray(table.evaluator(mids[:, None], grid.xi_axis[None, :]),
                        dtype=complex) * np.ones((2 * N - 1, N))
        G = np.fft.ifft(ah, axis=1) * N
        for r in range(-(N - 1), N):
            i = ip[max(0, r): N + min(0, r)]
            j = i - r
            K[i, j] = G[i + j, r % N]
        return K / L
    ah = _interp_half_x(table.values)
    G = np.fft.ifft(ah, axis=1) * N
    for r in range(N):
        rc = _centered(r, N)
        i = (ip + r) % N
        h = (2 * ip + rc) % (2 * N)
        K[i, ip] = G[h, r]
    return K / L


def weyl_symbol_of(K, grid, w_taper=None):
    """Symbol a(x_i, xi_j) of a kernel; exact inverse of the table path.

    `w_taper` (a fraction like 0.35) apodizes the kernel anti-diagonals
    beyond that cyclic separation before inversion; use it when extracting
    symbols of decaying kernels, where the periodized tail would otherwise
    ring under xi-differentiation.  Leave None for exact round trips.
    """
    _require_1d(grid)
    N = grid.npts
    L = grid.length
    dx = grid.dx
    ip = np.arange(N)
    F = np.zeros((2 * N, N), dtype=complex)
    for r in range(N):
        rc = _centered(r, N)
        i = (ip + r) % N
        h = (2 * ip + rc) % (2 * N)
        fac = 1.0
        if w_taper is not None:
            d = min(r, N - r) / float(N)
            fac = float(smooth_edge(np.array([(0.49 - d) / (0.49 - w_taper)]))[0])
        F[h, r] = K[i, ip] * fac
    half = N // 2
    j0 = np.arange(half)
    S = np.zeros((N, N), dtype=complex)
    D = np.zeros((N, N), dtype=complex)
    for h in range(2 * N):
        par = h % 2
        f = F[h, 2 * np.arange(half) + par]
        c = np.fft.fft(f) * (L / half)
        combv = c * np.exp(-2j * np.pi * j0 * par / N)
        m = h // 2
        if par == 0:
            S[m, :half] = combv
            S[m, half:] = combv
        else:
            D[m, :half] = combv
            D[m, half:] = -combv
    kx = grid.xi_axis
    Dshift = np.fft.ifft(np.fft.fft(D, axis=0) * np.exp(-0.5j * kx * dx)[:, None], axis=0)
    return SymbolTable(grid, 0.5 * (S + Dshift))


def apply_quantized(K, u):
    """Apply a Weyl kernel to a grid function (quadrature weight dx)."""
    return u.with_values((K @ u.values) * u.grid.dx)


# --------------------------- parametrix ---------------------------

def parametrix_iterate(model, grid, lam, J=2, moyal_order=3, table_order=None,
                       edge_fraction=0.1):
    """Parametrix iteration for p + lam.

    Starts from the exact reciprocal a_0 = (p + lam)^(-1) and iterates
    r_{j+1} = (p + lam) # a_j + r_j (Moyal-truncated), a_{j+1} = -a_0 r_{j+1},
    with r_0 = -1.  Returns the partial-sum tables, the remainder tables, and
    interior sup-norms; the remainder after the order-J partial sum is
    r_{J+1}.
    """
    if not (0 < lam <= 1):
        raise ConfigurationError("parametrix iteration needs lam in (0, 1]")
    if J < 0 or J > 3:
        raise ConfigurationError("parametrix order J must be in 0..3")
    table_order = table_order or (moyal_order * (J + 1))
    P = p_plus_lambda_table(model, grid, lam, order=table_order)
    a0 = table_recip(P)
    mask = interior_mask(grid, edge_fraction)

    def sup(table):
        return float(np.max(np.abs(table.values[mask])))

    parts = [a0]
    r_prev = table_axpy(0.0, a0, beta=-1.0)   # r_0 = -1 with zero derivatives
    remainders = [r_prev]
    sups = [sup(r_prev)]
    for _ in range(J + 1):
        prod = moyal_truncated(P, parts[-1], moyal_order)
        r_next = table_axpy(1.0, prod, 1.0, _pad_like(r_prev, prod))
        remainders.append(r_next)
        sups.append(sup(r_next))
        parts.append(table_axpy(-1.0, table_mul(_trim(a0, r_next.max_order), r_next)))
        r_prev = r_next
    partial_vals = sum(p.values for p in parts[:J + 1])
    partial = SymbolTable(grid, partial_vals)
    return {
        "partial_sum": partial,
        "corrections": parts[:J + 1],
        "remainders": remainders,
        "remainder_sups": sups,            # index j -> sup |r_j|
        "lam": lam,
        "J": J,
    }


def _trim(table, order):
    keys = {k: v for k, v in table.derivs.items() if k[0] + k[1] <= order}
    return SymbolTable(table.grid, table.values, keys, evaluator=table.evaluator)


def _pad_like(table, other):
    """Restrict `table` derivative keys to those of `other` (for sums)."""
    keys = {k: table.derivs.get(k, np.zeros_like(table.values))
            for k in other.derivs}
    return SymbolTable(table.grid, table.values, keys)


# ----------------------- seminorms and cutoffs -----------------------

def seminorm_estimate(table, weight, alpha, beta, mu_prime, edge_fraction=0.1):
    """sup over the interior lattice of
    |d_x^alpha d_xi^beta a| / (m(x,xi) <x>^(mu'|beta|/2 - |alpha|) <xi>^(-|beta|)).

    `weight` is an (N, N) array of the class weight m.  Derivatives are
    spectral unless the table carries analytic ones.
    """
    if alpha + beta > 4:
        raise ConfigurationError("seminorm estimation supports |alpha|+|beta| <= 4")
    grid = table.grid
    d = table.derivative(alpha, beta)
    jx = np.sqrt(1.0 + grid.x_axis ** 2)[:, None]
    jxi = np.sqrt(1.0 + grid.xi_axis ** 2)[None, :]
    denom = np.asarray(weight) * jx ** (mu_prime * beta / 2.0 - alpha) * jxi ** (-beta)
    mask = interior_mask(grid, edge_fraction)
    return float(np.max(np.abs(d[mask]) / np.abs(denom[mask])))


def make_cutoff_chi(grid, lam, eps, c, mu):
    """Annular cutoff chi_lam(x) = chi((2c)^(-1) lam^(1/mu) x) (1 - chi(lam^eps x)).

    chi is the radial profile equal to 1 for |y| <= 1/2 and 0 for |y| >= 1;
    the product is identically 1 on lam^(-eps) <= |x| <= c lam^(-1/mu) and
    supported in the doubled annulus.  Raises when the plateau is empty.
    """
    if lam ** (-eps) >= c * lam ** (-1.0 / mu):
        raise ConfigurationError(
            "empty cutoff plateau: lam^(-eps) must be below c lam^(-1/mu)")

    def chi_profile(y):
        return smooth_edge(2.0 * (1.0 - np.abs(y)))

    ax = grid.abs_x()
    vals = chi_profile((0.5 / c) * lam ** (1.0 / mu) * ax) * (1.0 - chi_profile(lam ** eps * ax))
    return vals


def riesz_symbol_table(op, lam, rng=None):
    """Weyl symbol of the dense inverse (P + lam)^(-1), with its condition
    number; lam = 0 is allowed because the truncation has a spectral gap."""
    if lam < 0:
        raise ConfigurationError("Riesz extraction needs lam >= 0")
    _require_1d(op.grid)
    sd = eig_small(op)
    emin = float(np.min(sd.eigenvalues))
    if emin + lam <= 0:
        raise ConfigurationError("operator plus shift is not positive on the truncation")
    cond = float((np.max(sd.eigenvalues) + lam) / (emin + lam))
    inv = (sd.eigenvectors / (sd.eigenvalues + lam)[None, :]) @ sd.eigenvectors.T
    table = weyl_symbol_of(inv / op.grid.dx, op.grid, w_taper=0.35)
    return table, {"condition_number": cond, "min_eigenvalue": emin}
