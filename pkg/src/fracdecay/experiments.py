"""Theorem-level verification runs.

Each run_* measures one quantitative claim as a (parameter, norm) series plus
a fitted exponent or a boundedness certificate.  Operator norms are always
power iteration on T*T with explicit adjoint factorization; under the dense
cap the factors act through a cached eigendecomposition, above it through
matrix-free propagation/solves.  Every run is deterministic given
(config, seed) and reports enough metadata to reproduce it.

Fit windows drop the two largest-parameter samples (transient contamination),
but never below four points.  Time-decay samples additionally carry a
wrap-around validity flag: after each power iteration the optimizer's 99%
spectral-mass energy fixes an effective group speed v, and the sample is
valid only if v * t < L/2.  Invalid samples are reported but excluded from
fits, which is how the finite box is prevented from faking recurrence
plateaus as decay floors.
"""

from dataclasses import dataclass, field
import zlib

import numpy as np

from .grid import Grid, GridFunction, make_grid, indicator_mask, ConfigurationError
from .model import ModelSpec, radial_derivative, power_law_fit_xy, validate_symbol
from .operators import (OperatorHandle, DilationHandle, materialize_dense,
                        iterated_commutator_Bj, apply_commutator_PiA, DENSE_CAP)
from .solvers import eig_small, operator_norm, propagate, NumericalError
from .funcalc import BumpFunction, hs_apply

__all__ = ["DecaySeries", "PowerLawFit", "fit_power_law", "ExperimentContext",
           "run_decay", "run_agmon", "agmon_bisect_c", "run_lap_low",
           "run_lap_high", "run_mourre", "run_commutator_scaling", "run_virial",
           "run_spectral_derivative", "check_ad_identities", "alpha_exponent"]


@dataclass
class PowerLawFit:
    exponent: float
    intercept: float
    r2: float
    residual_max: float


@dataclass
class DecaySeries:
    parameter: str
    values: np.ndarray
    norms: np.ndarray
    error_estimates: np.ndarray = None
    valid: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) and not (np.all(np.diff(v) > 0) or np.all(np.diff(v) < 0)):
            raise ConfigurationError("series parameter values must be strictly monotone")
        if self.error_estimates is None:
            self.error_estimates = np.zeros_like(self.norms, dtype=float)
        if self.valid is None:
            self.valid = np.ones(len(v), dtype=bool)


def fit_power_law(series_or_x, norms=None):
    """Least squares on (log parameter, log norm); exact on pure power laws."""
    if norms is None:
        xs, ys = series_or_x.values, series_or_x.norms
    else:
        xs, ys = series_or_x, norms
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    if len(xs) < 4:
        raise ConfigurationError("power-law fit needs at least 4 samples")
    if np.any(ys <= 0):
        raise ConfigurationError("power-law fit needs positive norms")
    slope, intercept, r2, resid = power_law_fit_xy(xs, ys)
    return PowerLawFit(exponent=slope, intercept=intercept, r2=r2, residual_max=resid)


def fit_window(values, valid=None, drop_largest=2, min_keep=4):
    """Indices kept for fitting: valid samples, minus the largest-parameter
    ones (at most `drop_largest`, never below `min_keep` points)."""
    values = np.asarray(values, float)
    idx = np.arange(len(values))
    if valid is not None:
        idx = idx[np.asarray(valid, bool)]
    order = idx[np.argsort(values[idx])]
    n_drop = min(drop_largest, max(0, len(order) - min_keep))
    return np.sort(order[: len(order) - n_drop]) if n_drop else np.sort(order)


def _parallel_map(fn, items, threads):
    """Order-preserving map, optionally over a thread pool.

    Determinism does not depend on the execution order: every sample derives
    its own RNG stream.
    """
    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


class ExperimentContext:
    """Deterministic RNG streams plus eigendecomposition / norm caches.

    The resolvent-backed runs (LAP, spectral-derivative) share cached norm
    values keyed by (operator, kind, parameters); cached and uncached results
    agree to roundoff because the computation path is identical.
    """

    def __init__(self, seed=0, threads=1):
        self.seed = int(seed)
        self.threads = int(threads)
        self._norm_cache = {}
        self.cache_hits = 0

    def rng(self, *stream):
        tags = [self.seed] + [zlib.crc32(repr(s).encode()) for s in stream]
        return np.random.default_rng(tags)

    def spectral(self, op):
        return eig_small(op)

    def cached_norm(self, key, compute):
        if key in self._norm_cache:
            self.cache_hits += 1
            return self._norm_cache[key]
        val = compute()
        self._norm_cache[key] = val
        return val

    def clear(self):
        self._norm_cache.clear()


# ------------------------- spectral-path opnorm -------------------------

def _windowed_opnorm(sd, fvals, w_out, w_in, rng, tol=1e-4, maxit=60):
    """|| w_out(x) f(P) w_in(x) || with f given by values on the spectrum.

    Returns (sigma, optimizer energy quantile E99).
    """
    U = sd.eigenvectors
    wo = np.asarray(w_out).ravel()
    wi = np.asarray(w_in).ravel()
    f = np.asarray(fvals, dtype=complex)

    def apply_T(v):
        return wo * (U @ (f * (U.T @ (wi * v))))

    def apply_Tstar(v):
        return np.conj(wi) * (U @ (np.conj(f) * (U.T @ (np.conj(wo) * v))))

    n = U.shape[0]
    sigma, _, _ = operator_norm(apply_T, apply_Tstar, n, rng, tol=tol, maxit=maxit)
    # spectral-mass diagnostic of the final iterate
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(8):
        w = apply_Tstar(apply_T(v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return sigma, 0.0
        v = w / nw
    c = np.abs(U.T @ v) ** 2
    c /= c.sum()
    cs = np.cumsum(c)
    e99 = float(sd.eigenvalues[min(int(np.searchsorted(cs, 0.99)), len(c) - 1)])
    return sigma, e99


def _group_speed_below(model, grid, energy):
    """max |grad p0| over lattice frequencies with p0 <= energy."""
    absxi = grid.abs_xi().ravel()
    p0 = radial_derivative(model.symbol, 0, absxi ** 2)
    sel = p0 <= max(energy, 0.0)
    if not np.any(sel):
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        gp = np.where(absxi > 0, radial_derivative(model.symbol, 1, absxi ** 2) /
                      np.where(absxi > 0, absxi, 1.0), 0.0)
    return float(np.max(gp[sel]))


# ------------------------------ time decay ------------------------------

def run_decay(model, grid, s, t_grid, a=0.0, ctx=None, engine="auto", tol=1e-4):
    """Weighted propagator norms  || <x>^-s <P>^-a e^(-itP) <x>^-s ||.

    Under the dense cap the propagator acts through the eigenbasis; above it
    a Chebyshev propagator drives the power iteration.  Each sample carries
    the wrap-around validity flag described in the module docstring.
    """
    import time as _time
    ctx = ctx or ExperimentContext()
    op = OperatorHandle(grid, model)
    t_grid = np.asarray(t_grid, float)
    if engine == "auto":
        engine = "spectral" if grid.size <= DENSE_CAP else "chebyshev"
    wgt = grid.jap_x() ** (-s)
    norms, e99s, valid, walls = [], [], [], []
    if engine == "spectral":
        sd = ctx.spectral(op)

        def one(t):
            rng = ctx.rng("decay", grid.key(), model.key(), s, a, float(t))
            t0 = _time.perf_counter()
            f = (1.0 + sd.eigenvalues ** 2) ** (-a / 2.0) * np.exp(-1j * t * sd.eigenvalues)
            sig, e99 = _windowed_opnorm(sd, f, wgt, wgt, rng, tol=tol)
            v_eff = _group_speed_below(model, grid, e99)
            return sig, e99, v_eff * t < grid.length / 2, _time.perf_counter() - t0

        for sig, e99, ok, wall in _parallel_map(one, t_grid, ctx.threads):
            norms.append(sig)
            e99s.append(e99)
            valid.append(ok)
            walls.append(wall)
    else:
        rng = ctx.rng("decay", grid.key(), model.key(), s, a)
        n = grid.size
        for t in t_grid:
            def apply_T(v):
                u = GridFunction(grid, (wgt * v.reshape(grid.shape)))
                u = propagate(op, t, u, method="chebyshev")
                vals = u.values
                if a:
                    raise ConfigurationError("energy weight needs the spectral engine")
                return (wgt * vals).ravel()

            def apply_Tstar(v):
                u = GridFunction(grid, (np.conj(wgt) * v.reshape(grid.shape)))
                u = propagate(op, -t, u, method="chebyshev")
                return (wgt * u.values).ravel()

            sig, _, _ = operator_norm(apply_T, apply_Tstar, n, rng, tol=tol)
            norms.append(sig)
            e99s.append(float("nan"))
            valid.append(True)
    series = DecaySeries("t", t_grid, np.asarray(norms),
                         error_estimates=tol * np.asarray(norms),
                         valid=np.asarray(valid),
                         metadata={"s": s, "a": a, "engine": engine,
                                   "optimizer_E99": e99s,
                                   "wall_times": walls or [0.0] * len(t_grid)})
    keep = fit_window(t_grid, series.valid)
    fit = fit_power_law(t_grid[keep], series.norms[keep]) if len(keep) >= 4 else None
    # robustness: slope with the largest-t half of the kept window removed
    half = keep[t_grid[keep] <= np.sqrt(t_grid[keep][0] * t_grid[keep][-1])]
    fit_half = fit_power_law(t_grid[half], series.norms[half]) if len(half) >= 4 else None
    series.metadata["fit_indices"] = keep.tolist()
    return series, fit, fit_half


# -------------------------------- Agmon --------------------------------

def _agmon_norm(ctx, op, psi, lam, radius, l_weight, engine, rng, tol=1e-4):
    grid = op.grid
    mask = indicator_mask(grid, radius).values
    if not np.any(mask):
        return 0.0, 0.0
    wgt = grid.jap_x() ** l_weight
    if engine == "spectral":
        sd = ctx.spectral(op)
        f = psi(sd.eigenvalues / lam)
        sig, _ = _windowed_opnorm(sd, f.astype(complex), wgt, mask, rng, tol=tol)
        return sig, 0.0
    # transfer/lanczos engines run the Helffer-Sjostrand quadrature
    est_hold = []

    def apply_T(v):
        u = GridFunction(grid, (mask * v.reshape(grid.shape)))
        out, info = hs_apply(op, psi, lam, u, solver=engine)
        est_hold.append(info["error_estimate"])
        return (wgt * out.values).ravel()

    def apply_Tstar(v):
        u = GridFunction(grid, (wgt * v.reshape(grid.shape)))
        out, _ = hs_apply(op, psi, lam, u, solver=engine)
        return (mask * out.values).ravel()

    sig, _, _ = operator_norm(apply_T, apply_Tstar, grid.size, rng, tol=tol)
    return sig, float(max(est_hold)) if est_hold else 0.0


def run_agmon(model, grid, psi, l_weight, c, lam_grid, ctx=None, engine="transfer",
              inner_eps=None, tol=1e-4):
    """Forbidden-region norms  || <x>^L psi(P/lam) 1_{|x| <= R(lam)} ||.

    Outer region R = c lam^(-1/mu); with `inner_eps` set, R = lam^(-eps)
    instead.  Containment demands R <= box/4 for every lam.
    """
    ctx = ctx or ExperimentContext()
    mu = model.potential.mu
    lam_grid = np.asarray(sorted(lam_grid), float)
    radii = (lam_grid ** (-inner_eps) if inner_eps is not None
             else c * lam_grid ** (-1.0 / mu))
    if np.max(radii) > grid.length / 4:
        raise ConfigurationError(
            f"containment violated: region radius {np.max(radii):.3g} exceeds L/4; "
            "enlarge the box or reduce c")
    op = OperatorHandle(grid, model)
    if engine in ("transfer", "spectral"):
        ctx.spectral(op)      # materialize the shared eigendecomposition once

    def one(pair):
        import time as _time
        lam, radius = pair
        rng = ctx.rng("agmon", grid.key(), model.key(), l_weight, c, inner_eps, float(lam))
        t0 = _time.perf_counter()
        sig, est = _agmon_norm(ctx, op, psi, lam, radius, l_weight, engine, rng, tol)
        return sig, est, _time.perf_counter() - t0

    results = _parallel_map(one, list(zip(lam_grid, radii)), ctx.threads)
    norms = [r[0] for r in results]
    ests = [r[1] for r in results]
    series = DecaySeries("lam", lam_grid, np.asarray(norms),
                         error_estimates=np.asarray(ests),
                         metadata={"l_weight": l_weight, "c": c,
                                   "inner_eps": inner_eps, "engine": engine,
                                   "wall_times": [r[2] for r in results]})
    keep = fit_window(lam_grid, None)
    fit = fit_power_law(lam_grid[keep], series.norms[keep])
    nosmall = keep[1:] if len(keep) > 4 else keep
    fit_wo_smallest = fit_power_law(lam_grid[nosmall], series.norms[nosmall]) \
        if len(nosmall) >= 4 else None
    series.metadata["fit_indices"] = keep.tolist()
    return series, fit, fit_wo_smallest


def agmon_bisect_c(model, grid, psi, l_weight, lam_grid, ctx=None, target_slope=3.2,
                   c_range=(0.005, 1.0), iters=10):
    """Largest c with fitted slope >= target (spectral engine; empirical c0)."""
    ctx = ctx or ExperimentContext()

    def slope(c):
        _, fit, _ = run_agmon(model, grid, psi, l_weight, c, lam_grid,
                              ctx=ctx, engine="spectral")
        return fit.exponent

    lo, hi = c_range
    if slope(lo) < target_slope:
        raise NumericalError(f"no admissible c: slope at c={lo} below target")
    for _ in range(iters):
        mid = np.sqrt(lo * hi)
        if slope(mid) >= target_slope:
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------- LAP ---------------------------------

def alpha_exponent(N_pow, gamma, mu, k):
    """Low-frequency scaling exponent alpha(N, gamma) = 2 gamma/mu - N(1/mu + (2k-1)/2k)."""
    return 2.0 * gamma / mu - N_pow * (1.0 / mu + (2.0 * k - 1.0) / (2.0 * k))


def _resolvent_norm(ctx, op, sd, z, N_pow, gamma, rng, tol=1e-4):
    key = ("res", op.key(), complex(z), N_pow, gamma)

    def compute():
        w = op.grid.jap_x() ** (-gamma)
        f = 1.0 / (sd.eigenvalues - z) ** N_pow
        sig, _ = _windowed_opnorm(sd, f, w, w, rng, tol=tol)
        return sig

    return ctx.cached_norm(key, compute)


def eps_stagnation(ctx, op, sd, x0, N_pow, gamma, rng, eps0=0.04, eps_min=1e-4,
                   stag_tol=0.01, sign=+1):
    """Halve eps until successive weighted norms differ by < stag_tol.

    Returns (eps, norm, ratio, conclusive).
    """
    eps = eps0
    prev = _resolvent_norm(ctx, op, sd, x0 + sign * 1j * eps, N_pow, gamma, rng)
    while eps / 2 >= eps_min:
        cur = _resolvent_norm(ctx, op, sd, x0 + sign * 1j * eps / 2, N_pow, gamma, rng)
        ratio = cur / prev
        if abs(ratio - 1.0) < stag_tol:
            return eps / 2, cur, ratio, True
        prev = cur
        eps /= 2
    return eps, prev, float("nan"), False


def run_lap_low(model, grid, N_pow, gamma, z_grid, ctx=None, psi=None, lam_grid=None,
                eps0=0.04, eps_probe=1e-2, tol=1e-4):
    """Low-frequency uniform resolvent bounds plus the windowed lam-scaling.

    Certifies: bounded weighted norms over (Re z, eps) with eps-stagnation,
    the eps-ratio at the probe eps, and (optionally) the lam-scaling slope of
    || <x>^-g R(lam)^N psi(P/lam) <x>^-g || against alpha(N, gamma).
    """
    ctx = ctx or ExperimentContext()
    k = model.symbol.k
    gmin = max(N_pow - 0.5, N_pow * (0.5 + (2 * k - 1) * model.potential.mu / (4 * k)))
    if gamma <= gmin:
        raise ConfigurationError(f"weight gamma={gamma} below the threshold {gmin}")
    op = OperatorHandle(grid, model)
    sd = ctx.spectral(op)
    rng = ctx.rng("lap_low", grid.key(), model.key(), N_pow, gamma)
    table = []
    conclusive = True
    for x0 in np.asarray(z_grid, float):
        eps, nrm, ratio, ok = eps_stagnation(ctx, op, sd, x0, N_pow, gamma, rng, eps0=eps0)
        n_probe = _resolvent_norm(ctx, op, sd, x0 + 1j * eps_probe, N_pow, gamma, rng)
        n_probe_half = _resolvent_norm(ctx, op, sd, x0 + 0.5j * eps_probe, N_pow, gamma, rng)
        table.append({"re_z": float(x0), "eps_stag": float(eps), "norm": float(nrm),
                      "ratio_at_probe": float(n_probe_half / n_probe),
                      "conclusive": bool(ok)})
        conclusive = conclusive and ok
    cert = {
        "max_norm": max(r["norm"] for r in table),
        "max_probe_ratio": max(r["ratio_at_probe"] for r in table),
        "conclusive": conclusive,
        "table": table,
    }
    scaling = None
    if lam_grid is not None:
        psi = psi or BumpFunction.mourre_window()
        lam_grid = np.asarray(sorted(lam_grid), float)
        norms = []
        for lam in lam_grid:
            eps = eps_probe * lam
            f = psi(sd.eigenvalues / lam) / (sd.eigenvalues - lam - 1j * eps) ** N_pow
            w = grid.jap_x() ** (-gamma)
            sig, _ = _windowed_opnorm(sd, f, w, w, rng, tol=tol)
            norms.append(sig)
        series = DecaySeries("lam", lam_grid, np.asarray(norms),
                             metadata={"N": N_pow, "gamma": gamma})
        keep = fit_window(lam_grid, None)
        fit = fit_power_law(lam_grid[keep], series.norms[keep])
        scaling = {"series": series, "fit": fit,
                   "alpha": alpha_exponent(N_pow, gamma, model.potential.mu, k)}
    return cert, scaling


def run_lap_high(model, grid, N_pow, gamma, z_grid, ctx=None, eps0=1e-2,
                 spacing_factor=4.0, tol=1e-4):
    """High-frequency estimate: |z|^(N/2 (2 - 1/m)) * weighted resolvent norm
    should stay flat over the |z| grid.

    eps is lifted to spacing_factor times the local level spacing (finite-box
    smoothing); spectral coverage demands max p0 >= 4 max |z|.
    """
    ctx = ctx or ExperimentContext()
    op = OperatorHandle(grid, model)
    if float(np.max(op.p0_table)) < 4.0 * max(np.asarray(z_grid, float)):
        raise ConfigurationError(
            "spectral coverage violated: increase xi_max (finer grid) or lower |z|")
    sd = ctx.spectral(op)
    rng = ctx.rng("lap_high", grid.key(), model.key(), N_pow, gamma)
    m = model.symbol.m
    w_exp = 0.5 * N_pow * (2.0 - 1.0 / m)
    rows = []
    for x0 in np.asarray(z_grid, float):
        lo, hi = 0.95 * x0, 1.05 * x0
        count = int(np.count_nonzero((sd.eigenvalues >= lo) & (sd.eigenvalues <= hi)))
        spacing = (hi - lo) / max(count, 1)
        eps = max(eps0, spacing_factor * spacing)
        nrm = _resolvent_norm(ctx, op, sd, x0 + 1j * eps, N_pow, gamma, rng)
        rows.append({"abs_z": float(x0), "eps": float(eps), "norm": float(nrm),
                     "product": float(x0 ** w_exp * nrm)})
    prods = np.array([r["product"] for r in rows])
    return {
        "weight_exponent": w_exp,
        "rows": rows,
        "flatness": float(prods.max() / prods.min()),
    }


# ------------------------------- Mourre -------------------------------

def lam_of_h(model, h):
    """Invert h = lam^(1/mu - 1/2k)."""
    mu, k = model.potential.mu, model.symbol.k
    return float(h ** (1.0 / (1.0 / mu - 1.0 / (2 * k))))


def run_mourre(model, grid, h_grid, psi=None, ctx=None, rank_cutoff=0.5):
    """Smooth-window Mourre positivity for the rescaled operator.

    For each h, builds M = psi(P_h) [P_h, iA_h] psi(P_h), restricts to the
    eigenvectors with psi(E) >= rank_cutoff, and reports min eig / h.  The
    certificate is a0 = min over the h-grid, with a max/min stability factor.
    """
    ctx = ctx or ExperimentContext()
    psi = psi or BumpFunction.mourre_window()
    rows = []
    for h in sorted(h_grid, reverse=True):
        lam = lam_of_h(model, h)
        op = OperatorHandle(grid, model, mode="rescaled", lam=lam)
        sd = ctx.spectral(op)
        mult, xgv = op.commutator_multipliers(1)
        F = np.fft.fft(np.eye(grid.npts), axis=0)
        comm = np.real(np.fft.ifft(mult[:, None] * F, axis=0)) + np.diag(-xgv)
        comm = 0.5 * (comm + comm.T) * h        # [P_h, iA_h] = h * closed form
        pvals = psi(sd.eigenvalues)
        keep = pvals >= rank_cutoff
        if np.count_nonzero(keep) < 2:
            raise NumericalError(f"rank cutoff degeneracy at h={h}: "
                                 f"{np.count_nonzero(keep)} window states")
        B = sd.eigenvectors[:, keep] * pvals[keep][None, :]
        M = B.T @ comm @ B
        ev = np.linalg.eigvalsh(0.5 * (M + M.T))
        rows.append({"h": float(h), "lam": float(lam), "kept": int(keep.sum()),
                     "min_eig_over_h": float(ev[0] / h)})
    vals = np.array([r["min_eig_over_h"] for r in rows])
    return {
        "rows": rows,
        "a0": float(vals.min()),
        "stability": float(vals.max() / vals.min()) if vals.min() > 0 else float("inf"),
        "positive": bool(np.all(vals > 0)),
    }


# ------------------------- commutator scaling -------------------------

def run_commutator_scaling(model, grid, j_list, h_grid, ctx=None, tol=1e-4):
    """Log-log slopes of || B_j (P_h + 1)^(-1) || against h."""
    ctx = ctx or ExperimentContext()
    h_grid = np.asarray(sorted(h_grid), float)
    out = {}
    for j in j_list:
        norms = []
        for h in h_grid:
            lam = lam_of_h(model, h)
            op = OperatorHandle(grid, model, mode="rescaled", lam=lam)
            dil = DilationHandle(grid, hbar=h)
            sd = ctx.spectral(op)
            rng = ctx.rng("commutators", grid.key(), model.key(), j, h)
            res = 1.0 / (sd.eigenvalues + 1.0)
            U = sd.eigenvectors

            def apply_T(v):
                w = U @ (res * (U.T @ v))
                bj = iterated_commutator_Bj(op, dil, j, GridFunction(grid, w.reshape(grid.shape)))
                return bj.values.ravel()

            def apply_Tstar(v):
                bj = iterated_commutator_Bj(op, dil, j, GridFunction(grid, v.reshape(grid.shape)))
                w = (-1.0) ** j * bj.values.ravel()
                return U @ (res * (U.T @ w))

            sig, _, _ = operator_norm(apply_T, apply_Tstar, grid.size, rng, tol=tol)
            norms.append(sig)
        series = DecaySeries("h", h_grid, np.asarray(norms), metadata={"j": j})
        keep = fit_window(h_grid, None)
        fit = fit_power_law(h_grid[keep], series.norms[keep])
        out[j] = {"series": series, "fit": fit}
    return out


# -------------------------------- Virial --------------------------------

def run_virial(model, box_lengths, npts, ctx=None, n_form_trials=20):
    """Minimum eigenvalue per box size plus the commutator quadratic form.

    Repulsive models must show a positive minimum eigenvalue decreasing with
    the box (a vanishing truncation artifact); attractive contrast models a
    stable negative eigenvalue.  The form check compares
    <u, [P, iA] u> / <u, p0(D) u> on random localized states against the
    virial constant certified by validate_symbol.
    """
    ctx = ctx or ExperimentContext()
    rows = []
    for L in sorted(box_lengths):
        grid = make_grid(1, L, npts)
        op = OperatorHandle(grid, model)
        sd = ctx.spectral(op)
        rows.append({"L": float(L), "min_eig": float(sd.eigenvalues[0])})
    grid = make_grid(1, float(sorted(box_lengths)[-1]), npts)
    op = OperatorHandle(grid, model)
    dil = DilationHandle(grid)
    rng = ctx.rng("virial", model.key(), npts)
    ratios = []
    x = grid.x_axis
    for _ in range(n_form_trials):
        width = rng.uniform(1.0, grid.length / 12)
        x0 = rng.uniform(-grid.length / 4, grid.length / 4)
        k0 = rng.uniform(-grid.xi_max / 3, grid.xi_max / 3)
        u = GridFunction(grid, np.exp(-(x - x0) ** 2 / (2 * width ** 2) + 1j * k0 * x))
        cu = apply_commutator_PiA(op, dil, u)
        num = float(np.real(u.inner(cu)))
        p0u = grid.ifft(op.p0_table * grid.fft(u.values))
        den = float(np.real(np.vdot(u.values, p0u)) * grid.dx ** grid.n)
        if den > 1e-12:
            ratios.append(num / den)
    vrep = validate_symbol(model.symbol)
    return {
        "rows": rows,
        "min_form_ratio": float(np.min(ratios)),
        "virial_constant": float(vrep.constants["virial_ratio_inf"]),
    }


# -------------------------- spectral derivative --------------------------

def run_spectral_derivative(model, grid, N_pow, gamma, lam_grid, ctx=None,
                            eps_rel=1e-2, tol=1e-4):
    """Weighted norms of (N-1)!/(2 pi i) (R_+^N - R_-^N)(lam), the (N-1)-st
    energy derivative of the spectral measure density, fitted against
    alpha(N, gamma)."""
    ctx = ctx or ExperimentContext()
    op = OperatorHandle(grid, model)
    sd = ctx.spectral(op)
    rng = ctx.rng("spectral_derivative", grid.key(), model.key(), N_pow, gamma)
    lam_grid = np.asarray(sorted(lam_grid), float)
    w = grid.jap_x() ** (-gamma)
    from math import factorial
    norms = []
    for lam in lam_grid:
        eps = eps_rel * lam
        key = ("specder", op.key(), float(lam), float(eps), N_pow, gamma)

        def compute():
            f = factorial(N_pow - 1) / (2j * np.pi) * (
                1.0 / (sd.eigenvalues - lam - 1j * eps) ** N_pow
                - 1.0 / (sd.eigenvalues - lam + 1j * eps) ** N_pow)
            sig, _ = _windowed_opnorm(sd, f, w, w, rng, tol=tol)
            return sig

        norms.append(ctx.cached_norm(key, compute))
    series = DecaySeries("lam", lam_grid, np.asarray(norms),
                         metadata={"N": N_pow, "gamma": gamma})
    keep = fit_window(lam_grid, None)
    fit = fit_power_law(lam_grid[keep], series.norms[keep])
    return series, fit, alpha_exponent(N_pow, gamma, model.potential.mu, model.symbol.k)


# ----------------------------- ad identities -----------------------------

def _word_expand_inverse(j, ell):
    """Expansion of ad_C^j (D^-ell) as words over {Dinv, ad^m D}.

    Words are tuples of ('I',) or ('A', m); ad acts as a derivation with
    ad('I') = -I A1 I and ad(('A', m)) = ('A', m+1).
    """
    words = {tuple([("I",)] * ell): 1.0}
    for _ in range(j):
        new = {}
        for word, coef in words.items():
            for pos, item in enumerate(word):
                if item == ("I",):
                    repl = word[:pos] + (("I",), ("A", 1), ("I",)) + word[pos + 1:]
                    new[repl] = new.get(repl, 0.0) - coef
                else:
                    repl = word[:pos] + (("A", item[1] + 1),) + word[pos + 1:]
                    new[repl] = new.get(repl, 0.0) + coef
        words = new
    return words


def _eval_word(word, Dinv, adD):
    out = None
    for item in word:
        mat = Dinv if item == ("I",) else adD[item[1]]
        out = mat if out is None else out @ mat
    return out


def _product_coeffs(j, flip_zero):
    """c_j(l) by the recursion c_{j+1}(j+1)=c_j(j), c_{j+1}(l)=c_j(l-1)-c_j(l),
    with c_{j+1}(0) = -c_j(0) when flip_zero else +c_j(0); c_1 = (-1, 1)."""
    c = {0: -1.0, 1: 1.0}
    for n in range(1, j):
        nc = {n + 1: c[n], 0: (-c[0] if flip_zero else c[0])}
        for l in range(1, n + 1):
            nc[l] = c[l - 1] - c[l]
        c = nc
    return c


def check_ad_identities(j, ell, dim=6, trials=100, ctx=None, shift=8.0):
    """Evaluate the inverse and product commutator identities on random matrices.

    Inverse identity: ad_C^j D^(-ell) equals its derivation expansion into
    words D^-1 (ad^m D) D^-1 ...; the collapsed single-D^(-ell) form is also
    tested and recorded (it holds only for ell = 1).  Product identity:
    D C^j = sum_l c_j(l) C^l ad_C^(j-l) D; both sign recursions for c_j(0)
    and both power placements are tested and the exact reading recorded.

    Returns (max deviation of the true identities, resolution record).
    """
    ctx = ctx or ExperimentContext()
    rng = ctx.rng("ad_identities", j, ell, dim)
    words = _word_expand_inverse(j, ell)
    max_dev = 0.0
    collapsed_dev = 0.0
    prod_best = {}
    for _ in range(trials):
        C = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        D = rng.standard_normal((dim, dim))
        D = D + D.T + shift * np.eye(dim)        # Hermitian, shifted invertible
        if np.linalg.cond(D) > 30.0:
            continue
        Dinv = np.linalg.inv(D)
        adD = {0: D}
        for mm in range(1, j + 1):
            adD[mm] = C @ adD[mm - 1] - adD[mm - 1] @ C
        # direct nested commutator of D^-ell
        lhs = np.linalg.matrix_power(Dinv, ell)
        for _ in range(j):
            lhs = C @ lhs - lhs @ C
        rhs = sum(coef * _eval_word(w, Dinv, adD) for w, coef in words.items())
        scale = max(1.0, float(np.max(np.abs(lhs))))
        max_dev = max(max_dev, float(np.max(np.abs(lhs - rhs))) / scale)
        # collapsed reading: group by ad-composition, all inverses right-packed
        comps = {}
        for w, coef in words.items():
            ms = tuple(item[1] for item in w if item[0] == "A")
            comps[ms] = comps.get(ms, 0.0) + coef
        rhs_col = np.zeros_like(lhs)
        for ms, coef in comps.items():
            term = np.linalg.matrix_power(Dinv, ell)
            for mvalue in ms:
                term = term @ adD[mvalue] @ Dinv
            rhs_col = rhs_col + coef * term
        collapsed_dev = max(collapsed_dev,
                            float(np.max(np.abs(lhs - rhs_col))) / scale)
        # product identity readings
        lhs_p = D @ np.linalg.matrix_power(C, j)
        for flip in (True, False):
            cj = _product_coeffs(j, flip)
            for placement in ("C^l ad^(j-l)", "C^(j-l) ad^l"):
                rhs_p = np.zeros_like(lhs_p)
                for l, coef in cj.items():
                    if placement == "C^l ad^(j-l)":
                        rhs_p = rhs_p + coef * np.linalg.matrix_power(C, l) @ adD[j - l]
                    else:
                        rhs_p = rhs_p + coef * np.linalg.matrix_power(C, j - l) @ adD[l]
                dev = float(np.max(np.abs(lhs_p - rhs_p))) / max(1.0, float(np.max(np.abs(lhs_p))))
                tag = ("flip" if flip else "paper", placement)
                prod_best[tag] = max(prod_best.get(tag, 0.0), dev)
    exact = min(prod_best, key=prod_best.get)
    record = {
        "inverse_expansion_dev": max_dev,
        "inverse_collapsed_dev": collapsed_dev,
        "inverse_collapsed_exact": collapsed_dev < 1e-9,
        "product_readings": {f"{k[0]}|{k[1]}": v for k, v in prod_best.items()},
        "product_exact_reading": f"{exact[0]}|{exact[1]}",
        "product_exact_dev": prod_best[exact],
    }
    return max(max_dev, prod_best[exact]), record
