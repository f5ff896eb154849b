"""Fits and finite-size data collapse for extracting growth laws and exponents.

Forms supported: y = a*sqrt(t ln t) + c (diffusive with log correction),
y = a*sqrt(t) + c, y = a*t + c, y = a*ln t + c, power laws in log-log, and the
two-parameter collapse n(t) = t^-alpha f(t / L^z).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng

# Reference exponents of the parity-conserving universality class, reported
# alongside collapse results for comparison.
PC_Z = 1.744
PC_ALPHA = 0.286

FORMS = ("sqrt_tlnt", "sqrt_t", "linear", "log_t", "power")


@dataclass
class FitResult:
    """Fitted coefficients with residual diagnostics and the window used."""

    form: str
    params: dict
    stderr: dict
    window: tuple[float, float]
    n_points: int
    r2: float
    ss_res: float
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        blob = {
            "form": self.form,
            "params": self.params,
            "stderr": self.stderr,
            "window": list(self.window),
            "n_points": self.n_points,
            "r2": self.r2,
            "ss_res": self.ss_res,
        }
        blob.update({k: v for k, v in self.extras.items() if _jsonable(v)})
        return json.dumps(blob, sort_keys=True, indent=1)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")


def _jsonable(v):
    return isinstance(v, (int, float, str, bool, list, dict, type(None)))


def load_fit_json(path) -> FitResult:
    with open(path) as f:
        blob = json.load(f)
    return FitResult(form=blob["form"], params=blob["params"], stderr=blob["stderr"],
                     window=tuple(blob["window"]), n_points=blob["n_points"],
                     r2=blob["r2"], ss_res=blob["ss_res"],
                     extras={k: v for k, v in blob.items()
                             if k not in ("form", "params", "stderr", "window",
                                          "n_points", "r2", "ss_res")})


def transform_abscissa(form: str, t: np.ndarray) -> np.ndarray:
    """The x coordinate each linear form regresses against."""
    t = np.asarray(t, dtype=np.float64)
    if form == "sqrt_tlnt":
        return np.sqrt(t * np.log(t))
    if form == "sqrt_t":
        return np.sqrt(t)
    if form == "linear":
        return t
    if form == "log_t":
        return np.log(t)
    raise ValueError(f"no linear abscissa for form {form!r}")


def _window_mask(t, y, window, need_log=False):
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo, hi = window
    m = (t >= lo) & (t <= hi) & ~np.isnan(y)
    if need_log:
        m &= y > 0
    m &= t >= 2  # ln t must be positive for the log-corrected form
    return t[m], y[m]


def _linfit(x, y):
    """OLS slope/intercept with parameter standard errors and R^2."""
    n = len(x)
    A = np.column_stack([x, np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if n > 2:
        sigma2 = ss_res / (n - 2)
        cov = sigma2 * np.linalg.inv(A.T @ A)
        se = np.sqrt(np.diag(cov))
    else:
        se = np.array([np.nan, np.nan])
    return coef, se, r2, ss_res


def fit_linear_form(form: str, times, values, window) -> FitResult:
    """Least-squares fit of y = a * g(t) + c for the named growth form.

    Also reports the through-origin slope (c forced to zero).
    """
    t, y = _window_mask(times, values, window)
    if len(t) < 3:
        raise ValueError(f"degenerate fit window {window}: {len(t)} usable points")
    x = transform_abscissa(form, t)
    coef, se, r2, ss_res = _linfit(x, y)
    sxx = float(x @ x)
    a0 = float(x @ y) / sxx
    res0 = y - a0 * x
    ss0 = float(res0 @ res0)
    se0 = math.sqrt(ss0 / (len(x) - 1) / sxx) if len(x) > 1 else float("nan")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return FitResult(
        form=form,
        params={"coefficient": float(coef[0]), "intercept": float(coef[1]),
                "coefficient_origin": a0},
        stderr={"coefficient": float(se[0]), "intercept": float(se[1]),
                "coefficient_origin": se0},
        window=(float(window[0]), float(window[1])),
        n_points=len(t), r2=r2, ss_res=ss_res,
        extras={"ss_res_origin": ss0,
                "r2_origin": 1.0 - ss0 / ss_tot if ss_tot > 0 else 1.0},
    )


def fit_sqrt_tlnt(times, values, window) -> FitResult:
    """Fit the diffusive-with-log-correction growth form."""
    return fit_linear_form("sqrt_tlnt", times, values, window)


def fit_power_law(times, values, window) -> FitResult:
    """Log-log linear regression: y = amplitude * t^exponent."""
    t, y = _window_mask(times, values, window, need_log=True)
    if len(t) < 3:
        raise ValueError(f"degenerate fit window {window}: {len(t)} usable points")
    lx, ly = np.log(t), np.log(y)
    coef, se, r2, ss_res = _linfit(lx, ly)
    return FitResult(
        form="power",
        params={"exponent": float(coef[0]), "amplitude": float(math.exp(coef[1]))},
        stderr={"exponent": float(se[0]), "log_amplitude": float(se[1])},
        window=(float(window[0]), float(window[1])),
        n_points=len(t), r2=r2, ss_res=ss_res,
    )


def compare_forms(times, values, window, forms=("sqrt_tlnt", "sqrt_t", "linear")) -> dict:
    """Fit several growth forms on one window; keyed by form name."""
    return {f: fit_linear_form(f, times, values, window) for f in forms}


# ---------------------------------------------------------------------------
# finite-size collapse


def _collapse_cost(curves, alpha: float, z: float, n_grid: int) -> float:
    """Spread of log-rescaled curves about their pointwise mean.

    Curves are rescaled to (t/L^z, y*t^alpha); the cost is the variance of
    log10(y_rescaled) across curves on a common log-spaced abscissa, which
    makes the cost invariant under global multiplicative rescaling and under
    curve relabeling.
    """
    res = []
    for L, t, y in curves:
        good = (t >= 1) & (y > 0)
        t, y = t[good], y[good]
        if len(t) < 2:
            return float("inf")
        res.append((np.log10(t / L**z), np.log10(y) + alpha * np.log10(t)))
    lo = max(r[0][0] for r in res)
    hi = min(r[0][-1] for r in res)
    if hi <= lo:
        return float("inf")
    grid = np.linspace(lo, hi, n_grid)
    ys = np.stack([np.interp(grid, gx, gy) for gx, gy in res])
    return float(np.mean((ys - ys.mean(axis=0)) ** 2))


def collapse_fit(curves: dict, alpha_grid, z_grid, n_grid: int = 60,
                 refine: int = 2) -> FitResult:
    """Grid-search the collapse n(t) = t^-alpha f(t/L^z) over >= 3 sizes.

    curves: {L: (times, values)}.  The grid minimum is locally refined by
    shrinking the grid around the best cell.  The cost landscape of the first
    pass is attached to the extras.
    """
    if len(curves) < 3:
        raise ValueError("collapse needs at least three system sizes")
    prepared = []
    for L, (t, y) in sorted(curves.items()):
        t = np.asarray(t, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        good = ~np.isnan(y)
        prepared.append((float(L), t[good], y[good]))
    alpha_grid = np.asarray(alpha_grid, dtype=np.float64)
    z_grid = np.asarray(z_grid, dtype=np.float64)

    def search(agrid, zgrid):
        cost = np.empty((len(agrid), len(zgrid)))
        for i, a in enumerate(agrid):
            for j, zz in enumerate(zgrid):
                c = _collapse_cost(prepared, a, zz, n_grid)
                if not np.isfinite(c):
                    raise ValueError(
                        "non-overlapping rescaled ranges; check sizes "
                        + ", ".join(str(int(c0[0])) for c0 in prepared))
                cost[i, j] = c
        i, j = np.unravel_index(np.argmin(cost), cost.shape)
        return cost, agrid[i], zgrid[j]

    cost0, a_best, z_best = search(alpha_grid, z_grid)
    da = alpha_grid[1] - alpha_grid[0] if len(alpha_grid) > 1 else 0.01
    dz = z_grid[1] - z_grid[0] if len(z_grid) > 1 else 0.05
    for _ in range(refine):
        agrid = np.linspace(a_best - da, a_best + da, 9)
        zgrid = np.linspace(z_best - dz, z_best + dz, 9)
        _, a_best, z_best = search(agrid, zgrid)
        da /= 4
        dz /= 4
    best = _collapse_cost(prepared, a_best, z_best, n_grid)
    return FitResult(
        form="collapse",
        params={"alpha": float(a_best), "z": float(z_best)},
        stderr={},
        window=(float(min(p[1][0] for p in prepared)),
                float(max(p[1][-1] for p in prepared))),
        n_points=sum(len(p[1]) for p in prepared),
        r2=float("nan"), ss_res=best,
        extras={"alpha_grid": alpha_grid.tolist(), "z_grid": z_grid.tolist(),
                "cost_grid": cost0.tolist(),
                "pc_reference": {"z": PC_Z, "alpha": PC_ALPHA},
                "sizes": [p[0] for p in prepared]},
    )


def collapse_fit_profile(curves: dict, z_grid, n_grid: int = 60) -> FitResult:
    """Tied collapse C(x, t) = t^-1/z f(x / t^1/z) over fixed-time profiles.

    curves: {t: (x, values)} with t playing the role the system size plays
    in collapse_fit; the value exponent is tied to 1/z.
    """
    if len(curves) < 3:
        raise ValueError("collapse needs at least three profiles")
    prepared = []
    for t, (x, y) in sorted(curves.items()):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        good = (~np.isnan(y)) & (x > 0)
        prepared.append((float(t), x[good], y[good]))
    z_grid = np.asarray(z_grid, dtype=np.float64)
    costs = []
    for zz in z_grid:
        # reuse the density-collapse cost with roles swapped:
        # (x / t^{1/z}, y * x^{0}) -> we rescale manually here
        res = []
        ok = True
        for t, x, y in prepared:
            pos = y > 0
            if pos.sum() < 2:
                ok = False
                break
            res.append((np.log10(x[pos] / t ** (1.0 / zz)),
                        np.log10(y[pos]) + (1.0 / zz) * math.log10(t)))
        if not ok:
            costs.append(float("inf"))
            continue
        lo = max(r[0][0] for r in res)
        hi = min(r[0][-1] for r in res)
        if hi <= lo:
            costs.append(float("inf"))
            continue
        grid = np.linspace(lo, hi, n_grid)
        ys = np.stack([np.interp(grid, gx, gy) for gx, gy in res])
        costs.append(float(np.mean((ys - ys.mean(axis=0)) ** 2)))
    costs = np.asarray(costs)
    if not np.isfinite(costs).any():
        raise ValueError("non-overlapping rescaled ranges in profile collapse")
    j = int(np.nanargmin(costs))
    return FitResult(
        form="collapse_profile",
        params={"z": float(z_grid[j])},
        stderr={},
        window=(float(z_grid[0]), float(z_grid[-1])),
        n_points=sum(len(p[1]) for p in prepared),
        r2=float("nan"), ss_res=float(costs[j]),
        extras={"z_grid": z_grid.tolist(), "cost": costs.tolist()},
    )


# ---------------------------------------------------------------------------
# slow-mode weight of an empty corridor


def psapprox(L: int, dl: int, nu) -> tuple[float, float]:
    """Exact and linearised -ln of the slow-mode corridor weight.

    exact: -2 [ln C(L - 2*dl, nu*L) - ln C(L, nu*L)] through log-gamma.
    approx: 8 * nu * dl, the quoted leading-order expansion.
    """
    nu = float(nu)
    q = nu * L
    if abs(q - round(q)) > 1e-9:
        raise ValueError(f"nu*L = {q} is not an integer")
    q = int(round(q))
    if not (0 <= dl and 2 * dl + q <= L):
        raise ValueError(f"need 0 <= 2*dl + nu*L <= L, got dl={dl}, q={q}, L={L}")

    def logc(n, k):
        return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)

    exact = -2.0 * (logc(L - 2 * dl, q) - logc(L, q))
    approx = 8.0 * nu * dl
    return exact, approx


def lambda_vs_nu(series_by_nu: dict, window, fit_cutoff: float = 0.3) -> FitResult:
    """Growth coefficients per filling plus a through-origin linear fit.

    series_by_nu: {nu: (times, values)}.  Each series is fit by the
    log-corrected diffusive form; the through-origin line is restricted to
    fillings <= fit_cutoff.
    """
    table = []
    for nu, (t, y) in sorted(series_by_nu.items()):
        nu_f = float(nu)
        if nu_f == 0.0:
            table.append((0.0, 0.0, 0.0))
            continue
        fit = fit_sqrt_tlnt(t, y, window)
        table.append((nu_f, fit.params["coefficient"], fit.stderr["coefficient"]))
    nus = np.array([r[0] for r in table])
    lams = np.array([r[1] for r in table])
    sel = nus <= fit_cutoff + 1e-12
    if sel.sum() < 2:
        raise ValueError("need at least two fillings at or below the cutoff")
    slope = float(nus[sel] @ lams[sel]) / float(nus[sel] @ nus[sel])
    resid = lams[sel] - slope * nus[sel]
    lam_range = float(lams.max() - lams.min()) if len(lams) > 1 else float("nan")
    return FitResult(
        form="lambda_vs_nu",
        params={"slope": slope},
        stderr={},
        window=(float(window[0]), float(window[1])),
        n_points=int(sel.sum()),
        r2=float("nan"),
        ss_res=float(resid @ resid),
        extras={"table": [list(r) for r in table],
                "max_abs_residual": float(np.max(np.abs(resid))),
                "lambda_range": lam_range,
                "fit_cutoff": fit_cutoff},
    )


def bootstrap_coefficient(form: str, times, per_real: np.ndarray, window,
                          n_boot: int = 200, seed: int = 0) -> tuple[float, float]:
    """Bootstrap (over realizations) mean and std of a linear-form coefficient."""
    R = per_real.shape[0]
    vals = np.empty(n_boot)
    for b in range(n_boot):
        g = _rng.generator(_rng.derive(seed, b))
        pick = g.integers(0, R, size=R)
        with np.errstate(invalid="ignore"):
            curve = np.nanmean(per_real[pick], axis=0)
        vals[b] = fit_linear_form(form, times, curve, window).params["coefficient"]
    return float(vals.mean()), float(vals.std(ddof=1))
