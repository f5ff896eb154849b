import math

import numpy as np
import pytest

from u1qa import rng
from u1qa.scaling import (
    FitResult,
    bootstrap_coefficient,
    collapse_fit,
    collapse_fit_profile,
    compare_forms,
    fit_linear_form,
    fit_power_law,
    fit_sqrt_tlnt,
    lambda_vs_nu,
    load_fit_json,
    psapprox,
    PC_ALPHA,
    PC_Z,
)


def test_sqrt_tlnt_exact_recovery():
    t = np.arange(10, 1001)
    y = 0.5 * np.sqrt(t * np.log(t))
    fit = fit_sqrt_tlnt(t, y, (10, 1000))
    assert fit.params["coefficient"] == pytest.approx(0.5, abs=1e-9)
    assert fit.params["intercept"] == pytest.approx(0.0, abs=1e-9)
    assert fit.r2 > 1 - 1e-12


def test_sqrt_tlnt_with_noise():
    t = np.arange(10, 1001)
    g = rng.generator(1)
    y = 0.5 * np.sqrt(t * np.log(t)) + g.normal(0, 0.05, len(t))
    fit = fit_sqrt_tlnt(t, y, (10, 1000))
    assert fit.params["coefficient"] == pytest.approx(0.5, abs=0.01)
    assert fit.stderr["coefficient"] < 0.01


def test_power_law_exact():
    t = np.arange(5, 500)
    fit = fit_power_law(t, 3 * t**-0.5, (5, 500))
    assert fit.params["exponent"] == pytest.approx(-0.5, abs=1e-12)
    assert fit.params["amplitude"] == pytest.approx(3.0, rel=1e-10)


def test_power_law_masks_nonpositive():
    t = np.arange(2, 100).astype(float)
    y = 2 * t**-1.0
    y[10] = -1
    y[20] = np.nan
    fit = fit_power_law(t, y, (2, 99))
    assert fit.params["exponent"] == pytest.approx(-1.0, abs=1e-9)
    with pytest.raises(ValueError):
        fit_power_law(t, -np.abs(y), (2, 99))


def test_degenerate_window_raises():
    with pytest.raises(ValueError):
        fit_sqrt_tlnt(np.arange(100), np.arange(100.0), (90, 10))


def test_compare_forms_prefers_generator():
    t = np.arange(20, 400)
    y = 0.3 * np.sqrt(t * np.log(t)) + 1.0
    fits = compare_forms(t, y, (20, 400))
    assert fits["sqrt_tlnt"].ss_res < fits["sqrt_t"].ss_res
    assert fits["sqrt_tlnt"].ss_res < fits["linear"].ss_res


def test_subsample_invariance():
    t = np.arange(10, 2001)
    g = rng.generator(2)
    y = 0.4 * np.sqrt(t * np.log(t)) + g.normal(0, 0.02, len(t))
    full = fit_sqrt_tlnt(t, y, (50, 1800)).params["coefficient"]
    sub = fit_sqrt_tlnt(t[::4], y[::4], (50, 1800)).params["coefficient"]
    assert abs(full - sub) < 3 * fit_sqrt_tlnt(t, y, (50, 1800)).stderr["coefficient"] * 2


def _synthetic_curves(alpha=0.3, z=2.0):
    curves = {}
    for L in (24, 48, 96):
        t = np.unique(np.round(np.logspace(0, 4.2, 90)).astype(int))
        n = t**-alpha * np.exp(-t / L**z)
        keep = n > 1e-12
        curves[L] = (t[keep].astype(float), n[keep])
    return curves


def test_collapse_recovers_synthetic():
    fit = collapse_fit(_synthetic_curves(),
                       np.arange(0.1, 0.51, 0.01), np.arange(1.2, 3.01, 0.05))
    assert fit.params["alpha"] == pytest.approx(0.3, abs=0.011)
    assert fit.params["z"] == pytest.approx(2.0, abs=0.051)
    assert fit.extras["pc_reference"] == {"z": PC_Z, "alpha": PC_ALPHA}


def test_collapse_invariances():
    curves = _synthetic_curves()
    base = collapse_fit(curves, np.arange(0.2, 0.41, 0.02), np.arange(1.6, 2.41, 0.1))
    # global multiplicative rescaling leaves the cost and optimum unchanged
    scaled = {L: (t, 7.5 * y) for L, (t, y) in curves.items()}
    fit2 = collapse_fit(scaled, np.arange(0.2, 0.41, 0.02), np.arange(1.6, 2.41, 0.1))
    assert fit2.params == base.params
    assert fit2.ss_res == pytest.approx(base.ss_res, rel=1e-12)
    # relabeling the curves changes nothing
    relabeled = dict(reversed(list(curves.items())))
    fit3 = collapse_fit(relabeled, np.arange(0.2, 0.41, 0.02), np.arange(1.6, 2.41, 0.1))
    assert fit3.params == base.params


def test_collapse_needs_three_sizes():
    curves = _synthetic_curves()
    del curves[96]
    with pytest.raises(ValueError):
        collapse_fit(curves, [0.3], [2.0])


def test_collapse_disjoint_ranges_error():
    curves = {
        10: (np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.9, 0.8])),
        100: (np.array([1e7, 2e7, 3e7]), np.array([0.5, 0.4, 0.3])),
        1000: (np.array([1e12, 2e12]), np.array([0.2, 0.1])),
    }
    with pytest.raises(ValueError, match="non-overlapping"):
        collapse_fit(curves, [0.3], [2.0])


def test_profile_collapse_tied_exponent():
    curves = {}
    for t in (100, 400, 1600):
        x = np.arange(1, 60, dtype=float)
        curves[t] = (x, t**-0.5 * np.exp(-0.5 * (x / t**0.5) ** 2))
    fit = collapse_fit_profile(curves, np.arange(1.2, 3.05, 0.05))
    assert fit.params["z"] == pytest.approx(2.0, abs=0.051)


def test_psapprox_contract():
    e0, a0 = psapprox(1000, 0, 0.05)
    assert e0 == 0.0 and a0 == 0.0
    # monotone in the corridor width
    prev = -1.0
    for dl in range(0, 101):
        e, _ = psapprox(1000, dl, 0.05)
        assert e >= prev
        prev = e
    # exact term equals big-integer binomials at small sizes
    for L, dl, nu in [(60, 5, 0.2), (48, 4, 0.25), (24, 3, 0.5)]:
        e, _ = psapprox(L, dl, nu)
        q = round(nu * L)
        direct = -2.0 * (math.log(math.comb(L - 2 * dl, q)) - math.log(math.comb(L, q)))
        assert e == pytest.approx(direct, abs=1e-10)
    with pytest.raises(ValueError):
        psapprox(10, 4, 0.5)
    with pytest.raises(ValueError):
        psapprox(10, 1, 0.123)


def test_lambda_vs_nu_shapes():
    t = np.arange(2, 400, dtype=float)
    series = {}
    for nu in (0.1, 0.15, 0.2, 0.25, 0.3):
        series[nu] = (t, (1.3 * nu) * np.sqrt(t * np.log(t)))
    fit = lambda_vs_nu(series, (10, 390))
    assert fit.params["slope"] == pytest.approx(1.3, abs=1e-6)
    assert fit.extras["max_abs_residual"] < 1e-6
    # zero filling contributes a zero coefficient without fitting
    series[0.0] = (t, np.zeros_like(t))
    fit0 = lambda_vs_nu(series, (10, 390))
    assert [0.0, 0.0, 0.0] in fit0.extras["table"]


def test_fit_json_round_trip(tmp_path):
    t = np.arange(10, 200)
    fit = fit_linear_form("log_t", t, 2.0 * np.log(t) + 1, (10, 200))
    path = tmp_path / "x.fit.json"
    fit.save(path)
    back = load_fit_json(path)
    assert back.form == "log_t"
    assert back.params["coefficient"] == pytest.approx(2.0, abs=1e-9)
    assert back.r2 == fit.r2


def test_bootstrap_coefficient():
    g = rng.generator(3)
    t = np.arange(10, 300, dtype=float)
    truth = 0.7 * np.sqrt(t * np.log(t))
    per_real = truth[None, :] + g.normal(0, 0.5, (40, len(t)))
    mean, sd = bootstrap_coefficient("sqrt_tlnt", t, per_real, (10, 299),
                                     n_boot=100, seed=4)
    assert mean == pytest.approx(0.7, abs=0.02)
    assert 0 < sd < 0.02
