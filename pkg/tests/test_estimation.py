"""Small-ball curves, rate-law fitting, and the transfer arithmetic."""

import math

import numpy as np
import pytest

from smallball.errors import EmptyCurveError, FitDegenerateError, SpecError
from smallball.estimation import (
    ConverseLaw,
    CurveEntry,
    RateLaw,
    SmallBallCurve,
    brownian_sup_prob,
    converse_transfer,
    debruijn_check,
    debruijn_constant,
    mc_smallball,
    rate_fit,
    regularity_bound_check,
    spectral_smallball_curve,
    transfer_bound,
)
from smallball.norms import Holder, L2Squared, Lp
from smallball.processes import BrownianMotion, Grid
from smallball.spectral import (
    EigenSpectrum,
    brownian_spectrum,
    integrated_brownian_spectrum,
    l2_smallball,
)

INF = float("inf")

# two-sided reflection series at 30 digits
SUP_PROB = {
    0.5: 0.0091569902897607558,
    1.0: 0.37077742979952391,
    2.0: 0.90899947615363375,
}


def synthetic_curve(eps, neg_log, n_samples=None, stderr=None):
    eps = np.asarray(eps, dtype=float)
    neg_log = np.asarray(neg_log, dtype=float)
    if stderr is None:
        stderr = np.zeros_like(neg_log)
    order = np.argsort(-eps)  # entries are stored large radius first
    entries = tuple(
        CurveEntry(float(eps[i]), float(neg_log[i]), float(stderr[i]),
                   None, True, True, "synthetic")
        for i in order
    )
    return SmallBallCurve(entries, Lp(INF), spec=None, n_samples=n_samples)


# ---------------------------------------------------------------------------
# Monte Carlo curves


def test_mc_curve_basic():
    eps = [1.0, 0.7, 0.5]
    curve = mc_smallball(
        BrownianMotion(), Lp(2.0), eps, n_samples=4000, seed=7, grid=Grid(512)
    )
    assert [e.eps for e in curve.entries] == eps  # sorted descending
    nl = [e.neg_log_p for e in curve.entries]
    assert nl[0] < nl[1] < nl[2]
    assert all(e.method == "mc" and e.usable for e in curve.entries)
    assert curve.n_samples == 4000 and curve.grid_n == 512


def test_mc_curve_rejects_duplicates_and_bad_args():
    bm = BrownianMotion()
    with pytest.raises(SpecError):
        mc_smallball(bm, Lp(2.0), [0.5, 0.5], 100, grid=Grid(64))
    with pytest.raises(SpecError):
        mc_smallball(bm, Lp(2.0), [0.5, -0.1], 100, grid=Grid(64))
    with pytest.raises(SpecError):
        mc_smallball(bm, Lp(2.0), [0.5], 0, grid=Grid(64))


def test_mc_curve_empty_raises():
    with pytest.raises(EmptyCurveError):
        mc_smallball(BrownianMotion(), Lp(INF), [0.01], 50, seed=3, grid=Grid(64))


def test_mc_curve_zero_hit_entry_unusable():
    # second radius is unreachable; entry stays, flagged unusable
    curve = mc_smallball(
        BrownianMotion(), Lp(2.0), [0.5, 0.01], 400, seed=5, grid=Grid(256)
    )
    good, dead = curve.entries
    assert good.usable and good.n_hits > 0
    assert not dead.usable and dead.n_hits == 0 and math.isinf(dead.neg_log_p)


def test_mc_curve_policy_grid():
    # Lipschitz-scale processes get n = 10 / eps_min
    curve = mc_smallball(BrownianMotion(), Lp(2.0), [0.5, 0.05], 200, seed=5)
    assert curve.grid_n == 200


def test_mc_trusted_flag_tracks_increment_scale():
    # 5 x median max-increment on Grid(2048) sits near 0.40 for this process
    curve = mc_smallball(
        BrownianMotion(), Lp(2.0), [1.0, 0.3], 2000, seed=11, grid=Grid(2048)
    )
    assert curve.entries[0].trusted
    assert not curve.entries[1].trusted


def test_mc_curve_deterministic(monkeypatch):
    args = (BrownianMotion(), Lp(2.0), [0.6, 0.4], 2000)
    a = mc_smallball(*args, seed=9, grid=Grid(256))
    monkeypatch.setenv("SMALLBALL_THREADS", "3")
    b = mc_smallball(*args, seed=9, grid=Grid(256))
    assert a.entries == b.entries


def test_mc_matches_spectral_l2():
    curve = mc_smallball(
        BrownianMotion(), Lp(2.0), [0.5], 20000, seed=13, grid=Grid(1024)
    )
    entry = curve.entries[0]
    ref = l2_smallball(brownian_spectrum(2048), 0.5)
    # the saddle evaluator is a ~1% method this far from the small-ball
    # regime, so its class rides on top of the sampling band
    assert abs(entry.neg_log_p - ref) < 3.0 * entry.stderr + 0.01 * ref


def test_mc_matches_reflection_series():
    curve = mc_smallball(
        BrownianMotion(), Lp(INF), [1.0], 20000, seed=17, grid=Grid(4096)
    )
    entry = curve.entries[0]
    exact = -math.log(SUP_PROB[1.0])
    # discretisation misses excursions between nodes, so allow the bias to
    # sit on the low side of nl but not above the truth
    assert entry.neg_log_p <= exact + 3.0 * entry.stderr
    assert entry.neg_log_p >= exact - 5.0 * entry.stderr


# ---------------------------------------------------------------------------
# spectral curves


def test_spectral_curve_exact_entries():
    sp = brownian_spectrum(1024)
    eps = [0.2, 0.1, 0.05]
    curve = spectral_smallball_curve(sp, eps)
    for e in curve.entries:
        assert e.method == "saddle" and e.stderr == 0.0 and e.usable and e.trusted
        assert e.neg_log_p == l2_smallball(sp, e.eps)
    assert curve.n_samples is None


def test_spectral_curve_fit_recovers_brownian_rate():
    sp = brownian_spectrum(2048)
    curve = spectral_smallball_curve(sp, np.geomspace(1e-3, 1e-2, 8))
    law = rate_fit(curve)
    assert 1.0 / law.tau == pytest.approx(2.0, abs=0.02)
    assert law.kappa == pytest.approx(0.125, rel=0.08)


# ---------------------------------------------------------------------------
# rate_fit


def test_rate_fit_exact_power_law():
    eps = np.geomspace(0.05, 0.5, 12)
    law = rate_fit(synthetic_curve(eps, 2.0 * eps**-2.0))
    assert 1.0 / law.tau == pytest.approx(2.0, rel=1e-10)
    assert law.kappa == pytest.approx(2.0, rel=1e-10)
    assert law.theta == 0.0
    assert law.r2 == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_estimates_log_exponent():
    eps = np.geomspace(1e-4, 0.7, 14)
    nl = eps**-2.0 * np.abs(np.log(eps)) ** 0.5
    law = rate_fit(synthetic_curve(eps, nl), theta_fixed=None)
    assert 1.0 / law.tau == pytest.approx(2.0, abs=1e-8)
    assert law.theta == pytest.approx(0.5, abs=1e-6)
    assert law.kappa == pytest.approx(1.0, rel=1e-6)


def test_rate_fit_fixed_nonzero_log_exponent():
    eps = np.geomspace(1e-3, 0.5, 10)
    nl = 3.0 * eps**-1.5 * np.abs(np.log(eps)) ** 0.25
    law = rate_fit(synthetic_curve(eps, nl), theta_fixed=0.25)
    assert 1.0 / law.tau == pytest.approx(1.5, rel=1e-10)
    assert law.kappa == pytest.approx(3.0, rel=1e-10)


def test_rate_fit_collinear_window_degenerate():
    eps = np.geomspace(0.30, 0.28, 6)
    curve = synthetic_curve(eps, 2.0 * eps**-2.0)
    with pytest.raises(FitDegenerateError):
        rate_fit(curve, theta_fixed=None)


def test_rate_fit_needs_enough_points():
    eps = np.array([0.5, 0.25])
    with pytest.raises(SpecError):
        rate_fit(synthetic_curve(eps, 2.0 * eps**-2.0))


def test_rate_fit_rejects_increasing_curve():
    eps = np.geomspace(0.05, 0.5, 8)
    with pytest.raises(SpecError):
        rate_fit(synthetic_curve(eps, 2.0 * eps**2.0))


def test_rate_fit_probability_window():
    # junk points outside [10/N, 0.9] are dropped when N is known
    eps = np.geomspace(0.1, 1.0, 8)
    nl = 0.3 / eps
    eps_all = np.concatenate([eps, [2.0, 0.01]])
    nl_all = np.concatenate([nl, [0.05, 8.0]])  # p = 0.95 and p = 3e-4
    law = rate_fit(synthetic_curve(eps_all, nl_all, n_samples=10000))
    assert 1.0 / law.tau == pytest.approx(1.0, rel=1e-10)
    assert law.kappa == pytest.approx(0.3, rel=1e-10)
    # without N the same junk contaminates the slope
    law_raw = rate_fit(synthetic_curve(eps_all, nl_all))
    assert abs(1.0 / law_raw.tau - 1.0) > 0.05


# ---------------------------------------------------------------------------
# transfer arithmetic


def test_transfer_exponents_finite_tau():
    res = transfer_bound(RateLaw(0.125, 0.5), 1.0, Lp(INF))
    assert res.exponent == pytest.approx(2.0 / 3.0, abs=1e-15)
    assert res.log_exponent == 0.0
    assert res.constant is None and res.d_star is None


def test_transfer_log_exponent():
    res = transfer_bound(RateLaw(1.0, 0.5, theta=0.3), 1.0, Holder(0.3))
    assert res.exponent == pytest.approx(1.0 / 1.2, abs=1e-15)
    assert res.log_exponent == pytest.approx(0.3 * 0.5 / 1.2, abs=1e-15)


def test_transfer_l2squared_norm():
    res = transfer_bound(RateLaw(0.125, 0.5), 1.0, L2Squared())
    # beta = -1/2 and p = 2 give denominator tau + 1 + 1/2 - 1/2
    assert res.exponent == pytest.approx(1.0 / 1.5, abs=1e-15)


def test_transfer_infinite_tau():
    res = transfer_bound(RateLaw(0.125, INF), 1.0, Lp(2.0))
    assert res.exponent == pytest.approx(1.0, abs=1e-15)
    assert res.log_exponent == 0.0
    assert res.constant == 0.125


def test_transfer_exponent_gap_must_be_positive():
    with pytest.raises(SpecError):
        transfer_bound(RateLaw(1.0, INF), 0.4, Holder(0.5))
    with pytest.raises(SpecError):
        transfer_bound(RateLaw(1.0, 0.5), 0.5, Lp(INF), kappa_norm=1.0)


def test_transfer_constant_brownian_example():
    law = RateLaw(0.125, 0.5)
    kappa_sup = math.pi**2 / 8.0
    res = transfer_bound(law, 1.0, Lp(INF), kappa_norm=kappa_sup)
    d_ref = (math.pi**2 / 2.0) ** (1.0 / 3.0)
    assert res.d_star == pytest.approx(d_ref, abs=1e-6)
    # at the optimum of A/d^2 + d/2 the value is (3/4) d_star
    assert res.constant == pytest.approx(0.75 * d_ref, abs=1e-6)


def test_transfer_constant_scaling():
    # kappa_norm -> c kappa_norm rescales d_star by c^(1/3) here
    law = RateLaw(0.125, 0.5)
    base = transfer_bound(law, 1.0, Lp(INF), kappa_norm=1.0)
    scaled = transfer_bound(law, 1.0, Lp(INF), kappa_norm=8.0)
    assert scaled.d_star == pytest.approx(2.0 * base.d_star, rel=1e-7)


def test_converse_transfer():
    res = converse_transfer(ConverseLaw(2.0 / 3.0, 0.3), 1.0, Lp(INF))
    assert res.exponent == pytest.approx(2.0, abs=1e-12)
    assert res.log_exponent == pytest.approx(0.9, abs=1e-12)
    flat = converse_transfer(ConverseLaw(0.0), 1.0, Lp(2.0))
    assert flat.exponent == 0.0 and flat.log_exponent == 0.0
    with pytest.raises(SpecError):
        converse_transfer(ConverseLaw(2.0 / 3.0), 2.0, Lp(INF))


# ---------------------------------------------------------------------------
# regularity ceiling


def test_regularity_check_passes_below_bound():
    eps = np.geomspace(0.01, 0.3, 10)
    verdict = regularity_bound_check(
        BrownianMotion(), 1.0, Lp(INF), synthetic_curve(eps, eps**-0.9)
    )
    assert verdict.passed
    assert verdict.slope == pytest.approx(0.9, rel=1e-9)
    assert verdict.bound == pytest.approx(1.1, abs=1e-12)


def test_regularity_check_fails_above_bound():
    eps = np.geomspace(0.01, 0.3, 10)
    verdict = regularity_bound_check(
        BrownianMotion(), 1.0, Lp(INF), synthetic_curve(eps, eps**-1.3)
    )
    assert not verdict.passed


# ---------------------------------------------------------------------------
# Laplace growth


def test_debruijn_constant_values():
    assert debruijn_constant(0.125, 0.5) == pytest.approx(0.5, abs=1e-14)
    assert debruijn_constant(0.37, INF) == 0.37


def test_debruijn_check_brownian():
    res = debruijn_check(
        brownian_spectrum(2048), RateLaw(0.125, 0.5), lam_grid=np.geomspace(50, 1e3, 16)
    )
    assert res.max_rel_dev < 0.02
    assert res.k_hat == pytest.approx(0.5, rel=0.01)
    assert res.growth_exponent == pytest.approx(1.0, abs=2e-3)
    assert res.growth_coef == pytest.approx(0.5, rel=0.02)
    assert not res.degenerate


def test_debruijn_check_integrated():
    # kappa plays no role in the growth model, only tau does; the no-offset
    # k_hat carries the preasymptotic constant, the free fit sheds it
    res = debruijn_check(
        integrated_brownian_spectrum(2000),
        RateLaw(9.9, 1.5),
        lam_grid=np.geomspace(100, 1e3, 12),
    )
    assert res.growth_exponent == pytest.approx(0.5, abs=1e-3)
    assert res.growth_coef == pytest.approx(2.0**-0.5, rel=1e-3)
    assert res.k_hat == pytest.approx(2.0**-0.5, rel=0.10)
    assert res.max_rel_dev < 0.1
    assert not res.degenerate


def test_debruijn_check_degenerate_spectrum():
    res = debruijn_check(EigenSpectrum([1.0]), RateLaw(0.125, 0.5))
    assert res.degenerate and res.max_rel_dev > 0.25


def test_debruijn_check_grid_range():
    with pytest.raises(SpecError):
        debruijn_check(
            brownian_spectrum(256), RateLaw(0.125, 0.5), lam_grid=np.geomspace(5, 100, 8)
        )


# ---------------------------------------------------------------------------
# reflection series


def test_sup_prob_values():
    for eps, ref in SUP_PROB.items():
        assert brownian_sup_prob(eps) == pytest.approx(ref, rel=1e-12)


def test_sup_prob_continuous_at_series_switch():
    lo = brownian_sup_prob(1.0 - 1e-9)
    hi = brownian_sup_prob(1.0 + 1e-9)
    assert abs(hi - lo) < 1e-8


def test_sup_prob_monotone():
    eps = np.linspace(0.2, 3.0, 30)
    vals = [brownian_sup_prob(float(e)) for e in eps]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(SpecError):
        brownian_sup_prob(0.0)
