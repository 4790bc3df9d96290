"""End-to-end acceptance battery.

Each test pins one advertised capability at its stated tolerance and wall
budget, using fixed seeds throughout.  Four checks are currently expected to
fail and are left failing on purpose rather than retuned around:

* test_01 and the Gaussian half of test_10: over the window [0.3, 1.0] the
  sup-norm law has a negative additive constant, so a two-parameter log-log
  fit is biased up to about 2.20 for any seed once the fit window drops
  points with fewer than 10 hits (the band would only be reachable through
  the starved, down-biased smallest radius that the window rule excludes).
* test_08a: the integrated-kernel eigenvalues carry a half-power log
  correction, so the least-squares slope over k in [5, 40] is -4.148.
* test_09: the fractional-difference spectrum is not yet flat at eps = 1e-4;
  the local slope reaches its < 0.3 bar only at much smaller radii.

See the README for the full discussion.
"""

import filecmp
import math
import time

import numpy as np
import pytest

from smallball import cli
from smallball.chenli import ChenLiQuery, chenli_bound
from smallball.estimation import (
    ConverseLaw,
    RateLaw,
    brownian_sup_prob,
    converse_transfer,
    mc_smallball,
    rate_fit,
    spectral_smallball_curve,
    transfer_bound,
)
from smallball.fraccalc import frac_derivative, frac_integral
from smallball.norms import Lp
from smallball.processes import (
    BrownianMotion,
    FbmRlDifference,
    FractionalBm,
    GaussianConvolution,
    Grid,
    Integrated,
    RiemannLiouville,
    StableScaledFbm,
)
from smallball.quantize import quant_curve
from smallball.spectral import (
    brownian_spectrum,
    eigen_rate_fit,
    integrated_brownian_spectrum,
    l2_smallball,
    laplace_transform_l2,
    nystrom_eigen,
)

INF = float("inf")
SUP = Lp(INF)
BM = BrownianMotion()
IBM = Integrated(BM, 1)


class clock:
    """Context manager asserting a wall budget after the substance passed."""

    def __init__(self, budget_s):
        self.budget = budget_s

    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.monotonic() - self.t0
        if exc_type is None:
            assert self.elapsed < self.budget, (
                f"ran {self.elapsed:.1f}s, budget {self.budget:.0f}s"
            )
        return False


def fit_slope(curve):
    return 1.0 / rate_fit(curve, theta_fixed=0.0).tau


def test_01_brownian_sup_exponent():
    with clock(120.0):
        curve = mc_smallball(
            BM, SUP, np.geomspace(0.3, 1.0, 8), 1_000_000, seed=101, grid=Grid(2048)
        )
        slope = fit_slope(curve)
    assert abs(slope - 2.0) <= 0.15


def test_02_brownian_sup_level_matches_series():
    with clock(60.0):
        curve = mc_smallball(BM, SUP, [1.0], 10_000, seed=102, grid=Grid(131072))
        entry = curve.entries[0]
    p_hat = math.exp(-entry.neg_log_p)
    p_ref = brownian_sup_prob(1.0)
    assert abs(p_hat - p_ref) <= 3.0 * p_hat * entry.stderr


def test_03_brownian_l2_constant():
    with clock(10.0):
        nl = l2_smallball(brownian_spectrum(4096), 0.01)
    assert 0.11875 <= nl * 1e-4 <= 0.13125


def test_04_laplace_closed_form():
    with clock(5.0):
        sp = brownian_spectrum(4096)
        for lam in (1.0, 3.0, 10.0, 30.0):
            ref = math.cosh(lam) ** -0.5
            assert abs(laplace_transform_l2(sp, lam) - ref) < 1e-6


def test_05_integrated_brownian_l2_exponent():
    with clock(30.0):
        spectrum = nystrom_eigen(IBM, Grid(1024), 1024)
        curve = spectral_smallball_curve(spectrum, np.geomspace(1e-4, 1e-2, 10))
        slope = fit_slope(curve)
    assert abs(slope - 2.0 / 3.0) <= 0.03


@pytest.mark.parametrize("h", [0.3, 0.7])
def test_06_integrated_fbm_l2_exponent(h):
    with clock(120.0):
        spectrum = nystrom_eigen(Integrated(FractionalBm(h), 1), Grid(1024), 1024)
        curve = spectral_smallball_curve(spectrum, np.geomspace(1e-4, 1e-2, 10))
        slope = fit_slope(curve)
    assert abs(slope - 1.0 / (h + 1.0)) <= 0.05


def test_07_product_bound_holds_everywhere():
    with clock(180.0):
        for eps in (0.3, 0.5):
            for lam in (0.5, 1.0, 2.0, 4.0, 8.0):
                q = ChenLiQuery(IBM, BM, 1.0, SUP, eps, lam)
                res = chenli_bound(q, 20_000, seed=107, grid=Grid(1024))
                assert res.trivial or res.margin_se >= -2.0, (eps, lam)


def test_08a_nystrom_integrated_kernel_slope():
    with clock(30.0):
        spectrum = nystrom_eigen(IBM, Grid(1024), 64)
        slope = eigen_rate_fit(spectrum, (5, 40))
    assert abs(slope - (-4.0)) <= 0.1


def test_08b_nystrom_derivative_kernel_slope():
    from smallball.spectral import derivative_kernel

    with clock(30.0):
        g = Grid(1024)
        spectrum = nystrom_eigen(derivative_kernel(IBM, g), g, 64)
        slope = eigen_rate_fit(spectrum, (5, 40))
    assert abs(slope - (-2.0)) <= 0.1


def test_09_fractional_difference_is_flat():
    with clock(60.0):
        spectrum = nystrom_eigen(FbmRlDifference(0.7), Grid(1024), 1024)
        curve = spectral_smallball_curve(spectrum, np.geomspace(1e-4, 1e-2, 10))
        slope = fit_slope(curve)
    assert slope < 0.3


def test_10_stable_mixture_flattens_rate():
    with clock(180.0):
        window = np.geomspace(0.3, 1.0, 8)
        stable = mc_smallball(
            StableScaledFbm(0.5, 1.0), SUP, window, 200_000, seed=110, grid=Grid(2048)
        )
        gauss = mc_smallball(
            FractionalBm(0.5), SUP, window, 200_000, seed=111, grid=Grid(2048)
        )
        s_stable = fit_slope(stable)
        s_gauss = fit_slope(gauss)
    assert abs(s_stable - 1.0) <= 0.3
    assert abs(s_gauss - 2.0) <= 0.2


def test_11_smooth_shift_keeps_sup_rate():
    with clock(180.0):
        window = np.geomspace(0.32, 0.55, 10)
        shifted = mc_smallball(
            GaussianConvolution(0.5, (1.0,)), SUP, window, 1_000_000,
            seed=112, grid=Grid(512),
        )
        plain = mc_smallball(
            RiemannLiouville(0.5), SUP, window, 1_000_000, seed=113, grid=Grid(512)
        )
        diff = abs(fit_slope(shifted) - fit_slope(plain))
    assert diff <= 0.2


def test_12_fractional_calculus_contracts():
    with clock(10.0):
        t = Grid(1024).points
        f = np.sin(math.pi * t)
        for order in (0.5, 1.0, 1.7):
            back = frac_derivative(frac_integral(f, order), order)
            assert np.max(np.abs(back - f)) < 1e-8
        twice_half = frac_integral(frac_integral(f, 0.5), 0.5)
        once = frac_integral(f, 1.0)
        assert np.max(np.abs(twice_half - once)) < 1e-3
        # D^(1/2) t = 2 sqrt(t / pi)
        half = frac_derivative(t.copy(), 0.5)
        ref = 2.0 * np.sqrt(t / math.pi)
        assert np.max(np.abs(half - ref)[2:]) < 1e-3


def test_13_transfer_algebra_is_exact():
    with clock(5.0):
        fwd = transfer_bound(RateLaw(0.125, 0.5), 1.0, SUP)
        assert fwd.exponent == 2.0 / 3.0
        assert fwd.log_exponent == 0.0
        flat = transfer_bound(RateLaw(0.125, INF), 1.0, Lp(2.0))
        assert flat.exponent == 1.0 and flat.constant == 0.125
        conv = converse_transfer(ConverseLaw(2.0 / 3.0, 0.3), 1.0, SUP)
        assert conv.exponent == 2.0
        assert conv.log_exponent == 0.3 / (2.0 / 3.0 * 0.5)


def test_14_quantization_rate_gap():
    with clock(300.0):
        budgets = [2.0, 4.0, 8.0, 12.0, 16.0]
        bm_curve = quant_curve(BM, brownian_spectrum(1500), budgets, 40_000, seed=114)
        ibm_curve = quant_curve(
            IBM, integrated_brownian_spectrum(1500), budgets, 40_000, seed=115
        )
        d_bm = np.array([e[1] for e in bm_curve.entries])
        d_ibm = np.array([e[1] for e in ibm_curve.entries])
        assert np.all(np.diff(d_bm) <= 0.0)
        log_r = np.log(budgets)
        slope_bm = np.polyfit(log_r, np.log(d_bm), 1)[0]
        slope_ibm = np.polyfit(log_r, np.log(d_ibm), 1)[0]
        gap = slope_bm - slope_ibm
    assert abs(gap - 1.0) <= 0.3


def test_15_verify_all_is_reproducible(tmp_path):
    with clock(120.0):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["verify-all", "--out", str(a)]) == 0
        assert cli.main(["verify-all", "--out", str(b)]) == 0
        for name in ("verify_all.csv", "verify-all.manifest.json"):
            assert filecmp.cmp(a / name, b / name, shallow=False), name
