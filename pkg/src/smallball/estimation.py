"""Small-ball curves, rate fitting, and rate-transfer arithmetic.

A small-ball curve tabulates -log P(||X|| <= eps) on a decreasing radius
grid, either by Monte Carlo (with delta-method standard errors) or from the
spectral evaluator.  Rates follow the parametrisation

    -log P(||X|| <= eps) ~ kappa * eps^(-1/tau) * |log eps|^theta

and converse-side assumptions use P(||X|| <= eps) >= exp(-c eps^(-1/gamma'))
style laws with gamma in [0, 1).  The fitter is weighted least squares in
log-log coordinates with an intrinsic-scatter term solved so that the
weighted chi-square equals its degrees of freedom; this keeps deep, tiny-
stderr points from dominating when the power law is only asymptotic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq, curve_fit
from scipy.stats import norm as _normdist

from . import _rng
from .errors import EmptyCurveError, FitDegenerateError, SpecError
from .norms import batch_norms, beta_p
from .processes import (
    Grid,
    StableScaledFbm,
    _gaussian_chunk,
    effective_hurst,
    sample_positive_stable,
)
from .spectral import EigenSpectrum, l2_smallball

MAX_GRID = 4096


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class CurveEntry:
    eps: float
    neg_log_p: float
    stderr: float  # stderr of neg_log_p (delta method for MC, 0 for exact)
    n_hits: Optional[int]
    usable: bool
    trusted: bool
    method: str


@dataclass(frozen=True)
class SmallBallCurve:
    entries: tuple
    norm: object
    spec: object = None
    n_samples: Optional[int] = None
    grid_n: Optional[int] = None

    def __post_init__(self):
        eps = [e.eps for e in self.entries]
        if len(eps) == 0:
            raise SpecError("curve needs at least one entry")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise SpecError("curve radii must be strictly decreasing")

    @property
    def eps(self) -> np.ndarray:
        return np.array([e.eps for e in self.entries])

    @property
    def neg_log_p(self) -> np.ndarray:
        return np.array([e.neg_log_p for e in self.entries])


def _policy_grid(spec, eps_min: float) -> Grid:
    h = effective_hurst(spec)
    if h >= 0.5:
        n = 10.0 / eps_min
    else:
        n = (10.0 / eps_min) ** (1.0 / h)
    return Grid(int(np.clip(math.ceil(n), 64, MAX_GRID)))


def mc_smallball(
    spec,
    norm,
    eps_list,
    n_samples: int,
    seed: int = _rng.DEFAULT_SEED,
    grid: Optional[Grid] = None,
) -> SmallBallCurve:
    """Monte Carlo small-ball curve; one path batch serves every radius.

    Entries with zero hits are kept but flagged unusable; an all-zero curve
    raises EmptyCurveError.  Each entry also carries a ``trusted`` flag,
    False when eps is within 5 median max-increments of the discretisation
    scale (the curve is then dominated by grid bias, not the process).
    """
    eps = np.asarray(sorted(set(float(e) for e in eps_list), reverse=True))
    if eps.size != len(list(eps_list)):
        raise SpecError("radius list must not contain duplicates")
    if np.any(eps <= 0.0):
        raise SpecError("radii must be positive")
    if n_samples < 1:
        raise SpecError("n_samples must be >= 1")
    if grid is None:
        grid = _policy_grid(spec, float(eps.min()))

    if isinstance(spec, StableScaledFbm):
        amps = np.sqrt(sample_positive_stable(spec.alpha / 2.0, n_samples, seed))
        from .processes import FractionalBm

        gauss_spec = FractionalBm(spec.h)
    else:
        amps = None
        gauss_spec = spec
        # fail fast on unsupported covariances before burning samples
        from .processes import _require_gaussian

        _require_gaussian(spec)

    rows = _rng.chunk_rows(grid.n, n_samples)
    n_chunks = -(-n_samples // rows)

    def work(c):
        rng = _rng.stream(seed, _rng.DOMAIN_PATHS, c)
        k = min(rows, n_samples - c * rows)
        vals = _gaussian_chunk(gauss_spec, grid, k, rng)
        if amps is not None:
            vals = vals * amps[c * rows : c * rows + k, None]
        nrm = batch_norms(vals, norm)
        inc = np.abs(np.diff(vals, axis=1, prepend=0.0)).max(axis=1)
        return nrm, inc

    norms_all = np.empty(n_samples)
    incs_all = np.empty(n_samples)
    pos = 0
    for nrm, inc in _rng.map_chunks(work, n_chunks):
        norms_all[pos : pos + nrm.size] = nrm
        incs_all[pos : pos + inc.size] = inc
        pos += nrm.size

    norms_all.sort()
    hits = np.searchsorted(norms_all, eps, side="right")
    if hits.max() == 0:
        raise EmptyCurveError("no radius received a single hit; enlarge eps or N")
    # E max-increment is infinite for stable mixtures, so use the median
    inc_scale = float(np.median(incs_all))
    entries = []
    for e, h in zip(eps, hits):
        if h == 0:
            entries.append(
                CurveEntry(float(e), math.inf, math.inf, 0, False, False, "mc")
            )
            continue
        p = h / n_samples
        nl = -math.log(p)
        se = math.sqrt((1.0 - p) / (n_samples * p))
        entries.append(
            CurveEntry(float(e), nl, se, int(h), True, bool(e >= 5.0 * inc_scale), "mc")
        )
    return SmallBallCurve(
        tuple(entries), norm, spec=spec, n_samples=n_samples, grid_n=grid.n
    )


def spectral_smallball_curve(spectrum: EigenSpectrum, eps_list) -> SmallBallCurve:
    """Exact-method curve from the spectral evaluator (stderr 0)."""
    from .norms import Lp

    eps = sorted(set(float(e) for e in eps_list), reverse=True)
    entries = tuple(
        CurveEntry(e, l2_smallball(spectrum, e), 0.0, None, True, True, "saddle")
        for e in eps
    )
    return SmallBallCurve(entries, Lp(2.0), spec=None, n_samples=None, grid_n=None)


# ---------------------------------------------------------------------------
# rate laws and fitting


@dataclass(frozen=True)
class RateLaw:
    """neg log p ~ kappa * eps^(-1/tau) * |log eps|^theta (tau may be inf)."""

    kappa: float
    tau: float
    theta: float = 0.0
    r2: Optional[float] = None
    slope_se: Optional[float] = None

    def __post_init__(self):
        if not (self.kappa > 0.0):
            raise SpecError(f"kappa must be > 0, got {self.kappa}")
        if not (self.tau > 0.0):
            raise SpecError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class ConverseLaw:
    """Lower-bound law with exponent 1/gamma', gamma in [0, 1); gamma = 0
    encodes a sub-polynomial (logarithmic) small-ball decay."""

    gamma: float
    delta: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise SpecError(f"gamma must be in [0, 1), got {self.gamma}")


def _selected_points(curve: SmallBallCurve):
    xs, ys, ss = [], [], []
    for e in curve.entries:
        if not e.usable or not math.isfinite(e.neg_log_p) or e.neg_log_p <= 0.0:
            continue
        if curve.n_samples is not None:
            p = math.exp(-e.neg_log_p)
            if p < 10.0 / curve.n_samples or p > 0.9:
                continue
        xs.append(math.log(1.0 / e.eps))
        ys.append(math.log(e.neg_log_p))
        ss.append(e.stderr / e.neg_log_p)
    return np.array(xs), np.array(ys), np.array(ss)


def _wls(design: np.ndarray, y: np.ndarray, w: np.ndarray):
    a = design.T @ (design * w[:, None])
    b = design.T @ (w * y)
    coef = np.linalg.solve(a, b)
    cov = np.linalg.inv(a)
    resid = y - design @ coef
    return coef, cov, resid


def rate_fit(curve: SmallBallCurve, theta_fixed: Optional[float] = 0.0) -> RateLaw:
    """Fit the rate law in log-log coordinates.

    theta_fixed pins the log exponent (default 0); pass None to estimate it,
    which raises FitDegenerateError when log eps and log|log eps| are too
    collinear over the requested radius range to separate.
    """
    x, y, sig = _selected_points(curve)
    est_theta = theta_fixed is None
    n_par = 3 if est_theta else 2
    if x.size < n_par + 1:
        raise SpecError(
            f"need at least {n_par + 1} usable points in the fit window, have {x.size}"
        )
    if (est_theta or theta_fixed != 0.0) and np.any(x <= 0.0):
        raise SpecError("log-log-log terms need every radius < 1")
    if est_theta:
        lx = np.log(x)
        # collinearity guard: R^2 of log x regressed on x
        r = np.corrcoef(x, lx)[0, 1]
        if r * r > 0.995:
            raise FitDegenerateError(
                "log eps and log|log eps| are collinear here; pass theta_fixed"
            )
        design = np.column_stack([np.ones_like(x), x, lx])
        y_fit = y
    else:
        design = np.column_stack([np.ones_like(x), x])
        y_fit = y - theta_fixed * np.log(np.maximum(x, 1e-300)) if theta_fixed else y

    dof = x.size - n_par
    s2 = 0.0
    coef = cov = resid = None
    for _ in range(200):
        w = 1.0 / np.maximum(sig**2 + s2, 1e-300)
        coef, cov, resid = _wls(design, y_fit, w)
        if dof <= 0:
            break
        chi0 = float((resid**2 * w).sum())
        if chi0 <= dof:
            s2_new = 0.0
        else:
            hi = float((resid**2).sum()) / dof + 1.0

            def gap(s):
                return float((resid**2 / np.maximum(sig**2 + s, 1e-300)).sum()) - dof

            s2_new = brentq(gap, 0.0, hi, rtol=1e-12) if gap(0.0) > 0 else 0.0
        if abs(s2_new - s2) <= 1e-12 * (1.0 + s2):
            s2 = s2_new
            break
        s2 = s2_new
    w = 1.0 / np.maximum(sig**2 + s2, 1e-300)
    coef, cov, resid = _wls(design, y_fit, w)
    slope = float(coef[1])
    if slope <= 0.0:
        raise SpecError("curve does not decrease in eps; no rate to fit")
    ybar = float((w * y_fit).sum() / w.sum())
    tss = float((w * (y_fit - ybar) ** 2).sum())
    r2 = 1.0 - float((w * resid**2).sum()) / tss if tss > 0 else 1.0
    slope_se = float(math.sqrt(max(cov[1, 1], 0.0)))
    if dof <= 0 or (s2 == 0.0 and np.all(sig == 0.0)):
        # unweighted residual scale for exact curves
        scale = float((resid**2).sum()) / dof if dof > 0 else 0.0
        slope_se = float(math.sqrt(max(cov[1, 1] * scale, 0.0)))
    theta = float(coef[2]) if est_theta else float(theta_fixed)
    return RateLaw(
        kappa=float(math.exp(coef[0])),
        tau=1.0 / slope,
        theta=theta,
        r2=r2,
        slope_se=slope_se,
    )


# ---------------------------------------------------------------------------
# transfer arithmetic


@dataclass(frozen=True)
class TransferResult:
    exponent: float
    log_exponent: float
    constant: Optional[float] = None
    d_star: Optional[float] = None

    @property
    def resolved(self) -> bool:
        return self.constant is not None


def debruijn_constant(kappa: float, tau: float) -> float:
    """Growth constant of -log Laplace at lambda -> inf implied by the rate
    (kappa, tau): K = (1+a) a^(-a/(1+a)) kappa^(1/(1+a)) 2^(-a/(1+a)),
    a = 1/(2 tau)."""
    if math.isinf(tau):
        return kappa
    a = 1.0 / (2.0 * tau)
    return (
        (1.0 + a)
        * a ** (-a / (1.0 + a))
        * kappa ** (1.0 / (1.0 + a))
        * 0.5 ** (a / (1.0 + a))
    )


def _golden_min(f, lo: float, hi: float, tol: float = 1e-10):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def transfer_bound(
    law: RateLaw, m: float, norm, kappa_norm: Optional[float] = None
) -> TransferResult:
    """Rate of the m-fold antiderivative in the given norm, from the L2 rate
    of the rough part.  The constant is resolved only when the comparison
    norm constant is supplied; otherwise it is reported as unresolved."""
    if not (m > 0.0):
        raise SpecError(f"order m must be > 0, got {m}")
    beta, p = beta_p(norm)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    gap = m - beta - inv_p
    if math.isinf(law.tau):
        if gap <= 0.0:
            raise SpecError("m - beta - 1/p must be positive for the transfer")
        return TransferResult(1.0 / gap, 0.0, constant=law.kappa, d_star=None)
    denom = law.tau + gap
    if denom <= 0.0:
        raise SpecError("tau + m - beta - 1/p must be positive for the transfer")
    exponent = 1.0 / denom
    log_exponent = law.theta * law.tau / denom
    if kappa_norm is None:
        return TransferResult(exponent, log_exponent)
    gamma_gap = m - 0.5 - beta - inv_p
    if gamma_gap <= 0.0:
        raise SpecError("constant resolution needs m - 1/2 - beta - 1/p > 0")
    gamma = 1.0 / gamma_gap
    k_const = debruijn_constant(law.kappa, law.tau)
    e_pow = 1.0 / (law.tau + 0.5)

    def obj(t):
        d = math.exp(t)
        return kappa_norm * d**-gamma + k_const * d**e_pow

    t_star, c_star = _golden_min(obj, -30.0, 30.0)
    return TransferResult(exponent, log_exponent, constant=c_star, d_star=math.exp(t_star))


def converse_transfer(law: ConverseLaw, m: float, norm) -> TransferResult:
    """Converse direction: a lower-bound exponent for the rough part from an
    upper small-ball law of the smooth image."""
    if not (m > 0.0):
        raise SpecError(f"order m must be > 0, got {m}")
    beta, p = beta_p(norm)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    if law.gamma == 0.0:
        return TransferResult(0.0, 0.0)
    denom = 1.0 / law.gamma - m + beta + inv_p
    if denom <= 0.0:
        raise SpecError("1/gamma - m + beta + 1/p must be positive")
    return TransferResult(1.0 / denom, law.delta / (law.gamma * denom))


# ---------------------------------------------------------------------------
# verification helpers


@dataclass(frozen=True)
class RegularityVerdict:
    passed: bool
    slope: float
    bound: float
    slope_se: Optional[float]


def regularity_bound_check(spec, m: float, norm, curve: SmallBallCurve):
    """PASS iff the fitted small-ball slope does not exceed the regularity
    ceiling 1/(m - beta - 1/p) by more than the 0.1 allowance."""
    if not (m > 0.0):
        raise SpecError(f"order m must be > 0, got {m}")
    beta, p = beta_p(norm)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    gap = m - beta - inv_p
    if gap <= 0.0:
        raise SpecError("m - beta - 1/p must be positive")
    fit = rate_fit(curve, theta_fixed=0.0)
    slope = 1.0 / fit.tau
    bound = 1.0 / gap + 0.1
    return RegularityVerdict(bool(slope <= bound), slope, bound, fit.slope_se)


@dataclass(frozen=True)
class DebruijnResult:
    k_hat: float
    max_rel_dev: float
    growth_exponent: float
    growth_coef: float
    degenerate: bool


def debruijn_check(spectrum: EigenSpectrum, law: RateLaw, lam_grid=None):
    """Compare -log Laplace growth against K lambda^(1/(tau+1/2)).

    Fits K by least squares on the fixed-exponent model and reports the sup
    relative deviation, then refits the growth exponent freely; curves whose
    deviation exceeds 25% are flagged degenerate (the spectrum does not obey
    the claimed rate at these lambda).
    """
    from .spectral import neg_log_laplace

    if lam_grid is None:
        lam_grid = np.geomspace(10.0, 1e3, 16)
    lam_grid = np.asarray(lam_grid, dtype=float)
    if np.any(lam_grid < 10.0 - 1e-9) or np.any(lam_grid > 1e3 + 1e-6):
        raise SpecError("lambda grid must lie within [10, 1000]")
    y = np.array([neg_log_laplace(spectrum, la) for la in lam_grid])
    a = 1.0 / (law.tau + 0.5)
    t_exp = law.theta * law.tau / (law.tau + 0.5)
    phi = lam_grid**a * np.log(lam_grid) ** t_exp
    k_hat = float((phi * y).sum() / (phi * phi).sum())
    model = k_hat * phi
    dev = float(np.max(np.abs(y - model) / model))

    def growth(la, c, k, b):
        return c + k * la**b

    p0 = (0.0, max(k_hat, 1e-3), max(a, 0.1))
    try:
        popt, _ = curve_fit(growth, lam_grid, y, p0=p0, maxfev=20000)
        g_coef, g_exp = float(popt[1]), float(popt[2])
    except RuntimeError:
        g_coef, g_exp = math.nan, math.nan
    return DebruijnResult(k_hat, dev, g_exp, g_coef, bool(dev > 0.25))


def brownian_sup_prob(eps: float) -> float:
    """P(sup_{[0,1]} |B| <= eps), two-sided reflection series (exact)."""
    if not (eps > 0.0):
        raise SpecError(f"radius must be > 0, got {eps}")
    if eps < 1.0:
        k = np.arange(64)
        terms = (-1.0) ** k / (2.0 * k + 1.0) * np.exp(
            -math.pi**2 * (2.0 * k + 1.0) ** 2 / (8.0 * eps**2)
        )
        return float(4.0 / math.pi * terms.sum())
    k = np.arange(-40, 41)
    vals = (-1.0) ** np.abs(k) * (
        _normdist.cdf((2.0 * k + 1.0) * eps) - _normdist.cdf((2.0 * k - 1.0) * eps)
    )
    return float(min(vals.sum(), 1.0))
