"""Spectral route to L2 small-ball probabilities.

Covariance operators on L2[0,1] are represented by their eigenvalue
sequences, either analytically known or estimated from a grid covariance
matrix by the Nystrom rule (eigenvalues of CovMatrix / n).  A spectrum may
carry a power-law tail lambda_k ~ A (k + shift)^(-rho) describing the modes
beyond the retained head; the Laplace transform sums that tail analytically
and the small-ball evaluator materialises it when the requested radius is
deep enough that truncation would bias the answer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import zeta as _hurwitz
from scipy.stats import norm as _norm

from .errors import NumericsError, SpecError
from .processes import (
    FracIntegrated,
    Grid,
    Integrated,
    build_cov,
    covariance,
)

_CLIP_REL = 1e-14
_MAX_MODES = 2**22
_MC_FALLBACK_SEED = 0x5EED


@dataclass(frozen=True)
class SpectralTail:
    """lambda_k ~ coef * (k + shift)^(-power) for k beyond the retained head."""

    coef: float
    power: float
    shift: float = 0.0
    fitted: bool = False

    def __post_init__(self):
        if not (self.coef > 0.0 and self.power > 1.0):
            raise SpecError("tail needs coef > 0 and power > 1 (trace class)")

    def values(self, k: np.ndarray) -> np.ndarray:
        return self.coef * (k + self.shift) ** -self.power

    def trace_beyond(self, k_head: int) -> float:
        # sum_{k > k_head} coef (k+shift)^-power
        return float(self.coef * _hurwitz(self.power, k_head + 1 + self.shift))


class EigenSpectrum:
    """Decreasing positive eigenvalues, optionally with an analytic tail."""

    def __init__(self, lambdas, tail: Optional[SpectralTail] = None, grid_n=None):
        lam = np.sort(np.asarray(lambdas, dtype=float))[::-1]
        if lam.size == 0 or not np.all(np.isfinite(lam)):
            raise SpecError("spectrum must be a nonempty finite sequence")
        lam = lam[lam > _CLIP_REL * lam[0]]
        if lam.size == 0 or lam[0] <= 0.0:
            raise SpecError("spectrum has no positive eigenvalues")
        self.lambdas = lam
        self.tail = tail
        self.grid_n = grid_n

    def __len__(self) -> int:
        return self.lambdas.size

    @property
    def trace(self) -> float:
        return float(self.lambdas.sum())

    def extended(self, k_total: int) -> np.ndarray:
        """Head plus tail-law eigenvalues out to k_total modes."""
        lam = self.lambdas
        if self.tail is None or k_total <= lam.size:
            return lam
        k = np.arange(lam.size + 1, k_total + 1, dtype=float)
        return np.concatenate([lam, self.tail.values(k)])


def brownian_spectrum(k: int) -> EigenSpectrum:
    """First k eigenvalues (pi (j - 1/2))^-2 of the min kernel, exact tail."""
    j = np.arange(1, k + 1)
    lam = (math.pi * (j - 0.5)) ** -2.0
    return EigenSpectrum(lam, tail=SpectralTail(math.pi**-2.0, 2.0, -0.5))


def _beam_frequencies(k: int) -> np.ndarray:
    # roots of cos(w) + 1/cosh(w) = 0, one per half-period
    j = np.arange(1, k + 1, dtype=float)
    w = (j - 0.5) * math.pi + 2.0 * (-1.0) ** (j + 1.0) * np.exp(-(j - 0.5) * math.pi)
    for _ in range(60):
        sech = 2.0 * np.exp(-w) / (1.0 + np.exp(-2.0 * w))  # w > 0 throughout
        f = np.cos(w) + sech
        df = -np.sin(w) - np.tanh(w) * sech
        step = f / df
        w = w - step
        if np.max(np.abs(step)) < 1e-14:
            break
    return w


def integrated_brownian_spectrum(k: int) -> EigenSpectrum:
    """Eigenvalues w_j^-4 of the once-integrated Brownian covariance."""
    lam = _beam_frequencies(k) ** -4.0
    return EigenSpectrum(lam, tail=SpectralTail(math.pi**-4.0, 4.0, -0.5))


def nystrom_eigen(spec_or_matrix, grid: Grid, k: int) -> EigenSpectrum:
    """Top-k eigenvalues of CovMatrix / n; returns fewer if the rest fall
    below the relative clip (smooth kernels exhaust double precision fast)."""
    if k < 1:
        raise SpecError(f"need k >= 1 modes, got {k}")
    if isinstance(spec_or_matrix, np.ndarray):
        mat = spec_or_matrix
        if mat.shape != (grid.n, grid.n):
            raise SpecError("matrix shape does not match grid")
    else:
        mat = build_cov(spec_or_matrix, grid)
    lam = np.linalg.eigvalsh(mat / grid.n)[::-1]
    lam = lam[lam > _CLIP_REL * max(lam[0], 0.0)]
    if lam.size == 0:
        raise NumericsError("no positive eigenvalues survive clipping")
    return EigenSpectrum(lam[: min(k, lam.size)], grid_n=grid.n)


def derivative_kernel(spec, grid: Grid) -> np.ndarray:
    """Covariance matrix of the pathwise derivative, by mixed second
    differences of the covariance over grid cells.  The diagonal, where the
    difference quotient is biased by within-cell variance, is replaced by the
    average of the two one-sided linear extrapolations along the row."""
    smooth = isinstance(spec, Integrated) or (
        isinstance(spec, FracIntegrated) and spec.order >= 1.0
    )
    if not smooth:
        raise SpecError(f"{spec!r} has no differentiable version; cannot form kernel")
    n = grid.n
    tf = grid.full_points
    r = covariance(spec, tf[None, :], tf[:, None])
    d = (r[1:, 1:] - r[1:, :-1] - r[:-1, 1:] + r[:-1, :-1]) * n * n
    for j in range(n):
        left = 2.0 * d[j, j - 1] - d[j, j - 2] if j >= 2 else None
        right = 2.0 * d[j, j + 1] - d[j, j + 2] if j <= n - 3 else None
        if left is None and right is None:
            raise SpecError("grid too small for diagonal extrapolation")
        vals = [v for v in (left, right) if v is not None]
        d[j, j] = sum(vals) / len(vals)
    return 0.5 * (d + d.T)


# ---------------------------------------------------------------------------
# Laplace transform of the squared L2 norm


def _fit_tail(lam: np.ndarray) -> Optional[SpectralTail]:
    k_head = lam.size
    if k_head < 8:
        return None
    k = np.arange(k_head // 2 + 1, k_head + 1, dtype=float)
    y = np.log(lam[k_head // 2 :])
    slope, intercept = np.polyfit(np.log(k), y, 1)
    if not (slope < -1.01) or not np.isfinite(slope):
        return None
    return SpectralTail(float(np.exp(intercept)), float(-slope), 0.0, fitted=True)


def _effective_tail(spectrum: EigenSpectrum) -> Optional[SpectralTail]:
    if spectrum.tail is not None:
        return spectrum.tail
    return _fit_tail(spectrum.lambdas)


def neg_log_laplace(spectrum: EigenSpectrum, lam: float) -> float:
    """-log E exp(-(lam^2 / 2) ||X||_2^2) for the Gaussian law with this
    spectrum; head summed directly, tail by alternating Hurwitz-zeta series
    to a relative truncation target of 1e-8."""
    if lam < 0.0:
        raise SpecError(f"lambda must be >= 0, got {lam}")
    if lam == 0.0:
        return 0.0
    ev = spectrum.lambdas
    tail = _effective_tail(spectrum)
    t2 = lam * lam
    if tail is not None:
        # grow the head until the series argument is safely inside |q| <= 1/2
        k_head = ev.size
        while t2 * tail.values(np.array([k_head + 1.0]))[0] > 0.5:
            if k_head >= _MAX_MODES:
                raise NumericsError("tail materialisation exceeded mode cap")
            k_head = min(2 * k_head, _MAX_MODES)
        ev = spectrum.extended(k_head) if k_head > ev.size else ev
    total = 0.5 * float(np.log1p(t2 * ev).sum())
    if tail is not None:
        k_head = ev.size
        q = t2 * tail.coef
        term_sum = 0.0
        for j in range(1, 200):
            term = (
                (-1.0) ** (j + 1)
                * q**j
                * _hurwitz(j * tail.power, k_head + 1 + tail.shift)
                / j
            )
            term_sum += term
            if abs(term) < 1e-10 * max(abs(total + 0.5 * term_sum), 1e-30):
                break
        total += 0.5 * term_sum
    return total


def laplace_transform_l2(spectrum: EigenSpectrum, lam: float) -> float:
    """E exp(-(lam^2 / 2) ||X||_2^2), a real number in (0, 1]."""
    return math.exp(-neg_log_laplace(spectrum, lam))


# ---------------------------------------------------------------------------
# small-ball evaluation


def _lr2_neg_log(lam: np.ndarray, x: float) -> float:
    """Second-order saddlepoint lower-tail of Q = sum lam_k xi_k^2 at x."""

    def kprime_gap(v):
        return float((lam / (1.0 + 2.0 * v * lam)).sum()) - x

    v_hi = 1.0
    while kprime_gap(v_hi) > 0.0:
        v_hi *= 4.0
        if v_hi > 1e300:
            raise NumericsError("saddlepoint bracket failed")
    v = brentq(kprime_gap, 0.0, v_hi, rtol=8.9e-16, maxiter=200)
    u = -v
    r = 1.0 + 2.0 * v * lam
    cgf = -0.5 * float(np.log(r).sum())
    s2 = 2.0 * (u * x - cgf)
    if s2 <= 0.0:
        raise NumericsError("degenerate saddlepoint")
    w = -math.sqrt(s2)  # lower tail: u < 0
    k2 = float((2.0 * lam**2 / r**2).sum())
    k3 = float((8.0 * lam**3 / r**3).sum())
    k4 = float((48.0 * lam**4 / r**4).sum())
    l3 = k3 / k2**1.5
    l4 = k4 / k2**2
    ut = u * math.sqrt(k2)
    c = (l4 / 8.0 - 5.0 * l3**2 / 24.0) / ut - 1.0 / ut**3 - l3 / (2.0 * ut**2) + 1.0 / w**3
    big_r = math.exp(_norm.logcdf(w) - _norm.logpdf(w))
    g = (1.0 / w - 1.0 / ut) - c
    val = big_r + g
    if val <= 0.0:
        raise NumericsError("saddlepoint expansion lost positivity")
    return 0.5 * w * w + 0.5 * math.log(2.0 * math.pi) - math.log(val)


def _upper_tail_neg_log(lam: np.ndarray, x: float) -> float:
    """P(Q <= x) for x at or above the mean energy, where no lower saddle
    exists.  Inverts G(s)/s = E exp(-sQ)/s along a vertical contour at the
    (nonpositive) Laplace saddle; there the integrand is bell-shaped and the
    quadrature converges without oscillation trouble.  The contour decay rate
    is |t|^(-1-K/2), so for very short spectra a plain MC estimate replaces
    the integral."""
    from scipy.integrate import quad

    if lam.size < 32:
        rng = np.random.default_rng(_MC_FALLBACK_SEED)
        hits = total = 0
        for _ in range(16):
            z = rng.standard_normal((250000, lam.size))
            hits += int(((z * z) @ lam <= x).sum())
            total += z.shape[0]
        if hits in (0, total):
            raise NumericsError("MC fallback saturated; radius out of range")
        return -math.log(hits / total)

    lim = -0.5 / lam[0]

    def drift(c):
        return x - float((lam / (1.0 + 2.0 * lam * c)).sum())

    # saddle of e^{cx} G(c); x >= trace puts it in (lim, 0]
    if drift(0.0) <= 0.0:
        c = 1e-3 * lim
    else:
        c = brentq(drift, lim * (1.0 - 1e-12), 0.0, rtol=8.9e-16)
        c = min(c, 1e-3 * lim)  # keep the 1/s pole off the contour
    base = 1.0 + 2.0 * lam * c

    def integrand(t):
        s = complex(c, t)
        log_g = -0.5 * np.log(1.0 + 2.0 * lam * s).sum()
        return (np.exp(log_g + s * x) / s).real

    t_max = 1.0
    while -0.25 * float(np.log1p(4.0 * lam**2 * t_max**2 / base**2).sum()) > -45.0:
        t_max *= 2.0
        if t_max > 1e9:
            raise NumericsError("contour integrand fails to decay")
    val, _err = quad(integrand, 0.0, t_max, limit=2000, epsabs=1e-13)
    p = 1.0 + val / math.pi
    if not (0.0 < p < 1.0):
        raise NumericsError("contour integral out of range")
    return -math.log(p)


def l2_smallball(spectrum: EigenSpectrum, eps: float) -> float:
    """-log P(||X||_2 <= eps) for the Gaussian law with this spectrum.

    Saddlepoint (second order) on the materialised spectrum; if eps^2 is at
    or above the mean energy there is no lower saddle and a direct integral
    is used instead.
    """
    if not (eps > 0.0):
        raise SpecError(f"radius must be > 0, got {eps}")
    x = eps * eps
    lam = spectrum.lambdas
    if spectrum.tail is not None:
        k_head = lam.size
        while (
            spectrum.tail.trace_beyond(k_head) > 1e-3 * x and k_head < _MAX_MODES
        ):
            k_head = min(2 * k_head, _MAX_MODES)
        lam = spectrum.extended(k_head)
    if x >= float(lam.sum()) * (1.0 - 1e-12):
        # unmaterialised modes act as exp(-s * residual trace) here, i.e. a
        # plain shift of the energy level
        resid = spectrum.tail.trace_beyond(lam.size) if spectrum.tail else 0.0
        return _upper_tail_neg_log(lam, x - resid)
    return _lr2_neg_log(lam, x)


def eigen_rate_fit(spectrum: EigenSpectrum, k_range) -> float:
    """Least-squares slope of log lambda_k against log k over k in k_range."""
    lo, hi = int(k_range[0]), int(k_range[1])
    if lo < 1 or hi <= lo:
        raise SpecError(f"bad index range {k_range}")
    if hi > len(spectrum):
        raise SpecError(
            f"range {k_range} exceeds the {len(spectrum)} retained modes"
        )
    k = np.arange(lo, hi + 1, dtype=float)
    y = np.log(spectrum.lambdas[lo - 1 : hi])
    if k.size < 3:
        raise SpecError("need at least 3 modes for a slope")
    slope = np.polyfit(np.log(k), y, 1)[0]
    return float(slope)
