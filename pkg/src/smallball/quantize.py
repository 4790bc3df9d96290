"""Functional quantization through per-coordinate scalar codebooks.

The Karhunen-Loeve expansion turns path quantization with squared-L2
distortion into independent scalar problems: a product codebook across
coordinates makes the nearest-codeword search separable, so the distortion
of a level allocation (n_1, ..., n_d) is sum_k lambda_k e(n_k)^2 with e(n)^2
the optimal standard-normal quantizer distortion.  Budgets are in nats,
r = sum log n_k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import root
from scipy.stats import norm as _norm

from . import _rng
from .errors import NumericsError, SpecError
from .spectral import EigenSpectrum

_MAX_LEVELS = 256
_CODEBOOK_CACHE: dict = {}


def _centroids(c: np.ndarray) -> np.ndarray:
    b = 0.5 * (c[:-1] + c[1:])
    lo = np.concatenate([[-np.inf], b])
    hi = np.concatenate([b, [np.inf]])
    mass = _norm.cdf(hi) - _norm.cdf(lo)
    return (_norm.pdf(lo) - _norm.pdf(hi)) / mass


def _distortion(c: np.ndarray) -> float:
    b = 0.5 * (c[:-1] + c[1:])
    lo = np.concatenate([[-np.inf], b])
    hi = np.concatenate([b, [np.inf]])
    mass = _norm.cdf(hi) - _norm.cdf(lo)
    first = _norm.pdf(lo) - _norm.pdf(hi)
    return float(1.0 - 2.0 * (c * first).sum() + (c * c * mass).sum())


def gauss_scalar_codebook(n: int):
    """Optimal n-level standard-normal quantizer: (codebook, e(n)^2).

    Lloyd fixed point solved as a root problem (hybrid Powell); falls back to
    plain Lloyd iteration if the root solver stalls.
    """
    if n < 1:
        raise SpecError(f"levels must be >= 1, got {n}")
    hit = _CODEBOOK_CACHE.get(n)
    if hit is not None:
        return hit
    if n == 1:
        out = (np.zeros(1), 1.0)
        _CODEBOOK_CACHE[n] = out
        return out
    c0 = _norm.ppf((2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)) * 0.95
    sol = root(lambda c: np.sort(c) - _centroids(np.sort(c)), c0, method="hybr", tol=1e-13)
    c = np.sort(sol.x)
    # judge by the fixed-point residual, not sol.success: MINPACK reports
    # "not making progress" on large boards whose root is already converged
    if np.max(np.abs(c - _centroids(c))) > 1e-10:
        c = c0
        for _ in range(10000):
            c_new = _centroids(c)
            if np.max(np.abs(c_new - c)) < 1e-14:
                c = c_new
                break
            c = c_new
        else:
            raise NumericsError(f"Lloyd iteration did not converge for n={n}")
    out = (c, _distortion(c))
    _CODEBOOK_CACHE[n] = out
    return out


@dataclass(frozen=True)
class Quantizer:
    spectrum: EigenSpectrum
    levels: tuple
    codebooks: tuple
    rate: float  # nats actually used, sum log n_k

    @property
    def implied_distortion_sq(self) -> float:
        lam = self.spectrum.lambdas
        return float(
            sum(l * gauss_scalar_codebook(n)[1] for l, n in zip(lam, self.levels))
        )


def product_quantizer(spectrum: EigenSpectrum, budget: float) -> Quantizer:
    """Greedy level allocation under a nats budget.

    Repeatedly increments the level of the coordinate with the largest
    marginal distortion decrease per added log-cost; stops when no increment
    fits the remaining budget.  Coordinates never exceed 256 levels.
    """
    if budget < 0.0:
        raise SpecError(f"budget must be >= 0, got {budget}")
    lam = spectrum.lambdas
    levels = np.ones(lam.size, dtype=int)
    used = 0.0
    while True:
        remaining = budget - used
        best_k, best_ratio = -1, -1.0
        for k in range(lam.size):
            n = levels[k]
            if n >= _MAX_LEVELS:
                continue
            cost = math.log(n + 1) - math.log(n)
            if cost > remaining + 1e-12:
                continue
            gain = lam[k] * (
                gauss_scalar_codebook(n)[1] - gauss_scalar_codebook(n + 1)[1]
            )
            ratio = gain / cost
            if ratio > best_ratio:
                best_k, best_ratio = k, ratio
        if best_k < 0:
            break
        used += math.log(levels[best_k] + 1) - math.log(levels[best_k])
        levels[best_k] += 1
    books = tuple(gauss_scalar_codebook(int(n))[0] for n in levels)
    return Quantizer(spectrum, tuple(int(n) for n in levels), books, used)


def quant_error(
    spec,
    quantizer: Quantizer,
    n_mc: int,
    seed: int = _rng.DEFAULT_SEED,
):
    """MC estimate of the squared-L2 distortion root, (D_hat, stderr).

    Works in the quantizer's own KL coordinates; the caller guarantees the
    quantizer was built on the spectrum of ``spec`` (not verifiable cheaply
    here).  Nearest-codeword search is separable per coordinate.
    """
    if n_mc < 2:
        raise SpecError("n_mc must be >= 2")
    lam = quantizer.spectrum.lambdas
    d = lam.size
    mids = [
        0.5 * (cb[:-1] + cb[1:]) if cb.size > 1 else None
        for cb in quantizer.codebooks
    ]
    active = [k for k in range(d) if quantizer.levels[k] > 1]
    rows = _rng.chunk_rows(d, n_mc)
    n_chunks = -(-n_mc // rows)

    def work(c):
        rng = _rng.stream(seed, _rng.DOMAIN_QUANT, c)
        k_rows = min(rows, n_mc - c * rows)
        xi = rng.standard_normal((k_rows, d))
        err = xi * xi
        for k in active:
            cb = quantizer.codebooks[k]
            q = cb[np.searchsorted(mids[k], xi[:, k])]
            err[:, k] = (xi[:, k] - q) ** 2
        d2 = err @ lam
        return float(d2.sum()), float((d2 * d2).sum()), k_rows

    s1 = s2 = 0.0
    for a, b, _k in _rng.map_chunks(work, n_chunks):
        s1 += a
        s2 += b
    mean = s1 / n_mc
    var = max(s2 / n_mc - mean * mean, 0.0) / (n_mc - 1)
    d_hat = math.sqrt(mean)
    se = math.sqrt(var) / (2.0 * d_hat) if d_hat > 0 else 0.0
    return d_hat, se


@dataclass(frozen=True)
class QuantCurve:
    entries: tuple  # (r, distortion, stderr), r increasing

    def __post_init__(self):
        rs = [e[0] for e in self.entries]
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise SpecError("quantization budgets must be strictly increasing")


def quant_curve(
    spec,
    spectrum: EigenSpectrum,
    budgets,
    n_mc: int,
    seed: int = _rng.DEFAULT_SEED,
) -> QuantCurve:
    entries = []
    for r in sorted(float(r) for r in budgets):
        qz = product_quantizer(spectrum, r)
        d_hat, se = quant_error(spec, qz, n_mc, seed=seed)
        entries.append((r, d_hat, se))
    return QuantCurve(tuple(entries))
