"""Process specifications, covariance kernels, and path sampling on [0, 1].

All processes start at 0.  Paths are discretised on the uniform grid
t_i = i/n, i = 1..n (the origin value is implicit).  Covariances with a
Volterra representation X_t = int_0^t K(t-u) dW_u use Gauss-Jacobi product
quadrature that absorbs the (min(s,t)-u)^(H-1/2) endpoint singularity into
the weight, which is exact for smooth residual factors and accurate to
~1e-14 at 64 nodes for the kernels used here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma
from scipy.special import roots_jacobi

from . import _rng
from .errors import NumericsError, SpecError

_NQ = 64  # Gauss-Jacobi nodes for Volterra covariances

MAX_CHOLESKY_N = 4096


# ---------------------------------------------------------------------------
# grids and paths


@dataclass(frozen=True)
class Grid:
    """Uniform grid with n interior points t_i = i/n on (0, 1]."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise SpecError(f"grid size must be a positive integer, got {self.n}")

    @property
    def points(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    @property
    def full_points(self) -> np.ndarray:
        return np.arange(0, self.n + 1) / self.n

    @property
    def h(self) -> float:
        return 1.0 / self.n


@dataclass(frozen=True)
class SamplePath:
    grid: Grid
    values: np.ndarray = field(compare=False)


class PathBatch:
    """Batch of sample paths stored as one (count, n) array.

    Behaves as a sequence of SamplePath views; bulk consumers should read
    ``.values`` directly.
    """

    def __init__(self, grid: Grid, values: np.ndarray):
        self.grid = grid
        self.values = values

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i) -> SamplePath:
        return SamplePath(self.grid, self.values[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


# ---------------------------------------------------------------------------
# process specs


@dataclass(frozen=True)
class BrownianMotion:
    pass


@dataclass(frozen=True)
class FractionalBm:
    """Fractional Brownian motion, standard normalisation Var X_t = t^(2h)."""

    h: float

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise SpecError(f"FractionalBm requires h in (0, 1), got {self.h}")


@dataclass(frozen=True)
class RiemannLiouville:
    """Volterra process with kernel (t-u)^(h-1/2), no normalising constant."""

    h: float

    def __post_init__(self):
        if not (self.h > 0.0):
            raise SpecError(f"RiemannLiouville requires h > 0, got {self.h}")


@dataclass(frozen=True)
class Integrated:
    """m-fold running integral of the base process."""

    base: object
    m: int

    def __post_init__(self):
        if not isinstance(self.m, int) or self.m < 1:
            raise SpecError(f"Integrated requires integer m >= 1, got {self.m}")
        _require_gaussian(self.base)


@dataclass(frozen=True)
class FracIntegrated:
    """Fractional integral of order > 0 of the base process."""

    base: object
    order: float

    def __post_init__(self):
        if not (self.order > 0.0 and math.isfinite(self.order)):
            raise SpecError(f"FracIntegrated requires order > 0, got {self.order}")
        _require_gaussian(self.base)


@dataclass(frozen=True)
class FbmRlDifference:
    """Difference of fractional Brownian motion and its Volterra part, both
    driven by the same noise, so the rough components cancel.  Convention:
    the fBm factor carries the normalisation Var B_t = v(h) t^(2h) that makes
    the shared-driver cross covariance equal the Volterra covariance."""

    h: float

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise SpecError(f"FbmRlDifference requires h in (0, 1), got {self.h}")


@dataclass(frozen=True)
class GaussianConvolution:
    """Volterra kernel (t-u)^(h-1/2) (1 + sum_j coeffs[j] (t-u)^(j+1))."""

    h: float
    coeffs: tuple

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise SpecError(f"GaussianConvolution requires h in (0, 1), got {self.h}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))


@dataclass(frozen=True)
class StableScaledFbm:
    """sqrt(A) B^h with A positive (alpha/2)-stable; symmetric alpha-stable
    scaling mixture of fractional Brownian motion.  Not Gaussian; covariance
    is undefined (E A = inf)."""

    h: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise SpecError(f"StableScaledFbm requires h in (0, 1), got {self.h}")
        if not (0.0 < self.alpha < 2.0):
            raise SpecError(
                f"StableScaledFbm requires alpha in (0, 2), got {self.alpha}"
            )


GAUSSIAN_SPECS = (
    BrownianMotion,
    FractionalBm,
    RiemannLiouville,
    Integrated,
    FracIntegrated,
    FbmRlDifference,
    GaussianConvolution,
)


def _require_gaussian(spec):
    if not isinstance(spec, GAUSSIAN_SPECS):
        raise SpecError(f"{spec!r} is not a Gaussian process spec")


def fbm_volterra_variance(h: float) -> float:
    """v(h) with Var B^h_t = v(h) t^(2h) for the shared-driver fBm factor."""
    return _gamma(h + 0.5) * _gamma(2.0 - 2.0 * h) / (2.0 * h * _gamma(1.5 - h))


def effective_hurst(spec) -> float:
    """Path regularity index used by grid-refinement policies, capped at 1
    (anything Lipschitz or better discretizes alike)."""
    if isinstance(spec, BrownianMotion):
        return 0.5
    if isinstance(spec, (FractionalBm, StableScaledFbm)):
        return spec.h
    if isinstance(spec, (RiemannLiouville, GaussianConvolution)):
        return min(spec.h, 1.0)
    if isinstance(spec, Integrated):
        return min(effective_hurst(spec.base) + spec.m, 1.0)
    if isinstance(spec, FracIntegrated):
        return min(effective_hurst(spec.base) + spec.order, 1.0)
    # the difference process is smoother than either ingredient
    return 1.0


# ---------------------------------------------------------------------------
# covariance kernels


def _jacobi_nodes(alpha: float):
    key = (_NQ, float(alpha))
    nodes = _JACOBI_CACHE.get(key)
    if nodes is None:
        x, w = roots_jacobi(_NQ, alpha, 0.0)
        nodes = (x, w)
        _JACOBI_CACHE[key] = nodes
    return nodes


_JACOBI_CACHE: dict = {}


def _rl_cov_pairs(h: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """int_0^lo ((hi-u)(lo-u))^(h-1/2) du for lo <= hi, vectorised."""
    a = h - 0.5
    out = np.empty_like(lo)
    eq = hi <= lo * (1.0 + 1e-12)
    # diagonal closed form: lo^(2h) / (2h)
    out[eq] = lo[eq] ** (2.0 * h) / (2.0 * h)
    ne = ~eq
    if np.any(ne):
        x, w = _jacobi_nodes(a)
        lo_, hi_ = lo[ne, None], hi[ne, None]
        u = lo_ * (1.0 + x) / 2.0
        vals = (hi_ - u) ** a
        out[ne] = (lo_[:, 0] / 2.0) ** (a + 1.0) * (vals * w).sum(axis=1)
    return out


def _gc_poly(coeffs: tuple) -> np.ndarray:
    return np.array((1.0,) + coeffs)


def _gc_cov_pairs(h: float, coeffs: tuple, lo, hi) -> np.ndarray:
    """Covariance of the polynomially modulated Volterra kernel."""
    a = h - 0.5
    c = _gc_poly(coeffs)
    out = np.empty_like(lo)
    eq = hi <= lo * (1.0 + 1e-12)
    if np.any(eq):
        # int_0^lo x^(2a) (g(x))^2 dx with polynomial g: exact term by term
        b = np.convolve(c, c)
        k = np.arange(b.size)
        lo_eq = lo[eq, None]
        out[eq] = (b * lo_eq ** (2.0 * a + k + 1.0) / (2.0 * a + k + 1.0)).sum(axis=1)
    ne = ~eq
    if np.any(ne):
        x, w = _jacobi_nodes(a)
        lo_, hi_ = lo[ne, None], hi[ne, None]
        u = lo_ * (1.0 + x) / 2.0
        wlo = lo_ - u
        whi = hi_ - u
        g1 = np.polynomial.polynomial.polyval(wlo, c)
        g2 = np.polynomial.polynomial.polyval(whi, c)
        vals = g1 * whi**a * g2
        out[ne] = (lo_[:, 0] / 2.0) ** (a + 1.0) * (vals * w).sum(axis=1)
    return out


def _int_fbm_phi(x: np.ndarray, h: float) -> np.ndarray:
    e = 2.0 * h + 2.0
    return x**e / ((2.0 * h + 1.0) * e)


def _cov_pairs(spec, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Covariance on flat arrays of time pairs in [0, 1]."""
    lo = np.minimum(s, t)
    hi = np.maximum(s, t)
    if isinstance(spec, BrownianMotion):
        return lo.copy()
    if isinstance(spec, FractionalBm):
        e = 2.0 * spec.h
        return 0.5 * (s**e + t**e - np.abs(t - s) ** e)
    if isinstance(spec, RiemannLiouville):
        if spec.h == 0.5:
            return lo.copy()
        return _rl_cov_pairs(spec.h, lo, hi)
    if isinstance(spec, FbmRlDifference):
        v = fbm_volterra_variance(spec.h)
        e = 2.0 * spec.h
        fbm = 0.5 * (s**e + t**e - np.abs(t - s) ** e)
        return v * fbm - _rl_cov_pairs(spec.h, lo, hi)
    if isinstance(spec, GaussianConvolution):
        return _gc_cov_pairs(spec.h, spec.coeffs, lo, hi)
    if isinstance(spec, Integrated):
        if spec.m == 1 and isinstance(spec.base, BrownianMotion):
            return lo**2 * (3.0 * hi - lo) / 6.0
        if spec.m == 1 and isinstance(spec.base, FractionalBm):
            h = spec.base.h
            e = 2.0 * h + 1.0
            sym = t * s**e / e + s * t**e / e
            ph = _int_fbm_phi(s, h) + _int_fbm_phi(t, h) - _int_fbm_phi(np.abs(t - s), h)
            return 0.5 * (sym - ph)
        inner = spec.base if spec.m == 1 else Integrated(spec.base, spec.m - 1)
        return _integrate_cov_once(inner, s, t)
    if isinstance(spec, FracIntegrated):
        return _frac_cov_pairs(spec, lo, hi)
    raise SpecError(f"covariance not defined for {spec!r}")


def _integrate_cov_once(base, s, t, nq: int = 48) -> np.ndarray:
    # double Gauss-Legendre over [0,s] x [0,t]; base kernels are continuous
    x, w = np.polynomial.legendre.leggauss(nq)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    out = np.empty_like(s)
    block = max(1, 2**22 // (nq * nq))
    for i0 in range(0, s.size, block):
        sl = slice(i0, min(i0 + block, s.size))
        ss, tt = s[sl, None], t[sl, None]
        u = ss * x  # (b, nq)
        v = tt * x
        uu = np.repeat(u[:, :, None], nq, axis=2)
        vv = np.repeat(v[:, None, :], nq, axis=1)
        r = _cov_pairs(base, uu.ravel(), vv.ravel()).reshape(uu.shape)
        out[sl] = (ss[:, 0] * tt[:, 0]) * np.einsum("i,j,bij->b", w, w, r)
    return out


def _frac_cov_pairs(spec: FracIntegrated, lo, hi, nq: int = _NQ) -> np.ndarray:
    # R(s,t) = Gamma(M)^-2 int_0^s int_0^t (s-u)^(M-1) (t-v)^(M-1) R_b(u,v)
    m = spec.order
    x, w = _jacobi_nodes(m - 1.0)
    out = np.empty_like(lo)
    block = max(1, 2**22 // (nq * nq))
    for i0 in range(0, lo.size, block):
        sl = slice(i0, min(i0 + block, lo.size))
        ss, tt = lo[sl, None], hi[sl, None]
        u = ss * (1.0 + x) / 2.0
        v = tt * (1.0 + x) / 2.0
        uu = np.repeat(u[:, :, None], nq, axis=2)
        vv = np.repeat(v[:, None, :], nq, axis=1)
        r = _cov_pairs(spec.base, uu.ravel(), vv.ravel()).reshape(uu.shape)
        pref = (ss[:, 0] * tt[:, 0] / 4.0) ** m / _gamma(m) ** 2
        out[sl] = pref * np.einsum("i,j,bij->b", w, w, r)
    return out


def covariance(spec, s, t):
    """Covariance function R(s, t); broadcasts over array arguments."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(s > 1) or np.any(t < 0) or np.any(t > 1):
        raise SpecError("covariance arguments must lie in [0, 1]")
    if isinstance(spec, StableScaledFbm):
        raise SpecError("StableScaledFbm has no finite covariance")
    _require_gaussian(spec)
    s, t = np.broadcast_arrays(s, t)
    shape = s.shape
    out = _cov_pairs(spec, s.ravel().astype(float), t.ravel().astype(float))
    out = out.reshape(shape)
    return float(out) if shape == () else out


def build_cov(spec, grid: Grid) -> np.ndarray:
    """Dense covariance matrix at the interior grid points, symmetrised."""
    _require_gaussian(spec)
    if isinstance(spec, FracIntegrated):
        # product-integration sandwich; exactly matches frac_integral on paths
        from .fraccalc import operator_matrix

        w = operator_matrix(spec.order, grid.n)
        rb = build_cov(spec.base, grid)
        k = w @ rb @ w.T
        return 0.5 * (k + k.T)
    if isinstance(spec, Integrated) and not (
        spec.m == 1 and isinstance(spec.base, (BrownianMotion, FractionalBm))
    ):
        # trapezoid sandwich on the full grid, applied m times
        n = grid.n
        tfull = grid.full_points
        rb = covariance(spec.base, tfull[None, :], tfull[:, None])
        tw = np.zeros((n, n + 1))
        for i in range(1, n + 1):
            tw[i - 1, 0] = 0.5
            tw[i - 1, 1:i] = 1.0
            tw[i - 1, i] = 0.5
        tw /= n
        k = rb
        for _ in range(spec.m):
            k = tw @ k @ tw.T
            if _ + 1 < spec.m:
                k = np.pad(k, ((1, 0), (1, 0)))
        return 0.5 * (k + k.T)
    t = grid.points
    k = covariance(spec, t[None, :], t[:, None])
    return 0.5 * (k + k.T)


# ---------------------------------------------------------------------------
# sampling


_CHOL_CACHE: dict = {}


def _cholesky_factor(spec, grid: Grid) -> np.ndarray:
    key = (spec, grid)
    fac = _CHOL_CACHE.get(key)
    if fac is not None:
        return fac
    if grid.n > MAX_CHOLESKY_N:
        raise SpecError(
            f"dense sampling supports n <= {MAX_CHOLESKY_N}, got {grid.n}"
        )
    k = build_cov(spec, grid)
    scale = np.trace(k) / grid.n
    for jit in [0.0] + [scale * 10.0**e for e in range(-12, -5)]:
        try:
            fac = np.linalg.cholesky(k + jit * np.eye(grid.n))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NumericsError(f"covariance of {spec!r} not positive definite")
    if len(_CHOL_CACHE) > 8:
        _CHOL_CACHE.clear()
    _CHOL_CACHE[key] = fac
    return fac


def _fgn_circulant_eigs(h: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    e = 2.0 * h
    g = 0.5 * ((k + 1.0) ** e - 2.0 * k**e + np.abs(k - 1.0) ** e)
    c = np.concatenate([g[:n], g[n : n + 1], g[n - 1 : 0 : -1]])
    eig = np.fft.fft(c).real
    if eig.min() < -1e-9 * eig.max():
        raise NumericsError(f"circulant embedding failed for h={h}")
    return np.maximum(eig, 0.0)


def _gaussian_chunk(spec, grid: Grid, rows: int, rng) -> np.ndarray:
    n = grid.n
    if isinstance(spec, BrownianMotion) or (
        isinstance(spec, FractionalBm) and spec.h == 0.5
    ):
        z = rng.standard_normal((rows, n))
        return np.cumsum(z, axis=1) * n**-0.5
    if isinstance(spec, FractionalBm):
        eig = _fgn_circulant_eigs(spec.h, n)
        m = eig.size
        wz = rng.standard_normal((rows, m)) + 1j * rng.standard_normal((rows, m))
        x = np.fft.ifft(np.sqrt(eig) * wz, axis=1).real * math.sqrt(m)
        fgn = x[:, :n] * grid.h**spec.h
        return np.cumsum(fgn, axis=1)
    fac = _cholesky_factor(spec, grid)
    z = rng.standard_normal((rows, n))
    return z @ fac.T


def sample_positive_stable(a: float, count: int, seed: int = _rng.DEFAULT_SEED):
    """Positive a-stable draws with Laplace transform exp(-u^a), 0 < a < 1."""
    if not (0.0 < a < 1.0):
        raise SpecError(f"positive stable index must be in (0, 1), got {a}")
    out = np.empty(count)
    rows = _rng.chunk_rows(4, count)
    n_chunks = -(-count // rows)

    def one(c):
        rng = _rng.stream(seed, _rng.DOMAIN_STABLE, c)
        k = min(rows, count - c * rows)
        u = np.clip(rng.uniform(0.0, 1.0, size=k), 2e-16, 1.0 - 2e-16)
        e = rng.standard_exponential(size=k)
        th = math.pi * u
        s = (
            np.sin(a * th)
            * np.sin((1.0 - a) * th) ** ((1.0 - a) / a)
            / (np.sin(th) ** (1.0 / a) * e ** ((1.0 - a) / a))
        )
        return c, s

    for c, s in _rng.map_chunks(one, n_chunks):
        out[c * rows : c * rows + s.size] = s
    return out


def sample_paths(spec, grid: Grid, count: int, seed: int = _rng.DEFAULT_SEED):
    """Draw ``count`` paths of ``spec`` on ``grid``; reproducible in seed and
    independent of worker count."""
    if count < 1:
        raise SpecError(f"count must be >= 1, got {count}")
    if isinstance(spec, StableScaledFbm):
        amps = np.sqrt(
            sample_positive_stable(spec.alpha / 2.0, count, seed=seed)
        )
        base = sample_paths(FractionalBm(spec.h), grid, count, seed=seed)
        return PathBatch(grid, amps[:, None] * base.values)
    _require_gaussian(spec)
    if not isinstance(spec, (BrownianMotion, FractionalBm)):
        _cholesky_factor(spec, grid)  # fail fast before allocating
    values = np.empty((count, grid.n))
    rows = _rng.chunk_rows(grid.n, count)
    n_chunks = -(-count // rows)

    def one(c):
        rng = _rng.stream(seed, _rng.DOMAIN_PATHS, c)
        k = min(rows, count - c * rows)
        return c, _gaussian_chunk(spec, grid, k, rng)

    for c, block in _rng.map_chunks(one, n_chunks):
        values[c * rows : c * rows + block.shape[0]] = block
    return PathBatch(grid, values)
