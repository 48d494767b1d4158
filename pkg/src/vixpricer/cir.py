"""Square-root mean-reverting factor process.

The factor ``Y`` solves ``dY = (beta - alpha * Y) dt - kappa * sqrt(Y) dB``.
Conditional on ``Y_0 = y0`` the time-``t`` marginal is a scaled non-central
chi-squared law::

    Y_t ~ c * ncx2(df, lam),   df  = 4 beta / kappa^2,
                               c   = kappa^2 (1 - e^{-alpha t}) / (4 alpha),
                               lam = 4 alpha e^{-alpha t} y0
                                     / (kappa^2 (1 - e^{-alpha t})).

This module provides the parameter container, the transition law with
density / distribution / quantile / moment evaluation, and exact sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .numerics import newton_bisect

__all__ = ["CirParams", "ChiSquareLaw", "transition_law"]

_LN2 = math.log(2.0)
# below this log-density the value is not meaningfully representable
_LOG_FLOOR = -745.0
# relative size at which additional series terms stop mattering
_TERM_EPS = 1e-16
_BLOCK = 32


@dataclass(frozen=True)
class CirParams:
    """Coefficients of the square-root factor process.

    ``alpha`` is the mean-reversion speed (1/year), ``beta`` the drift level
    (1/year) and ``kappa`` the diffusion scale (1/sqrt(year)). The Feller
    condition ``beta >= kappa^2 / 2`` keeps the factor strictly positive and
    is enforced at construction; ``allow_non_feller=True`` opts out for
    parameter sets that deliberately violate it (the factor then touches
    zero and maps with unbounded inverse terms must be treated with care).
    """

    alpha: float
    beta: float
    kappa: float
    allow_non_feller: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        for name in ("alpha", "beta", "kappa"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if not self.allow_non_feller and self.beta < 0.5 * self.kappa ** 2:
            raise ValueError(
                f"Feller condition violated: beta={self.beta} < kappa^2/2="
                f"{0.5 * self.kappa ** 2}")

    @property
    def df(self) -> float:
        """Degrees of freedom of the transition law, 4*beta/kappa^2."""
        return 4.0 * self.beta / self.kappa ** 2

    @property
    def long_run_mean(self) -> float:
        return self.beta / self.alpha

    def mean_at(self, t, y0):
        """Closed-form conditional mean E[Y_t | Y_0 = y0]."""
        w = np.exp(-self.alpha * np.asarray(t, dtype=float))
        return self.long_run_mean * (1.0 - w) + np.asarray(y0) * w


@dataclass(frozen=True)
class ChiSquareLaw:
    """Scaled non-central chi-squared law c * ncx2(df, noncentrality)."""

    df: float
    noncentrality: float
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.df) and self.df > 0.0):
            raise ValueError(f"df must be positive, got {self.df}")
        if not (np.isfinite(self.noncentrality) and self.noncentrality >= 0.0):
            raise ValueError(
                f"noncentrality must be non-negative, got {self.noncentrality}")
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be positive, got {self.scale}")

    # -- moments ------------------------------------------------------------

    def mean(self) -> float:
        return self.scale * (self.df + self.noncentrality)

    def variance(self) -> float:
        return self.central_moment(2)

    def std(self) -> float:
        return math.sqrt(self.variance())

    def central_moment(self, k: int) -> float:
        """Central moment E[(Y - EY)^k] for k in {1, 2, 3, 4}."""
        d, l, c = self.df, self.noncentrality, self.scale
        if k == 1:
            return 0.0
        if k == 2:
            return c ** 2 * 2.0 * (d + 2.0 * l)
        if k == 3:
            return c ** 3 * 8.0 * (d + 3.0 * l)
        if k == 4:
            return c ** 4 * (12.0 * (d + 2.0 * l) ** 2 + 48.0 * (d + 4.0 * l))
        raise ValueError(f"unsupported central moment order {k}")

    # -- density ------------------------------------------------------------

    def pdf(self, y):
        """Probability density at positive level(s) ``y``.

        Evaluated as a Poisson-weighted series of central gamma densities.
        The summation starts at the Poisson mode and expands in both
        directions until further terms fall below 1e-16 of the partial sum;
        deep-tail values below the double-precision floor come out as an
        exact 0 rather than NaN.
        """
        y_arr, scalar = _as_positive_array(y)
        x = y_arr / self.scale
        dens = self._pdf_std(x) / self.scale
        dens[~np.isfinite(dens)] = 0.0
        return float(dens[0]) if scalar else dens

    def _pdf_std(self, x):
        """Density of the unscaled ncx2(df, noncentrality) at x > 0."""
        half_df = 0.5 * self.df
        half_nc = 0.5 * self.noncentrality
        log_x = np.log(x)
        if half_nc == 0.0:
            logp = ((half_df - 1.0) * log_x - 0.5 * x
                    - half_df * _LN2 - special.gammaln(half_df))
            return np.where(logp < _LOG_FLOOR, 0.0, np.exp(logp))

        log_hnc = math.log(half_nc)

        def block(k_lo, k_hi):
            ks = np.arange(k_lo, k_hi, dtype=float)
            a = half_df + ks
            log_w = ks * log_hnc - half_nc - special.gammaln(ks + 1.0)
            log_t = (log_w[:, None]
                     + (a[:, None] - 1.0) * log_x[None, :]
                     - 0.5 * x[None, :]
                     - a[:, None] * _LN2
                     - special.gammaln(a)[:, None])
            return np.exp(log_t)

        total = np.zeros_like(x)
        k_mode = int(half_nc)
        # beyond these indices the term profile is strictly decaying for
        # every abscissa in the batch, so tail tests are conclusive
        k_decay_hi = math.sqrt(half_nc * float(x.max()) / 2.0)
        k_decay_lo = math.sqrt(half_nc * float(x.min()) / 2.0)

        k = k_mode
        while True:
            t = block(k, k + _BLOCK)
            total += t.sum(axis=0)
            k += _BLOCK
            if k >= k_decay_hi and np.all(t[-1] <= _TERM_EPS * total):
                break
        k = k_mode
        while k > 0:
            k_lo = max(0, k - _BLOCK)
            t = block(k_lo, k)
            total += t.sum(axis=0)
            k = k_lo
            if k <= k_decay_lo and np.all(t[0] <= _TERM_EPS * total):
                break
        return total

    def log_pdf(self, y):
        """Log-density via the scaled Bessel function, vectorized.

        Fast path used by the quadrature engines; agrees with :meth:`pdf`
        to near machine precision (asserted in the test suite). Returns
        ``-inf`` where the density underflows.
        """
        y_arr, scalar = _as_positive_array(y)
        x = y_arr / self.scale
        lam = self.noncentrality
        nu = 0.5 * self.df - 1.0
        if lam < 1e-12:
            # the non-centrality correction is below double precision here
            half_df = 0.5 * self.df
            logp = ((half_df - 1.0) * np.log(x) - 0.5 * x
                    - half_df * _LN2 - special.gammaln(half_df))
        else:
            z = np.sqrt(lam * x)
            with np.errstate(divide="ignore"):
                log_ive = np.log(special.ive(nu, z))
            logp = (-0.5 * (x + lam) + 0.5 * nu * (np.log(x) - math.log(lam))
                    + z + log_ive - _LN2)
        logp = logp - math.log(self.scale)
        return float(logp[0]) if scalar else logp

    # -- distribution function ----------------------------------------------

    def cdf(self, y):
        """P(Y <= y), by the Poisson-weighted gamma-cdf series."""
        return self._dist_series(y, special.gammainc)

    def sf(self, y):
        """P(Y > y), complementary series (accurate in the upper tail)."""
        return self._dist_series(y, special.gammaincc)

    def _dist_series(self, y, reg_gamma):
        y_arr, scalar = _as_positive_array(y)
        x = 0.5 * y_arr / self.scale
        half_df = 0.5 * self.df
        half_nc = 0.5 * self.noncentrality
        if half_nc == 0.0:
            out = reg_gamma(half_df, x)
            return float(out[0]) if scalar else out

        log_hnc = math.log(half_nc)

        def weights(k_lo, k_hi):
            ks = np.arange(k_lo, k_hi, dtype=float)
            return ks, np.exp(ks * log_hnc - half_nc - special.gammaln(ks + 1.0))

        total = np.zeros_like(x)
        mass = 0.0
        k_mode = int(half_nc)
        k = k_mode
        while True:
            ks, w = weights(k, k + _BLOCK)
            total += w @ reg_gamma(half_df + ks[:, None], x[None, :])
            mass += w.sum()
            k += _BLOCK
            if k > half_nc and (1.0 - mass) <= 1e-16:
                break
            if w[-1] < 1e-18 and k > half_nc:
                break
        k = k_mode
        while k > 0:
            k_lo = max(0, k - _BLOCK)
            ks, w = weights(k_lo, k)
            total += w @ reg_gamma(half_df + ks[:, None], x[None, :])
            mass += w.sum()
            k = k_lo
            if w[0] < 1e-18:
                break
        out = np.clip(total, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def ppf(self, p: float) -> float:
        """Quantile by bracketed bisection on the numeric cdf/sf."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"quantile probability must lie in (0, 1), got {p}")
        if p <= 0.5:
            target = lambda v: p - self.cdf(v)
            reached = lambda v: self.cdf(v) >= p
        else:
            # the survival series keeps full relative accuracy in this tail
            target = lambda v: self.sf(v) - (1.0 - p)
            reached = lambda v: self.sf(v) <= 1.0 - p
        hi = self.mean() + 10.0 * self.std()
        while not reached(hi):
            hi *= 2.0
            if hi > 1e300:
                raise ValueError("quantile bracket expansion failed")
        # target is positive at 0+ and negative at hi
        lo_seed = min(self.mean(), hi) * 1e-14
        lo = lo_seed
        while target(lo) <= 0.0:
            lo *= 1e-2
            if lo < 1e-300:
                return 0.0
        return newton_bisect(target, lo, hi, rel_tol=1e-12,
                             abs_tol=1e-300, max_iter=2000)

    def mass_bounds(self, tail_mass: float):
        """Interval holding all but ``tail_mass`` of probability per side."""
        return self.ppf(tail_mass), self.ppf(1.0 - tail_mass)

    # -- sampling -------------------------------------------------------------

    def sample(self, n: int, rng) -> np.ndarray:
        """Draw ``n`` i.i.d. levels; exact, via the Poisson-gamma mixture.

        ``rng`` is an integer seed or a ``numpy.random.Generator``. The same
        seed reproduces the same draws bit for bit.
        """
        if n < 1:
            raise ValueError("sample size must be at least 1")
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return _sample_std(gen, self.df, self.noncentrality, n) * self.scale


def _sample_std(gen, df, noncentrality, n):
    if noncentrality > 0.0:
        mix = gen.poisson(0.5 * noncentrality, size=n)
        shape = 0.5 * df + mix
    else:
        shape = np.full(n, 0.5 * df)
    return 2.0 * gen.standard_gamma(shape)


def _as_positive_array(y):
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0)):
        raise ValueError("levels must be finite and strictly positive")
    return arr, np.isscalar(y) or np.ndim(y) == 0


def transition_law(params: CirParams, t: float, y0: float) -> ChiSquareLaw:
    """Conditional law of ``Y_t`` given ``Y_0 = y0``.

    Raises ``ValueError`` when ``t`` is so extreme that the law parameters
    are not representable (e.g. the non-centrality overflows for tiny
    ``alpha * t``).
    """
    if not (np.isfinite(t) and t > 0.0):
        raise ValueError(f"horizon must be finite and positive, got {t}")
    if not (np.isfinite(y0) and y0 > 0.0):
        raise ValueError(f"initial level must be positive, got {y0}")
    decay = math.exp(-params.alpha * t)
    growth = -math.expm1(-params.alpha * t)  # 1 - e^{-alpha t}, stable for small t
    scale = params.kappa ** 2 * growth / (4.0 * params.alpha)
    if not (scale > 0.0 and np.isfinite(scale)):
        raise ValueError(f"transition scale not representable for t={t}")
    noncentrality = 4.0 * params.alpha * decay * y0 / (params.kappa ** 2 * growth)
    if not np.isfinite(noncentrality):
        raise ValueError(f"non-centrality overflows for t={t}, y0={y0}")
    return ChiSquareLaw(df=params.df, noncentrality=noncentrality, scale=scale)
