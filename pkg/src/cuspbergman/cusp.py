"""Bergman density series on the model cusp ``V / Gamma_V``.

With ``t = |log h_D|`` and ``M = m (k + 1)`` the density of
``(V / Gamma_V, omega_V, L_V / Gamma_V, |log h_D|**k h_V)`` is

    rho(t, a) = n |G| t**M / (2 pi (M-n-1)!) * sum_q q**(M-n) rho_q(a) exp(-q t)

where ``rho_q`` comes from :mod:`cuspbergman.basekernel`. The terms peak near
``q = M / t``; only a window around the peak is summed and the rest is bounded
by a geometric series, since the ratio of consecutive envelope terms
``((q+1)/q)**(M-n) exp(-t)`` decreases in ``q``.

Truncated cusps ``V_sigma = {0 < h_D < sigma}`` stay rotation invariant, so the
modes remain orthogonal there and only their norms change: mode ``q`` loses the
part of its radial integral with ``t < |log sigma|``, i.e. its squared norm is
multiplied by ``Q(M-n, q |log sigma|)``. Dividing each term by that factor gives
the exact truncated-domain density, no Gram-Schmidt needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate

from .basekernel import (BaseKernel, BasePoint, density_bound, density_growth,
                         density_values)
from .errors import ConvergenceError
from .numkernel import (LOG_2PI, LogReal, _log_poisson_sum, log_poisson_pmf,
                        log_regularized_upper_gamma, log_sum_array)

TAIL_TARGET = 1e-12
MAX_MODES = 10 ** 7
_LOG_TAIL_TARGET = math.log(TAIL_TARGET)


@dataclass(frozen=True)
class CuspPoint:
    """Point of the cusp: ``t = |log h_D| > 0`` plus a base point."""

    t: float
    base: BasePoint = BasePoint()

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t!r}")

    @classmethod
    def from_hd(cls, hd: float, base: BasePoint = BasePoint()) -> CuspPoint:
        if not 0 < hd < 1:
            raise ValueError(f"h_D must lie in (0, 1), got {hd!r}")
        return cls(-math.log(hd), base)


@dataclass(frozen=True)
class TruncationSpec:
    """The truncated cusp ``V_sigma = {0 < h_D < sigma}``."""

    sigma: float
    log_sigma_abs: float

    def __post_init__(self):
        if not 0 < self.sigma <= 1:
            raise ValueError("sigma must lie in (0, 1]")
        if self.log_sigma_abs < 0 or not math.isclose(
                self.log_sigma_abs, -math.log(self.sigma), rel_tol=1e-14, abs_tol=1e-300):
            raise ValueError("log_sigma_abs must equal -ln(sigma)")

    @classmethod
    def from_sigma(cls, sigma: float) -> TruncationSpec:
        return cls(float(sigma), -math.log(sigma))

    @classmethod
    def from_log(cls, log_sigma_abs: float) -> TruncationSpec:
        return cls(math.exp(-log_sigma_abs), float(log_sigma_abs))


@dataclass(frozen=True)
class SeriesResult:
    value: LogReal
    tail_bound: LogReal
    q_window: tuple[int, int]

    @property
    def rel_tail(self) -> float:
        if self.tail_bound.is_zero:
            return 0.0
        return math.exp(self.tail_bound.log_abs - self.value.log_abs)

    def __float__(self) -> float:
        return self.value.to_float()


@lru_cache(maxsize=1 << 18)
def _log_gamma_pair(s: int, x: float) -> tuple[float, float]:
    """``(log Q(s, x), log P(s, x))`` from a single tail evaluation."""
    if x < s:
        lp = _log_poisson_sum(s, None, x)
        return math.log1p(-math.exp(lp)), lp
    lq = _log_poisson_sum(0, s - 1, x)
    return lq, math.log1p(-math.exp(lq)) if lq < 0 else -math.inf


def _log_q(s: int, xs: np.ndarray) -> np.ndarray:
    return np.array([_log_gamma_pair(s, float(x))[0] for x in xs])


def _log_p(s: int, xs: np.ndarray) -> np.ndarray:
    return np.array([_log_gamma_pair(s, float(x))[1] for x in xs])


class _Series:
    """Terms of one cusp series at fixed ``(kernel, m, k, t, a, sigma)``.

    Logs are taken relative to the mode ``qc`` nearest the peak; ``log_ref``
    carries the prefactor times the ``qc`` term.
    """

    def __init__(self, kernel: BaseKernel, m: int, M: int, t: float,
                 a: BasePoint, ell: float | None):
        self.kernel, self.m, self.M, self.t, self.a, self.ell = kernel, m, M, t, a, ell
        n = kernel.n
        self.s = M - n
        self.p = density_growth(kernel)
        self.qc = max(1, int(round(M / t)))
        u = self.qc * t
        # n|G|/(2 pi) t^M qc^s e^{-qc t} / (s-1)!, written through the Poisson pmf
        self.log_ref = (math.log(n * kernel.group_order) - LOG_2PI + n * math.log(t)
                        + math.log(u) + float(log_poisson_pmf(np.array([self.s - 1.0]), u)[0]))

    def rel(self, qs: np.ndarray) -> np.ndarray:
        qs = np.asarray(qs, dtype=float)
        return self.s * np.log1p((qs - self.qc) / self.qc) - (qs - self.qc) * self.t

    def log_q(self, qs: np.ndarray) -> np.ndarray:
        if self.ell is None or self.ell == 0:
            return np.zeros(np.shape(qs))
        return _log_q(self.s, np.asarray(qs, dtype=float) * self.ell)

    def terms(self, qs: np.ndarray) -> np.ndarray:
        dens = density_values(self.kernel, self.m, qs, self.a)
        with np.errstate(divide="ignore"):
            return self.rel(qs) + np.log(dens) - self.log_q(qs)

    def envelope(self, q: int) -> float:
        return (float(self.rel(np.array([q]))[0]) + math.log(density_bound(self.kernel, q))
                - float(self.log_q(np.array([q]))[0]))

    def upper_tail(self, q_hi: int) -> float | None:
        """Log bound on the envelope mass beyond ``q_hi``; None while not decaying."""
        q1 = q_hi + 1
        log_ratio = (self.s + self.p) * math.log1p(1.0 / q1) - self.t
        if self.ell:
            lq = self.log_q(np.array([q1, q1 + 1]))
            log_ratio += float(lq[0] - lq[1])
        if log_ratio >= 0:
            return None
        return self.envelope(q1) - math.log(-math.expm1(log_ratio))

    def lower_tail(self, q_lo: int) -> float | None:
        """Log bound on the mass below ``q_lo``; None if the envelope is not
        increasing on ``[1, q_lo - 1]``."""
        if q_lo <= 1:
            return -math.inf
        if q_lo - 1 > self.s / self.t:
            return None
        return math.log(q_lo - 1) + self.envelope(q_lo - 1)


def _sum_series(series: _Series) -> SeriesResult:
    M, t = series.M, series.t
    half = int(math.ceil(12.0 * math.sqrt(M) / t)) + 8
    lo_half = hi_half = half
    while True:
        q_lo = max(1, series.qc - lo_half)
        q_hi = series.qc + hi_half
        if q_hi - q_lo + 1 > MAX_MODES:
            raise ConvergenceError(
                f"tail bound not below {TAIL_TARGET:g} within {MAX_MODES} modes "
                f"(t = {t:g}, M = {M})")
        qs = np.arange(q_lo, q_hi + 1)
        total = log_sum_array(series.terms(qs))
        up = series.upper_tail(q_hi)
        low = series.lower_tail(q_lo)
        grow = False
        if up is None:
            hi_half *= 2
            grow = True
        if low is None:
            lo_half *= 2
            grow = True
        if grow:
            continue
        tail = log_sum_array([up, low])
        if total == -math.inf or tail - total > _LOG_TAIL_TARGET:
            if up >= low:
                hi_half *= 2
            else:
                lo_half *= 2
            continue
        return SeriesResult(LogReal.from_log(series.log_ref + total),
                            LogReal.from_log(series.log_ref + tail), (int(q_lo), int(q_hi)))


def _check_m(kernel: BaseKernel, M: int) -> None:
    if int(M) != M or M < kernel.n + 1:
        raise ValueError(f"need m(k+1) >= n + 1 = {kernel.n + 1}, got {M}")


def rho_cusp(kernel: BaseKernel, m: int, x: CuspPoint, k: int = 0) -> SeriesResult:
    """Bergman density of the (optionally ``|log h_D|**k`` twisted) cusp at ``x``.

    The base density uses the character at level ``m`` while the series runs
    with ``M = m (k + 1)``.
    """
    if k < 0 or int(k) != k:
        raise ValueError("twist k must be a nonnegative integer")
    M = m * (k + 1)
    _check_m(kernel, M)
    return _sum_series(_Series(kernel, m, M, x.t, x.base, None))


def rho_truncated(kernel: BaseKernel, m: int, trunc: TruncationSpec,
                  x: CuspPoint) -> SeriesResult:
    """Bergman density of the truncated cusp ``V_sigma`` at ``x``."""
    _check_m(kernel, m)
    if not x.t > trunc.log_sigma_abs:
        raise ValueError(f"t = {x.t} is outside V_sigma (need t > {trunc.log_sigma_abs})")
    ell = trunc.log_sigma_abs
    return _sum_series(_Series(kernel, m, m, x.t, x.base, ell if ell > 0 else None))


def truncation_deviation(kernel: BaseKernel, m: int, trunc: TruncationSpec,
                         x: CuspPoint) -> LogReal:
    """``1 - rho_V / rho_{V_sigma}`` at ``x``, accurate far below double epsilon.

    Written as ``sum(a_q P_q / Q_q) / sum(a_q / Q_q)`` with ``P = 1 - Q`` taken
    directly from the lower incomplete gamma, so no cancellation occurs.
    """
    _check_m(kernel, m)
    ell = trunc.log_sigma_abs
    if not x.t > ell:
        raise ValueError(f"t = {x.t} is outside V_sigma (need t > {ell})")
    if ell == 0:
        return LogReal.zero()
    series = _Series(kernel, m, m, x.t, x.base, ell)
    s = series.s
    half = int(math.ceil(12.0 * math.sqrt(m) / x.t)) + 8
    q_lo = max(1, series.qc - half)
    q_hi = max(series.qc + half, int(math.ceil(2.0 * (s + 1) / ell)) + 64)
    while True:
        if q_hi - q_lo + 1 > MAX_MODES:
            raise ConvergenceError("deviation series did not converge")
        low = series.lower_tail(q_lo)
        if low is None:
            q_lo = max(1, q_lo // 2)
            continue
        up = series.upper_tail(q_hi)
        if up is None:
            q_hi *= 2
            continue
        if q_lo > 1:
            # P grows with q, so it can multiply the lower envelope bound
            low += float(_log_p(s, np.array([(q_lo - 1) * ell]))[0])
        qs = np.arange(q_lo, q_hi + 1)
        trunc_terms = series.terms(qs)
        num_terms = trunc_terms + _log_p(s, qs.astype(float) * ell)
        num = log_sum_array(num_terms)
        den = log_sum_array(trunc_terms)
        tail = log_sum_array([up, low])
        if num == -math.inf:
            return LogReal.zero()
        if tail - num > _LOG_TAIL_TARGET:
            if up >= low:
                q_hi *= 2
            else:
                q_lo = max(1, q_lo // 2)
            continue
        return LogReal.from_log(num - den)


def mode_norm(n: int, m: int, q: int, sigma: float = 1.0) -> LogReal:
    """Radial fibre integral of mode ``q`` over ``{h_D < sigma}``.

    ``2 pi (m-n-1)! / q**(m-n)`` on the full cusp, times ``Q(m-n, q |log sigma|)``
    when truncated. The full mode norm also carries a factor ``1/n`` from the
    volume form.
    """
    if m < n + 1:
        raise ValueError("need m >= n + 1")
    if q < 1:
        raise ValueError("need q >= 1")
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    s = m - n
    log_val = LOG_2PI + math.lgamma(s) - s * math.log(q)
    if sigma < 1:
        log_val += log_regularized_upper_gamma(s, -q * math.log(sigma))
    return LogReal(1, log_val)


def product_rho(disc_ts: Sequence[float], euclidean_dim: int, m: int) -> LogReal:
    """Density on ``(D*)^k x C^d`` with Poincaré disc factors and a flat factor.

    Each punctured disc contributes ``rho_cusp(point, m, t_i)``; the flat
    factor with weight ``exp(-m|z|^2)`` contributes ``(m / 2 pi)`` per complex
    dimension.
    """
    if euclidean_dim < 0:
        raise ValueError("euclidean_dim must be nonnegative")
    disc = BaseKernel.point()
    log_val = euclidean_dim * (math.log(m) - LOG_2PI)
    for t in disc_ts:
        log_val += rho_cusp(disc, m, CuspPoint(float(t))).value.log_abs
    return LogReal(1, log_val)


def quad_norm_check(m: int, q: int) -> float:
    """``|norm^2 - 1|`` of the normalized ``n = 1`` mode by radial quadrature.

    Integrates ``4 pi a^2 r^(2q-1) (-2 log r)^(m-2)`` over ``0 < r < 1`` with
    ``a^2 = q^(m-1) / (2 pi (m-2)!)``.
    """
    if m < 2 or q < 1:
        raise ValueError("need m >= 2 and q >= 1")
    log_a2 = (m - 1) * math.log(q) - LOG_2PI - math.lgamma(m - 1)

    def integrand(r: float) -> float:
        if r <= 0.0 or r >= 1.0:
            return 0.0
        lr = -2.0 * math.log(r)
        return math.exp(math.log(4 * math.pi) + log_a2 + (2 * q - 1) * math.log(r)
                        + (m - 2) * math.log(lr))

    r_peak = math.exp(-0.5 * (m - 2) / q) if m > 2 else 0.0
    # span of the peak in r, used as extra breakpoints
    width = math.sqrt(max(m - 2, 1)) / q
    pts = sorted({p for p in (r_peak, math.exp(-0.5 * ((m - 2) / q + 4 * width)),
                              math.exp(-0.5 * max((m - 2) / q - 4 * width, 0.0)))
                  if 0.0 < p < 1.0})
    total, err = 0.0, 0.0
    edges = [0.0, *pts, 1.0]
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)
        total += val
        err += e
    if err > 1e-10:
        raise ConvergenceError(f"radial quadrature error estimate {err:.2e}")
    return abs(total - 1.0)
