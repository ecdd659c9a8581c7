"""Large-``m`` behaviour of the cusp densities.

Covers the expansion of ``f(t)**m`` with ``f(t) = (1 + t) exp(-t)`` around its
Gaussian profile, the comparison of the rescaled series ``b_m`` with Gaussian
approximants, the supremum of the density against ``|G| alpha_{D,m}``, the
admissibility test for observation/truncation pairs and the localization
deviation between full and truncated cusps. Convergence claims are checked
through fitted log-log slopes (:func:`rate_fit`), since the constants involved
are never explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .basekernel import (BaseKernel, BasePoint, density_bound, density_values)
from .cusp import (CuspPoint, TruncationSpec, rho_cusp, truncation_deviation)
from .errors import ConvergenceError
from .numkernel import LOG_2PI, LogReal, logsumexp_signed

MAX_EXPANSION_ORDER = 40
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _log1p_minus_id(t: float) -> float:
    """``log(1 + t) - t`` without cancellation for small ``t``."""
    if abs(t) < 0.25:
        return -t * t / 2.0 + _cubic_remainder(t)
    return math.log1p(t) - t


def _cubic_remainder(t: float) -> float:
    """``log(1 + t) - t + t**2/2 = sum_{k>=3} (-1)**(k-1) t**k / k``."""
    if abs(t) >= 0.25:
        return math.log1p(t) - t + t * t / 2.0
    total = 0.0
    power = t * t
    for k in range(3, 80):
        power *= t
        term = power / k if k % 2 else -power / k
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return total


def f_pow(m: int, t: float) -> LogReal:
    """``((1 + t) exp(-t)) ** m`` in log domain."""
    if not t > -1:
        raise ValueError(f"f_pow needs t > -1, got {t!r}")
    return LogReal.from_log(m * _log1p_minus_id(t))


# polynomials in m: tuple of Fractions, index = power of m
Poly = tuple


def _poly_mul(a: Poly, b: Poly) -> Poly:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return _poly_trim(out)


def _poly_add(a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return _poly_trim([(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)
                       for i in range(n)])


def _poly_trim(c) -> Poly:
    c = [Fraction(x) for x in c]
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class ExpansionPoly:
    """Coefficients ``lambda_{m,l}`` (``3 <= l <= N``) as exact polynomials in ``m``.

    ``coeffs[l][p]`` is the rational coefficient of ``m**p`` in ``lambda_{m,l}``.
    """

    N: int
    coeffs: dict

    def value(self, l: int, m: float) -> float:
        return float(sum(float(c) * m ** p for p, c in enumerate(self.coeffs[l])))

    def values(self, m: float) -> np.ndarray:
        """``[lambda_{m,3}, ..., lambda_{m,N}]`` as floats."""
        return np.array([self.value(l, m) for l in range(3, self.N + 1)])

    def describe(self, l: int) -> str:
        parts = [f"{c}*m^{p}" if p > 1 else (f"{c}*m" if p == 1 else f"{c}")
                 for p, c in enumerate(self.coeffs[l]) if c != 0]
        return " + ".join(reversed(parts)) or "0"


@lru_cache(maxsize=None)
def lambda_polys(N: int) -> ExpansionPoly:
    """Coefficients of ``exp(m * sum_{k>=3} (-1)**(k-1) t**k / k) - 1`` up to ``t**N``.

    Truncated power series exponentiation over the ring of polynomials in ``m``
    with exact rational arithmetic.
    """
    if int(N) != N or N < 3:
        raise ValueError("N must be an integer >= 3")
    if N > MAX_EXPANSION_ORDER:
        raise ValueError(f"N > {MAX_EXPANSION_ORDER} is rejected (coefficient growth guard)")
    zero = (Fraction(0),)
    # inner series S(t) = m * sum_k (-1)^(k-1) t^k / k, coefficients are polys in m
    inner = [zero] * (N + 1)
    for k in range(3, N + 1):
        inner[k] = (Fraction(0), Fraction((-1) ** (k - 1), k))
    total = [zero] * (N + 1)
    power = list(inner)
    j = 1
    while any(c != zero for c in power):
        inv_fact = Fraction(1, math.factorial(j))
        for l in range(N + 1):
            if power[l] != zero:
                total[l] = _poly_add(total[l], tuple(c * inv_fact for c in power[l]))
        nxt = [zero] * (N + 1)
        for a in range(N + 1):
            if power[a] == zero:
                continue
            for b in range(3, N + 1 - a):
                nxt[a + b] = _poly_add(nxt[a + b], _poly_mul(power[a], inner[b]))
        power = nxt
        j += 1
    return ExpansionPoly(N, {l: total[l] for l in range(3, N + 1)})


def _poly_part(m: float, N: int, t: float) -> float:
    """``sum_{l=3}^N lambda_{m,l} t**l``."""
    lam = lambda_polys(N).values(m)
    return float(sum(c * t ** l for c, l in zip(lam, range(3, N + 1))))


def G(m: float, N: int, t: float) -> LogReal:
    """Gaussian approximant ``(1 + sum lambda_{m,k} t**k) exp(-m t**2 / 2)``."""
    poly = 1.0 + _poly_part(m, N, t)
    return LogReal.from_float(poly) * LogReal.from_log(-m * t * t / 2.0)


def expansion_difference(m: float, N: int, t: float) -> float:
    """``f(t)**m - G_{m,N}(t)`` as a float.

    Near ``t = 0`` both terms are close to the same Gaussian, so the
    difference is formed as ``exp(-m t^2/2) (expm1(m r(t)) - sum lambda t^l)``
    with ``r`` the cubic remainder of ``log(1 + t) - t``.
    """
    if not t > -1:
        raise ValueError("t must exceed -1")
    if abs(t) < 0.5:
        inner = math.expm1(m * _cubic_remainder(t)) - _poly_part(m, N, t)
        return math.exp(-m * t * t / 2.0) * inner
    return (f_pow(m, t) - G(m, N, t)).to_float()


def weighted_expansion_error(m: float, N: int, t: float) -> float:
    """``(1 + |t + 1|**(2N)) |f(t)**m - G_{m,N}(t)|``."""
    diff = abs(expansion_difference(m, N, t))
    if diff == 0.0:
        return 0.0
    log_w = float(np.logaddexp(0.0, 2 * N * math.log(abs(t + 1.0))))
    return math.exp(log_w + math.log(diff))


def default_expansion_grid(m: float) -> np.ndarray:
    """Grid on ``(-1, 50]``: linear on ``(-0.99, 3]``, geometric to 50, and a
    fine band of half-width ``10 / sqrt(m)`` where the error peaks."""
    band = np.linspace(-10.0, 10.0, 2001) / math.sqrt(m)
    band = band[band > -0.99]
    grid = np.concatenate([np.linspace(-0.99, 3.0, 2000), np.geomspace(3.0, 50.0, 80), band])
    return np.unique(grid)


def expansion_error(m: int, N: int, t_grid: Iterable[float] | None = None) -> float:
    """Sup over the grid of the weighted error of the order-``N`` approximant."""
    grid = default_expansion_grid(m) if t_grid is None else np.asarray(list(t_grid), float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    return max(weighted_expansion_error(m, N, float(t)) for t in grid)


# rescaled series b_m and its Gaussian approximation


def b_scaled(kernel: BaseKernel, m: int, a: BasePoint | None, t: float) -> float:
    """``2 pi (m-n-1)! / (n |G| m**m e**(1-m)) * b_m(a, m t)``, via :func:`rho_cusp`."""
    a = BasePoint() if a is None else a
    n = kernel.n
    rho = rho_cusp(kernel, m, CuspPoint(m * t, a))
    log_scale = (LOG_2PI + math.lgamma(m - n) - math.log(n * kernel.group_order)
                 - m * math.log(m) - (1 - m))
    return math.exp(rho.value.log_abs + log_scale)


def b_approximant(kernel: BaseKernel, m: int, N: int, a: BasePoint | None, t: float) -> float:
    """``t * sum_q q**(1-n) rho_q(a) exp(-q t) G_{m-1,N}(q t - 1)``.

    Modes with ``|q t - 1|`` beyond ``sqrt(400 / (m - 1))`` are dropped; their
    Gaussian factor is below ``exp(-200)``.
    """
    a = BasePoint() if a is None else a
    n = kernel.n
    reach = math.sqrt(400.0 / (m - 1))
    q_lo = max(1, int(math.floor((1.0 - reach) / t)))
    q_hi = max(q_lo, int(math.ceil((1.0 + reach) / t)))
    qs = np.arange(q_lo, q_hi + 1)
    dens = density_values(kernel, m, qs, a)
    total = []
    for q, d in zip(qs, dens):
        if d == 0.0:
            continue
        x = q * t - 1.0
        if x <= -1.0:
            continue
        g = G(m - 1, N, x)
        weight = LogReal.from_log((1 - n) * math.log(q) + math.log(d) - q * t)
        total.append(g * weight)
    return t * logsumexp_signed(total).to_float()


def b_approx_error(kernel: BaseKernel, m: int, N: int, a: BasePoint | None, t: float) -> float:
    return abs(b_scaled(kernel, m, a, t) - b_approximant(kernel, m, N, a, t))


def b_approx_sup(kernel: BaseKernel, m: int, N: int, a: BasePoint | None = None,
                t_range: tuple[float, float] = (1.0 / 64, 8.0)) -> tuple[float, float]:
    """Sup of :func:`b_approx_error` over ``t_range`` and its location.

    Scans a geometric grid with ratio ``1 + 1/(4 sqrt(m))`` (the error varies on
    the scale ``t / sqrt(m)``), then refines the best point by golden section.
    """
    lo, hi = t_range
    step = math.log1p(1.0 / (4.0 * math.sqrt(m)))
    count = int(math.ceil(math.log(hi / lo) / step)) + 1
    grid = np.geomspace(lo, hi, count)
    errs = np.array([b_approx_error(kernel, m, N, a, float(t)) for t in grid])
    i = int(np.argmax(errs))
    left = grid[max(i - 1, 0)]
    right = grid[min(i + 1, count - 1)]
    t_best, e_best = _golden_max(lambda t: b_approx_error(kernel, m, N, a, t),
                                 float(left), float(right), 1e-10)
    if e_best < errs[i]:
        return float(errs[i]), float(grid[i])
    return float(e_best), float(t_best)


def _golden_max(fn, lo: float, hi: float, rel_tol: float) -> tuple[float, float]:
    """Golden-section maximization of a unimodal ``fn`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > rel_tol * max(abs(a), abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    if fc >= fd:
        return c, fc
    return d, fd


# supremum of the density


@dataclass(frozen=True)
class AlphaResult:
    value: float
    q: int
    a: BasePoint
    tail_guard: float


def alpha(kernel: BaseKernel, m: int, q_max: int | None = None,
          a_grid: Sequence[BasePoint] | None = None) -> AlphaResult:
    """``sup_a sup_q q**(-n) rho_q(a)`` over ``q <= q_max`` and a base grid.

    ``tail_guard`` bounds the omitted modes ``q > q_max``; a guard above 1% of
    the maximum raises ``ConvergenceError``. Without an explicit ``q_max`` the
    search starts at ``10 m`` and doubles until the guard is met.
    """
    if q_max is None:
        q_max = 10 * m
        while True:
            try:
                return alpha(kernel, m, q_max, a_grid)
            except ConvergenceError:
                if q_max > 10 ** 6:
                    raise
                q_max *= 2
    q_max = int(q_max)
    if q_max < 1:
        raise ValueError("q_max must be positive")
    if a_grid is None:
        if kernel.provider != "point" and not (kernel.provider == "projector"
                                               and kernel.inner.provider == "point"):
            raise ValueError("a base-point grid is required for this kernel")
        a_grid = [BasePoint()]
    if len(a_grid) == 0:
        raise ValueError("a_grid must be nonempty")
    n = kernel.n
    qs = np.arange(1, q_max + 1)
    best = (-1.0, 0, a_grid[0])
    for a in a_grid:
        vals = density_values(kernel, m, qs, a) * qs.astype(float) ** (-n)
        i = int(np.argmax(vals))
        if vals[i] > best[0]:
            best = (float(vals[i]), int(qs[i]), a)
    guard = density_bound(kernel, q_max + 1) / (q_max + 1.0) ** n
    if best[0] <= 0 or guard > 0.01 * best[0]:
        raise ConvergenceError(f"alpha tail guard {guard:.3g} exceeds 1% of the "
                               f"maximum {best[0]:.3g}; raise q_max")
    return AlphaResult(best[0], best[1], best[2], guard)


@dataclass(frozen=True)
class SupResult:
    value: LogReal
    t_star: float
    a_star: BasePoint
    normalized: float
    alpha: float
    q_alpha: int
    gap: float


def sup_normalization(n: int, M: int) -> float:
    """Log of ``(2 pi)**(3/2) n**(-1) M**(-n-1/2)``."""
    return 1.5 * LOG_2PI - math.log(n) - (n + 0.5) * math.log(M)


def sup_rho(kernel: BaseKernel, m: int, k: int = 0, t_max: float | None = None,
            a_grid: Sequence[BasePoint] | None = None, q_max: int | None = None) -> SupResult:
    """Maximize ``rho_cusp`` over ``0 < t <= t_max`` and the base grid.

    Seeds sit at ``t = M / q`` for ``q`` within 2 of the alpha maximizer (the
    sup concentrates there); each seed gets a coarse scan over a few peak
    widths followed by golden section to relative tolerance 1e-10. Ties go to
    the smaller ``t``.
    """
    M = m * (k + 1)
    al = alpha(kernel, m, q_max, a_grid)
    t_max = 10.0 * M if t_max is None else float(t_max)
    if t_max < M / al.q:
        raise ValueError(f"t_max = {t_max:g} does not cover the predicted peak t = {M / al.q:g}")
    grid = [BasePoint()] if a_grid is None else list(a_grid)
    width = 6.0 / math.sqrt(M)
    best = None
    for a in grid:
        def log_rho(t: float, a=a) -> float:
            return rho_cusp(kernel, m, CuspPoint(t, a), k).value.log_abs

        for q in range(max(1, al.q - 2), al.q + 3):
            t0 = M / q
            if t0 > t_max:
                continue
            ts = np.minimum(t0 * np.exp(np.linspace(-width, width, 41)), t_max)
            ts = np.unique(ts)
            vals = np.array([log_rho(float(t)) for t in ts])
            i = int(np.argmax(vals))
            if i == len(ts) - 1 and ts[i] >= t_max:
                raise ConvergenceError(f"maximizer sits on the scan boundary t_max = {t_max:g}")
            if i in (0, len(ts) - 1):
                # widen once toward the rising side before refining
                lo = ts[0] * math.exp(-4 * width) if i == 0 else ts[-2]
                hi = ts[1] if i == 0 else min(ts[-1] * math.exp(4 * width), t_max)
            else:
                lo, hi = ts[i - 1], ts[i + 1]
            t_star, v_star = _golden_max(log_rho, float(lo), float(hi), 1e-10)
            if v_star < vals[i]:
                t_star, v_star = float(ts[i]), float(vals[i])
            if t_star >= t_max * (1 - 1e-12):
                raise ConvergenceError(f"maximizer sits on the scan boundary t_max = {t_max:g}")
            cand = (float(v_star), -float(t_star), a)
            if best is None or (cand[0], cand[1]) > (best[0], best[1]):
                best = cand
    log_sup, neg_t, a_star = best
    normalized = math.exp(log_sup + sup_normalization(kernel.n, M))
    target = kernel.group_order * al.value
    return SupResult(LogReal(1, log_sup), -neg_t, a_star, normalized, al.value, al.q,
                     abs(normalized - target))


# admissible pairs and localization

_ADMISSIBLE_SLACK = 1e-12


@dataclass(frozen=True)
class AdmissiblePair:
    """Observation level ``gamma`` and truncation ``sigma`` tested at level ``m``.

    ``log_gamma`` / ``log_sigma`` may be given directly when the pair sits on
    a threshold, to avoid a round trip through ``exp``.
    """

    gamma: float
    sigma: float
    m: int
    xi: float = 1.0
    kappa: float = 1.0
    r: float = 1.0
    log_gamma: float | None = None
    log_sigma: float | None = None
    r_covers_sigma: bool = field(init=False)
    gamma_above_threshold: bool = field(init=False)
    sigma_against_gamma: bool = field(init=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("admissibility needs m >= 2")
        lg = math.log(self.gamma) if self.log_gamma is None else self.log_gamma
        ls = math.log(self.sigma) if self.log_sigma is None else self.log_sigma
        object.__setattr__(self, "log_gamma", lg)
        object.__setattr__(self, "log_sigma", ls)
        sq, lm = math.sqrt(self.m), math.log(self.m)
        slack = _ADMISSIBLE_SLACK
        object.__setattr__(self, "r_covers_sigma",
                           math.log(self.r) >= ls - slack * max(1.0, abs(ls)))
        bound_g = -self.kappa * sq / lm
        object.__setattr__(self, "gamma_above_threshold",
                           lg >= bound_g - slack * max(1.0, abs(bound_g)))
        bound_s = math.exp(-self.xi * lm / sq) * lg
        object.__setattr__(self, "sigma_against_gamma",
                           ls >= bound_s - slack * max(1.0, abs(bound_s)))

    @property
    def admissible(self) -> bool:
        return self.r_covers_sigma and self.gamma_above_threshold and self.sigma_against_gamma


def admissible(pair: AdmissiblePair) -> bool:
    return pair.admissible


def gamma_threshold(m: int, kappa: float = 1.0) -> float:
    """Log of the smallest admissible ``gamma``: ``-kappa sqrt(m) / log(m)``."""
    return -kappa * math.sqrt(m) / math.log(m)


@dataclass(frozen=True)
class LocalizationReport:
    sup_deviation: LogReal
    t_argmax: float
    profile: list
    pair: AdmissiblePair
    monotone: bool

    @property
    def warning(self) -> str | None:
        if not self.pair.admissible:
            return "pair (gamma, sigma) is not admissible"
        if not self.monotone:
            return "deviation profile is not monotone in t"
        return None


def localization_report(kernel: BaseKernel, m: int, gamma: float, sigma: float,
                        t_grid: Iterable[float], xi: float = 1.0, kappa: float = 1.0,
                        r: float | None = None, log_gamma: float | None = None,
                        log_sigma: float | None = None,
                        a: BasePoint | None = None) -> LocalizationReport:
    """Sup over ``V_gamma`` points of ``|rho_V / rho_{V_sigma} - 1|``.

    Points must satisfy ``t >= |log gamma|``. Inadmissible pairs are still
    evaluated; the report carries a warning instead.
    """
    a = BasePoint() if a is None else a
    pair = AdmissiblePair(gamma, sigma, m, xi, kappa, sigma if r is None else r,
                          log_gamma, log_sigma)
    ts = sorted(float(t) for t in t_grid)
    if not ts:
        raise ValueError("t grid must be nonempty")
    inner = -pair.log_gamma
    if ts[0] < inner * (1 - 1e-12):
        raise ValueError(f"grid point t = {ts[0]:g} lies outside V_gamma (t >= {inner:g})")
    trunc = TruncationSpec.from_log(-pair.log_sigma)
    profile = [(t, truncation_deviation(kernel, m, trunc, CuspPoint(t, a))) for t in ts]
    devs = [d for _, d in profile]
    monotone = all(d2 <= d1 for d1, d2 in zip(devs, devs[1:]))
    i = max(range(len(devs)), key=lambda j: (devs[j]._key(), -j))
    return LocalizationReport(devs[i], ts[i], profile, pair, monotone)


# rate fits


@dataclass(frozen=True)
class RateFit:
    samples: list
    exponent: float
    constant: float
    residual: float


def rate_fit(samples: Iterable[tuple[float, float | LogReal]]) -> RateFit:
    """Least-squares line through ``(ln m, ln value)``.

    ``constant`` is the intercept ``ln C`` of ``value ~ C m**exponent``;
    ``residual`` is the RMS misfit in log space. Values may be LogReal so that
    quantities far below the double range can still be fitted.
    """
    samples = list(samples)
    if len(samples) < 4:
        raise ValueError("rate_fit needs at least 4 samples")
    xs, ys = [], []
    for m, v in samples:
        if isinstance(v, LogReal):
            if v.sign <= 0:
                raise ValueError("rate_fit needs positive values")
            ys.append(v.log_abs)
        else:
            if not v > 0:
                raise ValueError("rate_fit needs positive values")
            ys.append(math.log(v))
        xs.append(math.log(m))
    X, Y = np.array(xs), np.array(ys)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = float(np.sqrt(np.mean((Y - (slope * X + intercept)) ** 2)))
    return RateFit(samples, float(slope), float(intercept), resid)
