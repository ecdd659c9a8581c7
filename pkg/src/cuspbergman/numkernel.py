"""Log-domain arithmetic and the special functions the cusp series need.

Everything here is pure. Magnitudes such as ``t**m / (m-n-1)!`` leave the
double range long before the interesting values of ``m``, so the series code
works with natural logarithms throughout and only exponentiates ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConvergenceError

LOG_2PI = math.log(2.0 * math.pi)
_EXACT_FACTORIAL_MAX = 20
_LOG_DOUBLE_TINY = math.log(np.finfo(float).tiny)


@dataclass(frozen=True, order=False)
class LogReal:
    """Signed real number stored as ``sign * exp(log_abs)``.

    Zero is ``sign == 0`` with ``log_abs == -inf``. No operation produces NaN;
    values too small for a double saturate to ``0.0`` in :meth:`to_float` and
    report ``underflows``. When the value is known as a normal double (built
    from a float, or from arithmetic on such values) that double is carried
    along, so ``to_float`` does not lose ``|log_abs| * eps`` of relative
    accuracy through ``exp(log(x))``.
    """

    sign: int
    log_abs: float
    _exact: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign!r}")
        if math.isnan(self.log_abs):
            raise ValueError("log_abs is NaN")
        if (self.sign == 0) != (self.log_abs == -math.inf):
            raise ValueError("sign == 0 exactly when log_abs == -inf")

    @classmethod
    def zero(cls) -> LogReal:
        return cls(0, -math.inf)

    @classmethod
    def one(cls) -> LogReal:
        return cls(1, 0.0)

    @classmethod
    def from_float(cls, x: float) -> LogReal:
        x = float(x)
        if math.isnan(x):
            raise ValueError("cannot represent NaN")
        if x == 0.0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)), x if math.isfinite(x) else None)

    @classmethod
    def from_log(cls, log_abs: float, sign: int = 1) -> LogReal:
        """Build from a log magnitude; ``-inf`` yields zero."""
        if log_abs == -math.inf or sign == 0:
            return cls.zero()
        return cls(sign, float(log_abs))

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    @property
    def underflows(self) -> bool:
        return self.sign != 0 and self.log_abs < _LOG_DOUBLE_TINY

    @property
    def log10_abs(self) -> float:
        return self.log_abs / math.log(10.0)

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        if self._exact is not None:
            return self._exact
        if self.log_abs > 709.782712893384:
            return self.sign * math.inf
        return self.sign * math.exp(self.log_abs)

    __float__ = to_float

    def __neg__(self) -> LogReal:
        ex = None if self._exact is None else -self._exact
        return LogReal(-self.sign, self.log_abs, ex)

    def __abs__(self) -> LogReal:
        ex = None if self._exact is None else abs(self._exact)
        return LogReal(abs(self.sign), self.log_abs, ex)

    def __mul__(self, other) -> LogReal:
        other = _coerce(other)
        if self.sign == 0 or other.sign == 0:
            return LogReal.zero()
        if self._exact is not None and other._exact is not None:
            ex = _normal_or_none(self._exact * other._exact)
            if ex is not None:
                return LogReal.from_float(ex)
        return LogReal(self.sign * other.sign, self.log_abs + other.log_abs)

    __rmul__ = __mul__

    def __truediv__(self, other) -> LogReal:
        other = _coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("LogReal division by zero")
        if self.sign == 0:
            return LogReal.zero()
        if self._exact is not None and other._exact is not None:
            ex = _normal_or_none(self._exact / other._exact)
            if ex is not None:
                return LogReal.from_float(ex)
        return LogReal(self.sign * other.sign, self.log_abs - other.log_abs)

    def __rtruediv__(self, other) -> LogReal:
        return _coerce(other) / self

    def __pow__(self, p: float) -> LogReal:
        if self.sign == 0:
            if p <= 0:
                raise ZeroDivisionError("zero to a non-positive power")
            return LogReal.zero()
        if self.sign < 0 and float(p) != int(p):
            raise ValueError("negative base with non-integer power")
        sign = 1 if (self.sign > 0 or int(p) % 2 == 0) else -1
        return LogReal(sign, self.log_abs * p)

    def __add__(self, other) -> LogReal:
        other = _coerce(other)
        if self._exact is not None and other._exact is not None:
            total = self._exact + other._exact
            if total == 0.0:
                return LogReal.zero()
            if _normal_or_none(total) is not None:
                return LogReal.from_float(total)
        return logsumexp_signed([self, other])

    __radd__ = __add__

    def __sub__(self, other) -> LogReal:
        return self + (-_coerce(other))

    def __rsub__(self, other) -> LogReal:
        return _coerce(other) - self

    def _key(self) -> tuple:
        # total order consistent with the represented value
        if self.sign == 0:
            return (0, 0.0)
        return (self.sign, self.sign * self.log_abs)

    def __lt__(self, other) -> bool:
        return self._key() < _coerce(other)._key()

    def __le__(self, other) -> bool:
        return self._key() <= _coerce(other)._key()

    def __gt__(self, other) -> bool:
        return self._key() > _coerce(other)._key()

    def __ge__(self, other) -> bool:
        return self._key() >= _coerce(other)._key()

    def __repr__(self) -> str:
        if self.sign == 0:
            return "LogReal(0)"
        return f"LogReal({'-' if self.sign < 0 else '+'}exp({self.log_abs!r}))"


_DOUBLE_TINY = float(np.finfo(float).tiny)


def _normal_or_none(x: float) -> float | None:
    return x if _DOUBLE_TINY <= abs(x) < math.inf else None


def _coerce(x) -> LogReal:
    if isinstance(x, LogReal):
        return x
    return LogReal.from_float(x)


def log_sum_array(log_terms: np.ndarray) -> float:
    """Log of ``sum(exp(log_terms))`` with a fixed descending reduction order.

    ``math.fsum`` makes the inner sum correctly rounded, so the result does not
    depend on how the caller chunked or ordered the terms.
    """
    a = np.asarray(log_terms, dtype=float).ravel()
    if a.size == 0:
        return -math.inf
    a = np.sort(a)[::-1]
    top = a[0]
    if top == -math.inf:
        return -math.inf
    if top == math.inf:
        return math.inf
    return float(top + math.log(math.fsum(np.exp(a - top))))


def logsumexp_sorted(terms: Iterable[LogReal]) -> LogReal:
    """Sum nonnegative log-domain terms.

    >>> logsumexp_sorted([LogReal.one(), LogReal.one()]).to_float()
    2.0
    """
    terms = list(terms)
    for term in terms:
        if term.sign < 0:
            raise ValueError("logsumexp_sorted needs nonnegative terms; "
                             "use logsumexp_signed")
    return LogReal.from_log(log_sum_array([t.log_abs for t in terms]))


def logsumexp_signed(terms: Iterable[LogReal]) -> LogReal:
    """Mixed-sign sum using separate positive and negative accumulators."""
    pos, neg = [], []
    for term in terms:
        if term.sign > 0:
            pos.append(term.log_abs)
        elif term.sign < 0:
            neg.append(term.log_abs)
    lp = log_sum_array(pos)
    ln = log_sum_array(neg)
    if lp == ln:
        return LogReal.zero()
    if lp > ln:
        return LogReal.from_log(lp + math.log1p(-math.exp(ln - lp)), 1)
    return LogReal.from_log(ln + math.log1p(-math.exp(lp - ln)), -1)


def log_factorial(n: int) -> LogReal:
    """``ln(n!)`` as a LogReal; exact integer product for ``n <= 20``."""
    if n < 0 or int(n) != n:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    return LogReal(1, _log_factorial(int(n)))


def _log_factorial(n: int) -> float:
    if n <= _EXACT_FACTORIAL_MAX:
        return math.log(math.factorial(n))
    return math.lgamma(n + 1.0)


# Stirling error and deviance follow Loader's saddle point scheme, which keeps
# Poisson log-probabilities accurate when k and x are both large.
_STIRLERR_SMALL = np.array(
    [0.0] + [math.lgamma(k + 1.0) - (k + 0.5) * math.log(k) + k - 0.5 * LOG_2PI
             for k in range(1, 16)])


def _stirlerr(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    small = k < 16
    if np.any(small):
        out[small] = _STIRLERR_SMALL[k[small].astype(int)]
    big = ~small
    if np.any(big):
        kk = k[big]
        k2 = kk * kk
        out[big] = (1.0 / 12 - (1.0 / 360 - (1.0 / 1260 - (1.0 / 1680 - 1.0 / (1188 * k2))
                                             / k2) / k2) / k2) / kk
    return out


def _bd0(k: np.ndarray, x: float) -> np.ndarray:
    """``k*log(k/x) + x - k`` without cancellation near ``k == x``."""
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    near = np.abs(k - x) < 0.1 * (k + x)
    far = ~near
    if np.any(far):
        kf = k[far]
        out[far] = kf * (np.log(kf) - math.log(x)) + x - kf
    if np.any(near):
        kn = k[near]
        v = (kn - x) / (kn + x)
        s = (kn - x) * v
        ej = 2.0 * kn * v
        v2 = v * v
        for j in range(1, 40):
            ej = ej * v2
            step = ej / (2 * j + 1)
            s = s + step
            if np.all(np.abs(step) <= 1e-18 * np.abs(s)):
                break
        out[near] = s
    return out


def log_poisson_pmf(k, x: float) -> np.ndarray:
    """``log(exp(-x) x**k / k!)`` for integer ``k >= 0`` and ``x >= 0``."""
    k = np.asarray(k, dtype=float)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return np.where(k == 0, 0.0, -math.inf)
    out = np.empty_like(k)
    zero = k == 0
    out[zero] = -x
    pos = ~zero
    if np.any(pos):
        kp = k[pos]
        out[pos] = -_stirlerr(kp) - _bd0(kp, x) - 0.5 * (LOG_2PI + np.log(kp))
    return out


def _log_poisson_sum(lo: int, hi: int | None, x: float) -> float:
    """Log of the Poisson(x) mass on the integers ``lo..hi`` (``hi=None`` is infinity).

    Only a window around the mass concentration is evaluated; outside it the
    pmf ratios are monotone, so the omitted mass is bounded by a geometric
    series and the window grows until that bound is below 1e-17 relative.
    """
    if hi is not None and hi < lo:
        return -math.inf
    if x == 0.0:
        return 0.0 if lo == 0 else -math.inf
    mode = math.floor(x)
    centre = max(lo, mode) if hi is None else min(max(lo, mode), hi)
    width = int(math.ceil(14.0 * math.sqrt(x))) + 40
    while True:
        a = max(lo, centre - width)
        b = centre + width if hi is None else min(hi, centre + width)
        ks = np.arange(a, b + 1, dtype=float)
        logs = log_poisson_pmf(ks, x)
        total = log_sum_array(logs)
        rest = []
        # pmf ratios below a and above b are at most r < 1
        if a > lo:
            r = a / x
            rest.append(logs[0] + math.log(a) - math.log(x) - math.log1p(-r))
        if hi is None or b < hi:
            r = x / (b + 1.0)
            rest.append(logs[-1] + math.log(x) - math.log(b + 1.0) - math.log1p(-r))
        bound = log_sum_array(rest)
        if not rest or bound == -math.inf or bound - total < math.log(1e-17):
            return total
        width *= 2


def _check_gamma_args(s: int, x: float) -> None:
    if int(s) != s or s < 1:
        raise ValueError(f"shape s must be a positive integer, got {s!r}")
    if not x >= 0:
        raise ValueError(f"x must be nonnegative, got {x!r}")


def log_regularized_upper_gamma(s: int, x: float) -> float:
    """``log Q(s, x)`` for integer shape, ``Q = Gamma(s, x) / Gamma(s)``."""
    _check_gamma_args(s, x)
    return _log_poisson_sum(0, int(s) - 1, float(x))


def log_regularized_lower_gamma(s: int, x: float) -> float:
    """``log P(s, x) = log(1 - Q(s, x))`` computed from the Poisson upper tail."""
    _check_gamma_args(s, x)
    return _log_poisson_sum(int(s), None, float(x))


def regularized_upper_gamma(s: int, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(s, x)`` for positive integer ``s``.

    Uses the finite sum ``exp(-x) * sum_{k<s} x**k / k!`` in log domain. When
    the complementary mass is the smaller one the result is formed as
    ``1 - P`` so that values near 1 stay monotone to the last bit.

    >>> round(regularized_upper_gamma(2, 1.0), 9)
    0.735758882
    """
    lq = log_regularized_upper_gamma(s, x)
    if lq > -0.6931471805599453:
        return max(0.0, 1.0 - math.exp(log_regularized_lower_gamma(s, x)))
    return math.exp(lq)


def hermitian_sqrt(A, delta: float) -> np.ndarray:
    """Principal square root ``B`` of a near-identity Hermitian ``A``.

    Requires ``max|a_ij - delta_ij| <= delta <= 1/(100 N)``. Returns Hermitian
    ``B`` with ``A = B @ B.conj().T`` and ``max|b_ij - delta_ij| <= 2 N delta``;
    both guarantees are checked before returning.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError("A must be a nonempty square matrix")
    N = A.shape[0]
    if not np.array_equal(A, A.conj().T):
        raise ValueError("A is not conjugate symmetric")
    if not 0 < delta <= 1.0 / (100 * N):
        raise ValueError(f"delta must lie in (0, 1/(100N)] = (0, {1.0 / (100 * N)}]")
    eye = np.eye(N)
    if np.max(np.abs(A - eye)) > delta:
        raise ValueError("max |a_ij - delta_ij| exceeds delta")

    w, V = np.linalg.eigh(A)
    order = np.lexsort((np.arange(N), w))
    w, V = w[order], V[:, order]
    if np.any(w <= 0):
        raise ConvergenceError("A is not positive definite")
    B = (V * np.sqrt(w)) @ V.conj().T
    B = 0.5 * (B + B.conj().T)

    residual = np.max(np.abs(A - B @ B.conj().T))
    if residual > 1e-10:
        raise ConvergenceError(f"reconstruction residual {residual:.3e} above 1e-10")
    if np.max(np.abs(B - eye)) > 2 * N * delta:
        raise ConvergenceError("entrywise bound 2*N*delta violated")
    return B
