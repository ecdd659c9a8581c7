"""Independent reference computations used by the test suite.

None of these share code paths with the package: brute-force sums run in
80-bit long double over every mode, special functions run in mpmath, and the
expansion coefficients come from sympy.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import sympy

LD = np.longdouble
assert np.finfo(LD).eps < 1e-18, "brute-force oracle needs 80-bit long double"


def brute_log_rho_point(m: int, t: float, k: int = 0, group_order: int = 1,
                        character: int = 0, q_max: int = 10 ** 6) -> float:
    """``log rho_cusp`` for the point base, summing every mode ``q <= q_max``.

    Terms more than ``e^-100`` below the largest one are dropped before the
    long double sum (they cannot move a 1e-19 relative result).
    """
    n = 1
    M = m * (k + 1)
    q = np.arange(1, q_max + 1, dtype=LD)
    allowed = ((np.arange(1, q_max + 1) + character * m) % group_order) == 0
    q = q[allowed]
    logs = LD(M - n) * np.log(q) - q * LD(t)
    top = logs.max()
    keep = logs > top - LD(100)
    total = top + np.log(np.sum(np.exp(logs[keep] - top), dtype=LD))
    hi = float(total)
    lo = float(total - LD(hi))
    with mp.workdps(40):
        pref = (mp.log(n * group_order) + M * mp.log(mp.mpf(t)) - mp.log(2 * mp.pi)
                - mp.loggamma(M - n))
        return float(pref + mp.mpf(hi) + mp.mpf(lo))


def closed_form_rho(m: int, t: float) -> float:
    """Trivial point base via the polylogarithm ``Li_{1-m}(e^-t)``."""
    with mp.workdps(40):
        x = mp.exp(-mp.mpf(t))
        val = mp.mpf(t) ** m / (2 * mp.pi * mp.factorial(m - 2)) * mp.polylog(1 - m, x)
        return float(val)


def upper_gamma(s: int, x: float, dps: int = 40) -> mp.mpf:
    """``Q(s, x) = e^-x sum_{k<s} x^k / k!`` in high precision."""
    with mp.workdps(dps):
        x = mp.mpf(x)
        term = mp.mpf(1)
        total = mp.mpf(1)
        for k in range(1, s):
            term *= x / k
            total += term
        return +(mp.exp(-x) * total)


def log_factorial(n: int) -> float:
    with mp.workdps(40):
        return float(mp.log(mp.factorial(n)))


def mode_norm_quad(m: int, q: int, sigma: float) -> float:
    """``int_{r < sqrt(sigma)} 4 pi r^(2q-1) (-2 log r)^(m-2) dr`` for ``n = 1``."""
    with mp.workdps(30):
        upper = mp.sqrt(mp.mpf(sigma))

        def f(r):
            return 4 * mp.pi * r ** (2 * q - 1) * (-2 * mp.log(r)) ** (m - 2)

        peak = mp.exp(-mp.mpf(m - 2) / (2 * q)) if m > 2 else mp.mpf(0)
        pts = {mp.mpf(0), upper}
        if 0 < peak < upper:
            pts.add(peak)
        # the integrand varies on the scale r / (2 q); split below the endpoint
        j = 1
        while j < 4 * (m + 8):
            pts.add(upper * mp.exp(-mp.mpf(j) / (2 * q)))
            j *= 2
        return float(mp.quad(f, sorted(pts)))


def lambda_oracle(N: int) -> dict[int, sympy.Expr]:
    """``lambda_{m,l}`` for ``3 <= l <= N`` from sympy series of ``exp(m r(t))``."""
    m, t = sympy.symbols("m t")
    r = sum((-1) ** (k - 1) * t ** k / sympy.Integer(k) for k in range(3, N + 1))
    total = sympy.Integer(0)
    power = sympy.Integer(1)
    for j in range(1, N // 3 + 1):
        power = sympy.expand(power * m * r)
        power = sum(power.coeff(t, l) * t ** l for l in range(N + 1))
        total += power / sympy.factorial(j)
    total = sympy.expand(total)
    return {l: sympy.expand(total.coeff(t, l)) for l in range(3, N + 1)}


def torus_integral(fn, T: float, grid: int = 64) -> float:
    """``int_D fn dVol`` for a doubly periodic ``fn(x, y)`` on ``[0,1) x [0,T)``,
    with ``Vol(D) = 2 pi``. The periodic trapezoid rule is spectrally accurate."""
    xs = np.arange(grid) / grid
    ys = T * np.arange(grid) / grid
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = fn(X.ravel(), Y.ravel())
    return float(2 * math.pi * np.mean(vals))
