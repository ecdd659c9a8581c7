import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuspbergman.basekernel import BaseKernel, BasePoint, base_density
from cuspbergman.cusp import (CuspPoint, TruncationSpec, mode_norm, product_rho,
                              quad_norm_check, rho_cusp, rho_truncated, truncation_deviation)

import oracles

POINT = BaseKernel.point()


def log_rho(kernel, m, t, k=0):
    return rho_cusp(kernel, m, CuspPoint(t), k).value.log_abs


def mp_truncation(m, t, ell, q_max):
    """Full and truncated point-base densities (common prefactor dropped)."""
    with mp.workdps(60):
        full = trunc = mp.mpf(0)
        t, ell = mp.mpf(t), mp.mpf(ell)
        for q in range(1, q_max + 1):
            a = mp.mpf(q) ** (m - 1) * mp.exp(-q * t)
            Q = mp.gammainc(m - 1, q * ell, mp.inf, regularized=True)
            full += a
            trunc += a / Q
        return full, trunc


# closed forms

def test_rho_m2_t1_closed_form():
    got = rho_cusp(POINT, 2, CuspPoint(1.0)).value.to_float()
    exact = math.exp(-1) / (2 * math.pi * (1 - math.exp(-1)) ** 2)
    assert got == pytest.approx(exact, rel=1e-14)
    assert got == pytest.approx(0.146529753492352, rel=1e-13)


def test_rho_m3_ln2_closed_form():
    t = math.log(2)
    exact = t ** 3 * 0.75 / (2 * math.pi * 0.125)
    assert rho_cusp(POINT, 3, CuspPoint(t)).value.to_float() == pytest.approx(exact, rel=1e-14)


def test_rho_matches_polylog_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        m = int(rng.integers(2, 21))
        t = float(np.exp(rng.uniform(math.log(0.05), math.log(50))))
        want = oracles.closed_form_rho(m, t)
        assert rho_cusp(POINT, m, CuspPoint(t)).value.to_float() == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("m", [2, 7, 64, 300, 512])
@pytest.mark.parametrize("t", [0.1, 1.0, 10.0, 100.0])
def test_rho_matches_brute_force(m, t):
    want = oracles.brute_log_rho_point(m, t)
    assert math.expm1(log_rho(POINT, m, t) - want) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("r,c,m,k,t", [(2, 1, 5, 0, 0.7), (3, 2, 40, 1, 9.0), (5, 3, 11, 2, 0.3),
                                       (4, 1, 200, 0, 55.0)])
def test_twisted_bases_match_brute_force(r, c, m, k, t):
    K = BaseKernel.point(r, c)
    want = oracles.brute_log_rho_point(m, t, k, r, c)
    assert math.expm1(log_rho(K, m, t, k) - want) == pytest.approx(0, abs=1e-12)


# invariants

def test_twist_identity_trivial_group():
    for m, k, t in [(3, 1, 2.0), (5, 3, 0.4), (40, 2, 17.0)]:
        a = rho_cusp(POINT, m, CuspPoint(t), k)
        b = rho_cusp(POINT, m * (k + 1), CuspPoint(t), 0)
        assert a.value == b.value


def test_twist_identity_fails_for_cyclic_group():
    K = BaseKernel.point(2, 1)
    a = rho_cusp(K, 3, CuspPoint(2.0), 1).value.log_abs
    b = rho_cusp(K, 6, CuspPoint(2.0), 0).value.log_abs
    assert abs(a - b) > 1e-3


def test_k0_is_untwisted():
    x = CuspPoint(1.3)
    assert rho_cusp(POINT, 9, x, 0).value == rho_cusp(POINT, 9, x).value


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 4096), st.floats(0.05, 1000.0), st.integers(1, 5), st.data())
def test_positive_with_tight_tail(m, t, r, data):
    c = data.draw(st.integers(0, r - 1))
    res = rho_cusp(BaseKernel.point(r, c), m, CuspPoint(t))
    assert res.value.sign == 1 and math.isfinite(res.value.log_abs)
    assert res.rel_tail <= 1e-12
    lo, hi = res.q_window
    assert 1 <= lo <= hi


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        rho_cusp(POINT, 1, CuspPoint(1.0))
    with pytest.raises(ValueError):
        rho_cusp(BaseKernel.theta(1j), 2, CuspPoint(1.0))
    with pytest.raises(ValueError):
        CuspPoint(0.0)
    with pytest.raises(ValueError):
        rho_cusp(POINT, 3, CuspPoint(1.0), -1)


def test_from_hd():
    x = CuspPoint.from_hd(math.exp(-1.0))
    assert x.t == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValueError):
        CuspPoint.from_hd(1.0)


def test_theta_base_series():
    K = BaseKernel.theta(1j)
    a = BasePoint(0.2, 0.3)
    res = rho_cusp(K, 12, CuspPoint(1.5, a))
    with mp.workdps(30):
        s = mp.fsum(mp.mpf(q) ** 10 * base_density(K, 12, q, a) * mp.exp(-1.5 * q)
                    for q in range(1, 200))
        want = 2 * mp.mpf(1.5) ** 12 / (2 * mp.pi * mp.factorial(9)) * s
    assert res.value.to_float() == pytest.approx(float(want), rel=1e-12)


# truncated cusp

def test_truncation_sigma_one_is_full_cusp():
    x = CuspPoint(2.5)
    full = rho_cusp(POINT, 8, x).value
    assert rho_truncated(POINT, 8, TruncationSpec.from_sigma(1.0), x).value == full
    assert truncation_deviation(POINT, 8, TruncationSpec.from_sigma(1.0), x).is_zero


def test_truncated_domain_monotone_lattice():
    ms = np.unique(np.geomspace(2, 400, 20).astype(int))
    ts = np.geomspace(1.05, 80, 20)
    for m in ms:
        for t in ts:
            x = CuspPoint(float(t))
            full = rho_cusp(POINT, int(m), x).value
            wide = rho_truncated(POINT, int(m), TruncationSpec.from_sigma(0.9), x).value
            narrow = rho_truncated(POINT, int(m), TruncationSpec.from_sigma(math.exp(-1)), x).value
            tol = 1e-13 * abs(full.log_abs) + 1e-14
            assert narrow.log_abs >= wide.log_abs - tol
            assert wide.log_abs >= full.log_abs - tol


def test_truncated_m12_t30_against_bigfloat():
    trunc = TruncationSpec.from_sigma(math.exp(-1))
    x = CuspPoint(30.0)
    ratio = math.exp(rho_truncated(POINT, 12, trunc, x).value.log_abs
                     - rho_cusp(POINT, 12, x).value.log_abs) - 1
    full, tr = mp_truncation(12, 30.0, 1.0, 60)
    want = float(tr / full - 1)
    assert want == pytest.approx(1.0048e-8, rel=1e-3)
    assert ratio == pytest.approx(want, rel=1e-6)
    dev = truncation_deviation(POINT, 12, trunc, x).to_float()
    assert dev == pytest.approx(float(1 - full / tr), rel=1e-10)


@pytest.mark.parametrize("m,q_max", [(100, 1500), (200, 2500)])
def test_truncation_deviation_against_bigfloat(m, q_max):
    t = math.sqrt(m) / math.log(m)
    full, tr = mp_truncation(m, t, 1.0, q_max)
    with mp.workdps(60):
        want = float(mp.log(1 - full / tr))
    got = truncation_deviation(POINT, m, TruncationSpec.from_sigma(math.exp(-1)), CuspPoint(t))
    assert got.log_abs == pytest.approx(want, rel=1e-10)


def test_truncated_rejects_outside_point():
    with pytest.raises(ValueError):
        rho_truncated(POINT, 5, TruncationSpec.from_sigma(math.exp(-2)), CuspPoint(2.0))


def test_truncation_spec_consistency():
    spec = TruncationSpec.from_sigma(0.3)
    assert spec.log_sigma_abs == pytest.approx(-math.log(0.3), rel=1e-15)
    with pytest.raises(ValueError):
        TruncationSpec(0.3, 1.0)


# mode norms

def test_mode_norm_examples():
    assert mode_norm(1, 2, 1).to_float() == pytest.approx(2 * math.pi, rel=1e-15)
    assert mode_norm(1, 3, 2).to_float() == pytest.approx(math.pi / 2, rel=1e-15)
    want = math.pi / 2 * 3 * math.exp(-2)  # Q(2, 2) = 3 e^-2
    assert mode_norm(1, 3, 2, math.exp(-1)).to_float() == pytest.approx(want, rel=1e-14)


def test_mode_norm_closed_form_grid():
    for m in range(2, 41):
        for q in range(1, 41):
            with mp.workdps(30):
                want = 2 * mp.pi * mp.factorial(m - 2) / mp.mpf(q) ** (m - 1)
                lw = float(mp.log(want))
            assert abs(math.expm1(mode_norm(1, m, q).log_abs - lw)) <= 1e-13


@pytest.mark.parametrize("m,q,sigma", [(2, 1, 0.5), (5, 3, 0.9), (12, 7, 0.1), (30, 2, 0.6)])
def test_mode_norm_truncated_quadrature(m, q, sigma):
    assert mode_norm(1, m, q, sigma).to_float() == pytest.approx(
        oracles.mode_norm_quad(m, q, sigma), rel=1e-10)


@pytest.mark.parametrize("m,q", [(4, 1), (4, 7), (2, 1), (12, 12), (9, 2)])
def test_quad_norm_check(m, q):
    assert quad_norm_check(m, q) <= 1e-8


# product model

def test_product_examples():
    assert product_rho([], 2, 10).to_float() == pytest.approx((10 / (2 * math.pi)) ** 2, rel=1e-14)
    assert product_rho([], 2, 10).to_float() == pytest.approx(2.53303, rel=1e-5)
    assert product_rho([1.7], 0, 6) == rho_cusp(POINT, 6, CuspPoint(1.7)).value


def test_product_multiplicative():
    a = product_rho([0.8], 0, 9).log_abs
    b = product_rho([3.1], 0, 9).log_abs
    assert product_rho([0.8, 3.1], 0, 9).log_abs == pytest.approx(a + b, rel=1e-15)
