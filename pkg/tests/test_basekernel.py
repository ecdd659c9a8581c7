import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuspbergman.basekernel import (BaseKernel, BasePoint, base_density, base_dimension,
                                    density_bound, density_values, kernel_from_config,
                                    load_unitaries, theta_density, theta_norm_constant,
                                    theta_section_values)

import oracles


def theta_direct(tau, q, x, y):
    """``sum_j |theta_j|^2 exp(-2 pi q y^2 / T) / ||theta_j||^2`` by plain mpmath sums."""
    with mp.workdps(30):
        tau = mp.mpc(tau)
        z = mp.mpc(x, y)
        T = tau.imag
        total = mp.mpf(0)
        for j in range(q):
            s = mp.mpc(0)
            for n in range(-40, 41):
                k = n + mp.mpf(j) / q
                s += mp.exp(mp.pi * 1j * tau * q * k ** 2 + 2 * mp.pi * 1j * q * k * z)
            total += abs(s) ** 2
        weight = mp.exp(-2 * mp.pi * q * mp.mpf(y) ** 2 / T)
        return float(total * weight * mp.sqrt(2 * q * T) / (2 * mp.pi))


# point base

def test_point_trivial_density_is_one():
    K = BaseKernel.point()
    assert base_density(K, 7, 3) == 1.0
    assert base_dimension(K, 1) == 1
    assert np.all(density_values(K, 5, np.arange(1, 50)) == 1.0)


def test_point_cyclic_congruence_by_enumeration():
    K = BaseKernel.point(2, 1)
    assert base_density(K, 3, 1) == 1.0
    assert base_density(K, 3, 2) == 0.0
    for r in range(1, 6):
        for c in range(r):
            K = BaseKernel.point(r, c)
            for m in range(1, 12):
                for q in range(1, 11):
                    # invariant iff Theta(g)^m e^{-2 pi i q / r} = 1 with Theta(g) = e^{-2 pi i c/r}
                    phase = np.exp(-2j * np.pi * (c * m + q) / r)
                    assert base_density(K, m, q) == (1.0 if abs(phase - 1) < 1e-9 else 0.0)


def test_point_cyclic_one_residue_per_period():
    for r in (2, 3, 5, 7):
        for c in range(r):
            for m in (1, 4, 9):
                K = BaseKernel.point(r, c)
                assert sum(base_dimension(K, q, m) for q in range(1, r + 1)) == 1


def test_point_example_dimension():
    assert base_dimension(BaseKernel.point(3, 0), 3) == 1


@settings(max_examples=100)
@given(st.integers(1, 9), st.data())
def test_point_density_periodic_in_m(r, data):
    c = data.draw(st.integers(0, r - 1))
    m = data.draw(st.integers(1, 500))
    q = data.draw(st.integers(1, 500))
    K = BaseKernel.point(r, c)
    assert base_density(K, m, q) == base_density(K, m + r, q)


def test_kernel_validation():
    with pytest.raises(ValueError):
        BaseKernel("point", 2)
    with pytest.raises(ValueError):
        BaseKernel.point(3, 3)
    with pytest.raises(ValueError):
        BaseKernel.theta(1.0 + 0j)
    with pytest.raises(ValueError):
        base_density(BaseKernel.point(), 2, 0)


# theta base

def test_theta_norm_constant():
    assert theta_norm_constant(1j, 1) == pytest.approx(2 * math.pi / math.sqrt(2), rel=1e-15)
    assert theta_norm_constant(1j, 2) == pytest.approx(math.pi, rel=1e-15)
    for q in range(1, 30):
        assert theta_norm_constant(0.3 + 1.7j, q) * math.sqrt(q) == pytest.approx(
            theta_norm_constant(0.3 + 1.7j, 1), rel=1e-10)


def test_theta_norm_constant_by_quadrature():
    def f(x, y):
        raw = theta_section_values(1j, 1, x, y)[:, 0] * math.sqrt(theta_norm_constant(1j, 1))
        return np.abs(raw) ** 2
    assert oracles.torus_integral(f, 1.0, 48) == pytest.approx(4.442882938158366, rel=1e-10)


@pytest.mark.parametrize("tau", [1j, 2j, 0.3 + 0.8j, -0.45 + 1.3j])
def test_theta_sections_orthonormal(tau):
    T = tau.imag
    g = 48
    xs, ys = np.meshgrid(np.arange(g) / g, T * np.arange(g) / g, indexing="ij")
    for q in (1, 3, 6):
        v = theta_section_values(tau, q, xs.ravel(), ys.ravel())
        gram = 2 * math.pi * (v.conj().T @ v) / v.shape[0]
        assert np.abs(gram - np.eye(q)).max() < 1e-10


@pytest.mark.parametrize("tau,q,x,y", [(1j, 1, 0.0, 0.0), (1j, 5, 0.3, 0.7), (2j, 4, 0.9, 1.9),
                                       (0.3 + 0.8j, 7, 0.12, 0.05), (-0.45 + 1.3j, 3, 0.5, 1.2)])
def test_theta_density_matches_direct_sum(tau, q, x, y):
    K = BaseKernel.theta(tau)
    assert base_density(K, 1, q, BasePoint(x, y)) == pytest.approx(
        theta_direct(tau, q, x, y), rel=1e-12)


def test_theta_dimension_and_domain():
    K = BaseKernel.theta(2j)
    assert base_dimension(K, 5) == 5
    with pytest.raises(ValueError):
        base_density(K, 1, 3, BasePoint(1.0, 0.0))
    with pytest.raises(ValueError):
        base_density(K, 1, 3, BasePoint(0.0, 2.0))


def test_theta_flat_leading_term_at_q20():
    K = BaseKernel.theta(1j)
    assert abs(2 * math.pi * base_density(K, 1, 20, BasePoint()) / 20 - 1) <= 0.01


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.999), st.floats(0.0, 0.999), st.integers(1, 25))
def test_theta_density_below_bound(fx, fy, q):
    K = BaseKernel.theta(0.2 + 1.1j)
    a = BasePoint(fx, fy * 1.1)
    val = base_density(K, 1, q, a)
    assert 0 <= val <= density_bound(K, q)


def test_density_bound_growth():
    K = BaseKernel.theta(0.7j)
    for q in range(1, 60):
        b1, b2 = density_bound(K, q), density_bound(K, q + 1)
        assert b1 <= b2 <= b1 * (q + 1) / q


# projector

def test_projector_reproduces_point_congruence():
    r = 3
    unitaries = {q: [[[np.exp(-2j * np.pi * k * q / r)]] for k in range(r)] for q in range(1, 13)}
    for c in range(r):
        P = BaseKernel.projector(BaseKernel.point(), unitaries, c)
        K = BaseKernel.point(r, c)
        for m in range(2, 9):
            for q in range(1, 13):
                assert base_density(P, m, q) == pytest.approx(base_density(K, m, q), abs=1e-14)
                assert base_dimension(P, q, m) == base_dimension(K, q, m)


def test_projector_identity_action_on_theta():
    tau = 1.2j
    unitaries = {q: [np.eye(q), np.eye(q)] for q in range(1, 6)}
    P = BaseKernel.projector(BaseKernel.theta(tau), unitaries, 1)
    a = BasePoint(0.3, 0.4)
    for q in range(1, 6):
        full = base_density(BaseKernel.theta(tau), 1, q, a)
        assert base_density(P, 4, q, a) == pytest.approx(full, rel=1e-14)
        assert base_density(P, 5, q, a) == pytest.approx(0.0, abs=1e-14)
        assert base_dimension(P, q, 4) == q
        assert base_dimension(P, q, 5) == 0
    with pytest.raises(ValueError):
        base_density(P, 4, 6, a)


def test_projector_trivial_group_equals_inner():
    K = BaseKernel.theta(0.1 + 0.9j)
    P = BaseKernel.projector(K, {q: [np.eye(q)] for q in range(1, 5)})
    for q in range(1, 5):
        a = BasePoint(0.25, 0.3)
        assert base_density(P, 3, q, a) == pytest.approx(base_density(K, 3, q, a), rel=1e-14)


def test_load_unitaries_formats(tmp_path):
    path = tmp_path / "u.json"
    nested = [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]
    flat = [[0, 0], [1, 0], [1, 0], [0, 0]]
    path.write_text(json.dumps({"2": [nested, flat]}))
    got = load_unitaries(path)
    assert np.array_equal(got[2][0], np.eye(2))
    assert np.array_equal(got[2][1], np.array([[0, 1], [1, 0]]))


def test_kernel_from_config():
    K = kernel_from_config({"base": "theta", "tau_re": "0.5", "tau_im": "2"})
    assert K.provider == "theta" and K.tau == 0.5 + 2j and K.n == 2
    K = kernel_from_config({"base": "point", "group_order": 4, "character_index": 3})
    assert (K.group_order, K.character_index) == (4, 3)
    with pytest.raises(ValueError):
        kernel_from_config({"base": "theta", "group_order": 2})
    with pytest.raises(ValueError):
        kernel_from_config({"base": "sphere"})
