"""Bergman densities of the base ``D`` that feed the cusp series.

Three providers:

* ``point``: ``D`` is a point (cusp dimension ``n = 1``). Without a group every
  mode ``q >= 1`` carries density 1. With a cyclic rotation group of order
  ``r`` and character index ``c`` the generator acts on the frame by
  ``exp(-2*pi*i*c/r)`` and on ``w**q`` by ``exp(-2*pi*i*q/r)``, so mode ``q``
  survives exactly when ``q + c*m = 0 (mod r)``.
* ``theta``: the elliptic curve ``C / (Z + tau Z)`` (``n = 2``) with the
  principal polarization. Sections of ``L**q`` are the theta functions
  ``theta_j``, ``j = 0..q-1``. The Kähler form is scaled so ``Vol(D) = 2*pi``,
  which makes ``rho_q -> q / (2*pi)`` and ``integral(rho_q) = q``.
* ``projector``: averages an untwisted inner provider over a user supplied
  cyclic family of unitaries ``U_k`` (one list per ``q``), projecting onto the
  character-invariant sections.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

_THETA_DYNAMIC_RANGE = 40.0 * math.log(10.0)


@dataclass(frozen=True)
class BasePoint:
    """Point of ``D``. The point base ignores the coordinates."""

    x: float = 0.0
    y: float = 0.0

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)


@dataclass(frozen=True, eq=False)
class BaseKernel:
    provider: str
    n: int
    group_order: int = 1
    character_index: int = 0
    tau: complex | None = None
    inner: BaseKernel | None = None
    unitaries: Mapping[int, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if self.provider not in ("point", "theta", "projector"):
            raise ValueError(f"unknown provider {self.provider!r}")
        if self.group_order < 1:
            raise ValueError("group_order must be positive")
        if not 0 <= self.character_index < self.group_order:
            raise ValueError("character_index must lie in [0, group_order)")
        if self.provider == "point" and self.n != 1:
            raise ValueError("the point base requires n = 1")
        if self.provider == "theta":
            if self.n != 2:
                raise ValueError("the theta base requires n = 2")
            if self.tau is None or complex(self.tau).imag <= 0:
                raise ValueError("theta base needs tau with Im(tau) > 0")
            if self.group_order != 1:
                raise ValueError("group actions on theta bases must be supplied "
                                 "as a projector with explicit unitaries")
        if self.provider == "projector":
            if self.inner is None or self.inner.group_order != 1:
                raise ValueError("projector needs an untwisted inner kernel")
            if self.inner.n != self.n:
                raise ValueError("projector and inner kernel disagree on n")

    @classmethod
    def point(cls, group_order: int = 1, character_index: int = 0) -> BaseKernel:
        return cls("point", 1, group_order, character_index)

    @classmethod
    def theta(cls, tau: complex) -> BaseKernel:
        return cls("theta", 2, tau=complex(tau))

    @classmethod
    def projector(cls, inner: BaseKernel, unitaries: Mapping[int, Sequence],
                  character_index: int = 0) -> BaseKernel:
        """Wrap ``inner`` with unitaries ``{q: [U_0, U_1, ..., U_{r-1}]}``.

        ``U_k`` is the action of the ``k``-th power of the generator on the
        coefficient vectors of the inner orthonormal sections of degree ``q``.
        """
        frozen = {}
        orders = set()
        for q, mats in unitaries.items():
            mats = tuple(np.array(u, dtype=complex, ndmin=2) for u in mats)
            orders.add(len(mats))
            frozen[int(q)] = mats
        if len(orders) != 1:
            raise ValueError("every q must list the same number of group elements")
        return cls("projector", inner.n, orders.pop(), character_index,
                   inner=inner, unitaries=frozen)

    @property
    def trivial_group(self) -> bool:
        return self.group_order == 1


def _check_q(q: int) -> None:
    if int(q) != q or q < 1:
        raise ValueError(f"q must be a positive integer, got {q!r}")


def _reduce_point(kernel: BaseKernel, a: BasePoint) -> tuple[float, float]:
    T = kernel.tau.imag
    if not (0.0 <= a.x < 1.0 and 0.0 <= a.y < T):
        raise ValueError(f"theta base point ({a.x}, {a.y}) lies outside "
                         f"[0, 1) x [0, {T})")
    return a.x, a.y


def theta_norm_constant(tau: complex, q: int) -> float:
    """Squared L2 norm of every ``theta_j`` with ``Vol(D) = 2*pi``."""
    tau = complex(tau)
    if tau.imag <= 0:
        raise ValueError("Im(tau) must be positive")
    _check_q(q)
    return 2.0 * math.pi / math.sqrt(2.0 * q * tau.imag)


def theta_section_values(tau: complex, q: int, x, y) -> np.ndarray:
    """Pointwise values of the orthonormal theta sections, metric weight included.

    Returns an array of shape ``(len(x), q)`` whose squared moduli sum to the
    Bergman density ``rho_q`` at each point.
    """
    tau = complex(tau)
    T = tau.imag
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None, None]
    y = np.atleast_1d(np.asarray(y, dtype=float))[:, None, None]
    j = np.arange(q, dtype=float)[None, :, None]
    reach = int(math.ceil(math.sqrt(_THETA_DYNAMIC_RANGE / (math.pi * q * T)))) + 1
    offs = np.arange(-reach, reach + 1, dtype=float)[None, None, :]
    n_best = np.round(-y / T - j / q)
    k = n_best + offs + j / q
    # |exp(pi i tau q k^2 + 2 pi i q k z)| * exp(-pi q y^2 / T)
    log_mod = -(math.pi * q / T) * (T * k + y) ** 2
    phase = math.pi * tau.real * q * k ** 2 + 2.0 * math.pi * q * k * x
    keep = log_mod >= log_mod.max(axis=2, keepdims=True) - _THETA_DYNAMIC_RANGE
    terms = np.where(keep, np.exp(log_mod + 1j * phase), 0.0)
    vals = terms.sum(axis=2)
    return vals / math.sqrt(theta_norm_constant(tau, q))


def theta_density(tau: complex, q: int, x, y) -> np.ndarray:
    """``rho_q`` of the theta base at arrays of points (no domain checks)."""
    v = theta_section_values(tau, q, x, y)
    return np.sum(v.real ** 2 + v.imag ** 2, axis=1)


@lru_cache(maxsize=65536)
def _theta_density_cached(tau: complex, q: int, x: float, y: float) -> float:
    return float(theta_density(tau, q, [x], [y])[0])


def _section_vector(kernel: BaseKernel, q: int, a: BasePoint) -> np.ndarray:
    if kernel.provider == "point":
        return np.ones(1, dtype=complex)
    if kernel.provider == "theta":
        x, y = _reduce_point(kernel, a)
        return theta_section_values(kernel.tau, q, [x], [y])[0]
    raise ValueError("nested projectors are not supported")


def _projector_matrix(kernel: BaseKernel, m: int, q: int) -> np.ndarray:
    try:
        mats = kernel.unitaries[q]
    except KeyError:
        raise ValueError(f"projector has no unitaries for q = {q}") from None
    r = kernel.group_order
    c = kernel.character_index
    dim = base_dimension(kernel.inner, q)
    P = np.zeros((dim, dim), dtype=complex)
    for k, U in enumerate(mats):
        if U.shape != (dim, dim):
            raise ValueError(f"unitary for q = {q} has shape {U.shape}, "
                             f"expected {(dim, dim)}")
        P += np.exp(-2j * math.pi * ((c * k * m) % r) / r) * U
    return P / r


def point_mode_allowed(kernel: BaseKernel, m: int, q: int) -> bool:
    return (q + kernel.character_index * m) % kernel.group_order == 0


def base_density(kernel: BaseKernel, m: int, q: int, a: BasePoint | None = None) -> float:
    """Density ``rho_{D, Delta_m, q}(a)`` of the character-invariant sections."""
    _check_q(q)
    a = BasePoint() if a is None else a
    if kernel.provider == "point":
        if kernel.trivial_group:
            return 1.0
        return 1.0 if point_mode_allowed(kernel, m, q) else 0.0
    if kernel.provider == "theta":
        x, y = _reduce_point(kernel, a)
        return _theta_density_cached(kernel.tau, int(q), float(x), float(y))
    P = _projector_matrix(kernel, m, q)
    v = _section_vector(kernel.inner, q, a)
    return max(0.0, float(np.real(v @ P @ v.conj())))


def base_dimension(kernel: BaseKernel, q: int, m: int | None = None) -> int:
    """Dimension of the invariant section space of degree ``q``.

    ``m`` only matters for twisted characters and is required there.
    """
    _check_q(q)
    if kernel.provider == "theta":
        return int(q)
    if kernel.provider == "point":
        if kernel.trivial_group:
            return 1
        if m is None:
            if kernel.character_index != 0:
                raise ValueError("m is required for a twisted character")
            m = 0
        return 1 if point_mode_allowed(kernel, m, q) else 0
    if m is None:
        if kernel.character_index != 0:
            raise ValueError("m is required for a twisted character")
        m = 0
    return int(round(float(np.real(np.trace(_projector_matrix(kernel, m, q))))))


def density_values(kernel: BaseKernel, m: int, qs: np.ndarray,
                   a: BasePoint | None = None) -> np.ndarray:
    """``base_density`` over an array of modes."""
    qs = np.asarray(qs, dtype=np.int64)
    if kernel.provider == "point":
        if kernel.trivial_group:
            return np.ones(qs.shape)
        allowed = (qs + kernel.character_index * m) % kernel.group_order == 0
        return allowed.astype(float)
    return np.array([base_density(kernel, m, int(q), a) for q in qs])


def _theta_pair_constant(T: float) -> float:
    return 1.0 + 2.0 * sum(math.exp(-math.pi * T * (i - 0.5) ** 2) for i in range(1, 64))


def density_bound(kernel: BaseKernel, q: float) -> float:
    """Upper bound on ``sup_a rho_q(a)``, nondecreasing in ``q``.

    For ``q' >= q`` the bound satisfies
    ``bound(q') / bound(q) <= (q'/q) ** density_growth(kernel)``.
    """
    if kernel.provider == "projector":
        return density_bound(kernel.inner, q)
    if kernel.provider == "point":
        return 1.0
    T = kernel.tau.imag
    return (math.sqrt(2.0 * q * T) / (2.0 * math.pi) * _theta_pair_constant(T)
            * (1.0 + math.sqrt(q / T)))


def density_growth(kernel: BaseKernel) -> int:
    if kernel.provider == "projector":
        return density_growth(kernel.inner)
    return 0 if kernel.provider == "point" else 1


def load_unitaries(path: str | Path) -> dict[int, list[np.ndarray]]:
    """Read ``{"q": [U_0, U_1, ...]}`` from JSON.

    Each matrix is row-major complex pairs, either nested by rows
    (``[[[re, im], ...], ...]``) or flat (``[[re, im], ...]`` of length N*N).
    """
    raw = json.loads(Path(path).read_text())
    out = {}
    for key, mats in raw.items():
        parsed = []
        for mat in mats:
            arr = np.asarray(mat, dtype=float)
            if arr.shape[-1] != 2:
                raise ValueError(f"q = {key}: entries must be [re, im] pairs")
            cplx = arr[..., 0] + 1j * arr[..., 1]
            if cplx.ndim == 1:
                size = int(round(math.sqrt(cplx.size)))
                if size * size != cplx.size:
                    raise ValueError(f"q = {key}: flat matrix is not square")
                cplx = cplx.reshape(size, size)
            parsed.append(cplx)
        out[int(key)] = parsed
    return out


def kernel_from_config(cfg: Mapping[str, object]) -> BaseKernel:
    """Build a kernel from config keys ``base``, ``tau_re``, ``tau_im``,
    ``group_order``, ``character_index`` and optionally ``unitaries`` (path)."""
    base = str(cfg.get("base", "point")).strip().lower()
    group_order = int(cfg.get("group_order", 1) or 1)
    character = int(cfg.get("character_index", 0) or 0)
    unitaries = cfg.get("unitaries")
    if base == "point":
        inner = BaseKernel.point()
    elif base == "theta":
        tau = complex(float(cfg.get("tau_re", 0.0) or 0.0), float(cfg.get("tau_im", 1.0) or 1.0))
        inner = BaseKernel.theta(tau)
    else:
        raise ValueError(f"base must be 'point' or 'theta', got {base!r}")
    if unitaries:
        return BaseKernel.projector(inner, load_unitaries(str(unitaries)), character)
    if group_order == 1 and character == 0:
        return inner
    if base == "point":
        return BaseKernel.point(group_order, character)
    raise ValueError("a group action on the theta base needs a unitaries file")
