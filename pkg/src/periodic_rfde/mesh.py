"""Primary discretization: uniform outer meshes, inner abscissae, Lagrange
interpolation, restriction/prolongation and exact piecewise integration.

Node vectors are arrays whose first axis has length ``1 + L*m`` and is ordered
as ``(x_{1,0}, x_{1,1}, ..., x_{1,m}, x_{2,1}, ..., x_{L,m})``. Any trailing
axes (state components, batches of basis directions) are carried along
untouched by every operation in this module.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidMesh

# relative slack when deciding whether a point lies in a mesh domain
_DOMAIN_TOL = 1e-12
# points this close (in units of h) to an outer node are assigned to the
# interval on the right, so derivatives there are right derivatives
_SNAP = 1e-12

LEBESGUE_SAMPLES = 10_001


class Side(enum.Enum):
    PLUS = "plus"  # [0, 1]
    MINUS = "minus"  # [-1, 0]


class Family(enum.Enum):
    GAUSS_LEGENDRE = "gauss"
    CHEBYSHEV = "chebyshev"
    CUSTOM = "custom"


@dataclass(frozen=True)
class OuterMesh:
    side: Side
    L: int

    @property
    def h(self) -> float:
        return 1.0 / self.L

    @property
    def start(self) -> float:
        return 0.0 if self.side is Side.PLUS else -1.0

    @property
    def end(self) -> float:
        return self.start + 1.0

    @property
    def nodes(self) -> np.ndarray:
        return self.start + np.arange(self.L + 1) * self.h


def outer_mesh(L: int, side: Side | str = Side.PLUS) -> OuterMesh:
    side = Side(side)
    if int(L) != L or L < 1:
        raise InvalidMesh(f"number of intervals must be a positive integer, got {L!r}")
    return OuterMesh(side, int(L))


@dataclass(frozen=True)
class InnerAbscissae:
    c: tuple[float, ...]
    family: Family = Family.GAUSS_LEGENDRE

    @property
    def m(self) -> int:
        return len(self.c)

    @property
    def with_zero(self) -> np.ndarray:
        """The interpolation abscissae ``c_0 = 0, c_1, ..., c_m``."""
        return np.concatenate(([0.0], self.c))


def inner_abscissae(
    m: int, family: Family | str = Family.GAUSS_LEGENDRE, custom=None
) -> InnerAbscissae:
    family = Family(family)
    if int(m) != m or m < 1:
        raise InvalidMesh(f"polynomial degree must be a positive integer, got {m!r}")
    m = int(m)
    if family is Family.GAUSS_LEGENDRE:
        x, _ = np.polynomial.legendre.leggauss(m)
        c = 0.5 * (x + 1.0)
    elif family is Family.CHEBYSHEV:
        j = np.arange(1, m + 1)
        c = 0.5 * (1.0 - np.cos((2 * j - 1) * np.pi / (2 * m)))
    else:
        if custom is None:
            raise InvalidMesh("custom abscissae require explicit values")
        c = np.asarray(custom, dtype=float)
        if c.shape != (m,):
            raise InvalidMesh(f"expected {m} custom abscissae, got shape {c.shape}")
        if not (c[0] > 0.0 and c[-1] < 1.0 and np.all(np.diff(c) > 0.0)):
            raise InvalidMesh("abscissae must satisfy 0 < c_1 < ... < c_m < 1")
    return InnerAbscissae(tuple(float(ci) for ci in np.sort(c)), family)


def _check_distinct(nodes: np.ndarray) -> None:
    if len(np.unique(nodes)) != len(nodes):
        raise InvalidMesh(f"interpolation abscissae must be pairwise distinct: {nodes}")


def lagrange_weights(abscissae, t) -> np.ndarray:
    """Values ``l_j(t)`` of the Lagrange basis on ``abscissae``.

    Returns an array of shape ``np.shape(t) + (len(abscissae),)``. The product
    form is used so that the cardinal property holds exactly at the nodes.
    """
    nodes = np.asarray(abscissae, dtype=float)
    _check_distinct(nodes)
    t = np.asarray(t, dtype=float)
    diff = t[..., None] - nodes  # (..., k)
    k = len(nodes)
    out = np.ones(t.shape + (k,))
    for j in range(k):
        for i in range(k):
            if i != j:
                out[..., j] *= diff[..., i] / (nodes[j] - nodes[i])
    return out


class LagrangeBasis:
    """Lagrange basis on fixed abscissae, held as monomial coefficients in s.

    Row ``j`` of ``coef`` holds the coefficients of ``l_j`` in increasing
    powers of ``s``; ``integral_coef`` holds those of ``s -> int_0^s l_j``.
    """

    def __init__(self, abscissae):
        nodes = np.asarray(abscissae, dtype=float)
        _check_distinct(nodes)
        self.nodes = nodes
        k = len(nodes)
        coef = np.zeros((k, k))
        for j in range(k):
            others = np.delete(nodes, j)
            c = np.poly(others)[::-1] / np.prod(nodes[j] - others)
            coef[j] = c
        self.coef = coef
        self.deriv_coef = np.array([np.polynomial.polynomial.polyder(c) for c in coef])
        self.integral_coef = np.array([np.polynomial.polynomial.polyint(c) for c in coef])

    @property
    def size(self) -> int:
        return len(self.nodes)

    def values(self, s) -> np.ndarray:
        return lagrange_weights(self.nodes, s)

    def derivatives(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.size == 1:
            return np.zeros(s.shape + (1,))
        vals = np.polynomial.polynomial.polyval(s, self.deriv_coef.T)
        return np.moveaxis(vals, 0, -1)


def lebesgue_constants(abscissae, samples: int = LEBESGUE_SAMPLES) -> tuple[float, float]:
    """Lebesgue constants of the basis and of its derivative on [0, 1].

    Both maxima are estimated on ``samples`` uniformly spaced points
    (10^4 + 1 by default), so they are lower estimates of the true maxima up
    to the sampling resolution; endpoints are always included.
    """
    basis = LagrangeBasis(abscissae)
    s = np.linspace(0.0, 1.0, samples)
    lam = np.max(np.sum(np.abs(basis.values(s)), axis=-1))
    dlam = np.max(np.sum(np.abs(basis.derivatives(s)), axis=-1))
    return float(lam), float(dlam)


@dataclass(frozen=True)
class Discretization:
    """Mesh configuration shared by the plus ([0,1]) and minus ([-1,0]) sides."""

    L: int
    m: int
    abscissae: InnerAbscissae = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        outer_mesh(self.L)
        if self.abscissae is None:
            object.__setattr__(self, "abscissae", inner_abscissae(self.m))
        elif self.abscissae.m != self.m:
            raise InvalidMesh(
                f"abscissae have {self.abscissae.m} points but m = {self.m}"
            )

    @property
    def n(self) -> int:
        return 1 + self.L * self.m

    @property
    def h(self) -> float:
        return 1.0 / self.L

    def mesh(self, side: Side | str) -> OuterMesh:
        return outer_mesh(self.L, side)

    def nodes(self, side: Side | str) -> np.ndarray:
        return collocation_nodes(self.mesh(side), self.abscissae)


def collocation_nodes(mesh: OuterMesh, abscissae: InnerAbscissae) -> np.ndarray:
    """``(t_{1,0}, t_{1,1}, ..., t_{L,m})``: left endpoint followed by inner nodes."""
    c = np.asarray(abscissae.c)
    inner = mesh.start + (np.arange(mesh.L)[:, None] + c[None, :]) * mesh.h
    return np.concatenate(([mesh.start], inner.ravel()))


def restrict(f: Callable, mesh: OuterMesh, abscissae: InnerAbscissae) -> np.ndarray:
    """Sample ``f`` at the collocation nodes; ``f`` must accept an array of times."""
    t = collocation_nodes(mesh, abscissae)
    vals = np.asarray(f(t), dtype=float)
    if vals.ndim == 0 or vals.shape[0] != len(t):
        vals = np.broadcast_to(vals, (len(t),) + vals.shape).copy()
    return vals


class PiecewisePolynomial:
    """Continuous piecewise polynomial on a uniform outer mesh.

    Stored as per-interval monomial coefficients in the local variable
    ``s = (t - t_{i-1})/h``; ``coef`` has shape ``(L, degree + 1, *trail)``.
    Derivatives at interior outer nodes are taken from the right.
    """

    def __init__(self, mesh: OuterMesh, coef: np.ndarray):
        self.mesh = mesh
        self.coef = coef

    @property
    def degree(self) -> int:
        return self.coef.shape[1] - 1

    @property
    def trail(self) -> tuple[int, ...]:
        return self.coef.shape[2:]

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        mesh = self.mesh
        tol = _DOMAIN_TOL * max(1.0, abs(mesh.start), abs(mesh.end))
        if np.any(t < mesh.start - tol) or np.any(t > mesh.end + tol):
            bad = t[(t < mesh.start - tol) | (t > mesh.end + tol)]
            raise DomainError(
                f"evaluation at {bad.ravel()[:3]} outside [{mesh.start}, {mesh.end}]"
            )
        x = (t - mesh.start) * mesh.L
        idx = np.clip(np.floor(x + _SNAP).astype(int), 0, mesh.L - 1)
        return t, idx, x - idx

    def _horner(self, coef, idx, s):
        s = s.reshape(s.shape + (1,) * len(self.trail))
        out = coef[idx, -1]
        for k in range(coef.shape[1] - 2, -1, -1):
            out = out * s + coef[idx, k]
        return out

    def __call__(self, t) -> np.ndarray:
        t, idx, s = self._locate(t)
        return self._horner(self.coef, idx, s)

    def derivative(self, t) -> np.ndarray:
        t, idx, s = self._locate(t)
        if self.degree == 0:
            return np.zeros(t.shape + self.trail)
        k = np.arange(1, self.degree + 1).reshape((1, -1) + (1,) * len(self.trail))
        dcoef = self.coef[:, 1:] * k * self.mesh.L
        return self._horner(dcoef, idx, s)

    def __add__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        if other.mesh != self.mesh:
            raise InvalidMesh("cannot add polynomials on different meshes")
        deg = max(self.degree, other.degree)
        a = _pad_degree(self.coef, deg)
        b = _pad_degree(other.coef, deg)
        return PiecewisePolynomial(self.mesh, a + b)

    def shifted(self, constant) -> "PiecewisePolynomial":
        coef = self.coef.copy()
        coef[:, 0] = coef[:, 0] + np.asarray(constant)
        return PiecewisePolynomial(self.mesh, coef)


def _pad_degree(coef: np.ndarray, degree: int) -> np.ndarray:
    extra = degree + 1 - coef.shape[1]
    if extra == 0:
        return coef
    pad = np.zeros((coef.shape[0], extra) + coef.shape[2:])
    return np.concatenate((coef, pad), axis=1)


def interval_values(values: np.ndarray, L: int, m: int, basis: LagrangeBasis) -> np.ndarray:
    """Expand a node vector into per-interval values at ``c_0 = 0, c_1..c_m``.

    The value at the left end of interval ``i > 1`` is not stored in the node
    vector; continuity fixes it as the previous piece evaluated at ``s = 1``.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != 1 + L * m:
        raise InvalidMesh(
            f"node vector has {values.shape[0]} entries, expected 1 + L*m = {1 + L * m}"
        )
    trail = values.shape[1:]
    local = np.empty((L, m + 1) + trail)
    local[:, 1:] = values[1:].reshape((L, m) + trail)
    end_weights = basis.values(1.0)
    left = values[0]
    for i in range(L):
        local[i, 0] = left
        left = np.tensordot(end_weights, local[i], axes=(0, 0))
    return local


def prolong(values, mesh: OuterMesh, abscissae: InnerAbscissae) -> PiecewisePolynomial:
    basis = LagrangeBasis(abscissae.with_zero)
    local = interval_values(values, mesh.L, abscissae.m, basis)
    coef = np.tensordot(basis.coef.T, local, axes=(1, 1))  # (deg+1, L, *trail)
    return PiecewisePolynomial(mesh, np.moveaxis(coef, 0, 1))


def antiderivative(p: PiecewisePolynomial) -> PiecewisePolynomial:
    """Exact ``q(t) = int_{start}^t p(s) ds`` as a piecewise polynomial one degree higher."""
    L = p.mesh.L
    h = p.mesh.h
    k = np.arange(1, p.degree + 2).reshape((1, -1) + (1,) * len(p.trail))
    icoef = np.zeros((L, p.degree + 2) + p.trail)
    icoef[:, 1:] = h * p.coef / k
    totals = icoef.sum(axis=1)  # integral over each interval
    offsets = np.concatenate((np.zeros((1,) + p.trail), np.cumsum(totals, axis=0)[:-1]))
    icoef[:, 0] = offsets
    return PiecewisePolynomial(p.mesh, icoef)
