"""RFDE problem definitions, state views, secondary discretization and the
built-in problem catalog.

A right-hand side ``G`` acts on a :class:`StateView`, i.e. a function of the
physical delay variable ``sigma`` in ``[-tau, 0]``. Problems never see the
period: the caller builds the view already rescaled.

Direction views passed to a directional derivative may carry trailing batch
axes (one per basis direction); ``drhs`` callables must broadcast over them.
:func:`lift` helps with that.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import quad_vec

from .errors import DomainError, InvalidMesh, UnknownProblem

_DOMAIN_TOL = 1e-12
# absolute/relative accuracy of the adaptive quadrature used for exact G
_EXACT_QUAD_TOL = 1e-13


@dataclass(frozen=True)
class DiscreteDelay:
    lag: float  # sigma_k in [-tau, 0]


@dataclass(frozen=True)
class DistributedDelay:
    """``int_lower^upper kernel(theta) psi(theta) d theta`` with a scalar kernel."""

    kernel: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float = 0.0


class StateView:
    """Read-only view ``sigma -> psi(sigma)`` on ``[-tau, 0]``.

    ``func`` must accept scalar or 1-D array arguments and return arrays of
    shape ``(d, *batch)`` or ``(len(sigma), d, *batch)`` respectively.
    ``terms``/``rule`` describe how :meth:`integral` evaluates distributed
    terms: exactly (adaptive quadrature) when ``rule`` is None, otherwise with
    the fixed nodes and weights it holds.
    """

    def __init__(self, func, tau: float, d: int, terms=(), rule=None):
        self._func = func
        self.tau = float(tau)
        self.d = d
        self.terms = tuple(terms)
        self.rule = rule

    def __call__(self, sigma):
        tol = _DOMAIN_TOL * max(1.0, self.tau)
        if isinstance(sigma, (float, int)):
            # scalar fast path; discrete delays hit this on every evaluation
            if sigma < -self.tau - tol or sigma > tol:
                raise DomainError(f"state evaluated at sigma={sigma} outside [{-self.tau}, 0]")
            return self._func(min(max(float(sigma), -self.tau), 0.0))
        s = np.asarray(sigma, dtype=float)
        if np.any(s < -self.tau - tol) or np.any(s > tol):
            raise DomainError(f"state evaluated at sigma={s} outside [{-self.tau}, 0]")
        return self._func(np.clip(s, -self.tau, 0.0))

    def bind(self, terms, rule=None) -> "StateView":
        return StateView(self._func, self.tau, self.d, terms, rule)

    def integral(self, k: int) -> np.ndarray:
        term = self.terms[k]
        if self.rule is None:
            val, _ = quad_vec(
                lambda th: term.kernel(th) * self(th),
                term.lower,
                term.upper,
                epsabs=_EXACT_QUAD_TOL,
                epsrel=_EXACT_QUAD_TOL,
            )
            return val
        nodes, weights = self.rule[k]
        vals = self(nodes)
        return np.tensordot(weights, vals, axes=(0, 0))

    def sup_norm(self, samples: int = 201) -> float:
        return float(np.max(np.abs(self(np.linspace(-self.tau, 0.0, samples)))))

    def _combine(self, a, other: "StateView", b) -> "StateView":
        f, g = self._func, other._func
        return StateView(lambda s: a * f(s) + b * g(s), self.tau, self.d, self.terms, self.rule)

    def __add__(self, other):
        return self._combine(1.0, other, 1.0)

    def __sub__(self, other):
        return self._combine(1.0, other, -1.0)

    def __mul__(self, a):
        f = self._func
        return StateView(lambda s: a * f(s), self.tau, self.d, self.terms, self.rule)

    __rmul__ = __mul__


def lift(x, like) -> np.ndarray:
    """Append singleton axes to ``x`` so it broadcasts against ``like``'s batch axes."""
    x = np.asarray(x)
    like = np.asarray(like)
    extra = like.ndim - x.ndim
    return x.reshape(x.shape + (1,) * extra) if extra > 0 else x


@dataclass(frozen=True)
class RFDEProblem:
    """``y'(t) = G(y_t)`` with ``G(psi) = rhs(psi, params)``.

    ``guess`` maps rescaled time (period 1) to ``(y, y')`` with shapes
    ``(len(t), d)``; ``omega0`` is the matching period guess. ``exact`` (if
    known) maps physical time to ``(y, y')`` of a periodic orbit of period
    ``exact_period``. ``section`` is the default Poincare section
    ``(component, level)`` with 1-based component.
    """

    name: str
    d: int
    tau: float
    rhs: Callable
    drhs: Optional[Callable] = None
    delay_descriptor: tuple = ()
    params: Mapping[str, float] = field(default_factory=dict)
    guess: Optional[Callable] = None
    omega0: Optional[float] = None
    exact: Optional[Callable] = None
    exact_period: Optional[float] = None
    section: tuple[int, float] = (1, 0.0)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        for term in self.delay_descriptor:
            if isinstance(term, DiscreteDelay) and not -self.tau <= term.lag <= 0:
                raise ValueError(f"lag {term.lag} outside [-tau, 0]")
            if isinstance(term, DistributedDelay) and not (
                -self.tau <= term.lower < term.upper <= 0
            ):
                raise ValueError("distributed delay interval must lie in [-tau, 0]")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    @property
    def distributed_terms(self) -> list[int]:
        return [
            k for k, t in enumerate(self.delay_descriptor) if isinstance(t, DistributedDelay)
        ]

    def with_params(self, **updates) -> "RFDEProblem":
        unknown = set(updates) - set(self.params)
        if unknown:
            raise KeyError(f"unknown parameter(s) for {self.name}: {sorted(unknown)}")
        params = dict(self.params)
        params.update({k: float(v) for k, v in updates.items()})
        return replace(self, params=params)

    def view(self, func, d=None) -> StateView:
        return StateView(func, self.tau, self.d if d is None else d)


def eval_rhs(problem: RFDEProblem, state: StateView) -> np.ndarray:
    return np.asarray(problem.rhs(state.bind(problem.delay_descriptor), problem.params))


def _fd_directional(G, state: StateView, direction: StateView) -> np.ndarray:
    eps = 1e-6 * max(1.0, state.sup_norm())
    probe = np.asarray(direction(0.0))
    if probe.ndim == 1:
        return (G(state + eps * direction) - G(state - eps * direction)) / (2 * eps)
    batch = probe.shape[1:]
    out = np.empty((state.d,) + batch)
    for idx in np.ndindex(*batch):
        col = StateView(
            lambda s, idx=idx: direction(s)[(Ellipsis,) + idx],
            state.tau, state.d, state.terms, state.rule,
        )
        out[(slice(None),) + idx] = (G(state + eps * col) - G(state - eps * col)) / (2 * eps)
    return out


def eval_rhs_directional(
    problem: RFDEProblem, state: StateView, direction: StateView
) -> np.ndarray:
    """``DG(state)[direction]``; central differences when ``drhs`` is absent."""
    terms = problem.delay_descriptor
    state = state.bind(terms)
    direction = direction.bind(terms)
    if problem.drhs is not None:
        return np.asarray(problem.drhs(state, direction, problem.params))
    return _fd_directional(lambda s: eval_rhs(problem, s), state, direction)


@dataclass(frozen=True)
class DiscretizedRhs:
    """``G_M``: every distributed term replaced by M-node Gauss-Legendre."""

    base: RFDEProblem
    M: int
    rule: Optional[tuple]

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def tau(self) -> float:
        return self.base.tau

    def weights_sum(self, k: int) -> float:
        return float(np.sum(self.rule[k][2])) if self.rule else float("nan")

    def _bind(self, view: StateView) -> StateView:
        if self.rule is None:
            return view.bind(self.base.delay_descriptor)
        return view.bind(self.base.delay_descriptor, [r[:2] if r else None for r in self.rule])

    def __call__(self, state: StateView) -> np.ndarray:
        return np.asarray(self.base.rhs(self._bind(state), self.base.params))

    def directional(self, state: StateView, direction: StateView) -> np.ndarray:
        state = self._bind(state)
        direction = self._bind(direction)
        if self.base.drhs is not None:
            return np.asarray(self.base.drhs(state, direction, self.base.params))
        return _fd_directional(self, state, direction)


def discretize_rhs(problem: RFDEProblem, M: int) -> DiscretizedRhs:
    if int(M) != M or M < 1:
        raise InvalidMesh(f"number of quadrature nodes must be a positive integer, got {M!r}")
    M = int(M)
    if not problem.distributed_terms:
        return DiscretizedRhs(problem, M, None)
    x, w = np.polynomial.legendre.leggauss(M)
    rule = []
    for term in problem.delay_descriptor:
        if isinstance(term, DistributedDelay):
            half = 0.5 * (term.upper - term.lower)
            nodes = term.lower + half * (x + 1.0)
            qw = half * w
            # (nodes, kernel-weighted weights, plain weights)
            rule.append((nodes, qw * term.kernel(nodes), qw))
        else:
            rule.append(None)
    return DiscretizedRhs(problem, M, tuple(rule))


def period_guard(tau: float, omega_guess: float, margin: float = 0.05) -> tuple[float, int]:
    """Smallest multiple ``k*omega_guess`` (k >= 1) with ``k*omega_guess >= tau*(1+margin)``."""
    k = max(1, int(np.ceil(tau * (1.0 + margin) / omega_guess - 1e-12)))
    while k * omega_guess < tau * (1.0 + margin):
        k += 1
    return k * omega_guess, k


# ---------------------------------------------------------------------------
# catalog


def _logistic_rhs(p, P):
    return P["r"] * p(0.0) * (1.0 - p(-1.0))


def _logistic_drhs(p, dp, P):
    p0, p1 = p(0.0), p(-1.0)
    d0, d1 = dp(0.0), dp(-1.0)
    return P["r"] * (d0 * lift(1.0 - p1, d0) - lift(p0, d1) * d1)


def _sin_guess(t):
    t = np.asarray(t, dtype=float)
    y = 1.0 + 0.5 * np.sin(2 * np.pi * t)
    dy = np.pi * np.cos(2 * np.pi * t)
    return y[..., None], dy[..., None]


_R = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _mms_rhs(p, P):
    y0, y1 = p(0.0), p(-1.0)
    return (
        np.pi * _R @ y0
        + P["kappa"] * (1.0 - y0 @ y0) * y0
        + P["mu"] * (y1 + y0)
    )


def _mms_drhs(p, dp, P):
    y0 = p(0.0)
    d0, d1 = dp(0.0), dp(-1.0)
    dot = np.tensordot(y0, d0, axes=(0, 0))
    return (
        np.pi * np.tensordot(_R, d0, axes=1)
        + P["kappa"] * ((1.0 - y0 @ y0) * d0 - 2.0 * lift(y0, d0) * dot)
        + P["mu"] * (d1 + d0)
    )


def _mms_exact(t):
    t = np.asarray(t, dtype=float)
    y = np.stack((np.sin(np.pi * t), np.cos(np.pi * t)), axis=-1)
    dy = np.pi * np.stack((np.cos(np.pi * t), -np.sin(np.pi * t)), axis=-1)
    return y, dy


def _mms_guess(t):
    y, dy = _mms_exact(2.0 * np.asarray(t, dtype=float))
    return y, 2.0 * dy


def _dist_kernel(theta):
    return -2.0 * np.asarray(theta, dtype=float)


def _dist_rhs(p, P):
    return P["r"] * p(0.0) * (1.0 - p.integral(0))


def _dist_drhs(p, dp, P):
    p0 = p(0.0)
    d0 = dp(0.0)
    dI = dp.integral(0)
    return P["r"] * (d0 * lift(1.0 - p.integral(0), d0) - lift(p0, dI) * dI)


def logistic(r: float = 2.0) -> RFDEProblem:
    """Delayed logistic (Hutchinson) equation ``y' = r y(t) (1 - y(t-1))``."""
    return RFDEProblem(
        name="logistic",
        d=1,
        tau=1.0,
        rhs=_logistic_rhs,
        drhs=_logistic_drhs,
        delay_descriptor=(DiscreteDelay(0.0), DiscreteDelay(-1.0)),
        params={"r": r},
        guess=_sin_guess,
        omega0=4.0,
        section=(1, 1.0),
    )


def mms(kappa: float = 1.0, mu: float = 0.1) -> RFDEProblem:
    """Manufactured problem with exact orbit ``(sin pi t, cos pi t)`` of period 2."""
    return RFDEProblem(
        name="mms",
        d=2,
        tau=1.0,
        rhs=_mms_rhs,
        drhs=_mms_drhs,
        delay_descriptor=(DiscreteDelay(0.0), DiscreteDelay(-1.0)),
        params={"kappa": kappa, "mu": mu},
        guess=_mms_guess,
        omega0=2.0,
        exact=_mms_exact,
        exact_period=2.0,
        section=(2, 0.0),
    )


def dist_logistic(r: float = 3.0) -> RFDEProblem:
    """Logistic growth limited by a distributed delay with weight ``2|theta|`` on [-1, 0]."""
    return RFDEProblem(
        name="dist-logistic",
        d=1,
        tau=1.0,
        rhs=_dist_rhs,
        drhs=_dist_drhs,
        delay_descriptor=(DistributedDelay(_dist_kernel, -1.0, 0.0),),
        params={"r": r},
        guess=_sin_guess,
        omega0=2.8,
        section=(1, 1.0),
    )


CATALOG: dict[str, Callable[..., RFDEProblem]] = {
    "logistic": logistic,
    "mms": mms,
    "dist-logistic": dist_logistic,
}


def make_problem(name: str, **params) -> RFDEProblem:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownProblem(
            f"unknown problem {name!r}; choose from {', '.join(sorted(CATALOG))}"
        ) from None
    base = factory()
    return base.with_params(**params) if params else base


def linear_problem(A, lag: float = -1.0, tau: float = 1.0) -> RFDEProblem:
    """``G(psi) = A psi(lag)``; handy for tests and as a template."""
    A = np.atleast_2d(np.asarray(A, dtype=float))

    def rhs(p, P):
        return A @ p(lag)

    def drhs(p, dp, P):
        return np.tensordot(A, dp(lag), axes=1)

    return RFDEProblem(
        name="linear", d=A.shape[0], tau=tau, rhs=rhs, drhs=drhs,
        delay_descriptor=(DiscreteDelay(lag),),
    )


def history_from_guess(problem: RFDEProblem) -> Callable:
    """Physical-time history on [-tau, 0] taken from the catalog guess."""
    omega0 = problem.omega0

    def history(s):
        y, _ = problem.guess(np.asarray(s, dtype=float) / omega0)
        return y

    return history


def parse_params(pairs: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"parameter override must look like key=value, got {item!r}")
        out[key.strip()] = float(value)
    return out
