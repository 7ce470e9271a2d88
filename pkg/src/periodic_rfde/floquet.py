"""Linearization around a computed orbit, discrete monodromy matrix and multipliers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NumericalError, SingularJacobian
from .greens import CandidateSolution, final_state, green_apply, state_view
from .mesh import Discretization, Side
from .problem import DiscretizedRhs, RFDEProblem, StateView, discretize_rhs


class LinearizedOperator:
    """``t, w -> omega* DG(v*(t + . / omega*))[w]`` along a fixed orbit."""

    def __init__(self, base: CandidateSolution, omega: float, rhs: DiscretizedRhs):
        self.base = base
        self.omega = float(omega)
        self.rhs = rhs
        self.d = rhs.d
        self.tau = rhs.tau

    def state(self, t: float) -> StateView:
        return state_view(self.base, t, self.omega, self.tau)

    def __call__(self, t: float, direction: StateView) -> np.ndarray:
        return self.omega * self.rhs.directional(self.state(t), direction)

    def on_candidate(self, t: float, w: CandidateSolution) -> np.ndarray:
        """Action on the state of a (possibly batched) candidate at time ``t``."""
        return self(t, state_view(w, t, self.omega, self.tau))


def build_linearized_operator(
    v: CandidateSolution, omega: float, problem: RFDEProblem | DiscretizedRhs, M: int = 20
) -> LinearizedOperator:
    rhs = problem if isinstance(problem, DiscretizedRhs) else discretize_rhs(problem, M)
    return LinearizedOperator(v, omega, rhs)


def monodromy_matrix(
    op: LinearizedOperator, L: Optional[int] = None, m: Optional[int] = None
) -> np.ndarray:
    """Node-coordinate matrix of the discrete evolution operator over one period.

    For each initial state ``psi`` (a minus-mesh node vector) the linear
    collocation equations ``u = L*(G(u, psi))`` are solved for ``u`` and the
    final state ``v(1 + theta)`` is sampled on the minus nodes. All columns
    share one factorization. ``L``/``m`` default to the base orbit's mesh.
    """
    base_disc = op.base.disc
    L = base_disc.L if L is None else L
    m = base_disc.m if m is None else m
    if (L, m) == (base_disc.L, base_disc.m):
        disc = base_disc
    else:
        disc = Discretization(L, m, base_disc.abscissae if m == base_disc.m else None)
    n, d = disc.n, op.d
    nd = n * d
    eye = np.eye(2 * nd)
    basis = green_apply(eye[:nd].reshape(n, d, 2 * nd), eye[nd:].reshape(n, d, 2 * nd), disc)
    K = np.array([op.on_candidate(t, basis) for t in disc.nodes(Side.PLUS)]).reshape(nd, 2 * nd)
    k_u, k_psi = K[:, :nd], K[:, nd:]
    try:
        lu = scipy.linalg.lu_factor(np.eye(nd) - k_u)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularJacobian(f"linear collocation system could not be factorized: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0.0):
        raise SingularJacobian("linear collocation system is singular")
    U = scipy.linalg.lu_solve(lu, k_psi)
    A = final_state(basis).reshape(nd, 2 * nd)
    return A[:, :nd] @ U + A[:, nd:]


@dataclass
class FloquetReport:
    multipliers: np.ndarray  # complex, sorted by decreasing modulus
    trivial_error: float
    hyperbolic: bool
    threshold: float

    @property
    def trivial_index(self) -> int:
        return int(np.argmin(np.abs(self.multipliers - 1.0)))

    @property
    def nontrivial(self) -> np.ndarray:
        return np.delete(self.multipliers, self.trivial_index)

    @property
    def stable(self) -> bool:
        """Hyperbolic with every non-trivial multiplier inside the unit circle."""
        return self.hyperbolic and bool(np.all(np.abs(self.nontrivial) < 1.0))


def multipliers_and_check(matrix, threshold: float = 1e-2) -> FloquetReport:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    try:
        mu = scipy.linalg.eigvals(matrix)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    mu = mu[np.argsort(-np.abs(mu), kind="stable")]
    dist_one = np.abs(mu - 1.0)
    trivial_error = float(dist_one.min()) if mu.size else float("inf")
    near_circle = np.flatnonzero(np.abs(np.abs(mu) - 1.0) < threshold)
    hyperbolic = bool(
        near_circle.size == 1 and near_circle[0] == int(np.argmin(dist_one))
    )
    return FloquetReport(mu, trivial_error, hyperbolic, float(threshold))


def floquet_analysis(v: CandidateSolution, omega: float, problem: RFDEProblem, M: int = 20,
                     threshold: float = 1e-2) -> FloquetReport:
    op = build_linearized_operator(v, omega, problem, M)
    return multipliers_and_check(monodromy_matrix(op), threshold)
