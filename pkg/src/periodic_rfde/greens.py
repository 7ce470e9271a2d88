"""Green operator: rebuild ``v`` on [-1, 1] from its derivative ``u`` on [0, 1]
and its initial state ``psi`` on [-1, 0]."""

from __future__ import annotations

import numpy as np

from .errors import InvalidMesh, PeriodBelowDelay
from .mesh import (
    Discretization,
    PiecewisePolynomial,
    Side,
    antiderivative,
    prolong,
    restrict,
)
from .problem import StateView


class CandidateSolution:
    """``v = G(u, psi)``: ``psi`` on [-1, 0], ``psi(0) + int_0^t u`` on [0, 1].

    Node arrays may carry trailing axes beyond the state dimension; all
    evaluations return ``shape(t) + (d, *batch)``.
    """

    def __init__(self, disc: Discretization, u_nodes, psi_nodes):
        u_nodes = np.asarray(u_nodes, dtype=float)
        psi_nodes = np.asarray(psi_nodes, dtype=float)
        if u_nodes.shape != psi_nodes.shape:
            raise InvalidMesh(
                f"u and psi node arrays differ in shape: {u_nodes.shape} vs {psi_nodes.shape}"
            )
        if u_nodes.shape[0] != disc.n:
            raise InvalidMesh(
                f"node arrays have {u_nodes.shape[0]} rows, expected 1 + L*m = {disc.n}"
            )
        self.disc = disc
        self.u_nodes = u_nodes
        self.psi_nodes = psi_nodes
        self.u: PiecewisePolynomial = prolong(u_nodes, disc.mesh(Side.PLUS), disc.abscissae)
        self.psi: PiecewisePolynomial = prolong(psi_nodes, disc.mesh(Side.MINUS), disc.abscissae)
        self.psi0 = self.psi(0.0)
        self.v_plus: PiecewisePolynomial = antiderivative(self.u).shifted(self.psi0)

    @property
    def d(self) -> int:
        return self.u_nodes.shape[1]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.v_plus(t) if t >= 0.0 else self.psi(t)
        out = np.empty(t.shape + self.u_nodes.shape[1:])
        plus = t >= 0.0
        if np.any(plus):
            out[plus] = self.v_plus(t[plus])
        if not np.all(plus):
            out[~plus] = self.psi(t[~plus])
        return out

    def derivative(self, t) -> np.ndarray:
        """Right derivative; at ``t = 0`` this is ``u(0)``, never ``psi'(0-)``."""
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.u(t) if t >= 0.0 else self.psi.derivative(t)
        out = np.empty(t.shape + self.u_nodes.shape[1:])
        plus = t >= 0.0
        if np.any(plus):
            out[plus] = self.u(t[plus])
        if not np.all(plus):
            out[~plus] = self.psi.derivative(t[~plus])
        return out


def green_apply(u_nodes, psi_nodes, disc: Discretization) -> CandidateSolution:
    return CandidateSolution(disc, u_nodes, psi_nodes)


def state_view(v: CandidateSolution, t: float, omega: float, tau: float) -> StateView:
    """``sigma -> v(t + sigma/omega)`` on ``[-tau, 0]``."""
    if omega < tau:
        raise PeriodBelowDelay(f"period {omega} is below the maximum delay {tau}")
    return StateView(lambda s: v(t + s / omega), tau, v.d)


def final_state(v: CandidateSolution) -> np.ndarray:
    """Minus-mesh node values of ``theta -> v(1 + theta)``.

    The minus nodes shifted by one are exactly the plus nodes, so ``v`` is
    sampled there directly.
    """
    return v.v_plus(v.disc.nodes(Side.PLUS))


def from_functions(y, dy, disc: Discretization) -> CandidateSolution:
    """Build the candidate whose nodes sample ``dy`` on [0,1] and ``y`` on [-1,0]."""
    u = restrict(dy, disc.mesh(Side.PLUS), disc.abscissae)
    psi = restrict(y, disc.mesh(Side.MINUS), disc.abscissae)
    return CandidateSolution(disc, u, psi)
