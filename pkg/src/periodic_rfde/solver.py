"""Discrete fixed-point system, Jacobians, damped Newton and natural continuation.

Unknowns are flattened as ``[u (n*d), psi (n*d), omega]`` with node-major
ordering inside each block. The residual has the same layout: collocation
rows on the plus nodes (including ``t = 0``), periodicity rows on the minus
nodes, and one phase row.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from .errors import (
    InvalidMesh,
    NoConvergence,
    PeriodBelowDelay,
    RFDEError,
    SingularJacobian,
)
from .greens import CandidateSolution, final_state, green_apply, state_view
from .mesh import Discretization, Family, Side, inner_abscissae, restrict
from .problem import DiscretizedRhs, RFDEProblem, StateView, discretize_rhs, period_guard

log = logging.getLogger(__name__)

OMEGA_GUARD = 1.01
ZERO_AMPLITUDE = 1e-6
# continuation also flags an amplitude drop by this factor within one step
COLLAPSE = 1e-4


@dataclass
class DiscreteUnknowns:
    u: np.ndarray  # (n, d)
    psi: np.ndarray  # (n, d)
    omega: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.u.ravel(), self.psi.ravel(), [self.omega]))

    @classmethod
    def from_vector(cls, x, n: int, d: int) -> "DiscreteUnknowns":
        x = np.asarray(x, dtype=float)
        if x.shape != (2 * n * d + 1,):
            raise InvalidMesh(f"unknown vector has shape {x.shape}, expected ({2 * n * d + 1},)")
        nd = n * d
        return cls(x[:nd].reshape(n, d).copy(), x[nd : 2 * nd].reshape(n, d).copy(), float(x[-1]))


@dataclass(frozen=True)
class TrivialPhase:
    """``v_k(0) = level`` with 1-based component ``k``."""

    component: int = 1
    level: float = 0.0


@dataclass(frozen=True)
class IntegralPhase:
    """``int_0^1 v(t)^T ref'(t) dt = 0``."""

    reference: CandidateSolution


PhaseCondition = Union[TrivialPhase, IntegralPhase]


def _phase_linear(phase: PhaseCondition, v: CandidateSolution) -> np.ndarray:
    if isinstance(phase, TrivialPhase):
        if not 1 <= phase.component <= v.d:
            raise ValueError(f"phase component {phase.component} outside 1..{v.d}")
        return v.psi0[phase.component - 1]
    disc = v.disc
    # m+2 Gauss points per interval integrate degree 2m+3 exactly
    x, w = np.polynomial.legendre.leggauss(disc.m + 2)
    h = disc.h
    t = (np.arange(disc.L)[:, None] * h + 0.5 * h * (x + 1.0)[None, :]).ravel()
    wq = np.tile(0.5 * h * w, disc.L)
    ref_dot = phase.reference.derivative(t)  # (Q, d)
    vals = v(t)  # (Q, d, *batch)
    return np.tensordot(wq[:, None] * ref_dot, vals, axes=([0, 1], [0, 1]))


def phase_eval(phase: PhaseCondition, v: CandidateSolution) -> float:
    val = _phase_linear(phase, v)
    if isinstance(phase, TrivialPhase):
        val = val - phase.level
    return float(val)


class JacobianMode(enum.Enum):
    FINITE_DIFFERENCE = "fd"
    ANALYTIC = "analytic"


class CollocationSystem:
    """Residual and Jacobian of ``x - Phi_{L,M}(x)`` (phase row in residual form)."""

    def __init__(self, rhs: DiscretizedRhs, disc: Discretization, phase: PhaseCondition):
        self.rhs = rhs
        self.disc = disc
        self.phase = phase
        self.d = rhs.d
        self.tau = rhs.tau
        self.n = disc.n
        self.size = 2 * self.n * self.d + 1
        self.plus_nodes = disc.nodes(Side.PLUS)
        self._basis: Optional[CandidateSolution] = None

    def unpack(self, x) -> DiscreteUnknowns:
        return DiscreteUnknowns.from_vector(x, self.n, self.d)

    def candidate(self, x) -> CandidateSolution:
        xu = self.unpack(x)
        return green_apply(xu.u, xu.psi, self.disc)

    @property
    def basis(self) -> CandidateSolution:
        """Candidate whose batch axis runs over all (u, psi) coordinates."""
        if self._basis is None:
            n, d = self.n, self.d
            nd = n * d
            eye = np.eye(2 * nd)
            bu = eye[:nd].reshape(n, d, 2 * nd)
            bpsi = eye[nd:].reshape(n, d, 2 * nd)
            self._basis = green_apply(bu, bpsi, self.disc)
        return self._basis

    def _check_omega(self, omega: float) -> None:
        if omega < self.tau:
            raise PeriodBelowDelay(f"period {omega} is below the maximum delay {self.tau}")

    def residual(self, x) -> np.ndarray:
        xu = self.unpack(x)
        self._check_omega(xu.omega)
        v = green_apply(xu.u, xu.psi, self.disc)
        omega = xu.omega
        G = np.array(
            [self.rhs(state_view(v, t, omega, self.tau)) for t in self.plus_nodes]
        )
        res_u = xu.u - omega * G
        res_a = xu.psi - final_state(v)
        return np.concatenate((res_u.ravel(), res_a.ravel(), [phase_eval(self.phase, v)]))

    def jacobian(self, x, mode: JacobianMode | str = JacobianMode.ANALYTIC) -> np.ndarray:
        mode = JacobianMode(mode)
        if mode is JacobianMode.FINITE_DIFFERENCE:
            return self._jacobian_fd(x)
        return self._jacobian_analytic(x)

    def _jacobian_fd(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = np.empty((self.size, self.size))
        for j in range(self.size):
            step = 1e-7 * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += step
            if j == self.size - 1:
                # omega enters through s_omega; the derivative is one-sided (from the right)
                J[:, j] = (self.residual(xp) - self.residual(x)) / step
            else:
                xm = x.copy()
                xm[j] -= step
                J[:, j] = (self.residual(xp) - self.residual(xm)) / (2 * step)
        return J

    def _jacobian_analytic(self, x) -> np.ndarray:
        xu = self.unpack(x)
        self._check_omega(xu.omega)
        omega, tau, d, n = xu.omega, self.tau, self.d, self.n
        nd = n * d
        v = green_apply(xu.u, xu.psi, self.disc)
        B = self.basis
        J = np.zeros((self.size, self.size))
        J[:nd, :nd] = np.eye(nd)
        J[nd : 2 * nd, nd : 2 * nd] = np.eye(nd)
        for k, t in enumerate(self.plus_nodes):
            rows = slice(k * d, (k + 1) * d)
            state = state_view(v, t, omega, tau)
            dirs = state_view(B, t, omega, tau)
            J[rows, : 2 * nd] -= omega * self.rhs.directional(state, dirs)
            # d/d omega of omega*G(v(t + sigma/omega)) = G - DG[sigma -> v'(t+sigma/omega) sigma/omega]
            shift = StateView(lambda s, t=t: v.derivative(t + s / omega) * _col(s / omega), tau, d)
            J[rows, -1] = -(self.rhs(state) - self.rhs.directional(state, shift))
        J[nd : 2 * nd, : 2 * nd] -= final_state(B).reshape(nd, 2 * nd)
        J[-1, : 2 * nd] = _phase_linear(self.phase, B)
        return J


def _col(s: np.ndarray) -> np.ndarray:
    return s[..., None] if np.ndim(s) else s


def assemble_residual(
    x: DiscreteUnknowns, rhs: DiscretizedRhs, phase: PhaseCondition, disc: Discretization
) -> np.ndarray:
    return CollocationSystem(rhs, disc, phase).residual(x.to_vector())


def assemble_jacobian(
    x: DiscreteUnknowns,
    rhs: DiscretizedRhs,
    phase: PhaseCondition,
    disc: Discretization,
    mode: JacobianMode | str = JacobianMode.ANALYTIC,
) -> np.ndarray:
    return CollocationSystem(rhs, disc, phase).jacobian(x.to_vector(), mode)


@dataclass
class NewtonSettings:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 20
    jacobian: JacobianMode = JacobianMode.ANALYTIC


@dataclass
class SolveReport:
    solution: DiscreteUnknowns
    residual_norm: float
    newton_iterations: int
    converged: bool
    jacobian_condition_estimate: Optional[float] = None
    amplitude: float = float("nan")
    residual_history: list = field(default_factory=list)

    @property
    def near_equilibrium(self) -> bool:
        return self.amplitude < ZERO_AMPLITUDE


def _factorize(J: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(J, check_finite=True)
        except (scipy.linalg.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
            raise SingularJacobian(f"Jacobian factorization failed: {exc}") from exc
    anorm = np.linalg.norm(J, 1)
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or not np.isfinite(rcond) or rcond < 1e-14:
        raise SingularJacobian(
            f"Jacobian is numerically singular (rcond = {rcond:.3e}); the orbit may be "
            "non-hyperbolic or the phase condition may not fix the phase"
        )
    return (lu, piv), 1.0 / rcond


def newton_solve(
    system: CollocationSystem, x0, settings: NewtonSettings | None = None
) -> SolveReport:
    """Damped Newton on ``system.residual`` starting from the flat vector ``x0``.

    Raises :class:`SingularJacobian` or :class:`NoConvergence`; a returned
    report is always converged.
    """
    settings = settings or NewtonSettings()
    x = np.asarray(x0, dtype=float).copy()
    r = system.residual(x)
    norm = float(np.max(np.abs(r)))
    history = [norm]
    cond = None
    it = 0
    omega_min = OMEGA_GUARD * system.tau
    while norm > settings.tol:
        if it >= settings.max_iter:
            raise NoConvergence(
                f"Newton did not converge in {settings.max_iter} iterations "
                f"(residual {norm:.3e})"
            )
        J = system.jacobian(x, settings.jacobian)
        fac, cond = _factorize(J)
        dx = -scipy.linalg.lu_solve(fac, r)
        lam = 1.0
        for _ in range(settings.max_halvings + 1):
            xn = x + lam * dx
            if xn[-1] > omega_min:
                rn = system.residual(xn)
                norm_n = float(np.max(np.abs(rn)))
                if norm_n < norm:
                    break
            lam *= 0.5
        else:
            raise NoConvergence(
                f"line search failed at iteration {it + 1} (residual {norm:.3e})"
            )
        x, r, norm = xn, rn, norm_n
        history.append(norm)
        it += 1
        log.debug("newton it=%d lam=%g residual=%.3e omega=%.12g", it, lam, norm, x[-1])
    v = system.candidate(x)
    grid = np.linspace(0.0, 1.0, 201)
    vals = v(grid)
    amplitude = float(np.max(vals.max(axis=0) - vals.min(axis=0)))
    return SolveReport(
        solution=system.unpack(x),
        residual_norm=norm,
        newton_iterations=it,
        converged=True,
        jacobian_condition_estimate=cond,
        amplitude=amplitude,
        residual_history=history,
    )


def initial_vector(guess: Callable, omega: float, disc: Discretization) -> np.ndarray:
    """Restrict a 1-periodic rescaled-time guess ``t -> (y, y')`` to the nodes."""
    u = restrict(lambda t: guess(t)[1], disc.mesh(Side.PLUS), disc.abscissae)
    psi = restrict(lambda t: guess(t)[0], disc.mesh(Side.MINUS), disc.abscissae)
    return DiscreteUnknowns(u, psi, float(omega)).to_vector()


def _repeat_guess(guess: Callable, k: int) -> Callable:
    if k == 1:
        return guess

    def repeated(t):
        y, dy = guess(k * np.asarray(t, dtype=float))
        return y, k * dy

    return repeated


@dataclass
class PeriodicSolution:
    problem: RFDEProblem
    disc: Discretization
    M: int
    phase: PhaseCondition
    candidate: CandidateSolution
    omega: float
    report: SolveReport


# (amplitude factor, period factor) pairs tried when Newton lands on an equilibrium
RESTARTS = ((1.0, 1.0), (2.0, 1.1), (2.0, 1.25), (1.6, 1.1), (1.6, 1.25))


def _scaled_guess(guess: Callable, factor: float) -> Callable:
    """Stretch the guess's oscillation about its mean by ``factor``."""
    if factor == 1.0:
        return guess
    mean = np.mean(guess(np.linspace(0.0, 1.0, 64, endpoint=False))[0], axis=0)

    def scaled(t):
        y, dy = guess(t)
        return mean + factor * (y - mean), factor * dy

    return scaled


def solve_periodic(
    problem: RFDEProblem,
    L: int,
    m: int,
    M: int = 20,
    guess: Optional[Callable] = None,
    omega0: Optional[float] = None,
    phase: Optional[PhaseCondition] = None,
    family: Family | str = Family.GAUSS_LEGENDRE,
    settings: NewtonSettings | None = None,
    x0: Optional[np.ndarray] = None,
    restarts: bool = True,
) -> PeriodicSolution:
    """End-to-end solve: period guard, ``G_M``, restriction of the guess, Newton.

    ``guess`` maps rescaled time to ``(y, y')``; by default the problem's
    catalog guess and ``omega0`` are used. ``x0`` (a flat unknown vector)
    overrides the guess entirely, e.g. when continuing a branch.

    Equilibria also solve the discrete system. When Newton converges to a
    zero-amplitude solution from a guess, the guess is retried with a larger
    amplitude and a longer period (see ``RESTARTS``); if every attempt ends at
    an equilibrium the last one is returned with ``report.near_equilibrium``
    set, and if none converges the last error is raised.
    """
    disc = Discretization(L, m, inner_abscissae(m, family))
    rhs = discretize_rhs(problem, M)
    if x0 is not None:
        starts = [np.asarray(x0, dtype=float)]
    else:
        guess = guess or problem.guess
        if guess is None:
            raise ValueError(f"problem {problem.name!r} has no default guess; pass one")
        omega_start = omega0 if omega0 is not None else problem.omega0
        omega_start, k = period_guard(problem.tau, omega_start)
        guess = _repeat_guess(guess, k)
        ladder = RESTARTS if restarts else RESTARTS[:1]
        starts = (
            initial_vector(_scaled_guess(guess, a), omega_start * b, disc) for a, b in ladder
        )
    if phase is None:
        # pin the first component at the value the guess has at t = 0
        first = starts[0] if isinstance(starts, list) else None
        if first is None:
            starts = list(starts)
            first = starts[0]
        start = DiscreteUnknowns.from_vector(first, disc.n, problem.d)
        phase = TrivialPhase(1, float(green_apply(start.u, start.psi, disc).psi0[0]))
    system = CollocationSystem(rhs, disc, phase)
    report = None
    error: Optional[RFDEError] = None
    for attempt, xs in enumerate(starts):
        try:
            report = newton_solve(system, xs, settings)
        except (NoConvergence, SingularJacobian, PeriodBelowDelay) as exc:
            error = exc
            continue
        if not report.near_equilibrium:
            break
        log.info("attempt %d converged to an equilibrium; restarting", attempt + 1)
    else:
        if report is None:
            raise error
    candidate = system.candidate(report.solution.to_vector())
    return PeriodicSolution(problem, disc, M, phase, candidate, report.solution.omega, report)


@dataclass
class ContinuationStep:
    value: float
    omega: Optional[float]
    solution: Optional[PeriodicSolution]
    status: str  # "ok", "equilibrium", or the error class name
    message: str = ""


def continue_natural(
    problem: RFDEProblem,
    param: str,
    values,
    L: int,
    m: int,
    M: int = 20,
    settings: NewtonSettings | None = None,
    first_phase: Optional[PhaseCondition] = None,
) -> list[ContinuationStep]:
    """Natural-parameter sweep; each converged step seeds the next one.

    The previous converged orbit is both the Newton guess and the reference
    of an integral phase condition. Failures are recorded, not raised.

    A step is labelled ``"equilibrium"`` when its amplitude is below
    ``ZERO_AMPLITUDE`` or has collapsed by more than ``1/COLLAPSE`` relative
    to the previous step. The second test is needed because the discrete
    integral phase does not vanish exactly on constants, so the equilibrium
    shows up as a nearly constant solution of amplitude ~1e-6.
    """
    steps: list[ContinuationStep] = []
    prev: Optional[PeriodicSolution] = None
    for value in values:
        prob = problem.with_params(**{param: float(value)})
        try:
            if prev is None:
                sol = solve_periodic(prob, L, m, M, phase=first_phase, settings=settings)
            else:
                sol = solve_periodic(
                    prob, L, m, M,
                    phase=IntegralPhase(prev.candidate),
                    settings=settings,
                    x0=prev.report.solution.to_vector(),
                )
        except RFDEError as exc:
            steps.append(ContinuationStep(float(value), None, None, type(exc).__name__, str(exc)))
            continue
        collapsed = prev is not None and sol.report.amplitude < COLLAPSE * prev.report.amplitude
        if sol.report.near_equilibrium or collapsed:
            steps.append(
                ContinuationStep(float(value), sol.omega, sol, "equilibrium",
                                 f"converged to a near-constant solution "
                                 f"(amplitude {sol.report.amplitude:.2e})")
            )
            continue
        steps.append(ContinuationStep(float(value), sol.omega, sol, "ok"))
        prev = sol
    return steps
