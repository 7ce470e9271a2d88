"""Reference machinery independent of the collocation solver.

* a method-of-steps RK4 integrator with cubic Hermite dense output,
* limit-cycle extraction from a long transient via Poincare-section crossings,
* the convergence-study driver comparing collocation solutions against either
  a closed-form orbit or the integrator.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidMesh, NoCycleDetected
from .greens import CandidateSolution
from .problem import DistributedDelay, RFDEProblem, StateView, history_from_guess

log = logging.getLogger(__name__)

# composite Gauss-Legendre used by the integrator for distributed terms
_ORACLE_PANELS = 16
_ORACLE_POINTS = 6


def _oracle_rule(problem: RFDEProblem):
    if not problem.distributed_terms:
        return None
    x, w = np.polynomial.legendre.leggauss(_ORACLE_POINTS)
    rule = []
    for term in problem.delay_descriptor:
        if not isinstance(term, DistributedDelay):
            rule.append(None)
            continue
        edges = np.linspace(term.lower, term.upper, _ORACLE_PANELS + 1)
        half = 0.5 * np.diff(edges)
        nodes = (edges[:-1, None] + half[:, None] * (x + 1.0)).ravel()
        weights = (half[:, None] * w).ravel()
        rule.append((nodes, weights * term.kernel(nodes)))
    return tuple(rule)


class Trajectory:
    """Piecewise cubic Hermite solution on ``[t_start, t_end]`` plus its history."""

    def __init__(self, history: Callable, tau: float, d: int, y0, f0, capacity: int = 1024):
        self.history = history
        self.tau = float(tau)
        self.d = d
        self.t = np.empty(capacity)
        self.y = np.empty((capacity, d))
        self.f = np.empty((capacity, d))
        self.count = 1
        self.t[0] = 0.0
        self.y[0] = y0
        self.f[0] = f0

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[self.count - 1])

    @property
    def times(self) -> np.ndarray:
        return self.t[: self.count]

    @property
    def values(self) -> np.ndarray:
        return self.y[: self.count]

    def append(self, t: float, y, f) -> None:
        if self.count == self.t.size:
            grow = self.t.size
            self.t = np.concatenate((self.t, np.empty(grow)))
            self.y = np.concatenate((self.y, np.empty((grow, self.d))))
            self.f = np.concatenate((self.f, np.empty((grow, self.d))))
        self.t[self.count] = t
        self.y[self.count] = y
        self.f[self.count] = f
        self.count += 1

    def _hermite(self, k: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Cubic Hermite piece ``k`` (between nodes k, k+1) evaluated at ``s``."""
        t0, t1 = self.t[k], self.t[k + 1]
        h = t1 - t0
        x = ((s - t0) / h)[:, None]
        h00 = (1 + 2 * x) * (1 - x) ** 2
        h10 = x * (1 - x) ** 2
        h01 = x * x * (3 - 2 * x)
        h11 = x * x * (x - 1)
        hh = h[:, None]
        return h00 * self.y[k] + h10 * hh * self.f[k] + h01 * self.y[k + 1] + h11 * hh * self.f[k + 1]

    def _eval_scalar(self, s: float) -> np.ndarray:
        """Single lookup for the stepper; extrapolates beyond the last node."""
        if s < self.t[0]:
            return np.asarray(self.history(np.array([s])), dtype=float).reshape(self.d)
        if self.count == 1:
            return self.y[0] + (s - self.t[0]) * self.f[0]
        k = int(np.searchsorted(self.t[: self.count], s, side="right")) - 1
        k = min(max(k, 0), self.count - 2)
        t0 = self.t[k]
        h = self.t[k + 1] - t0
        x = (s - t0) / h
        xm = 1.0 - x
        return (
            ((1 + 2 * x) * xm * xm) * self.y[k]
            + (x * xm * xm * h) * self.f[k]
            + (x * x * (3 - 2 * x)) * self.y[k + 1]
            + (x * x * (x - 1) * h) * self.f[k + 1]
        )

    def _eval(self, s: np.ndarray, extrapolate: bool) -> np.ndarray:
        out = np.empty(s.shape + (self.d,))
        past = s < self.t[0]
        if np.any(past):
            if np.any(s[past] < self.t[0] - self.tau - 1e-12):
                raise DomainError("requested time precedes the supplied history")
            out[past] = np.asarray(self.history(s[past]), dtype=float).reshape(-1, self.d)
        rest = ~past
        if np.any(rest):
            sr = s[rest]
            last = self.t[self.count - 1]
            if not extrapolate and np.any(sr > last + 1e-12):
                raise DomainError(f"requested time beyond the integrated range (t_end = {last})")
            if self.count == 1:
                out[rest] = self.y[0] + (sr - last)[:, None] * self.f[0]
            else:
                k = np.searchsorted(self.t[: self.count], sr, side="right") - 1
                k = np.clip(k, 0, self.count - 2)
                out[rest] = self._hermite(k, sr)
        return out

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = self._eval(np.atleast_1d(t).ravel(), extrapolate=False)
        return out.reshape(t.shape + (self.d,))

    def derivative(self, t) -> np.ndarray:
        """Derivative of the dense output (piecewise quadratic)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.t[0]) or np.any(t > self.t_end + 1e-12):
            raise DomainError("derivative requested outside the integrated range")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.count - 2)
        t0, t1 = self.t[k], self.t[k + 1]
        h = (t1 - t0)[:, None]
        x = ((t - t0)[:, None]) / h
        d00 = 6 * x * x - 6 * x
        d10 = 3 * x * x - 4 * x + 1
        d01 = -d00
        d11 = 3 * x * x - 2 * x
        return (d00 * self.y[k] + d01 * self.y[k + 1]) / h + d10 * self.f[k] + d11 * self.f[k + 1]


class _Stepper:
    def __init__(self, problem: RFDEProblem, traj: Trajectory):
        self.problem = problem
        self.traj = traj
        self.rule = _oracle_rule(problem)

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        traj = self.traj

        def func(sigma):
            if isinstance(sigma, float):
                return y if sigma == 0.0 else traj._eval_scalar(t + sigma)
            sigma = np.asarray(sigma, dtype=float)
            out = traj._eval(t + sigma, extrapolate=True)
            out[sigma == 0.0] = y
            return out

        view = StateView(func, self.problem.tau, self.problem.d,
                         self.problem.delay_descriptor, self.rule)
        return np.asarray(self.problem.rhs(view, self.problem.params), dtype=float)

    def advance(self, t_end: float, dt: float) -> None:
        traj, tau = self.traj, self.traj.tau
        t, y = traj.t_end, traj.y[traj.count - 1].copy()
        f = traj.f[traj.count - 1]
        while t < t_end - 1e-12:
            h = min(dt, t_end - t)
            # land exactly on multiples of tau, where derivative jumps propagate
            nxt = (np.floor(t / tau + 1e-9) + 1.0) * tau
            if t + h > nxt + 1e-12:
                h = nxt - t
            k1 = f
            k2 = self.rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = self.rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = self.rhs(t + h, y + h * k3)
            y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = nxt if abs(t + h - nxt) <= 1e-12 else t + h
            f = self.rhs(t, y)
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
                raise FloatingPointError(f"integration blew up at t = {t}")
            traj.append(t, y, f)


def integrate_method_of_steps(
    problem: RFDEProblem, history: Callable, t_end: float, dt: float
) -> Trajectory:
    """RK4 with dense output; delayed values come from the stored solution.

    ``history`` maps physical times in ``[-tau, 0]`` to ``(len(t), d)``
    arrays. Lookups inside the current step extrapolate the previous Hermite
    piece; the undelayed value uses the stage value itself.
    """
    if not 0 < dt <= problem.tau / 4:
        raise ValueError(f"step {dt} must lie in (0, tau/4] with tau = {problem.tau}")
    check = np.asarray(history(np.array([-problem.tau, 0.0])), dtype=float)
    if check.shape != (2, problem.d) or not np.all(np.isfinite(check)):
        raise DomainError("history must be defined on [-tau, 0] and return (len(t), d) arrays")
    y0 = check[1]
    capacity = int(t_end / dt) + int(t_end / problem.tau) + 16
    traj = Trajectory(history, problem.tau, problem.d, y0, np.zeros(problem.d), capacity)
    stepper = _Stepper(problem, traj)
    traj.f[0] = stepper.rhs(0.0, y0)
    stepper.advance(float(t_end), dt)
    return traj


@dataclass
class ReferenceOrbit:
    period: float
    start: float  # time of the section crossing that starts the profile
    trajectory: Trajectory
    section: tuple[int, float]
    crossings: np.ndarray

    def profile(self, s) -> np.ndarray:
        """``y(start + s)`` for ``s`` in [0, 2 period]."""
        return self.trajectory(self.start + np.asarray(s, dtype=float))

    def profile_derivative(self, s) -> np.ndarray:
        return self.trajectory.derivative(self.start + np.asarray(s, dtype=float))

    def periodicity_defect(self, samples: int = 200) -> float:
        s = np.linspace(0.0, self.period, samples)
        return float(np.max(np.abs(self.profile(s + self.period) - self.profile(s))))


def section_crossings(f: Callable, t: np.ndarray, values: np.ndarray, level: float,
                      tol: float = 1e-10) -> np.ndarray:
    """Upward crossings of ``level`` located on the grid ``t`` and refined by bisection."""
    below = values[:-1] < level
    above = values[1:] >= level
    idx = np.flatnonzero(below & above)
    out = []
    for i in idx:
        a, b = t[i], t[i + 1]
        while b - a > tol:
            mid = 0.5 * (a + b)
            if f(mid) < level:
                a = mid
            else:
                b = mid
        out.append(0.5 * (a + b))
    return np.array(out)


def extract_reference_orbit(
    problem: RFDEProblem,
    history: Optional[Callable] = None,
    t_transient: float = 200.0,
    section: Optional[tuple[int, float]] = None,
    dt: float = 1e-3,
    max_extra: Optional[float] = None,
    rel_tol: float = 1e-6,
) -> ReferenceOrbit:
    """Integrate past the transient and measure the period from 4 section crossings."""
    history = history or history_from_guess(problem)
    comp, level = section or problem.section
    k = comp - 1
    max_extra = max_extra if max_extra is not None else max(40.0 * problem.tau, 0.2 * t_transient)
    traj = integrate_method_of_steps(problem, history, t_transient, dt)
    stepper = _Stepper(problem, traj)
    chunk = 10.0 * problem.tau
    end = t_transient
    while True:
        start_idx = np.searchsorted(traj.times, t_transient)
        times = traj.times[start_idx:]
        vals = traj.values[start_idx:, k]
        cross = section_crossings(lambda s: traj(s)[k], times, vals, level)
        if cross.size >= 4:
            break
        if end - t_transient >= max_extra:
            raise NoCycleDetected(
                f"only {cross.size} upward crossings of y_{comp} = {level} after the transient"
            )
        end += chunk
        stepper.advance(end, dt)
    last = cross[-4:]
    gaps = np.diff(last)
    period = float(np.mean(gaps))
    if np.max(np.abs(gaps - period)) > rel_tol * period:
        raise NoCycleDetected(f"crossing gaps {gaps} are inconsistent; the orbit has not settled")
    # two more periods so the profile and its periodicity can be evaluated
    needed = last[0] + 2.0 * period + 2 * dt
    if traj.t_end < needed:
        stepper.advance(needed, dt)
    return ReferenceOrbit(period, float(last[0]), traj, (comp, level), last)


class ReferenceKind:
    EXACT = "exact"
    ORACLE = "oracle"


@dataclass
class LevelResult:
    L: int
    h: float
    err_v: float
    err_vprime: float
    err_omega: float
    omega: float
    seconds: float
    shift: float = 0.0
    order_est: Optional[float] = None

    @property
    def error(self) -> float:
        return max(self.err_v, self.err_omega)


@dataclass
class ConvergenceReport:
    problem: str
    m: int
    M: int
    reference: str
    reference_period: float
    levels: list[LevelResult] = field(default_factory=list)

    @property
    def orders(self) -> list[float]:
        return [lv.order_est for lv in self.levels[1:]]

    def rows(self) -> list[dict]:
        return [
            {
                "L": lv.L, "h": lv.h, "err_v": lv.err_v, "err_vprime": lv.err_vprime,
                "err_omega": lv.err_omega, "order_est": lv.order_est, "seconds": lv.seconds,
            }
            for lv in self.levels
        ]


def _upward_crossing(v: CandidateSolution, k: int, level: float) -> float:
    # straddle t = 0, where the trivial phase condition usually puts the crossing
    t = np.linspace(-0.5, 0.5, 2001)
    vals = v(t)[:, k]
    cross = section_crossings(lambda s: v(s)[k], t, vals, level, tol=1e-13)
    if cross.size == 0:
        raise NoCycleDetected(f"collocation solution never crosses y_{k + 1} = {level} upward")
    return float(np.mod(cross[np.argmin(np.abs(cross))], 1.0))


def compare_exact(v: CandidateSolution, omega: float, problem: RFDEProblem, samples: int = 2001):
    """Errors against the closed-form orbit on [-1, 1] without any time shift."""
    t = np.linspace(-1.0, 1.0, samples)
    y, dy = problem.exact(problem.exact_period * t)
    err_v = float(np.max(np.abs(v(t) - y)))
    err_dv = float(np.max(np.abs(v.derivative(t) - problem.exact_period * dy)))
    return err_v, err_dv, abs(omega - problem.exact_period), 0.0


def compare_oracle(v: CandidateSolution, omega: float, orbit: ReferenceOrbit, samples: int = 2001):
    """Errors after aligning both orbits at their section crossing.

    The reference is sampled over one of its periods and the collocation
    solution over one of its own, mapped through the same fraction of period.
    """
    comp, level = orbit.section
    tc = _upward_crossing(v, comp - 1, level)
    frac = np.linspace(0.0, 1.0, samples)
    tv = np.mod(tc + frac, 1.0)
    y = orbit.profile(frac * orbit.period)
    dy = orbit.profile_derivative(frac * orbit.period)
    err_v = float(np.max(np.abs(v(tv) - y)))
    err_dv = float(np.max(np.abs(v.derivative(tv) / omega - dy)))
    return err_v, err_dv, abs(omega - orbit.period), tc


def _thread_cap() -> int:
    env = os.environ.get("RFDE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer RFDE_THREADS=%r", env)
    return os.cpu_count() or 1


def run_convergence_study(
    problem: RFDEProblem,
    m: int,
    L_list,
    M: int = 20,
    reference: str = ReferenceKind.EXACT,
    orbit: Optional[ReferenceOrbit] = None,
    oracle_dt: float = 1e-3,
    t_transient: float = 200.0,
    threads: Optional[int] = None,
    solve_kwargs: Optional[dict] = None,
) -> ConvergenceReport:
    """Solve at every ``L`` and estimate ``log2(eps(L)/eps(2L))`` between levels.

    ``eps = max(err_v, err_omega)``. Levels run concurrently on up to
    ``threads`` workers (``RFDE_THREADS`` by default); rows stay ordered by L.
    """
    from .solver import solve_periodic  # local import keeps the oracle standalone

    L_list = [int(L) for L in L_list]
    if not L_list or any(b <= a for a, b in zip(L_list, L_list[1:])) or L_list[0] < 1:
        raise InvalidMesh(f"L values must be positive and strictly increasing, got {L_list}")
    if reference == ReferenceKind.EXACT:
        if problem.exact is None:
            raise ValueError(f"problem {problem.name!r} has no closed-form orbit; use the oracle")
        ref_period = problem.exact_period
    elif reference == ReferenceKind.ORACLE:
        orbit = orbit or extract_reference_orbit(problem, t_transient=t_transient, dt=oracle_dt)
        ref_period = orbit.period
    else:
        raise ValueError(f"unknown reference {reference!r}")
    solve_kwargs = solve_kwargs or {}

    def level(L: int) -> LevelResult:
        t0 = time.perf_counter()
        sol = solve_periodic(problem, L, m, M, **solve_kwargs)
        if reference == ReferenceKind.EXACT:
            ev, edv, ew, shift = compare_exact(sol.candidate, sol.omega, problem)
        else:
            ev, edv, ew, shift = compare_oracle(sol.candidate, sol.omega, orbit)
        return LevelResult(L, 1.0 / L, ev, edv, ew, sol.omega, time.perf_counter() - t0, shift)

    workers = min(len(L_list), threads or _thread_cap())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            levels = list(pool.map(level, L_list))
    else:
        levels = [level(L) for L in L_list]
    for prev, cur in zip(levels, levels[1:]):
        if prev.error > 0 and cur.error > 0:
            cur.order_est = float(np.log(prev.error / cur.error) / np.log(cur.L / prev.L))
    return ConvergenceReport(problem.name, m, M, reference, float(ref_period), levels)
