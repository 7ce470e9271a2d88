"""JSON persistence of computed solutions and CSV report writers."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import SchemaError
from .greens import CandidateSolution, green_apply
from .mesh import Discretization, Family, inner_abscissae

SCHEMA_VERSION = 1


@dataclass
class SolutionFile:
    problem: str
    params: dict
    d: int
    tau: float
    L: int
    m: int
    M: int
    family: str
    abscissae: list
    omega: float
    u: list  # flat, node-major, length (1 + L m) d
    psi: list
    diagnostics: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_solution(cls, sol) -> "SolutionFile":
        """Build from a :class:`~periodic_rfde.solver.PeriodicSolution`."""
        rep = sol.report
        phase = sol.phase
        phase_desc = (
            {"kind": "trivial", "component": phase.component, "level": phase.level}
            if hasattr(phase, "component")
            else {"kind": "integral"}
        )
        return cls(
            problem=sol.problem.name,
            params={k: float(v) for k, v in sol.problem.params.items()},
            d=sol.problem.d,
            tau=float(sol.problem.tau),
            L=sol.disc.L,
            m=sol.disc.m,
            M=sol.M,
            family=sol.disc.abscissae.family.value,
            abscissae=[float(c) for c in sol.disc.abscissae.c],
            omega=float(sol.omega),
            u=[float(x) for x in rep.solution.u.ravel()],
            psi=[float(x) for x in rep.solution.psi.ravel()],
            diagnostics={
                "residual_norm": float(rep.residual_norm),
                "newton_iterations": int(rep.newton_iterations),
                "jacobian_condition_estimate": (
                    None if rep.jacobian_condition_estimate is None
                    else float(rep.jacobian_condition_estimate)
                ),
                "amplitude": float(rep.amplitude),
                "phase": phase_desc,
            },
        )

    def discretization(self) -> Discretization:
        family = Family(self.family)
        if family is Family.CUSTOM:
            absc = inner_abscissae(self.m, family, self.abscissae)
        else:
            absc = inner_abscissae(self.m, family)
            if not np.array_equal(np.asarray(absc.c), np.asarray(self.abscissae)):
                raise SchemaError(f"stored abscissae do not match the {self.family} family")
        return Discretization(self.L, self.m, absc)

    def candidate(self) -> CandidateSolution:
        shape = (1 + self.L * self.m, self.d)
        return green_apply(
            np.reshape(self.u, shape), np.reshape(self.psi, shape), self.discretization()
        )


def save_solution(path, sol: SolutionFile) -> None:
    data = asdict(sol)
    # json writes floats with repr(), the shortest string that round-trips exactly
    text = json.dumps(data, sort_keys=True, indent=1, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_solution(path) -> SolutionFile:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise SchemaError("solution file must contain a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"solution file has schema_version {version!r}; this reader expects {SCHEMA_VERSION}"
        )
    names = set(SolutionFile.__dataclass_fields__)
    missing = names - set(data) - {"diagnostics"}
    if missing:
        raise SchemaError(f"solution file lacks field(s): {', '.join(sorted(missing))}")
    unknown = set(data) - names
    if unknown:
        raise SchemaError(f"solution file has unexpected field(s): {', '.join(sorted(unknown))}")
    sol = SolutionFile(**data)
    try:
        expected = (1 + int(sol.L) * int(sol.m)) * int(sol.d)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"L, m and d must be integers: {exc}") from None
    for name in ("u", "psi"):
        n = len(getattr(sol, name))
        if n != expected:
            raise SchemaError(f"{name} has {n} entries, expected (1 + L m) d = {expected}")
    if len(sol.abscissae) != sol.m:
        raise SchemaError(f"{len(sol.abscissae)} abscissae stored for m = {sol.m}")
    return sol


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


CONVERGENCE_COLUMNS = ("L", "h", "err_v", "err_vprime", "err_omega", "order_est", "seconds")
FLOQUET_COLUMNS = ("re", "im", "modulus")
CONTINUATION_COLUMNS = ("value", "omega", "amplitude", "status")


def write_convergence_csv(path, report) -> None:
    write_csv(path, CONVERGENCE_COLUMNS,
              ([row[c] for c in CONVERGENCE_COLUMNS] for row in report.rows()))


def write_floquet_csv(path, multipliers) -> None:
    mu = np.asarray(multipliers, dtype=complex)
    write_csv(path, FLOQUET_COLUMNS, ((z.real, z.imag, abs(z)) for z in mu))


def write_continuation_csv(path, steps) -> None:
    rows = (
        (s.value, s.omega, s.solution.report.amplitude if s.solution else None, s.status)
        for s in steps
    )
    write_csv(path, CONTINUATION_COLUMNS, rows)


def write_trajectory_csv(path, times, values, d: int, stride: Optional[int] = None) -> None:
    header = ["t"] + [f"y{k + 1}" for k in range(d)]
    idx = range(0, len(times), stride or 1)
    write_csv(path, header, ([times[i], *values[i]] for i in idx))
