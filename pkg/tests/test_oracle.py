import numpy as np
import pytest

from periodic_rfde.errors import DomainError, InvalidMesh, NoCycleDetected
from periodic_rfde.oracle import (
    ReferenceKind,
    extract_reference_orbit,
    integrate_method_of_steps,
    run_convergence_study,
    section_crossings,
)
from periodic_rfde.problem import RFDEProblem, linear_problem


def mms_history(problem):
    return lambda s: problem.exact(np.asarray(s, dtype=float))[0]


class TestIntegrator:
    def test_zero_rhs(self):
        problem = RFDEProblem("zero", 2, 1.0, rhs=lambda p, P: np.zeros(2))
        c = np.array([1.5, -0.25])
        traj = integrate_method_of_steps(problem, lambda s: np.tile(c, (len(s), 1)), 5.0, 0.01)
        t = np.linspace(-1, 5, 301)
        np.testing.assert_allclose(traj(t), np.tile(c, (301, 1)), atol=1e-15)

    def test_cosine_solution(self):
        problem = linear_problem(np.array([[-np.pi / 2]]))
        history = lambda s: np.cos(np.pi * np.asarray(s) / 2)[:, None]
        traj = integrate_method_of_steps(problem, history, 8.0, 1e-3)
        t = np.linspace(0, 8, 4001)
        assert np.max(np.abs(traj(t)[:, 0] - np.cos(np.pi * t / 2))) <= 1e-6

    def test_mms_tracks_exact_orbit(self, mms_problem):
        traj = integrate_method_of_steps(mms_problem, mms_history(mms_problem), 10.0, 1e-3)
        t = np.linspace(0, 10, 2001)
        assert np.max(np.abs(traj(t) - mms_problem.exact(t)[0])) <= 1e-5

    def test_lands_on_delay_multiples(self):
        problem = linear_problem(np.array([[-1.0]]))
        traj = integrate_method_of_steps(problem, lambda s: np.ones((len(s), 1)), 3.0, 0.24)
        for k in (1.0, 2.0, 3.0):
            assert np.min(np.abs(traj.times - k)) <= 1e-12

    def test_continuous_dense_output(self, mms_problem):
        traj = integrate_method_of_steps(mms_problem, mms_history(mms_problem), 2.0, 0.01)
        knots = traj.times[1:-1]
        np.testing.assert_allclose(traj(knots - 1e-12), traj(knots + 1e-12), atol=1e-10)

    def test_bad_history(self, mms_problem):
        with pytest.raises(DomainError):
            integrate_method_of_steps(mms_problem, lambda s: np.full((len(s), 2), np.nan), 1.0, 0.01)
        with pytest.raises(DomainError):
            integrate_method_of_steps(mms_problem, lambda s: np.zeros((len(s), 1)), 1.0, 0.01)

    def test_step_too_large(self, mms_problem):
        with pytest.raises(ValueError):
            integrate_method_of_steps(mms_problem, mms_history(mms_problem), 1.0, 0.3)


class TestReferenceOrbit:
    def test_section_crossings(self):
        t = np.linspace(0, 3, 301)
        f = lambda s: np.sin(2 * np.pi * s)
        np.testing.assert_allclose(section_crossings(f, t, f(t), 0.0), [1.0, 2.0], atol=1e-9)

    def test_mms_period(self, mms_problem):
        orbit = extract_reference_orbit(mms_problem, mms_history(mms_problem), t_transient=10.0)
        assert abs(orbit.period - 2.0) <= 1e-6
        assert orbit.periodicity_defect() <= 1e-6

    def test_logistic(self, logistic_orbit):
        assert logistic_orbit.period == pytest.approx(4.40274, abs=1e-4)
        assert logistic_orbit.periodicity_defect() <= 1e-6
        np.testing.assert_allclose(logistic_orbit.profile(0.0), [1.0], atol=1e-9)

    def test_logistic_transient_doubled(self, logistic_problem, logistic_orbit):
        longer = extract_reference_orbit(logistic_problem, t_transient=400.0, dt=1e-3)
        assert abs(longer.period - logistic_orbit.period) < 1e-6

    def test_equilibrium(self, logistic_problem):
        with pytest.raises(NoCycleDetected):
            extract_reference_orbit(logistic_problem, lambda s: np.ones((len(s), 1)),
                                    t_transient=10.0, dt=0.01)

    def test_dt_halving(self, logistic_problem):
        periods = [
            extract_reference_orbit(logistic_problem, t_transient=100.0, dt=dt, rel_tol=1e-5).period
            for dt in (0.1, 0.05, 0.025)
        ]
        ratio = (periods[0] - periods[1]) / (periods[1] - periods[2])
        assert 16 / 1.3 <= ratio <= 16 * 1.3


class TestConvergenceStudy:
    def test_mms_m3_orders(self, mms_problem):
        report = run_convergence_study(mms_problem, 3, [10, 20, 40])
        assert all(2.7 <= q <= 4.2 for q in report.orders)
        assert [lv.L for lv in report.levels] == [10, 20, 40]
        rows = report.rows()
        assert rows[0]["order_est"] is None and rows[1]["h"] == 0.05

    def test_deterministic_across_threads(self, mms_problem):
        a = run_convergence_study(mms_problem, 2, [5, 10], threads=1)
        b = run_convergence_study(mms_problem, 2, [5, 10], threads=2)
        assert [lv.err_v for lv in a.levels] == [lv.err_v for lv in b.levels]

    @pytest.mark.parametrize("L_list", [[10, 10, 20], [20, 10], [], [0, 5]])
    def test_invalid_levels(self, mms_problem, L_list):
        with pytest.raises(InvalidMesh):
            run_convergence_study(mms_problem, 3, L_list)

    def test_exact_needs_closed_form(self, logistic_problem):
        with pytest.raises(ValueError):
            run_convergence_study(logistic_problem, 3, [10], reference=ReferenceKind.EXACT)

    def test_oracle_reference_reports_shift(self, logistic_problem, logistic_orbit):
        report = run_convergence_study(logistic_problem, 3, [20, 40], reference=ReferenceKind.ORACLE,
                                       orbit=logistic_orbit)
        last = report.levels[-1]
        assert last.err_v <= 1e-3
        assert 0.0 <= last.shift < 1.0
        assert report.reference_period == logistic_orbit.period
