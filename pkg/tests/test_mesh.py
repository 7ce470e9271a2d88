import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodic_rfde.errors import DomainError, InvalidMesh
from periodic_rfde.mesh import (
    Discretization,
    Family,
    LagrangeBasis,
    Side,
    antiderivative,
    collocation_nodes,
    inner_abscissae,
    lagrange_weights,
    lebesgue_constants,
    outer_mesh,
    prolong,
    restrict,
)


def interp_error(f, L, m, family="gauss", samples=1000):
    mesh = outer_mesh(L, Side.PLUS)
    absc = inner_abscissae(m, family)
    p = prolong(restrict(f, mesh, absc), mesh, absc)
    t = np.linspace(0.0, 1.0, samples)
    return np.max(np.abs(p(t) - f(t)))


class TestOuterMesh:
    def test_plus_nodes(self):
        np.testing.assert_allclose(outer_mesh(4, Side.PLUS).nodes, [0, 0.25, 0.5, 0.75, 1])

    def test_minus_nodes(self):
        np.testing.assert_allclose(outer_mesh(2, Side.MINUS).nodes, [-1, -0.5, 0])

    def test_single_interval(self):
        mesh = outer_mesh(1, "plus")
        np.testing.assert_allclose(mesh.nodes, [0, 1])
        assert mesh.h == 1.0

    @pytest.mark.parametrize("L", [0, -3, 2.5])
    def test_rejects_bad_L(self, L):
        with pytest.raises(InvalidMesh):
            outer_mesh(L)

    @given(st.integers(1, 200), st.sampled_from(list(Side)))
    def test_uniform(self, L, side):
        mesh = outer_mesh(L, side)
        nodes = mesh.nodes
        assert nodes[0] == mesh.start and abs(nodes[-1] - mesh.end) < 1e-14
        np.testing.assert_allclose(np.diff(nodes), 1.0 / L, rtol=1e-12)


class TestAbscissae:
    def test_gauss_m1(self):
        assert inner_abscissae(1).c == pytest.approx((0.5,))

    def test_gauss_m2(self):
        c = inner_abscissae(2, Family.GAUSS_LEGENDRE).c
        assert c == pytest.approx((0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6), abs=1e-15)
        assert c == pytest.approx((0.21132486, 0.78867513), abs=1e-8)

    def test_chebyshev_m2(self):
        assert inner_abscissae(2, "chebyshev").c == pytest.approx((0.14644661, 0.85355339), abs=1e-8)

    @pytest.mark.parametrize("custom", [[0.0, 0.5], [0.5, 1.0], [0.6, 0.4], [0.3, 0.3]])
    def test_custom_rejected(self, custom):
        with pytest.raises(InvalidMesh):
            inner_abscissae(2, Family.CUSTOM, custom)

    @given(st.integers(1, 12), st.sampled_from(["gauss", "chebyshev"]))
    def test_strictly_interior(self, m, family):
        c = np.array(inner_abscissae(m, family).c)
        assert c[0] > 0 and c[-1] < 1 and np.all(np.diff(c) > 0)


class TestLagrange:
    def test_cardinal(self):
        np.testing.assert_allclose(lagrange_weights([0, 0.5], 0.5), [0, 1])

    def test_midpoint(self):
        np.testing.assert_allclose(lagrange_weights([0, 0.5], 0.25), [0.5, 0.5])

    def test_extrapolation(self):
        np.testing.assert_allclose(lagrange_weights([0, 0.5], 1.0), [-1, 2])

    def test_duplicates(self):
        with pytest.raises(InvalidMesh):
            lagrange_weights([0, 0.5, 0.5], 0.1)

    @given(st.integers(1, 8), st.sampled_from(["gauss", "chebyshev"]))
    @settings(max_examples=30)
    def test_partition_of_unity(self, m, family):
        nodes = inner_abscissae(m, family).with_zero
        t = np.random.default_rng(m).random(1000)
        assert np.max(np.abs(lagrange_weights(nodes, t).sum(axis=-1) - 1)) <= 1e-12

    def test_basis_derivatives_match_fd(self):
        basis = LagrangeBasis(inner_abscissae(3).with_zero)
        s = np.linspace(0.05, 0.95, 7)
        eps = 1e-6
        fd = (basis.values(s + eps) - basis.values(s - eps)) / (2 * eps)
        np.testing.assert_allclose(basis.derivatives(s), fd, atol=1e-7)


class TestLebesgue:
    def test_linear(self):
        lam, dlam = lebesgue_constants([0, 0.5])
        assert lam == pytest.approx(3.0)
        assert dlam == pytest.approx(4.0)

    def test_endpoints(self):
        lam, _ = lebesgue_constants([0, 1])
        assert lam == pytest.approx(1.0)


class TestRestrict:
    def test_constant(self):
        absc = inner_abscissae(3)
        vals = restrict(lambda t: 1.0, outer_mesh(5), absc)
        np.testing.assert_array_equal(vals, np.ones(16))

    def test_identity_L2_m1(self):
        vals = restrict(lambda t: t, outer_mesh(2), inner_abscissae(1))
        np.testing.assert_allclose(vals, [0, 0.25, 0.75])

    def test_square_L1_m2(self):
        absc = inner_abscissae(2)
        vals = restrict(lambda t: t ** 2, outer_mesh(1), absc)
        np.testing.assert_allclose(vals, [0, absc.c[0] ** 2, absc.c[1] ** 2])

    def test_minus_nodes(self):
        nodes = collocation_nodes(outer_mesh(2, Side.MINUS), inner_abscissae(1))
        np.testing.assert_allclose(nodes, [-1, -0.75, -0.25])


class TestProlong:
    @pytest.mark.parametrize("m", [1, 2, 3, 5])
    @pytest.mark.parametrize("side", list(Side))
    def test_reproduces_linear(self, m, side):
        mesh = outer_mesh(7, side)
        absc = inner_abscissae(m)
        p = prolong(restrict(lambda t: t, mesh, absc), mesh, absc)
        t = np.linspace(mesh.start, mesh.end, 301)
        np.testing.assert_allclose(p(t), t, atol=1e-12)
        np.testing.assert_allclose(p.derivative(t), 1.0, atol=1e-10)

    def test_constant(self):
        mesh, absc = outer_mesh(4), inner_abscissae(3)
        p = prolong(restrict(lambda t: 2.5, mesh, absc), mesh, absc)
        t = np.linspace(0, 1, 50)
        np.testing.assert_allclose(p(t), 2.5)
        np.testing.assert_allclose(p.derivative(t), 0.0, atol=1e-12)

    def test_reproduces_nodes_and_is_continuous(self, rng):
        mesh, absc = outer_mesh(6, Side.MINUS), inner_abscissae(3)
        vals = rng.standard_normal((19, 2))
        p = prolong(vals, mesh, absc)
        np.testing.assert_allclose(p(collocation_nodes(mesh, absc)), vals, atol=1e-12)
        inner = mesh.nodes[1:-1]
        left = p(inner - 1e-13)
        right = p(inner)
        np.testing.assert_allclose(left, right, atol=1e-9)

    def test_right_derivative_at_breakpoints(self, rng):
        mesh, absc = outer_mesh(3), inner_abscissae(2)
        p = prolong(rng.standard_normal(7), mesh, absc)
        t = mesh.nodes[1]
        expected = (p(t + 1e-7) - p(t)) / 1e-7
        assert p.derivative(t) == pytest.approx(expected, abs=1e-4)

    def test_domain_error(self):
        mesh, absc = outer_mesh(3), inner_abscissae(2)
        p = prolong(np.zeros(7), mesh, absc)
        with pytest.raises(DomainError):
            p(1.01)
        with pytest.raises(DomainError):
            p(-0.5)

    def test_wrong_length(self):
        with pytest.raises(InvalidMesh):
            prolong(np.zeros(6), outer_mesh(3), inner_abscissae(2))

    def test_interpolation_order_m2(self):
        # cubic decay expected when L doubles from 10 to 20
        f = lambda t: np.sin(2 * np.pi * t)
        ratio = interp_error(f, 10, 2) / interp_error(f, 20, 2)
        assert ratio == pytest.approx(8.0, rel=0.15)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_idempotent_on_piecewise_polynomials(self, m, rng):
        for L in (1, 4, 13):
            mesh, absc = outer_mesh(L), inner_abscissae(m)
            p = prolong(rng.standard_normal(1 + L * m), mesh, absc)
            q = prolong(restrict(p, mesh, absc), mesh, absc)
            t = rng.random(1000)
            assert np.max(np.abs(p(t) - q(t))) <= 1e-10

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_operator_bound(self, m, rng):
        absc = inner_abscissae(m)
        lam, _ = lebesgue_constants(absc.with_zero)
        t = np.linspace(0, 1, 2001)
        worst = 0.0
        for k in range(1000):
            L = int(rng.integers(1, 21))
            mesh = outer_mesh(L)
            knots = np.sort(rng.random(6))
            vals = rng.uniform(-1, 1, 6)
            f = lambda s: np.interp(s, knots, vals)
            scale = np.max(np.abs(f(t)))
            g = lambda s: f(s) / scale
            p = prolong(restrict(g, mesh, absc), mesh, absc)
            worst = max(worst, np.max(np.abs(p(t))))
        assert worst <= lam + 1e-8

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_converges_for_continuous_f(self, m):
        f = lambda t: np.abs(np.sin(3 * t))
        errs = [interp_error(f, L, m) for L in (10, 20, 40, 80)]
        for a, b in zip(errs, errs[1:]):
            assert b <= 1.1 * a


class TestAntiderivative:
    def test_constant(self):
        mesh, absc = outer_mesh(5), inner_abscissae(2)
        q = antiderivative(prolong(np.ones(11), mesh, absc))
        t = np.linspace(0, 1, 33)
        np.testing.assert_allclose(q(t), t, atol=1e-14)

    def test_linear(self):
        mesh, absc = outer_mesh(4), inner_abscissae(1)
        q = antiderivative(prolong(restrict(lambda t: 2 * t, mesh, absc), mesh, absc))
        t = np.linspace(0, 1, 33)
        np.testing.assert_allclose(q(t), t ** 2, atol=1e-14)
        assert q(0.0) == 0.0

    def test_cosine_integral(self):
        mesh, absc = outer_mesh(10), inner_abscissae(3)
        q = antiderivative(prolong(restrict(lambda t: np.cos(2 * np.pi * t), mesh, absc), mesh, absc))
        assert abs(q(1.0)) <= 1e-6

    def test_derivative_recovers_integrand(self, rng):
        mesh, absc = outer_mesh(7), inner_abscissae(3)
        p = prolong(rng.standard_normal((22, 2)), mesh, absc)
        q = antiderivative(p)
        t = rng.random(500)
        np.testing.assert_allclose(q.derivative(t), p(t), atol=1e-10)


def test_discretization_defaults():
    disc = Discretization(5, 3)
    assert disc.n == 16
    assert disc.abscissae.family is Family.GAUSS_LEGENDRE
    assert len(disc.nodes("plus")) == 16
    with pytest.raises(InvalidMesh):
        Discretization(5, 2, inner_abscissae(3))
