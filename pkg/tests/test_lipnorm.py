import numpy as np
import pytest

from src.algebra import jordan, lie
from src.convexopt import HRepBall, SpectralTerm, VRepBall
from src.errors import AlgebraMismatchError, InvalidObjectError
from src.lipnorm import (
    FiniteMetricSpace,
    LipNorm,
    PermissibleFunction,
    check_permissible,
    diameter,
    lip_from_metric,
    max_lipnorms,
    mk_distance,
    quasi_leibniz_check,
    section_invariance_check,
)

from .conftest import PAULI_Z


@pytest.fixture
def pauli_lip(m2, pauli_ball):
    return LipNorm(m2, pauli_ball, PermissibleFunction.cd(1.0, 0.0), label="pauli")


class TestMetricSpace:
    def test_triangle_violation(self):
        with pytest.raises(InvalidObjectError):
            FiniteMetricSpace.from_matrix([[0, 1, 5], [1, 0, 1], [5, 1, 0]])

    def test_asymmetric(self):
        with pytest.raises(InvalidObjectError):
            FiniteMetricSpace.from_matrix([[0, 1], [2, 0]])

    def test_constructors(self, rng):
        P = FiniteMetricSpace.path(4, 0.5)
        assert P.diameter == pytest.approx(1.5)
        assert P.scaled(2.0).diameter == pytest.approx(3.0)
        R = FiniteMetricSpace.random(5, rng)
        assert R.size == 5
        assert R.algebra.blocks == (1,) * 5


class TestMongeKantorovich:
    def test_same_state(self, pauli_lip, m2):
        tau = m2.trace_state()
        assert mk_distance(pauli_lip, tau, tau) == 0.0

    def test_two_point_space(self):
        L = lip_from_metric(FiniteMetricSpace.path(2))
        A = L.algebra
        assert mk_distance(L, A.dirac_state(0), A.dirac_state(1)) == pytest.approx(1.0)

    def test_bloch_poles(self, pauli_lip, m2):
        up = m2.vector_state(0, [1.0, 0.0])
        down = m2.vector_state(0, [0.0, 1.0])
        assert mk_distance(pauli_lip, up, down) == pytest.approx(2.0)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_recovers_metric_on_points(self, n):
        X = FiniteMetricSpace.random(n, np.random.default_rng(n))
        L = lip_from_metric(X)
        for i in range(n):
            for j in range(n):
                got = mk_distance(L, L.algebra.dirac_state(i), L.algebra.dirac_state(j))
                assert got == pytest.approx(X.dist[i, j], abs=1e-8)

    def test_metric_on_sampled_triples(self, pauli_lip, m2, rng):
        for _ in range(5):
            a, b, c = (m2.random_state(rng) for _ in range(3))
            ab, bc, ac = mk_distance(pauli_lip, a, b), mk_distance(pauli_lip, b, c), mk_distance(pauli_lip, a, c)
            assert ab == pytest.approx(mk_distance(pauli_lip, b, a), abs=1e-12)
            assert ac <= ab + bc + 1e-8

    def test_mismatch(self, pauli_lip, c2):
        with pytest.raises(AlgebraMismatchError):
            mk_distance(pauli_lip, c2.dirac_state(0), c2.dirac_state(1))


class TestDiameter:
    def test_pauli(self, pauli_lip):
        assert diameter(pauli_lip) == pytest.approx(2.0)

    def test_two_points(self):
        assert diameter(lip_from_metric(FiniteMetricSpace.path(2, 2.5))) == pytest.approx(2.5)

    def test_equilateral(self):
        X = FiniteMetricSpace.from_matrix(np.ones((3, 3)) - np.eye(3))
        assert diameter(lip_from_metric(X)) == pytest.approx(1.0)

    def test_single_point(self):
        L = lip_from_metric(FiniteMetricSpace.from_matrix([[0.0]]))
        assert diameter(L) == 0.0

    def test_homogeneity(self, m2, paulis):
        L = LipNorm(m2, VRepBall(m2, [3.0 * p for p in paulis]))
        assert diameter(L) == pytest.approx(6.0)

    def test_dominates_random_state_pairs(self, pauli_lip, m2, rng):
        diam = diameter(pauli_lip)
        for _ in range(100):
            phi, psi = m2.random_state(rng, pure=True), m2.random_state(rng)
            assert mk_distance(pauli_lip, phi, psi) <= diam + 1e-6

    def test_max_with_itself_keeps_diameter(self):
        X = FiniteMetricSpace.random(4, np.random.default_rng(3))
        L = lip_from_metric(X)
        hrep = max_lipnorms(L, L)
        assert diameter(hrep) == pytest.approx(X.diameter, abs=1e-8)


class TestPermissible:
    def test_leibniz(self):
        report = check_permissible(PermissibleFunction.cd(1.0, 0.0), strong=True, sample_count=500)
        assert report.permissible and report.strongly_permissible
        assert report.counterexample is None

    def test_zero_function(self):
        report = check_permissible(PermissibleFunction.custom(lambda *q: 0.0), sample_count=100)
        assert not report.permissible
        assert report.counterexample['check'] == 'lower_bound'

    def test_small_constant(self):
        report = check_permissible(PermissibleFunction.cd(0.5, 0.0), sample_count=100)
        assert not report.permissible
        assert report.counterexample['quadruple'] == [1.0, 1.0, 1.0, 1.0]

    def test_power_family(self):
        p = 2.0
        F = PermissibleFunction.power(p, 2 ** (1 - 1 / p), 1.0)
        assert check_permissible(F, strong=True, sample_count=500).permissible

    def test_non_monotone(self):
        F = PermissibleFunction.custom(lambda x, y, lx, ly: x * ly + y * lx + 10.0 / (1.0 + x))
        assert check_permissible(F, sample_count=500).counterexample['check'] == 'monotone'

    def test_combinations(self):
        F = PermissibleFunction.cd(1.0, 0.0)
        G = PermissibleFunction.cd(2.0, 0.5)
        assert F.pointwise_max(G).constants == (2.0, 0.5)
        assert (F + G).constants == (3.0, 0.5)


class TestQuasiLeibniz:
    def test_lipschitz_seminorm(self):
        X = FiniteMetricSpace.from_matrix([[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]])
        L = lip_from_metric(X)
        cert = quasi_leibniz_check(L, PermissibleFunction.cd(1.0, 0.0))
        assert cert.passed
        assert cert.grade == "generator"

    def test_pauli_ball(self, pauli_lip, m2):
        cert = quasi_leibniz_check(pauli_lip, PermissibleFunction.cd(1.0, 0.0))
        assert cert.passed
        sx = m2.element([np.array([[0, 1], [1, 0]])])
        assert pauli_lip(jordan(sx, sx)) == pytest.approx(0.0, abs=1e-9)

    def test_flattened_octahedron_fails(self, m2, paulis):
        ball = VRepBall(m2, [paulis[0], paulis[1], 0.01 * paulis[2]])
        cert = quasi_leibniz_check(LipNorm(m2, ball), PermissibleFunction.cd(1.0, 0.0))
        assert not cert.passed
        assert cert.counterexample['product'] == 'lie'
        assert cert.worst_ratio > 1.0

    def test_sampled_grade_for_spectral_balls(self, m2):
        w = m2.trace_state().coords
        M = np.eye(4) - np.outer(m2.unit_coords, w)
        L = LipNorm(m2, HRepBall(m2, [SpectralTerm(m2, M, 1.0)]))
        cert = quasi_leibniz_check(L, PermissibleFunction.cd(2.0, 0.0))
        assert cert.grade == "sampled"

    def test_certificate_implies_definition(self, pauli_lip, m2, paulis, rng):
        C, D = 1.0, 0.0
        assert quasi_leibniz_check(pauli_lip, PermissibleFunction.cd(C, D)).passed
        G = np.array([p.coords for p in paulis])
        for _ in range(200):
            a = m2.from_coords((rng.dirichlet(np.ones(3)) * rng.choice([-1, 1], 3)) @ G + rng.normal() * m2.unit_coords)
            b = m2.from_coords((rng.dirichlet(np.ones(3)) * rng.choice([-1, 1], 3)) @ G)
            La, Lb = pauli_lip(a), pauli_lip(b)
            bound = C * (a.norm() * Lb + b.norm() * La) + D * La * Lb
            assert pauli_lip(jordan(a, b)) <= bound + 1e-7
            assert pauli_lip(lie(a, b)) <= bound + 1e-7


class TestMaxLipNorms:
    def test_idempotent(self, pauli_lip, m2, rng):
        both = max_lipnorms(pauli_lip, pauli_lip)
        for _ in range(5):
            x = m2.random_element(rng)
            assert both(x) == pytest.approx(pauli_lip(x), abs=1e-8)

    def test_dominates_each(self, m2, paulis, rng):
        L1 = LipNorm(m2, VRepBall(m2, paulis), PermissibleFunction.cd(1.0, 0.0))
        L2 = LipNorm(m2, VRepBall(m2, [paulis[0] + paulis[1], paulis[1] - paulis[0], 0.5 * paulis[2]]),
                     PermissibleFunction.cd(2.0, 0.5))
        both = max_lipnorms(L1, L2)
        assert both.permissible.constants == (2.0, 0.5)
        for _ in range(5):
            x = m2.random_element(rng)
            assert both(x) >= max(L1(x), L2(x)) - 1e-8
            assert both(x) == pytest.approx(max(L1(x), L2(x)), abs=1e-7)

    def test_mismatch(self, pauli_lip):
        other = lip_from_metric(FiniteMetricSpace.path(2))
        with pytest.raises(AlgebraMismatchError):
            max_lipnorms(pauli_lip, other)


class TestValidation:
    def test_section_invariance(self, pauli_lip, m2, rng):
        state = m2.random_state(rng)
        assert section_invariance_check(pauli_lip, state, samples=10) <= 1e-8

    def test_unbounded_section(self, m2):
        with pytest.raises(InvalidObjectError):
            LipNorm(m2, HRepBall(m2, [])).validate()

    def test_valid(self, pauli_lip):
        assert pauli_lip.validate() is pauli_lip

    def test_bloch_pole_difference(self, m2, pauli_lip):
        z = m2.element([PAULI_Z])
        assert pauli_lip(z) == pytest.approx(1.0)
