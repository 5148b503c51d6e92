import numpy as np
import pytest

from src.algebra import FiniteCStarAlgebra, PositiveUnitalMap
from src.approx import (
    Compression,
    approx_certificate,
    approx_constants,
    approx_lipnorm,
    approx_tunnel,
    ball_points,
    dense_subset_of_ball,
    normalize_unital,
    pseudo_diagonal_witness,
    unitalize,
)
from src.convexopt import VRepBall
from src.errors import InputError, PreconditionError, SpectralGapError
from src.lipnorm import LipNorm, PermissibleFunction, quasi_leibniz_check
from src.settings import config_override
from src.tunnel import length

from .conftest import PAULI_X, PAULI_Y, PAULI_Z

TOL = 1e-6


@pytest.fixture
def pauli_lip(m2, pauli_ball):
    L = LipNorm(m2, pauli_ball, PermissibleFunction.cd(1.0, 0.0), label="pauli")
    return L.certified(quasi_leibniz_check(L, L.permissible))


def thin_pauli(m2, eps):
    """Pauli ball squeezed along σ_x and σ_y so that pinching stays within ε²"""
    delta = 0.9 * eps ** 2
    ball = VRepBall(m2, [m2.element([PAULI_Z]), m2.element([delta * PAULI_X]), m2.element([delta * PAULI_Y])])
    L = LipNorm(m2, ball, PermissibleFunction.cd(1.0, 0.0), label=f"thin[{eps:g}]")
    return L.certified(quasi_leibniz_check(L, L.permissible))


def diagonal_map(source, target, weights):
    return PositiveUnitalMap.from_matrix(source, target, np.diag(weights))


class TestCompression:
    def test_corner_maps_are_unital_and_positive(self):
        A = FiniteCStarAlgebra((2, 2))
        comp = Compression.corner(A.element([np.eye(2), np.zeros((2, 2))]))
        assert comp.target == FiniteCStarAlgebra((2,))
        for m in (comp.psi, comp.phi):
            assert m.unital and m.positive

    def test_pinch(self, m2):
        comp = Compression.pinch(m2)
        assert comp.target == FiniteCStarAlgebra((1, 1))
        a = m2.element([np.array([[0.3, 0.5], [0.5, -0.7]])])
        np.testing.assert_allclose(comp.psi(a).coords, [0.3, -0.7])
        np.testing.assert_allclose(comp.phi(comp.psi(a)).block_data[0], np.diag([0.3, -0.7]), atol=1e-12)

    def test_candidates_are_proper_and_sorted(self):
        A = FiniteCStarAlgebra((1, 2))
        cands = Compression.candidates(A)
        dims = [c.target.dim_complex for c in cands]
        assert dims == sorted(dims)
        assert all(d < A.dim_complex for d in dims)
        assert "pinch" in {c.label for c in cands}

    def test_commutative_has_no_pinch(self):
        assert all(c.kind == "corner" for c in Compression.candidates(FiniteCStarAlgebra((1, 1, 1))))


class TestPseudoDiagonalWitness:
    def test_identity(self, m2, paulis):
        w = pseudo_diagonal_witness(m2, paulis, 0.01)
        for d in w.deviations.values():
            assert d['value'] == pytest.approx(0.0, abs=1e-12)
        assert w.passed

    def test_commutative_corner_is_multiplicative(self):
        A = FiniteCStarAlgebra((1, 1, 1))
        comp = Compression.corner(A.function([1.0, 1.0, 0.0]))
        F = [A.function(e) for e in np.eye(3)]
        w = pseudo_diagonal_witness(A, F, 0.1, comp)
        assert w.target == FiniteCStarAlgebra((1, 1))
        assert w.deviations['jordan']['value'] == pytest.approx(0.0, abs=1e-12)
        assert w.deviations['lie']['value'] == pytest.approx(0.0, abs=1e-12)

    def test_block_corner_matches_matrix_arithmetic(self, rng):
        A = FiniteCStarAlgebra((2, 2))
        comp = Compression.corner(A.element([np.eye(2), np.zeros((2, 2))]))
        F = [A.random_element(rng) for _ in range(6)]
        w = pseudo_diagonal_witness(A, F, 0.1, comp)

        def inverse_gap(a):
            a1, a2 = a.block_data
            return np.linalg.norm(a2 - np.trace(a1).real / 2.0 * np.eye(2), 2)

        assert w.deviations['inverse']['value'] == pytest.approx(max(inverse_gap(a) for a in F), rel=1e-9)
        assert w.deviations['jordan']['value'] == pytest.approx(0.0, abs=1e-9)
        assert w.deviations['lie']['value'] == pytest.approx(0.0, abs=1e-9)

    def test_failure_is_reported_not_raised(self, m2, paulis):
        w = pseudo_diagonal_witness(m2, paulis, 0.1, Compression.pinch(m2))
        assert not w.passed
        assert w.deviations['jordan']['value'] == pytest.approx(1.0)
        assert w.to_dict()['passed'] is False

    def test_foreign_elements(self, m2, c2):
        with pytest.raises(InputError):
            pseudo_diagonal_witness(m2, [c2.unit()], 0.1)


class TestNormalizeUnital:
    def test_unital_is_unchanged(self, m2):
        ident = PositiveUnitalMap.identity(m2)
        out, _ = normalize_unital(ident)
        assert out is ident

    def test_scalar_multiple(self, m2):
        out, _ = normalize_unital(PositiveUnitalMap.identity(m2).scaled(0.5))
        np.testing.assert_allclose(out.matrix, np.eye(4), atol=1e-10)

    def test_diagonal_unit_image(self, c2, rng):
        psi = diagonal_map(c2, c2, [0.9, 0.8])
        phi = diagonal_map(c2, c2, [0.7, 0.6])
        out, back = normalize_unital(psi, phi)
        for m in (out, back):
            np.testing.assert_allclose(m.unit_image().coords, [1.0, 1.0], atol=1e-10)
            assert m.unital and m.positive
            for _ in range(100):
                f = c2.function(rng.uniform(0.0, 1.0, size=2))
                assert min(m(f).coords) >= -1e-12

    def test_singular_unit_image(self, c2):
        with pytest.raises(PreconditionError):
            normalize_unital(diagonal_map(c2, c2, [1.0, 0.0]))


class TestUnitalize:
    def test_unital_input_keeps_the_maps(self, c2):
        ident = PositiveUnitalMap.identity(c2)
        res = unitalize(ident, ident, [c2.function([0.5, -0.5])], 0.2)
        assert res.corner.algebra == c2
        np.testing.assert_allclose(res.varsigma.matrix, np.eye(2), atol=1e-12)
        assert res.passed

    def test_spectral_projection(self, m2):
        C = FiniteCStarAlgebra((1,))
        psi = PositiveUnitalMap.from_function(C, m2, lambda t: m2.element([np.diag([1.0, 0.01]) * t.coords[0]]))
        phi = PositiveUnitalMap.from_function(m2, C, lambda b: C.function([b.block_data[0][0, 0].real]))
        res = unitalize(psi, phi, [], 0.2)
        np.testing.assert_allclose(res.projection.block_data[0], np.diag([1.0, 0.0]), atol=1e-12)
        assert res.corner.algebra == FiniteCStarAlgebra((1,))
        assert res.eps_hat == pytest.approx(0.04)
        assert res.passed

    @pytest.mark.parametrize("seed", range(10))
    def test_bounds_on_random_admissible_pairs(self, seed):
        rng = np.random.default_rng(seed)
        A, B = FiniteCStarAlgebra((1, 1)), FiniteCStarAlgebra((1, 1, 1))
        s = rng.uniform(0.0, 0.035)
        psi = PositiveUnitalMap.from_matrix(A, B, np.array([[1.0, 0.0], [0.0, 1.0], [s, 0.0]]))
        phi = PositiveUnitalMap.from_matrix(B, A, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        F = [A.function(rng.uniform(-1.0, 1.0, size=2)) for _ in range(5)]
        res = unitalize(psi, phi, F, 0.2)
        assert res.corner.algebra == A
        for key in ('unit', 'inverse', 'multiplicative'):
            assert res.bounds[key] <= 0.2
        assert res.passed

    def test_gapless_unit_image(self, m2):
        C = FiniteCStarAlgebra((1,))
        psi = PositiveUnitalMap.from_function(C, m2, lambda t: m2.element([np.diag([1.0, 0.5]) * t.coords[0]]))
        phi = PositiveUnitalMap.from_function(m2, C, lambda b: C.function([b.block_data[0][0, 0].real]))
        with pytest.raises(SpectralGapError) as err:
            unitalize(psi, phi, [], 0.2)
        assert err.value.witness['eigenvalue'] == pytest.approx(0.5)

    def test_hypothesis_violation(self, c2):
        C3 = FiniteCStarAlgebra((1, 1, 1))
        psi = PositiveUnitalMap.from_matrix(c2, C3, np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
        phi = PositiveUnitalMap.from_matrix(C3, c2, np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]))
        with pytest.raises(PreconditionError):
            unitalize(psi, phi, [c2.function([1.0, 0.0])], 0.2)

    @pytest.mark.parametrize("eps", [0.0, 0.25, 0.5])
    def test_eps_range(self, c2, eps):
        ident = PositiveUnitalMap.identity(c2)
        with pytest.raises(InputError):
            unitalize(ident, ident, [], eps)


class TestDenseSubset:
    def test_segment_mesh(self, c2, two_point_ball):
        L = LipNorm(c2, two_point_ball)
        dense = dense_subset_of_ball(L, None, 0.25)
        assert len(dense) == 1 + 2 * int(np.ceil(1 / (2 * 0.25)))
        assert dense.certified

    def test_coarse_segment(self, c2, two_point_ball):
        dense = dense_subset_of_ball(LipNorm(c2, two_point_ball), None, 1.0)
        assert len(dense) == 3

    def test_pauli_section(self, pauli_lip):
        dense = dense_subset_of_ball(pauli_lip, None, 0.5)
        assert dense.radius <= 0.5
        assert dense.certified
        for a in dense.elements:
            assert pauli_lip(a) <= 1.0 + 1e-9
            assert a.algebra.trace_state()(a) == pytest.approx(0.0, abs=1e-12)

    def test_point_cap(self, pauli_lip):
        with config_override({'approx': {'max_dense_points': 10}}):
            with pytest.raises(InputError):
                dense_subset_of_ball(pauli_lip, None, 0.05)

    def test_bad_delta(self, pauli_lip):
        with pytest.raises(InputError):
            dense_subset_of_ball(pauli_lip, None, 0.0)


class TestApproxLipNorm:
    def test_constants(self):
        assert approx_constants(1.0, 0.0, 0.1) == pytest.approx((1.2, 0.312))
        assert approx_constants(2.0, 0.5, 0.2) == pytest.approx((2.8, 2.0 * (0.4 + 0.4 + 0.096) + 0.5))

    def test_identity_map_inflates_by_eps(self, pauli_lip, m2, paulis):
        ident = PositiveUnitalMap.identity(m2)
        approx = approx_lipnorm(pauli_lip, ident, 0.1, phi=ident)
        assert approx.verified
        assert approx(paulis[2]) == pytest.approx(1.0 / 1.1, abs=1e-6)
        for p in paulis:
            assert approx(p) <= pauli_lip(p) + 1e-9

    @pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
    def test_pinched_pauli_certificate(self, pauli_lip, m2, eps):
        pinch = Compression.pinch(m2)
        approx = approx_lipnorm(pauli_lip, pinch.psi, eps, phi=pinch.phi, strict=False)
        assert approx.constants == pytest.approx(approx_constants(1.0, 0.0, eps))
        assert approx.permissible.constants == pytest.approx(approx.constants)
        assert approx.lipnorm.certification.passed
        assert not approx.verified

    def test_strict_rejects_with_the_pair(self, pauli_lip, m2):
        pinch = Compression.pinch(m2)
        with pytest.raises(PreconditionError) as err:
            approx_lipnorm(pauli_lip, pinch.psi, 0.1, phi=pinch.phi)
        assert 'jordan' in err.value.witness

    def test_null_space_is_the_unit_line(self, pauli_lip, m2, rng):
        pinch = Compression.pinch(m2)
        approx = approx_lipnorm(pauli_lip, pinch.psi, 0.1, strict=False)
        C2 = approx.algebra
        assert approx(C2.unit()) == pytest.approx(0.0, abs=1e-9)
        for _ in range(5):
            b = C2.function(rng.normal(size=2))
            if abs(b.coords[0] - b.coords[1]) > 1e-3:
                assert approx(b) > 0.0

    def test_ball_monotonicity(self, pauli_lip, m2, rng):
        ident = PositiveUnitalMap.identity(m2)
        wide = approx_lipnorm(pauli_lip, ident, 0.2, phi=ident)
        narrow = approx_lipnorm(pauli_lip, ident, 0.1, phi=ident)
        for _ in range(4):
            b = m2.random_element(rng)
            assert narrow(b) >= wide(b) - 1e-7

    def test_requires_cd_constants(self, m2, pauli_ball):
        L = LipNorm(m2, pauli_ball, PermissibleFunction.power(2.0, 1.0, 0.0))
        with pytest.raises(PreconditionError):
            approx_lipnorm(L, PositiveUnitalMap.identity(m2), 0.1)

    def test_density_of_supplied_set(self, pauli_lip, m2):
        ident = PositiveUnitalMap.identity(m2)
        F = ball_points(pauli_lip)
        with pytest.raises(PreconditionError):
            approx_lipnorm(pauli_lip, ident, 0.1, F=F, phi=ident)


class TestApproxTunnel:
    @pytest.mark.slow
    def test_identity_length(self, pauli_lip, m2):
        ident = PositiveUnitalMap.identity(m2)
        approx = approx_lipnorm(pauli_lip, ident, 0.1, phi=ident)
        tunnel = approx_tunnel(pauli_lip, approx)
        cert = approx_certificate(tunnel, approx)
        assert cert['length'][1] <= 0.13 + TOL
        assert cert['length_within_bound']
        assert cert['depth_zero']
        assert tunnel.prior['extent'] == pytest.approx(2 * 0.13)

    @pytest.mark.slow
    @pytest.mark.parametrize("eps", [0.2, 0.1])
    def test_pinched_thin_pauli(self, m2, eps):
        L = thin_pauli(m2, eps)
        pinch = Compression.pinch(m2)
        approx = approx_lipnorm(L, pinch.psi, eps, phi=pinch.phi)
        assert approx.verified
        tunnel = approx_tunnel(L, approx)
        assert tunnel.lipnorm.permissible.constants == pytest.approx(approx_constants(1.0, 0.0, eps))
        assert tunnel.lipnorm.certification.grade == "structural"
        assert length(tunnel).upper <= eps + 3 * eps ** 2 + TOL
        assert tunnel.metadata['bound_applies']

    @pytest.mark.slow
    def test_unverified_tunnel_has_no_prior(self, pauli_lip, m2):
        pinch = Compression.pinch(m2)
        approx = approx_lipnorm(pauli_lip, pinch.psi, 0.2, phi=pinch.phi, strict=False)
        tunnel = approx_tunnel(pauli_lip, approx)
        assert tunnel.prior == {}
        assert tunnel.lipnorm.certification is None
        cert = approx_certificate(tunnel, approx)
        assert cert['bound_applies'] is False
        assert 0.0 <= cert['length'][0] <= cert['length'][1]

    def test_other_source(self, pauli_lip, m2, paulis):
        ident = PositiveUnitalMap.identity(m2)
        approx = approx_lipnorm(pauli_lip, ident, 0.1, phi=ident)
        other = LipNorm(m2, VRepBall(m2, paulis[:2] + [2.0 * paulis[2]]), PermissibleFunction.cd(1.0, 0.0))
        with pytest.raises(InputError):
            approx_tunnel(other, approx)
