import numpy as np
import pytest

from src.algebra import (
    Corner,
    FiniteCStarAlgebra,
    PositiveUnitalMap,
    StateFunctional,
    common_unital_embedding,
    coords_to_matrix,
    evaluate,
    jordan,
    lambda_extremes,
    lie,
    matrix_to_coords,
    operator_norm,
    product,
)
from src.errors import AlgebraMismatchError, InputError, InvalidObjectError

from .conftest import PAULI_X, PAULI_Y, PAULI_Z


class TestAlgebra:
    def test_dimensions(self):
        A = FiniteCStarAlgebra((2, 1, 3))
        assert A.real_dim_sa == 14
        assert A.unit_size == 6
        assert A.label == "M2⊕C⊕M3"
        assert not A.is_commutative
        assert FiniteCStarAlgebra((1, 1)).is_commutative

    def test_invalid_blocks(self):
        with pytest.raises(InvalidObjectError):
            FiniteCStarAlgebra(())
        with pytest.raises(InvalidObjectError):
            FiniteCStarAlgebra((2, 0))
        with pytest.raises(InputError):
            FiniteCStarAlgebra(("two",))

    def test_coordinates_round_trip(self, rng):
        A = FiniteCStarAlgebra((3, 1))
        a = A.random_element(rng)
        b = A.from_coords(a.coords)
        for x, y in zip(a.block_data, b.block_data):
            np.testing.assert_allclose(x, y, atol=1e-12)

    def test_pauli_coordinates(self, paulis):
        sx, sy, sz = paulis
        np.testing.assert_allclose(sz.coords, [1, -1, 0, 0], atol=1e-12)
        np.testing.assert_allclose(sx.coords, [0, 0, np.sqrt(2), 0], atol=1e-12)
        np.testing.assert_allclose(sy.coords, [0, 0, 0, np.sqrt(2)], atol=1e-12)

    def test_basis_is_orthonormal(self):
        for n in (1, 2, 3):
            mats = coords_to_matrix(np.eye(n * n), n)
            gram = np.real(np.einsum('aij,bji->ab', mats, mats))
            np.testing.assert_allclose(gram, np.eye(n * n), atol=1e-12)
            np.testing.assert_allclose(matrix_to_coords(mats), np.eye(n * n), atol=1e-12)

    def test_rejects_non_hermitian(self, m2):
        with pytest.raises(InvalidObjectError):
            m2.element([np.array([[0, 1], [0, 0]])])

    def test_function_needs_commutative(self, m2, c2):
        f = c2.function([1.0, 3.0])
        np.testing.assert_allclose(f.coords, [1.0, 3.0])
        with pytest.raises(InvalidObjectError):
            m2.function([1.0, 2.0])

    def test_mismatch(self, m2, c2):
        with pytest.raises(AlgebraMismatchError):
            m2.unit() + c2.unit()


class TestProducts:
    def test_jordan_and_lie_of_paulis(self, m2, paulis):
        sx, sy, sz = paulis
        np.testing.assert_allclose(jordan(sx, sx).coords, m2.unit().coords, atol=1e-12)
        np.testing.assert_allclose(lie(sx, sy).coords, sz.coords, atol=1e-12)
        assert jordan(sx, sy).norm() < 1e-12

    def test_product_splits(self, paulis):
        sx, sy, _ = paulis
        ab = product(sx, sy)
        np.testing.assert_allclose(ab.real_part.coords, jordan(sx, sy).coords, atol=1e-12)
        np.testing.assert_allclose(ab.imag_part.coords, lie(sx, sy).coords, atol=1e-12)

    def test_norm_and_extremes(self, m2):
        a = m2.element([np.diag([-3.0, 2.0])])
        assert lambda_extremes(a) == pytest.approx((-3.0, 2.0))
        assert operator_norm(a) == pytest.approx(3.0)

    def test_is_scalar(self, m2, paulis):
        assert (2.5 * m2.unit()).is_scalar()
        assert not paulis[0].is_scalar()


class TestStates:
    def test_trace_state(self, m2, paulis):
        tau = m2.trace_state()
        assert tau(m2.unit()) == pytest.approx(1.0)
        for s in paulis:
            assert tau(s) == pytest.approx(0.0)

    def test_evaluation_is_a_dot_product(self, rng):
        A = FiniteCStarAlgebra((2, 1))
        phi = A.random_state(rng)
        a = A.random_element(rng)
        assert evaluate(phi, a) == pytest.approx(float(phi.coords @ a.coords))

    def test_bloch_poles(self, m2, paulis):
        up = m2.vector_state(0, [1.0, 0.0])
        down = m2.vector_state(0, [0.0, 1.0])
        assert up(paulis[2]) - down(paulis[2]) == pytest.approx(2.0)

    def test_invalid_densities(self, m2):
        with pytest.raises(InvalidObjectError):
            StateFunctional(m2, (np.eye(2),))
        with pytest.raises(InvalidObjectError):
            StateFunctional(m2, (np.diag([1.5, -0.5]),))

    def test_dirac_states(self, c2):
        f = c2.function([4.0, -1.0])
        assert c2.dirac_state(1)(f) == pytest.approx(-1.0)

    def test_top_state(self, m2, paulis):
        val, w = m2.top_state_coords(paulis[2].coords)
        assert val == pytest.approx(1.0)
        assert w @ paulis[2].coords == pytest.approx(1.0)

    def test_seed_states(self, m2):
        seeds = m2.seed_state_coords
        assert seeds.shape == (6, 4)
        np.testing.assert_allclose(seeds @ m2.unit_coords, np.ones(6), atol=1e-12)


class TestEmbeddings:
    def test_common_embedding_commutes(self, rng):
        A = FiniteCStarAlgebra((2,))
        B = FiniteCStarAlgebra((1, 1))
        target, rho_a, rho_b = common_unital_embedding(A, B)
        assert target.blocks == (4,)
        a = rho_a(A.random_element(rng)).matrix()
        b = rho_b(B.random_element(rng)).matrix()
        np.testing.assert_allclose(a @ b, b @ a, atol=1e-10)
        np.testing.assert_allclose(rho_a(A.unit()).matrix(), np.eye(4), atol=1e-12)
        np.testing.assert_allclose(rho_b(B.unit()).matrix(), np.eye(4), atol=1e-12)

    def test_embedding_is_isometric(self, rng):
        A = FiniteCStarAlgebra((2, 1))
        target, rho_a, _ = common_unital_embedding(A, FiniteCStarAlgebra((2,)))
        a = A.random_element(rng)
        assert rho_a(a).norm() == pytest.approx(a.norm())

    def test_rejects_non_unitary(self):
        A = FiniteCStarAlgebra((1,))
        with pytest.raises(InvalidObjectError):
            common_unital_embedding(A, A, relative_unitary=np.array([[2.0]]))


class TestCorners:
    def test_diagonal_corner(self, m2, paulis):
        corner = Corner.from_projection(m2.element([np.diag([1.0, 0.0])]))
        assert corner.algebra.blocks == (1,)
        assert corner.compress(paulis[2]).coords[0] == pytest.approx(1.0)
        back = corner.embed(corner.algebra.unit())
        np.testing.assert_allclose(back.block_data[0], np.diag([1.0, 0.0]), atol=1e-12)

    def test_rotated_corner(self, m2, paulis):
        P = m2.element([(np.eye(2) + PAULI_X) / 2.0])
        corner = Corner.from_projection(P)
        assert corner.compress(paulis[0]).coords[0] == pytest.approx(1.0)

    def test_zero_projection(self, m2):
        with pytest.raises(InvalidObjectError):
            Corner.from_projection(m2.zero())

    def test_not_a_projection(self, m2):
        with pytest.raises(InvalidObjectError):
            Corner.from_projection(m2.element([np.diag([2.0, 0.0])]))


class TestPositiveMaps:
    def test_identity(self, m2):
        psi = PositiveUnitalMap.identity(m2)
        assert psi.unital and psi.positive

    def test_transpose_is_positive_unital(self, m2):
        psi = PositiveUnitalMap.from_function(m2, m2, lambda a: m2.element([a.block_data[0].T]))
        assert psi.unital and psi.positive

    def test_negation_is_not_positive(self, m2):
        psi = PositiveUnitalMap.from_function(m2, m2, lambda a: -a)
        assert not psi.unital
        assert not psi.positive

    def test_diagonal_compression(self, m2, c2):
        psi = PositiveUnitalMap.from_function(
            m2, c2, lambda a: c2.function(np.real(np.diag(a.block_data[0])))
        )
        assert psi.unital and psi.positive
        np.testing.assert_allclose(psi(m2.element([PAULI_Z])).coords, [1.0, -1.0], atol=1e-12)
        assert psi(m2.element([PAULI_Y])).norm() < 1e-12

    def test_compose_and_scale(self, m2):
        psi = PositiveUnitalMap.identity(m2)
        half = psi.scaled(0.5)
        assert half.positive and not half.unital
        assert psi.compose(half).matrix[0, 0] == pytest.approx(0.5)
