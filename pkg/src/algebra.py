"""
Finite-dimensional C*-algebras

A finite-dimensional C*-algebra is a direct sum of full matrix blocks
M_{n_1} ⊕ ... ⊕ M_{n_k}. Self-adjoint elements carry a real coordinate
vector in a fixed orthonormal Hilbert-Schmidt basis per block:

    E_ii                    diagonal units
    (E_ij + E_ji) / √2      symmetric off-diagonal pair   (i < j)
    (-i E_ij + i E_ji) / √2 antisymmetric off-diagonal pair

Every convex computation in the package runs in these coordinates. A state's
density matrix has coordinates in the same basis, so that
φ(a) = coords(ρ_φ) · coords(a).
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AlgebraMismatchError, InputError, InvalidObjectError
from .settings import setting

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of the n×n Hermitian matrices, shape (n², n, n)"""
    basis = np.zeros((n * n, n, n), dtype=complex)
    k = 0
    for i in range(n):
        basis[k, i, i] = 1.0
        k += 1
    for i in range(n):
        for j in range(i + 1, n):
            basis[k, i, j] = basis[k, j, i] = 1.0 / SQRT2
            k += 1
            basis[k, i, j] = -1j / SQRT2
            basis[k, j, i] = 1j / SQRT2
            k += 1
    basis.setflags(write=False)
    return basis


def matrix_to_coords(mat: np.ndarray) -> np.ndarray:
    """Coordinates of a Hermitian matrix (or a stack of them)"""
    mat = np.asarray(mat)
    n = mat.shape[-1]
    basis = hermitian_basis(n)
    if mat.ndim == 2:
        return np.real(np.einsum('kij,ji->k', basis, mat))
    return np.real(np.einsum('kij,bji->bk', basis, mat))


def coords_to_matrix(vec: np.ndarray, n: int) -> np.ndarray:
    """Hermitian matrix (or stack) with the given coordinates"""
    vec = np.asarray(vec, dtype=float)
    basis = hermitian_basis(n)
    if vec.ndim == 1:
        return np.einsum('k,kij->ij', vec, basis)
    return np.einsum('bk,kij->bij', vec, basis)


def _block_label(n: int) -> str:
    return "C" if n == 1 else f"M{n}"


@dataclass(frozen=True)
class FiniteCStarAlgebra:
    """A direct sum of full matrix blocks M_{n_1} ⊕ ... ⊕ M_{n_k}"""

    blocks: Tuple[int, ...]

    def __post_init__(self):
        try:
            blocks = tuple(int(n) for n in self.blocks)
        except (TypeError, ValueError) as e:
            raise InputError(f"Block sizes must be integers: {self.blocks!r}") from e
        if not blocks:
            raise InvalidObjectError("An algebra needs at least one block")
        if any(n < 1 for n in blocks):
            raise InvalidObjectError(f"Block sizes must be positive: {blocks}")
        object.__setattr__(self, 'blocks', blocks)

    @property
    def dim_complex(self) -> int:
        return sum(n * n for n in self.blocks)

    @property
    def real_dim_sa(self) -> int:
        return sum(n * n for n in self.blocks)

    @property
    def unit_size(self) -> int:
        """Size of the block-diagonal matrices representing the algebra"""
        return sum(self.blocks)

    @property
    def is_commutative(self) -> bool:
        return all(n == 1 for n in self.blocks)

    @cached_property
    def coord_slices(self) -> Tuple[slice, ...]:
        slices = []
        start = 0
        for n in self.blocks:
            slices.append(slice(start, start + n * n))
            start += n * n
        return tuple(slices)

    @cached_property
    def unit_coords(self) -> np.ndarray:
        return self.unit().coords

    @property
    def label(self) -> str:
        return "⊕".join(_block_label(n) for n in self.blocks)

    def __str__(self) -> str:
        return self.label

    # -- constructors -------------------------------------------------------

    def element(self, block_data: Sequence) -> 'HermitianElement':
        return HermitianElement(self, tuple(np.asarray(b, dtype=complex) for b in block_data))

    def from_coords(self, x: np.ndarray) -> 'HermitianElement':
        x = np.asarray(x, dtype=float)
        if x.shape != (self.real_dim_sa,):
            raise InputError(f"Expected {self.real_dim_sa} coordinates, got shape {x.shape}")
        blocks = [coords_to_matrix(x[sl], n) for n, sl in zip(self.blocks, self.coord_slices)]
        return HermitianElement(self, tuple(blocks))

    def function(self, values: Sequence[float]) -> 'HermitianElement':
        """The element of a commutative algebra C(X) with the given point values"""
        if not self.is_commutative:
            raise InvalidObjectError(f"{self.label} is not commutative")
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.blocks),):
            raise InputError(f"Expected {len(self.blocks)} point values")
        return self.from_coords(values)

    def scalar(self, t: float) -> 'HermitianElement':
        return self.element([t * np.eye(n) for n in self.blocks])

    def unit(self) -> 'HermitianElement':
        return self.scalar(1.0)

    def zero(self) -> 'HermitianElement':
        return self.scalar(0.0)

    def basis_elements(self) -> List['HermitianElement']:
        return [self.from_coords(e) for e in np.eye(self.real_dim_sa)]

    def trace_state(self) -> 'StateFunctional':
        """The normalized trace"""
        size = float(self.unit_size)
        return StateFunctional(self, tuple(np.eye(n) / size for n in self.blocks))

    def vector_state(self, block: int, v: Sequence[complex]) -> 'StateFunctional':
        v = np.asarray(v, dtype=complex)
        n = self.blocks[block]
        if v.shape != (n,):
            raise InputError(f"Vector for block {block} must have length {n}")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise InvalidObjectError("Vector state needs a nonzero vector")
        v = v / norm
        densities = [np.zeros((m, m), dtype=complex) for m in self.blocks]
        densities[block] = np.outer(v, v.conj())
        return StateFunctional(self, tuple(densities))

    def dirac_state(self, point: int) -> 'StateFunctional':
        """Evaluation at a point of a commutative algebra C(X)"""
        if not self.is_commutative:
            raise InvalidObjectError(f"{self.label} has no Dirac states")
        return self.vector_state(point, [1.0])

    def random_element(self, rng: np.random.Generator, scale: float = 1.0) -> 'HermitianElement':
        blocks = []
        for n in self.blocks:
            z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            blocks.append(scale * (z + z.conj().T) / 2.0)
        return self.element(blocks)

    def random_state(self, rng: np.random.Generator, pure: bool = False) -> 'StateFunctional':
        if pure:
            block = int(rng.integers(len(self.blocks)))
            n = self.blocks[block]
            return self.vector_state(block, rng.normal(size=n) + 1j * rng.normal(size=n))
        weights = rng.dirichlet(np.ones(len(self.blocks)))
        densities = []
        for w, n in zip(weights, self.blocks):
            z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            rho = z @ z.conj().T
            densities.append(w * rho / np.trace(rho).real)
        return StateFunctional(self, tuple(densities))

    def direct_sum(self, *others: 'FiniteCStarAlgebra') -> 'FiniteCStarAlgebra':
        blocks = list(self.blocks)
        for other in others:
            blocks.extend(other.blocks)
        return FiniteCStarAlgebra(tuple(blocks))

    # -- batched spectral helpers ------------------------------------------

    def block_matrices(self, X: np.ndarray) -> List[np.ndarray]:
        """Per block, the stack of matrices for a batch of coordinate rows"""
        X = np.atleast_2d(X)
        return [coords_to_matrix(X[:, sl], n) for n, sl in zip(self.blocks, self.coord_slices)]

    def lambda_max_batch(self, X: np.ndarray) -> np.ndarray:
        """Largest eigenvalue of each coordinate row"""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        best = np.full(X.shape[0], -np.inf)
        for n, sl in zip(self.blocks, self.coord_slices):
            if n == 1:
                vals = X[:, sl.start]
            else:
                vals = np.linalg.eigvalsh(coords_to_matrix(X[:, sl], n))[:, -1]
            best = np.maximum(best, vals)
        return best

    def top_state_coords(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        """λ_max of a coordinate vector and the coordinates of a maximizing pure state"""
        x = np.asarray(x, dtype=float)
        best_val = -np.inf
        best = None
        for block, (n, sl) in enumerate(zip(self.blocks, self.coord_slices)):
            if n == 1:
                val = x[sl.start]
                vec = np.ones(1, dtype=complex)
            else:
                vals, vecs = np.linalg.eigh(coords_to_matrix(x[sl], n))
                val = vals[-1]
                vec = vecs[:, -1]
            if val > best_val:
                best_val = val
                best = (block, vec)
        w = np.zeros(self.real_dim_sa)
        block, vec = best
        w[self.coord_slices[block]] = matrix_to_coords(np.outer(vec, vec.conj()))
        return float(best_val), w

    @cached_property
    def seed_state_coords(self) -> np.ndarray:
        """
        Coordinates of the computational-basis states and the two-level
        superpositions (e_i ± e_j)/√2, (e_i ± i e_j)/√2 of every block
        """
        rows = []
        for n, sl in zip(self.blocks, self.coord_slices):
            vectors = [np.eye(n)[i] for i in range(n)]
            for i in range(n):
                for j in range(i + 1, n):
                    for phase in (1.0, -1.0, 1j, -1j):
                        v = np.zeros(n, dtype=complex)
                        v[i] = 1.0
                        v[j] = phase
                        vectors.append(v / SQRT2)
            for v in vectors:
                w = np.zeros(self.real_dim_sa)
                w[sl] = matrix_to_coords(np.outer(v, np.conj(v)))
                rows.append(w)
        return np.array(rows)


@dataclass(frozen=True, eq=False)
class HermitianElement:
    """A self-adjoint element, stored per block"""

    algebra: FiniteCStarAlgebra
    block_data: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.block_data) != len(self.algebra.blocks):
            raise InputError(
                f"Expected {len(self.algebra.blocks)} blocks, got {len(self.block_data)}"
            )
        tol = setting('tolerances', 'hermitian')
        cleaned = []
        for j, (n, mat) in enumerate(zip(self.algebra.blocks, self.block_data)):
            mat = np.asarray(mat, dtype=complex)
            if mat.shape != (n, n):
                raise InputError(f"Block {j} must be {n}x{n}, got {mat.shape}")
            scale = max(1.0, float(np.max(np.abs(mat))) if mat.size else 1.0)
            if np.max(np.abs(mat - mat.conj().T)) > tol * scale:
                raise InvalidObjectError(f"Block {j} is not Hermitian")
            mat = (mat + mat.conj().T) / 2.0
            mat.setflags(write=False)
            cleaned.append(mat)
        object.__setattr__(self, 'block_data', tuple(cleaned))

    @cached_property
    def coords(self) -> np.ndarray:
        vec = np.concatenate([matrix_to_coords(b) for b in self.block_data])
        vec.setflags(write=False)
        return vec

    def matrix(self) -> np.ndarray:
        """The block-diagonal matrix representing the element"""
        size = self.algebra.unit_size
        out = np.zeros((size, size), dtype=complex)
        pos = 0
        for b in self.block_data:
            n = b.shape[0]
            out[pos:pos + n, pos:pos + n] = b
            pos += n
        return out

    def spectrum(self) -> np.ndarray:
        return np.sort(np.concatenate([np.linalg.eigvalsh(b) for b in self.block_data]))

    def norm(self) -> float:
        return operator_norm(self)

    def is_scalar(self, tol: float = 1e-9) -> bool:
        lo, hi = lambda_extremes(self)
        return hi - lo <= tol and all(
            np.max(np.abs(b - np.diag(np.diag(b)))) <= tol for b in self.block_data
        )

    def _check(self, other: 'HermitianElement'):
        if self.algebra != other.algebra:
            raise AlgebraMismatchError(f"{self.algebra} vs {other.algebra}")

    def __add__(self, other: 'HermitianElement') -> 'HermitianElement':
        self._check(other)
        return HermitianElement(self.algebra, tuple(a + b for a, b in zip(self.block_data, other.block_data)))

    def __sub__(self, other: 'HermitianElement') -> 'HermitianElement':
        self._check(other)
        return HermitianElement(self.algebra, tuple(a - b for a, b in zip(self.block_data, other.block_data)))

    def __mul__(self, t: float) -> 'HermitianElement':
        t = float(t)
        return HermitianElement(self.algebra, tuple(t * a for a in self.block_data))

    __rmul__ = __mul__

    def __truediv__(self, t: float) -> 'HermitianElement':
        return self * (1.0 / float(t))

    def __neg__(self) -> 'HermitianElement':
        return self * -1.0

    def __repr__(self) -> str:
        return f"HermitianElement({self.algebra.label}, coords={np.round(self.coords, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class GeneralElement:
    """An arbitrary element; splits as Re + i·Im with Re, Im self-adjoint"""

    algebra: FiniteCStarAlgebra
    block_data: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.block_data) != len(self.algebra.blocks):
            raise InputError("Block count does not match the algebra")
        blocks = []
        for n, mat in zip(self.algebra.blocks, self.block_data):
            mat = np.asarray(mat, dtype=complex)
            if mat.shape != (n, n):
                raise InputError(f"Block must be {n}x{n}, got {mat.shape}")
            blocks.append(mat)
        object.__setattr__(self, 'block_data', tuple(blocks))

    @property
    def real_part(self) -> HermitianElement:
        return HermitianElement(self.algebra, tuple((b + b.conj().T) / 2.0 for b in self.block_data))

    @property
    def imag_part(self) -> HermitianElement:
        return HermitianElement(self.algebra, tuple((b - b.conj().T) / 2j for b in self.block_data))

    def adjoint(self) -> 'GeneralElement':
        return GeneralElement(self.algebra, tuple(b.conj().T for b in self.block_data))

    def norm(self) -> float:
        return max(float(np.linalg.norm(b, 2)) for b in self.block_data)


@dataclass(frozen=True, eq=False)
class StateFunctional:
    """A state, given by a block-weighted density matrix"""

    algebra: FiniteCStarAlgebra
    block_densities: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.block_densities) != len(self.algebra.blocks):
            raise InputError("Density block count does not match the algebra")
        pos_tol = setting('tolerances', 'positivity')
        trace_tol = setting('tolerances', 'state_trace')
        herm_tol = setting('tolerances', 'hermitian')
        cleaned = []
        total = 0.0
        for j, (n, rho) in enumerate(zip(self.algebra.blocks, self.block_densities)):
            rho = np.asarray(rho, dtype=complex)
            if rho.shape != (n, n):
                raise InputError(f"Density block {j} must be {n}x{n}")
            if np.max(np.abs(rho - rho.conj().T)) > herm_tol * max(1.0, float(np.max(np.abs(rho)))):
                raise InvalidObjectError(f"Density block {j} is not Hermitian")
            rho = (rho + rho.conj().T) / 2.0
            if np.linalg.eigvalsh(rho)[0] < -pos_tol:
                raise InvalidObjectError(f"Density block {j} is not positive semidefinite")
            total += float(np.trace(rho).real)
            rho.setflags(write=False)
            cleaned.append(rho)
        if abs(total - 1.0) > trace_tol:
            raise InvalidObjectError(f"Densities have total trace {total}, expected 1")
        object.__setattr__(self, 'block_densities', tuple(cleaned))

    @cached_property
    def coords(self) -> np.ndarray:
        vec = np.concatenate([matrix_to_coords(r) for r in self.block_densities])
        vec.setflags(write=False)
        return vec

    def __call__(self, a: HermitianElement) -> float:
        return evaluate(self, a)

    def mixture(self, other: 'StateFunctional', t: float) -> 'StateFunctional':
        """(1 − t)·self + t·other"""
        if self.algebra != other.algebra:
            raise AlgebraMismatchError(f"{self.algebra} vs {other.algebra}")
        return StateFunctional(
            self.algebra,
            tuple((1 - t) * a + t * b for a, b in zip(self.block_densities, other.block_densities)),
        )


def _same_algebra(a, b):
    if a.algebra != b.algebra:
        raise AlgebraMismatchError(f"Operands live in {a.algebra} and {b.algebra}")


def product(a: HermitianElement, b: HermitianElement) -> GeneralElement:
    _same_algebra(a, b)
    return GeneralElement(a.algebra, tuple(x @ y for x, y in zip(a.block_data, b.block_data)))


def jordan(a: HermitianElement, b: HermitianElement) -> HermitianElement:
    """The Jordan product (ab + ba)/2"""
    _same_algebra(a, b)
    return HermitianElement(
        a.algebra, tuple((x @ y + y @ x) / 2.0 for x, y in zip(a.block_data, b.block_data))
    )


def lie(a: HermitianElement, b: HermitianElement) -> HermitianElement:
    """The Lie product (ab − ba)/(2i)"""
    _same_algebra(a, b)
    return HermitianElement(
        a.algebra, tuple((x @ y - y @ x) / 2j for x, y in zip(a.block_data, b.block_data))
    )


def lambda_extremes(a: HermitianElement) -> Tuple[float, float]:
    lo, hi = np.inf, -np.inf
    for b in a.block_data:
        vals = np.linalg.eigvalsh(b)
        lo = min(lo, vals[0])
        hi = max(hi, vals[-1])
    return float(lo), float(hi)


def operator_norm(a: HermitianElement) -> float:
    lo, hi = lambda_extremes(a)
    return max(abs(lo), abs(hi))


def evaluate(phi: StateFunctional, a: HermitianElement) -> float:
    """φ(a) = Σ_j tr(ρ_j a_j)"""
    _same_algebra(phi, a)
    value = sum(np.trace(r @ b) for r, b in zip(phi.block_densities, a.block_data))
    return float(np.real(value))


@dataclass(frozen=True, eq=False)
class UnitalEmbedding:
    """
    A unital *-monomorphism of a direct sum into a full matrix algebra M_N:
    every source block j is repeated k_j times along the diagonal (round-robin
    over the blocks), then conjugated by a unitary.
    """

    source: FiniteCStarAlgebra
    target: FiniteCStarAlgebra
    multiplicities: Tuple[int, ...]
    unitary: Optional[np.ndarray] = None

    def __post_init__(self):
        mult = tuple(int(k) for k in self.multiplicities)
        if len(mult) != len(self.source.blocks) or any(k < 1 for k in mult):
            raise InvalidObjectError(f"Invalid multiplicities {mult} for {self.source}")
        if len(self.target.blocks) != 1:
            raise InvalidObjectError("Embeddings target a single full matrix block")
        size = sum(k * n for k, n in zip(mult, self.source.blocks))
        if size != self.target.blocks[0]:
            raise InvalidObjectError(
                f"Multiplicities give size {size}, target is M{self.target.blocks[0]}"
            )
        object.__setattr__(self, 'multiplicities', mult)
        if self.unitary is not None:
            u = np.asarray(self.unitary, dtype=complex)
            if u.shape != (size, size) or not np.allclose(u @ u.conj().T, np.eye(size), atol=1e-10):
                raise InvalidObjectError("Relative position must be a unitary of the target size")
            object.__setattr__(self, 'unitary', u)

    @cached_property
    def layout(self) -> Tuple[int, ...]:
        order = []
        for r in range(max(self.multiplicities)):
            for j, k in enumerate(self.multiplicities):
                if k > r:
                    order.append(j)
        return tuple(order)

    def image_matrix(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        size = self.target.blocks[0]
        out = np.zeros((size, size), dtype=complex)
        pos = 0
        for j in self.layout:
            n = self.source.blocks[j]
            out[pos:pos + n, pos:pos + n] = blocks[j]
            pos += n
        if self.unitary is not None:
            out = self.unitary @ out @ self.unitary.conj().T
        return out

    def __call__(self, a: HermitianElement) -> HermitianElement:
        if a.algebra != self.source:
            raise AlgebraMismatchError(f"Embedding source is {self.source}, got {a.algebra}")
        return self.target.element([self.image_matrix(a.block_data)])

    def apply_general(self, x: GeneralElement) -> GeneralElement:
        if x.algebra != self.source:
            raise AlgebraMismatchError(f"Embedding source is {self.source}, got {x.algebra}")
        return GeneralElement(self.target, (self.image_matrix(x.block_data),))

    @cached_property
    def coordinate_matrix(self) -> np.ndarray:
        """The real-linear map sa(source) -> sa(target) in coordinates"""
        cols = [self(e).coords for e in self.source.basis_elements()]
        return np.array(cols).T


def common_unital_embedding(
    A: FiniteCStarAlgebra,
    B: FiniteCStarAlgebra,
    relative_unitary: Optional[np.ndarray] = None,
) -> Tuple[FiniteCStarAlgebra, UnitalEmbedding, UnitalEmbedding]:
    """
    Embed A and B unitally into M_N with N = (Σ n^A)(Σ n^B)

    A sits as 1_q ⊗ ã; B's copies are interleaved by the permutation
    (c, j) -> (j, c) of the multiplicity grid, which places it as b̃ ⊗ 1_p.
    """
    p, q = A.unit_size, B.unit_size
    size = p * q
    target = FiniteCStarAlgebra((size,))
    rho_a = UnitalEmbedding(A, target, tuple(q for _ in A.blocks))

    perm = np.zeros((size, size))
    for c in range(p):
        for j in range(q):
            perm[j * p + c, c * q + j] = 1.0
    unitary = perm.astype(complex)
    if relative_unitary is not None:
        unitary = np.asarray(relative_unitary, dtype=complex) @ unitary
    rho_b = UnitalEmbedding(B, target, tuple(p for _ in B.blocks), unitary=unitary)
    logger.debug(f"Common embedding of {A} and {B} into M{size}")
    return target, rho_a, rho_b


@dataclass(frozen=True, eq=False)
class Corner:
    """The corner P·A·P of a projection, with its block isometries"""

    source: FiniteCStarAlgebra
    projection: HermitianElement
    algebra: FiniteCStarAlgebra
    isometries: Tuple[Optional[np.ndarray], ...]

    @classmethod
    def from_projection(cls, P: HermitianElement) -> 'Corner':
        tol = setting('tolerances', 'projection')
        for j, b in enumerate(P.block_data):
            if np.max(np.abs(b @ b - b)) > tol:
                raise InvalidObjectError(f"Block {j} of the corner element is not a projection")
        isometries = []
        ranks = []
        for n, b in zip(P.algebra.blocks, P.block_data):
            off_diag = b - np.diag(np.diag(b))
            if np.allclose(b, np.eye(n), atol=1e-9):
                v = np.eye(n, dtype=complex)
            elif np.max(np.abs(off_diag)) <= 1e-9:
                v = np.eye(n, dtype=complex)[:, np.real(np.diag(b)) > 0.5]
            else:
                vals, vecs = np.linalg.eigh(b)
                v = vecs[:, vals > 0.5]
            ranks.append(v.shape[1])
            isometries.append(v if v.shape[1] > 0 else None)
        if not any(ranks):
            raise InvalidObjectError("The zero projection has no corner")
        corner = FiniteCStarAlgebra(tuple(r for r in ranks if r > 0))
        return cls(P.algebra, P, corner, tuple(isometries))

    def compress(self, a: HermitianElement) -> HermitianElement:
        if a.algebra != self.source:
            raise AlgebraMismatchError(f"Corner of {self.source}, got {a.algebra}")
        blocks = [v.conj().T @ b @ v for v, b in zip(self.isometries, a.block_data) if v is not None]
        return self.algebra.element(blocks)

    def embed(self, b: HermitianElement) -> HermitianElement:
        """V·b·V* back in the source algebra, zero off the corner"""
        if b.algebra != self.algebra:
            raise AlgebraMismatchError(f"Corner algebra is {self.algebra}, got {b.algebra}")
        out = []
        k = 0
        for n, v in zip(self.source.blocks, self.isometries):
            if v is None:
                out.append(np.zeros((n, n), dtype=complex))
            else:
                out.append(v @ b.block_data[k] @ v.conj().T)
                k += 1
        return self.source.element(out)


def compress(P: HermitianElement, a: HermitianElement) -> HermitianElement:
    """P·a·P represented in the corner algebra of P"""
    return Corner.from_projection(P).compress(a)


@dataclass(frozen=True, eq=False)
class PositiveUnitalMap:
    """
    A real-linear map sa(source) -> sa(target) given by its coordinate matrix,
    with unital / positive flags verified on construction
    """

    source: FiniteCStarAlgebra
    target: FiniteCStarAlgebra
    matrix: np.ndarray
    unital: bool = False
    positive: bool = False
    label: str = ""

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (self.target.real_dim_sa, self.source.real_dim_sa):
            raise InputError(
                f"Map matrix must be {self.target.real_dim_sa}x{self.source.real_dim_sa}, got {mat.shape}"
            )
        mat.setflags(write=False)
        object.__setattr__(self, 'matrix', mat)

    @classmethod
    def from_matrix(cls, source, target, matrix, label: str = "") -> 'PositiveUnitalMap':
        probe = cls(source, target, matrix, label=label)
        unital, positive = probe.verify_flags()
        return cls(source, target, probe.matrix, unital, positive, label)

    @classmethod
    def from_function(
        cls,
        source: FiniteCStarAlgebra,
        target: FiniteCStarAlgebra,
        fn: Callable[[HermitianElement], HermitianElement],
        label: str = "",
    ) -> 'PositiveUnitalMap':
        cols = [fn(e).coords for e in source.basis_elements()]
        return cls.from_matrix(source, target, np.array(cols).T, label)

    @classmethod
    def identity(cls, A: FiniteCStarAlgebra) -> 'PositiveUnitalMap':
        return cls(A, A, np.eye(A.real_dim_sa), True, True, "id")

    def verify_flags(self, samples: int = 64) -> Tuple[bool, bool]:
        unit_image = self.matrix @ self.source.unit_coords
        unital = bool(np.max(np.abs(unit_image - self.target.unit_coords)) <= 1e-10)

        rng = np.random.default_rng(0)
        probes = [self.source.seed_state_coords]
        for _ in range(samples):
            # random rank-one projections are extreme positive elements
            state = self.source.random_state(rng, pure=True)
            probes.append(state.coords[None, :])
        images = np.vstack(probes) @ self.matrix.T
        tol = setting('tolerances', 'positive_map')
        lowest = -self.target.lambda_max_batch(-images)
        positive = bool(np.min(lowest) >= -tol)
        return unital, positive

    def __call__(self, a: HermitianElement) -> HermitianElement:
        if a.algebra != self.source:
            raise AlgebraMismatchError(f"Map source is {self.source}, got {a.algebra}")
        return self.target.from_coords(self.matrix @ a.coords)

    def unit_image(self) -> HermitianElement:
        return self.target.from_coords(self.matrix @ self.source.unit_coords)

    def compose(self, first: 'PositiveUnitalMap') -> 'PositiveUnitalMap':
        """self ∘ first"""
        if first.target != self.source:
            raise AlgebraMismatchError(f"Cannot compose {first.target} into {self.source}")
        label = f"{self.label}∘{first.label}" if self.label or first.label else ""
        return PositiveUnitalMap.from_matrix(first.source, self.target, self.matrix @ first.matrix, label)

    def scaled(self, t: float) -> 'PositiveUnitalMap':
        return PositiveUnitalMap.from_matrix(self.source, self.target, t * self.matrix, self.label)
