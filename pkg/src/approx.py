"""
Finite-dimensional approximation of quantum metric spaces

A pseudo-diagonal witness is a pair of unital positive maps ψ: A -> B and
φ: B -> A which are approximately inverse and approximately multiplicative on
a finite set. Pushing the Lip-norm ball of A through ψ and thickening it by
an operator-norm ε-ball gives a quasi-Leibniz Lip-norm on B, and the bridge
‖ψ(a) − b‖ / ε joins the two spaces by a tunnel of length at most ε + 3ε².
The module also holds the unitalization corrections that turn positive
contractions into unital maps.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay, cKDTree
from scipy.special import comb

from .algebra import (
    Corner,
    FiniteCStarAlgebra,
    GeneralElement,
    HermitianElement,
    PositiveUnitalMap,
    StateFunctional,
    jordan,
    lie,
    product,
)
from .convexopt import ImageBall, _unique_rows, section_polytope
from .errors import InputError, InvalidObjectError, PreconditionError, SpectralGapError
from .lipnorm import Certification, LipNorm, PermissibleFunction, quasi_leibniz_check
from .settings import setting
from .tunnel import Tunnel, depth, factor_generators, length, map_tunnel, reach

logger = logging.getLogger(__name__)


def _max_norm(elements: Sequence[HermitianElement]) -> float:
    return max((x.norm() for x in elements), default=0.0)


def ball_points(L: LipNorm) -> List[HermitianElement]:
    """Extreme points of the section of the Lip-norm ball, as elements"""
    return [L.algebra.from_coords(g) for g in factor_generators(L.ball)]


# ---------------------------------------------------------------------------
# Compressions and pseudo-diagonal witnesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Compression:
    """A unital positive map ψ: A -> B with a unital positive way back φ: B -> A"""

    kind: str
    source: FiniteCStarAlgebra
    target: FiniteCStarAlgebra
    psi: PositiveUnitalMap
    phi: PositiveUnitalMap
    label: str
    projection: Optional[HermitianElement] = None

    @classmethod
    def identity(cls, A: FiniteCStarAlgebra) -> 'Compression':
        ident = PositiveUnitalMap.identity(A)
        return cls("identity", A, A, ident, ident, "identity")

    @classmethod
    def corner(cls, P: HermitianElement, label: str = "") -> 'Compression':
        """
        ψ(a) = PaP in the corner algebra and φ(b) = b + τ(b)·(1 − P) with τ the
        trace state of the corner
        """
        A = P.algebra
        corner = Corner.from_projection(P)
        B = corner.algebra
        tau = B.trace_state()
        complement = A.unit() - P
        psi = PositiveUnitalMap.from_function(A, B, corner.compress, f"P·P[{B.label}]")
        phi = PositiveUnitalMap.from_function(B, A, lambda b: corner.embed(b) + complement * tau(b),
                                              f"ι[{B.label}]")
        return cls("corner", A, B, psi, phi, label or f"corner[{B.label}]", P)

    @classmethod
    def pinch(cls, A: FiniteCStarAlgebra) -> 'Compression':
        """Diagonal entries: A -> C^N and back as diagonal matrices"""
        B = FiniteCStarAlgebra((1,) * A.unit_size)
        offsets = np.cumsum((0,) + A.blocks)

        def down(a: HermitianElement) -> HermitianElement:
            return B.function(np.concatenate([np.real(np.diag(b)) for b in a.block_data]))

        def up(f: HermitianElement) -> HermitianElement:
            values = f.coords
            return A.element([np.diag(values[offsets[j]:offsets[j + 1]]) for j in range(len(A.blocks))])

        psi = PositiveUnitalMap.from_function(A, B, down, "diag")
        phi = PositiveUnitalMap.from_function(B, A, up, "diag*")
        return cls("pinch", A, B, psi, phi, f"pinch[{B.label}]")

    @classmethod
    def candidates(cls, A: FiniteCStarAlgebra) -> List['Compression']:
        """Proper compressions of A by increasing target dimension"""
        out: Dict[str, Compression] = {}
        k = len(A.blocks)
        if 1 < k <= 4:
            for size in range(1, k):
                for keep in itertools.combinations(range(k), size):
                    P = A.element([np.eye(n) if j in keep else np.zeros((n, n)) for j, n in enumerate(A.blocks)])
                    label = f"corner[blocks {','.join(map(str, keep))}]"
                    out[label] = cls.corner(P, label)
        for j, n in enumerate(A.blocks):
            for rank in range(1, n):
                blocks = [np.eye(m) for m in A.blocks]
                blocks[j] = np.diag([1.0] * rank + [0.0] * (n - rank))
                label = f"corner[block {j}, rank {rank}]"
                out[label] = cls.corner(A.element(blocks), label)
        if not A.is_commutative:
            out["pinch"] = cls.pinch(A)
        return sorted(out.values(), key=lambda c: (c.target.dim_complex, c.label))


def _general_image(psi: PositiveUnitalMap, x: GeneralElement) -> GeneralElement:
    """ψ extended complex-linearly"""
    re, im = psi(x.real_part), psi(x.imag_part)
    return GeneralElement(psi.target, tuple(r + 1j * i for r, i in zip(re.block_data, im.block_data)))


def _gap(x: HermitianElement, y: HermitianElement) -> float:
    return (x - y).norm()


def map_deviations(psi: PositiveUnitalMap, phi: Optional[PositiveUnitalMap],
                   F: Sequence[HermitianElement]) -> Dict[str, Dict]:
    """
    Worst ‖a − φψ(a)‖ over F and worst Jordan / Lie deviations of ψ over pairs of F

    Each entry is {'value', 'witness'} with the indices of the worst element
    or pair; the inverse entry is None without φ.
    """
    out: Dict[str, Dict] = {}
    if phi is not None:
        gaps = [_gap(a, phi(psi(a))) for a in F]
        k = int(np.argmax(gaps)) if gaps else None
        out['inverse'] = {'value': float(gaps[k]) if gaps else 0.0, 'witness': [k] if gaps else []}
    else:
        out['inverse'] = None
    images = [psi(a) for a in F]
    for name, prod in (('jordan', jordan), ('lie', lie)):
        worst, witness = 0.0, []
        for i in range(len(F)):
            for j in range(i, len(F)):
                value = _gap(psi(prod(F[i], F[j])), prod(images[i], images[j]))
                if value > worst:
                    worst, witness = value, [i, j]
        out[name] = {'value': float(worst), 'witness': witness}
    return out


@dataclass
class PseudoDiagonalWitness:
    """Maps ψ: A -> B and φ: B -> A with their measured deviations on F"""

    F: List[HermitianElement]
    eps: float
    compression: Compression
    psi: PositiveUnitalMap
    phi: PositiveUnitalMap
    deviations: Dict[str, Dict]

    @property
    def target(self) -> FiniteCStarAlgebra:
        return self.psi.target

    @property
    def passed(self) -> bool:
        tol = 1e-9
        return all(d is not None and d['value'] <= self.eps + tol for d in self.deviations.values())

    def to_dict(self) -> Dict:
        return {
            'compression': self.compression.label,
            'target': self.target.label,
            'epsilon': self.eps,
            'set_size': len(self.F),
            'deviations': self.deviations,
            'passed': self.passed,
        }


def pseudo_diagonal_witness(A: FiniteCStarAlgebra, F: Sequence[HermitianElement], eps: float,
                            compression: Optional[Compression] = None) -> PseudoDiagonalWitness:
    """
    Measure how well a compression of A inverts and multiplies on F

    The verdict is part of the record; nothing is raised when the deviations
    exceed ε.
    """
    if eps <= 0:
        raise InputError(f"ε must be positive, got {eps}")
    compression = compression or Compression.identity(A)
    if compression.source != A:
        raise InputError(f"Compression starts at {compression.source}, not {A}")
    for a in F:
        if a.algebra != A:
            raise InputError(f"Element of {a.algebra} in a set for {A}")
    psi, _ = normalize_unital(compression.psi)
    deviations = map_deviations(psi, compression.phi, list(F))
    witness = PseudoDiagonalWitness(list(F), eps, compression, psi, compression.phi, deviations)
    marker = "✓" if witness.passed else "✗"
    logger.info(f"{marker} {compression.label}: inverse {deviations['inverse']['value']:.3e}, "
                f"jordan {deviations['jordan']['value']:.3e}, lie {deviations['lie']['value']:.3e} (ε = {eps:g})")
    return witness


# ---------------------------------------------------------------------------
# Unital corrections
# ---------------------------------------------------------------------------


def _block_function(x: HermitianElement, fn) -> HermitianElement:
    """fn applied to the spectrum of every block"""
    blocks = []
    for b in x.block_data:
        vals, vecs = np.linalg.eigh(b)
        blocks.append((vecs * fn(vals)) @ vecs.conj().T)
    return x.algebra.element(blocks)


def _conjugated(x: HermitianElement, s: HermitianElement) -> HermitianElement:
    return x.algebra.element([m @ b @ m for m, b in zip(s.block_data, x.block_data)])


def normalize_unital(psi: PositiveUnitalMap, phi: Optional[PositiveUnitalMap] = None
                     ) -> Tuple[PositiveUnitalMap, Optional[PositiveUnitalMap]]:
    """ψ(1)^{-1/2} ψ(·) ψ(1)^{-1/2}, and the same for φ"""

    def one(m: PositiveUnitalMap) -> PositiveUnitalMap:
        if m.unital:
            return m
        D = m.unit_image()
        lowest = min(float(np.linalg.eigvalsh(b)[0]) for b in D.block_data)
        if lowest <= 1e-8:
            raise PreconditionError(f"The unit image of {m.label or 'the map'} is not invertible",
                                    witness={'lambda_min': lowest})
        root = _block_function(D, lambda v: 1.0 / np.sqrt(v))
        out = PositiveUnitalMap.from_function(m.source, m.target, lambda a: _conjugated(m(a), root),
                                              f"norm({m.label})" if m.label else "")
        if not (out.unital and out.positive):
            raise InvalidObjectError(f"Normalized map is unital={out.unital}, positive={out.positive}")
        return out

    return one(psi), (one(phi) if phi is not None else None)


@dataclass
class UnitalizationResult:
    """ς = Pψ(·)P into the corner of P and θ = φ on the corner"""

    varsigma: PositiveUnitalMap
    theta: PositiveUnitalMap
    projection: HermitianElement
    corner: Corner
    eps: float
    eps_hat: float
    bounds: Dict[str, float]

    @property
    def passed(self) -> bool:
        return all(v <= self.eps + 1e-9 for v in self.bounds.values())

    def to_dict(self) -> Dict:
        return {
            'corner': self.corner.algebra.label,
            'epsilon': self.eps,
            'internal_epsilon': self.eps_hat,
            'bounds': self.bounds,
            'passed': self.passed,
        }


def _product_deviation(psi: PositiveUnitalMap, x: HermitianElement, y: HermitianElement) -> float:
    left = _general_image(psi, product(x, y))
    right = product(psi(x), psi(y))
    return GeneralElement(psi.target, tuple(a - b for a, b in zip(left.block_data, right.block_data))).norm()


def unitalize(psi: PositiveUnitalMap, phi: PositiveUnitalMap, F: Sequence[HermitianElement],
              eps: float) -> UnitalizationResult:
    """
    Cut a positive contraction down to the spectral projection of ψ(1) near 1

    With ε̂ = ε / (3 + 2·max‖x‖‖y‖) over F ∪ {1}, the spectrum of D = ψ(1)
    must avoid (ε̂, 1 − ε̂) and the product and inverse deviations of (ψ, φ)
    on F ∪ {1} must stay below ε̂ − ε̂². The corrected pair then satisfies
    ‖1' − ς(1)‖ ≤ ε, ‖x − θς(x)‖ ≤ ε and ‖ς(x)ς(y) − ς(xy)‖ ≤ ε on F.
    """
    if not 0 < eps < 0.25:
        raise InputError(f"ε must lie in (0, 1/4), got {eps}")
    if phi.source != psi.target or phi.target != psi.source:
        raise InputError(f"φ must map {psi.target} -> {psi.source}")
    A, B = psi.source, psi.target
    F1 = list(F) + [A.unit()]
    top = _max_norm(F1)
    eps_hat = eps / (3.0 + 2.0 * top * top)

    D = psi.unit_image()
    spectrum = np.concatenate([np.linalg.eigvalsh(b) for b in D.block_data])
    inside = spectrum[(spectrum > eps_hat) & (spectrum < 1.0 - eps_hat)]
    if len(inside):
        raise SpectralGapError(
            f"ψ(1) has spectrum in ({eps_hat:.4g}, {1 - eps_hat:.4g})",
            witness={'eigenvalue': float(inside[0]), 'internal_epsilon': eps_hat},
        )

    budget = eps_hat - eps_hat ** 2
    for i, x in enumerate(F1):
        gap = _gap(x, phi(psi(x)))
        if gap > budget + 1e-12:
            raise PreconditionError(f"‖x − φψ(x)‖ = {gap:.4g} exceeds ε̂ − ε̂² = {budget:.4g}",
                                    witness={'index': i, 'deviation': gap})
        for j in range(i, len(F1)):
            for a, b in ((x, F1[j]), (F1[j], x)):
                dev = _product_deviation(psi, a, b)
                if dev > budget + 1e-12:
                    raise PreconditionError(f"‖ψ(xy) − ψ(x)ψ(y)‖ = {dev:.4g} exceeds ε̂ − ε̂² = {budget:.4g}",
                                            witness={'pair': [i, j], 'deviation': dev})

    P = _block_function(D, lambda v: (v >= 1.0 - eps_hat).astype(float))
    if P.norm() < 0.5:
        raise PreconditionError("ψ(1) has no spectrum near 1", witness={'spectrum': spectrum.tolist()})
    corner = Corner.from_projection(P)
    varsigma = PositiveUnitalMap.from_function(A, corner.algebra, lambda a: corner.compress(psi(a)),
                                               f"P{psi.label or 'ψ'}P")
    theta = PositiveUnitalMap.from_function(corner.algebra, A, lambda b: phi(corner.embed(b)),
                                            phi.label or "φ")

    bounds = {
        'unit': _gap(corner.algebra.unit(), varsigma.unit_image()),
        'corner_unit': _gap(P, _conjugated(D, P)),
        'inverse': max(_gap(x, theta(varsigma(x))) for x in F1),
        'multiplicative': max(_product_deviation(varsigma, x, y) for x in F1 for y in F1),
    }
    result = UnitalizationResult(varsigma, theta, P, corner, eps, eps_hat, bounds)
    marker = "✓" if result.passed else "✗"
    logger.info(f"{marker} unitalized onto {corner.algebra} (ε̂ = {eps_hat:.4g}): "
                + ", ".join(f"{k} {v:.3e}" for k, v in bounds.items()))
    return result


# ---------------------------------------------------------------------------
# Dense subsets of Lip-norm balls
# ---------------------------------------------------------------------------


def covering_radius(A: FiniteCStarAlgebra, points: np.ndarray, probes: np.ndarray, neighbours: int = 8) -> float:
    """
    Largest operator-norm distance from a probe to the point set (an upper
    estimate: only the Hilbert-Schmidt nearest neighbours are compared)
    """
    tree = cKDTree(points)
    k = min(neighbours, len(points))
    _, idx = tree.query(probes, k=k)
    idx = np.asarray(idx).reshape(len(probes), k)
    worst = 0.0
    for probe, row in zip(probes, idx):
        diffs = points[row] - probe
        norms = np.maximum(A.lambda_max_batch(diffs), A.lambda_max_batch(-diffs))
        worst = max(worst, float(norms.min()))
    return worst


def _section_probes(V: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random points of the convex hull of V"""
    weights = rng.dirichlet(np.ones(len(V)) * 0.5, size=count)
    return weights @ V


@dataclass
class DenseSubset:
    """Finite δ-dense subset of the μ-section of a Lip-norm ball"""

    elements: List[HermitianElement]
    coords: np.ndarray
    delta: float
    radius: float
    probes: int

    @property
    def certified(self) -> bool:
        return self.radius <= self.delta + 1e-12

    def __len__(self) -> int:
        return len(self.elements)


def _lattice(simplex: np.ndarray, k: int) -> np.ndarray:
    """Points Σ (m_i / k)·w_i over non-negative integers m summing to k"""
    d = len(simplex)
    out = []
    for cut in itertools.combinations(range(k + d - 1), d - 1):
        m = np.diff((-1,) + cut + (k + d - 1,)) - 1
        out.append((m / k) @ simplex)
    return np.array(out)


def dense_subset_of_ball(L: LipNorm, mu: Optional[StateFunctional], delta: float,
                         rng: Optional[np.random.Generator] = None) -> DenseSubset:
    """
    δ-dense subset of {a : L(a) ≤ 1, μ(a) = 0} in operator norm

    The section polytope (with 0) is triangulated and every simplex is
    subdivided into cells whose edges are at most δ, so each section point
    lies within δ of a lattice point; the covering radius is then estimated
    against random probes.
    """
    if delta <= 0:
        raise InputError(f"δ must be positive, got {delta}")
    A = L.algebra
    mu = mu or A.trace_state()
    rng = rng or np.random.default_rng(setting('run', 'seed'))
    ball = L.ball.rebased(mu)
    sec = ball.section
    V = section_polytope(ball).vertices
    zero = np.zeros((1, A.real_dim_sa))
    cap = setting('approx', 'max_dense_points')

    def norm(x: np.ndarray) -> float:
        return A.from_coords(x).norm()

    if sec.dim == 0:
        points = zero
    elif sec.dim == 1:
        pieces = []
        for v in V:
            k = max(1, int(np.ceil(norm(v) / delta - 1e-12)))
            pieces.append(np.outer(np.arange(1, k + 1) / k, v))
        if sum(len(p) for p in pieces) > cap:
            raise InputError(f"δ = {delta:g} needs more than {cap} points")
        points = np.vstack([zero] + pieces)
    else:
        Y = np.vstack([V @ sec.R.T, np.zeros((1, sec.dim))])
        tri = Delaunay(Y)
        plans = []
        total = 0
        for simplex in tri.simplices:
            W = Y[simplex] @ sec.Q.T
            edge = max(norm(W[i] - W[j]) for i in range(len(W)) for j in range(i + 1, len(W)))
            k = max(1, int(np.ceil(edge / delta - 1e-12)))
            total += int(comb(k + sec.dim, sec.dim, exact=True))
            plans.append((W, k))
        if total > cap:
            raise InputError(f"δ = {delta:g} needs about {total} points, more than {cap}")
        points = _unique_rows(np.vstack([_lattice(W, k) for W, k in plans]))

    count = setting('approx', 'dense_probe_count')
    probes = _section_probes(V, count, rng) if len(V) else zero
    radius = covering_radius(A, points, probes)
    dense = DenseSubset([A.from_coords(p) for p in points], points, delta, radius, count)
    marker = "✓" if dense.certified else "✗"
    logger.info(f"{marker} {len(points)} points, covering radius {radius:.4g} vs δ = {delta:g}")
    return dense


# ---------------------------------------------------------------------------
# Approximation Lip-norm and tunnel
# ---------------------------------------------------------------------------


def approx_constants(C: float, D: float, eps: float) -> Tuple[float, float]:
    """(C(1 + 2ε), C(2ε + 10ε² + 12ε³) + D)"""
    return C * (1.0 + 2.0 * eps), C * (2.0 * eps + 10.0 * eps ** 2 + 12.0 * eps ** 3) + D


@dataclass
class ApproxLipNorm:
    """
    The gauge of {b : ∃a, L_A(a) ≤ 1, ‖b − ψ(a)‖ ≤ ε} on B

    ``preconditions`` records the density and deviation checks the
    quasi-Leibniz constants and the tunnel length bound rest on.
    """

    lipnorm: LipNorm
    source: LipNorm
    psi: PositiveUnitalMap
    phi: Optional[PositiveUnitalMap]
    eps: float
    source_constants: Tuple[float, float]
    preconditions: Dict = field(default_factory=dict)

    @property
    def algebra(self) -> FiniteCStarAlgebra:
        return self.lipnorm.algebra

    @property
    def constants(self) -> Tuple[float, float]:
        return approx_constants(*self.source_constants, self.eps)

    @property
    def permissible(self) -> PermissibleFunction:
        return self.lipnorm.permissible

    @property
    def verified(self) -> bool:
        return bool(self.preconditions.get('passed'))

    def __call__(self, b: HermitianElement) -> float:
        return self.lipnorm(b)

    def sandwich(self) -> Dict:
        """Inner polytope facets and the inflation factor r with inner ⊆ ball ⊆ r·inner"""
        rows, support, r = self.lipnorm.ball.sandwich
        return {'inner_vertices': len(self.lipnorm.ball.inner_points), 'facets': len(rows), 'inflation': r}

    def to_dict(self) -> Dict:
        cert = self.lipnorm.certification
        return {
            'target': self.algebra.label,
            'epsilon': self.eps,
            'source_constants': list(self.source_constants),
            'constants': list(self.constants),
            'preconditions': self.preconditions,
            'certification': cert.to_dict() if cert else None,
        }


def _source_constants(L_A: LipNorm) -> Tuple[float, float]:
    F = L_A.permissible
    if F is None or F.constants is None:
        raise PreconditionError("The source Lip-norm needs a (C, D) permissible function")
    C, D = F.constants
    if C < 1.0 or D < 0.0:
        raise PreconditionError(f"Need C ≥ 1 and D ≥ 0, got ({C}, {D})")
    return C, D


def _check_preconditions(L_A: LipNorm, psi: PositiveUnitalMap, phi: Optional[PositiveUnitalMap],
                         eps: float, F: Optional[Sequence[HermitianElement]],
                         mu: StateFunctional) -> Dict:
    """
    Deviations of (ψ, φ) against ε², and ε²-density of F

    Without F the deviations are taken over the section vertices: the inverse
    deviation is convex and the product deviations are convex in each
    argument, so the vertex pairs bound them on the whole section and any
    finite subset of it qualifies.
    """
    budget = eps ** 2
    tol = 1e-9
    record: Dict = {'budget': budget}
    if F is None:
        points = ball_points(L_A)
        record['density'] = {'method': 'vertex certificate', 'passed': True}
    else:
        points = list(F)
        section = L_A.ball.rebased(mu)
        V = section_polytope(section).vertices if section.polyhedral else \
            np.array([section.section.project(g) for g in factor_generators(section)])
        probes = _section_probes(V, setting('approx', 'dense_probe_count'), np.random.default_rng(setting('run', 'seed')))
        coords = np.array([section.section.project(a.coords) for a in points])
        radius = covering_radius(L_A.algebra, coords, probes)
        record['density'] = {'method': 'probes', 'radius': radius, 'passed': bool(radius <= budget + tol)}
    deviations = map_deviations(psi, phi, points)
    record['deviations'] = deviations
    failing = [k for k, d in deviations.items() if d is not None and d['value'] > budget + tol]
    record['failing'] = failing
    record['inverse_checked'] = phi is not None
    record['passed'] = bool(record['density']['passed'] and not failing and phi is not None)
    record['set_size'] = len(points)
    if failing:
        record['witness'] = {
            k: {'value': deviations[k]['value'],
                'elements': [np.round(points[i].coords, 12).tolist() for i in deviations[k]['witness']]}
            for k in failing
        }
    return record


def approx_lipnorm(L_A: LipNorm, psi: PositiveUnitalMap, eps: float,
                   F: Optional[Sequence[HermitianElement]] = None, mu: Optional[StateFunctional] = None,
                   phi: Optional[PositiveUnitalMap] = None, strict: bool = True) -> ApproxLipNorm:
    """
    Quasi-Leibniz Lip-norm on the target of ψ

    Args:
        L_A: A (C, D)-quasi-Leibniz Lip-norm on A
        psi: Unital positive map A -> B
        eps: Thickening radius ε > 0
        F: Finite subset of the μ-section; defaults to the section vertices
        mu: State fixing the section (trace state by default)
        phi: Unital positive map B -> A for the inverse deviation
        strict: Raise when a deviation or the density check fails

    Returns:
        ApproxLipNorm: The gauge on B certified against
            (C(1 + 2ε), C(2ε + 10ε² + 12ε³) + D)
    """
    if eps <= 0:
        raise InputError(f"ε must be positive, got {eps}")
    if psi.source != L_A.algebra:
        raise InputError(f"ψ starts at {psi.source}, the Lip-norm lives on {L_A.algebra}")
    if not (psi.unital and psi.positive):
        raise InvalidObjectError("ψ must be unital and positive")
    if phi is not None and (phi.source != psi.target or phi.target != psi.source):
        raise InputError(f"φ must map {psi.target} -> {psi.source}")
    C, D = _source_constants(L_A)
    mu = mu or L_A.algebra.trace_state()
    B = psi.target

    record = _check_preconditions(L_A, psi, phi, eps, F, mu)
    if not record['passed']:
        reason = record['failing'] or ("density" if not record['density']['passed'] else "no inverse map")
        message = f"Approximation preconditions fail at ε² = {eps ** 2:.4g}: {reason}"
        if strict and (record['failing'] or not record['density']['passed']):
            raise PreconditionError(message, witness=record.get('witness', record['density']))
        logger.warning(message)

    ball = ImageBall(L_A.ball, psi, eps, B.trace_state())
    C2, D2 = approx_constants(C, D, eps)
    F2 = PermissibleFunction.cd(C2, D2)
    lipnorm = LipNorm(B, ball, F2, label=f"approx[{B.label}, ε={eps:g}]")
    cert = quasi_leibniz_check(lipnorm, F2)
    lipnorm = lipnorm.certified(cert)
    marker = "✓" if cert.passed else "✗"
    logger.info(f"{marker} approximation Lip-norm on {B}: ({C2:.6g}, {D2:.6g})-quasi-Leibniz ({cert.grade})")
    return ApproxLipNorm(lipnorm, L_A, psi, phi, eps, (C, D), record)


def approx_tunnel(L_A: LipNorm, approx: ApproxLipNorm, verify: bool = True) -> Tunnel:
    """
    Tunnel on A ⊕ B with L(a, b) = max{L_A(a), L_B(b), ‖ψ(a) − b‖ / ε}

    When the preconditions were verified the tunnel is a quasi-Leibniz tunnel
    for the approximation constants with length at most ε + 3ε², and both
    facts are attached to it.
    """
    if approx.source is not L_A and approx.source.ball is not L_A.ball:
        raise InputError("The approximation Lip-norm was built from another space")
    eps = approx.eps
    bound = eps + 3.0 * eps ** 2
    prior = {'length': bound, 'extent': 2.0 * bound} if approx.verified else {}
    tunnel = map_tunnel(L_A, approx.lipnorm, approx.psi, eps, kind="approx", prior=prior, verify=verify)
    F = approx.permissible
    source_cert = L_A.certification
    cert = None
    if approx.verified and source_cert is not None and source_cert.passed:
        cert = Certification(True, "structural", F.label, 1.0, 0)
    metadata = dict(tunnel.metadata, length_bound=bound if approx.verified else None,
                    bound_applies=approx.verified)
    lipnorm = replace(tunnel.lipnorm, permissible=F, certification=cert)
    return replace(tunnel, lipnorm=lipnorm, metadata=metadata)


def approx_certificate(tunnel: Tunnel, approx: ApproxLipNorm, gap: Optional[float] = None) -> Dict:
    """Length, reach and depth brackets of an approximation tunnel against ε + 3ε²"""
    eps = approx.eps
    bound = eps + 3.0 * eps ** 2
    tol = setting('tolerances', 'quotient')
    ln, rc, dp = length(tunnel, gap), reach(tunnel, gap), depth(tunnel, gap)
    within = ln.upper <= bound + tol
    if approx.verified and ln.lower > bound + tol:
        logger.warning(f"Length lower bound {ln.lower:.6g} exceeds ε + 3ε² = {bound:.6g}")
    cert = approx.lipnorm.certification
    return {
        'epsilon': eps,
        'constants': list(approx.constants),
        'quasi_leibniz': cert.to_dict() if cert else None,
        'preconditions': approx.preconditions,
        'length_bound': bound,
        'bound_applies': approx.verified,
        'length': ln.to_list(),
        'reach': rc.to_list(),
        'depth': dp.to_list(),
        'length_within_bound': bool(within),
        'depth_zero': bool(dp.lower <= tol),
        'gap_closed': bool(ln.gap_closed and rc.gap_closed and dp.gap_closed),
    }
