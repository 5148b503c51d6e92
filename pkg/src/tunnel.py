"""
Tunnels between quasi-Leibniz quantum compact metric spaces

A tunnel is a quantum metric space (D, L_D) with two coordinate surjections
onto the factors. Every tunnel built here has a direct-sum domain
D = D_0 ⊕ ... ⊕ D_k whose components include the two factors; the Lip-norm
is the max of the pulled-back factor Lip-norms and a coupling seminorm.

Extent, reach and depth are Hausdorff distances between state spaces. By
minimax duality each one-sided distance is the supremum, over the section of
the tunnel ball, of a difference of largest eigenvalues, which the DC engine
brackets.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.stats import unitary_group

from .algebra import (
    FiniteCStarAlgebra,
    GeneralElement,
    HermitianElement,
    PositiveUnitalMap,
    StateFunctional,
    UnitalEmbedding,
    common_unital_embedding,
    jordan,
    lie,
    matrix_to_coords,
)
from .convexopt import (
    CuttingPlaneProgram,
    HRepBall,
    PulledBackTerm,
    SpectralFunctional,
    SpectralTerm,
    VRepBall,
    dc_maximize,
    min_lift_gauge,
    support_points,
    to_vrep,
)
from .errors import (
    AlgebraMismatchError,
    InputError,
    InvalidObjectError,
    PreconditionError,
    QuotientConditionError,
)
from .lipnorm import (
    Certification,
    FiniteMetricSpace,
    LipNorm,
    PermissibleFunction,
    diameter,
    lip_from_metric,
    mk_distance,
    quasi_leibniz_check,
)
from .settings import setting

logger = logging.getLogger(__name__)


@dataclass
class Bracket:
    """A certified interval [lower, upper] for a tunnel quantity"""

    lower: float
    upper: float
    gap_closed: bool = True
    prior: Optional[float] = None

    def to_list(self) -> List[float]:
        return [self.lower, self.upper]

    @property
    def within_prior(self) -> Optional[bool]:
        """Whether the computed upper bound certifies the construction bound"""
        if self.prior is None:
            return None
        return bool(self.upper <= self.prior + setting('tolerances', 'quotient') * max(1.0, self.prior))

    def to_dict(self) -> Dict:
        return {
            'bounds': self.to_list(),
            'gap_closed': self.gap_closed,
            'prior': self.prior,
            'within_prior': self.within_prior,
        }

    @classmethod
    def combine(cls, *brackets: 'Bracket') -> 'Bracket':
        """Bracket of the max of the bracketed quantities"""
        return cls(
            max(b.lower for b in brackets),
            max(b.upper for b in brackets),
            all(b.gap_closed for b in brackets),
        )


@dataclass(frozen=True, eq=False)
class Tunnel:
    """
    A tunnel (D, L_D, π_left, π_right) with D = ⊕ components

    ``factors`` are the Lip-norms of the two spaces joined by the tunnel; they
    live on ``components[left]`` and ``components[right]``. ``prior`` holds
    the a-priori bounds the construction guarantees, keyed by quantity
    ('extent', 'length').
    """

    components: Tuple[FiniteCStarAlgebra, ...]
    lipnorm: LipNorm
    factors: Tuple[LipNorm, LipNorm]
    left: int
    right: int
    kind: str
    eps: Optional[float] = None
    metadata: Dict = field(default_factory=dict)
    prior: Dict[str, float] = field(default_factory=dict)
    parents: Tuple['Tunnel', ...] = ()
    _brackets: Dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        domain = self.components[0].direct_sum(*self.components[1:])
        if domain != self.lipnorm.algebra:
            raise AlgebraMismatchError(f"Tunnel domain {self.lipnorm.algebra} is not {domain}")
        for L, idx in zip(self.factors, (self.left, self.right)):
            if L.algebra != self.components[idx]:
                raise AlgebraMismatchError(f"Factor on {L.algebra} sits on component {self.components[idx]}")

    @property
    def domain(self) -> FiniteCStarAlgebra:
        return self.lipnorm.algebra

    @property
    def ball(self):
        return self.lipnorm.ball

    @cached_property
    def offsets(self) -> Tuple[int, ...]:
        out = [0]
        for C in self.components:
            out.append(out[-1] + C.real_dim_sa)
        return tuple(out)

    def projection(self, index: int) -> np.ndarray:
        """Coordinate matrix of the surjection D -> components[index]"""
        P = np.zeros((self.components[index].real_dim_sa, self.domain.real_dim_sa))
        start = self.offsets[index]
        P[:, start:start + P.shape[0]] = np.eye(P.shape[0])
        return P

    @property
    def pi_left(self) -> np.ndarray:
        return self.projection(self.left)

    @property
    def pi_right(self) -> np.ndarray:
        return self.projection(self.right)

    def project(self, d: HermitianElement, side: str = "left") -> HermitianElement:
        if d.algebra != self.domain:
            raise AlgebraMismatchError(f"Tunnel domain is {self.domain}, got {d.algebra}")
        idx = self.left if side == "left" else self.right
        return self.components[idx].from_coords(self.projection(idx) @ d.coords)

    def factor_functional(self, index: int) -> SpectralFunctional:
        return SpectralFunctional(self.components[index], self.projection(index), f"π{index}")

    @property
    def label(self) -> str:
        return f"{self.kind}({self.factors[0].label or self.factors[0].algebra}, " \
               f"{self.factors[1].label or self.factors[1].algebra})"


# ---------------------------------------------------------------------------
# Appropriate classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TunnelClass:
    """
    A class of F-tunnels, given by its permissible function and the closure
    properties the caller asserts for it
    """

    permissible: PermissibleFunction
    identity_tunnels: bool = True
    inverses: bool = True
    composition: bool = True
    label: str = ""

    def dominates(self, F: Optional[PermissibleFunction]) -> bool:
        if F is None:
            return False
        mine, theirs = self.permissible.constants, F.constants
        if mine is not None and theirs is not None:
            return mine[0] >= theirs[0] - 1e-12 and mine[1] >= theirs[1] - 1e-12
        return F is self.permissible or F.label == self.permissible.label

    def contains(self, tunnel: Tunnel) -> bool:
        if tunnel.kind == "inverse":
            return self.inverses and self.contains(tunnel.parents[0])
        if tunnel.kind == "composed":
            return self.composition and all(self.contains(p) for p in tunnel.parents)
        if tunnel.kind == "identity":
            return self.identity_tunnels
        cert = tunnel.lipnorm.certification
        return bool(cert and cert.passed) and self.dominates(tunnel.lipnorm.permissible)

    def certify(self, tunnel: Tunnel, rng: Optional[np.random.Generator] = None) -> Tunnel:
        """Run the quasi-Leibniz check of the domain Lip-norm against F"""
        cert = quasi_leibniz_check(tunnel.lipnorm, self.permissible, rng)
        lipnorm = replace(tunnel.lipnorm, permissible=self.permissible, certification=cert)
        return replace(tunnel, lipnorm=lipnorm)


# ---------------------------------------------------------------------------
# Quotient condition
# ---------------------------------------------------------------------------


@dataclass
class QuotientReport:
    passed: bool
    worst_excess: float
    checks: List[Dict]

    def to_dict(self) -> Dict:
        return {'passed': self.passed, 'worst_excess': self.worst_excess, 'checks': self.checks}


def factor_generators(ball) -> np.ndarray:
    """Rows spanning the section of a factor ball: its generators, or sampled extreme points"""
    if isinstance(ball, VRepBall):
        return ball.G.T
    sec = ball.section
    if ball.polyhedral and sec.dim <= setting('lipnorm', 'vertex_enum_max_dim'):
        return to_vrep(ball).G.T
    if sec.dim == 0:
        return np.zeros((0, ball.algebra.real_dim_sa))
    return support_points(ball, np.vstack([sec.R, -sec.R]))


def check_quotient(tunnel: Tunnel, tol: Optional[float] = None) -> QuotientReport:
    """
    Compare inf{L_D(d) : π(d) = a} with L(a) on the generators of both factors

    The infimum is never below L(a) since L_D dominates the pulled-back factor
    Lip-norms; the check bounds it from above.
    """
    tol = setting('tolerances', 'quotient') if tol is None else tol
    sides = [("left", 0, tunnel.left)]
    if not (tunnel.right == tunnel.left and tunnel.factors[1] is tunnel.factors[0]):
        sides.append(("right", 1, tunnel.right))

    checks = []
    worst = 0.0
    passed = True
    for side, k, idx in sides:
        L = tunnel.factors[k]
        P = tunnel.projection(idx)
        for j, g in enumerate(factor_generators(L.ball)):
            target = L.ball.gauge_coords(g)
            lower, upper, _ = min_lift_gauge(tunnel.ball, P, g)
            excess = float(upper - target)
            worst = max(worst, excess)
            ok = excess <= tol * max(1.0, target)
            passed = passed and ok
            checks.append({
                'side': side, 'generator': j, 'factor_gauge': float(target),
                'lift_bounds': [float(lower), float(upper)], 'passed': bool(ok),
            })
    marker = "✓" if passed else "✗"
    logger.info(f"{marker} quotient condition on {len(checks)} generators (worst excess {worst:.3e})")
    return QuotientReport(passed, worst, checks)


def _verified(tunnel: Tunnel, hint: str = "") -> Tunnel:
    report = check_quotient(tunnel)
    if not report.passed:
        failing = next(c for c in report.checks if not c['passed'])
        raise QuotientConditionError(
            f"{tunnel.kind} tunnel does not push forward onto its factors{hint}", witness=failing
        )
    return tunnel


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------


def _structural(factors: Sequence[LipNorm]) -> Tuple[Optional[PermissibleFunction], Optional[Certification]]:
    """
    Permissible function and certificate of max{L_1, ..., L_k, N} for a
    Leibniz coupling seminorm N: the pointwise max of the factor functions
    """
    perms = [L.permissible for L in factors]
    if any(F is None for F in perms):
        return None, None
    F = perms[0]
    for G in perms[1:]:
        F = F.pointwise_max(G)
    certs = [L.certification for L in factors]
    if not all(c is not None and c.passed for c in certs):
        return F, None
    worst = max(c.worst_ratio for c in certs)
    return F, Certification(True, "structural", F.label, worst, 0)


def _coupled_tunnel(L_a: LipNorm, L_b: LipNorm, target: FiniteCStarAlgebra, coupling: np.ndarray,
                    scale: float, kind: str, eps: Optional[float], metadata: Dict,
                    prior: Dict[str, float]) -> Tunnel:
    """
    Tunnel on A ⊕ B with L(a, b) = max{L_A(a), L_B(b), ‖N(a, b)‖ / scale}

    ``coupling`` is the coordinate matrix of N: sa(A ⊕ B) -> sa(target); it
    must vanish on the unit.
    """
    A, B = L_a.algebra, L_b.algebra
    D = A.direct_sum(B)
    m_a = A.real_dim_sa
    P_a = np.hstack([np.eye(m_a), np.zeros((m_a, B.real_dim_sa))])
    P_b = np.hstack([np.zeros((B.real_dim_sa, m_a)), np.eye(B.real_dim_sa)])
    terms = [PulledBackTerm(L_a.ball, P_a), PulledBackTerm(L_b.ball, P_b)]
    if np.abs(coupling).max(initial=0.0) > 0:
        terms.append(SpectralTerm(target, coupling, scale))
    ball = HRepBall(D, terms)
    permissible, cert = _structural([L_a, L_b])
    lipnorm = LipNorm(D, ball, permissible, cert, label=f"{kind}[{L_a.label or A},{L_b.label or B}]")
    return Tunnel((A, B), lipnorm, (L_a, L_b), 0, 1, kind, eps, metadata, prior)


def identity_tunnel(L: LipNorm) -> Tunnel:
    """(A, L, id, id)"""
    return Tunnel((L.algebra,), L, (L, L), 0, 0, "identity", 0.0, {}, {'extent': 0.0, 'length': 0.0})


def inverse(tunnel: Tunnel) -> Tunnel:
    """The same tunnel with its factors swapped; all its measurements are symmetric"""
    return Tunnel(
        tunnel.components, tunnel.lipnorm, (tunnel.factors[1], tunnel.factors[0]),
        tunnel.right, tunnel.left, "inverse", tunnel.eps, dict(tunnel.metadata),
        dict(tunnel.prior), (tunnel,), tunnel._brackets,
    )


def _standard(L_a: LipNorm, L_b: LipNorm, eps: float, Dm: float,
              relative_unitary: Optional[np.ndarray]) -> Tunnel:
    A, B = L_a.algebra, L_b.algebra
    target, rho_a, rho_b = common_unital_embedding(A, B, relative_unitary)
    m_a = A.real_dim_sa
    coupling = np.zeros((target.real_dim_sa, m_a + B.real_dim_sa))
    coupling[:, :m_a] = rho_a.coordinate_matrix
    coupling[:, m_a:] = -rho_b.coordinate_matrix
    metadata = {
        'embedding': {
            'target': target.label,
            'multiplicities': [list(rho_a.multiplicities), list(rho_b.multiplicities)],
            'relative_unitary': relative_unitary is not None,
        },
        'max_diameter': Dm,
    }
    return _coupled_tunnel(L_a, L_b, target, coupling, Dm + eps, "standard", eps, metadata,
                           {'extent': Dm + eps})


def standard_tunnel(L_a: LipNorm, L_b: LipNorm, eps: float,
                    relative_unitary: Optional[np.ndarray] = None,
                    restarts: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None,
                    verify: bool = True) -> Tunnel:
    """
    Tunnel with L(a, b) = max{L_A(a), L_B(b), ‖ρ_A(a) − ρ_B(b)‖ / (Dm + ε)}

    ρ_A, ρ_B are the common unital embedding into M_N and Dm the larger of the
    two diameters; the extent is at most Dm + ε.

    Args:
        L_a: Lip-norm of the left space
        L_b: Lip-norm of the right space
        eps: Slack ε ≥ 0 added to the diameter
        relative_unitary: Optional relative position of the two embeddings
        restarts: Random relative positions to try; the tunnel with the
            smallest extent upper bound is kept
        rng: Generator for the relative positions
        verify: Check the quotient condition on the generators

    Returns:
        Tunnel: The standard tunnel
    """
    if eps < 0:
        raise InputError(f"ε must be non-negative, got {eps}")
    Dm = max(diameter(L_a), diameter(L_b))
    if Dm + eps <= 0:
        raise PreconditionError("Both spaces have zero diameter and ε = 0", witness={'epsilon': eps})

    tunnel = _standard(L_a, L_b, eps, Dm, relative_unitary)
    restarts = setting('tunnel', 'relative_position_restarts') if restarts is None else restarts
    if restarts:
        rng = rng or np.random.default_rng(setting('run', 'seed'))
        N = L_a.algebra.unit_size * L_b.algebra.unit_size
        best = extent(tunnel).upper
        logger.info(f"Searching {restarts} relative positions (default extent ≤ {best:.6g})")
        for k in range(restarts):
            U = unitary_group.rvs(N, random_state=rng) if N > 1 else np.eye(1)
            candidate = _standard(L_a, L_b, eps, Dm, U)
            value = extent(candidate).upper
            logger.debug(f"Relative position {k + 1}/{restarts}: extent ≤ {value:.6g}")
            if value < best:
                tunnel, best = candidate, value
    return _verified(tunnel) if verify else tunnel


def _pivot_matrix(pivot: Union[np.ndarray, GeneralElement, HermitianElement], N: int) -> np.ndarray:
    if isinstance(pivot, (GeneralElement, HermitianElement)):
        if len(pivot.block_data) != 1:
            raise InputError("The pivot lives in a full matrix algebra")
        pivot = pivot.block_data[0]
    omega = np.asarray(pivot, dtype=complex)
    if omega.shape != (N, N):
        raise InputError(f"Pivot must be {N}x{N}, got {omega.shape}")
    return omega


def bridge_tunnel(L_a: LipNorm, L_b: LipNorm, rho_a: UnitalEmbedding, rho_b: UnitalEmbedding,
                  pivot, lam: float, verify: bool = True) -> Tunnel:
    """
    Tunnel with L(a, b) = max{L_A(a), L_B(b), ‖ρ_A(a)ω − ωρ_B(b)‖ / λ}

    The pivot ω must lie in the unit ball of M_N with some state annihilating
    (1 − ω)*(1 − ω) and (1 − ω)(1 − ω)*. The length of the tunnel is at most
    λ, its extent at most 2λ.
    """
    if rho_a.source != L_a.algebra or rho_b.source != L_b.algebra:
        raise AlgebraMismatchError("Embeddings must start at the factor algebras")
    if rho_a.target != rho_b.target:
        raise AlgebraMismatchError(f"Embeddings land in {rho_a.target} and {rho_b.target}")
    if lam <= 0:
        raise InputError(f"λ must be positive, got {lam}")
    target = rho_a.target
    N = target.blocks[0]
    omega = _pivot_matrix(pivot, N)

    norm = float(np.linalg.norm(omega, 2))
    if norm > 1.0 + 1e-9:
        raise PreconditionError(f"The pivot has norm {norm:.6g} > 1", witness={'norm': norm})
    defect = np.eye(N) - omega
    h = defect.conj().T @ defect + defect @ defect.conj().T
    lowest = float(np.linalg.eigvalsh(h)[0])
    if lowest > 1e-8:
        raise PreconditionError(
            "No state annihilates (1 − ω)*(1 − ω) and (1 − ω)(1 − ω)*", witness={'lambda_min': lowest}
        )

    # ‖X‖ for non-self-adjoint X is λ_max of the dilation [[0, X], [X*, 0]]
    dilated = FiniteCStarAlgebra((2 * N,))
    A, B = L_a.algebra, L_b.algebra
    cols = []
    for e in A.basis_elements():
        cols.append(_dilation(rho_a.image_matrix(e.block_data) @ omega))
    for e in B.basis_elements():
        cols.append(_dilation(-omega @ rho_b.image_matrix(e.block_data)))
    coupling = np.array(cols).T
    metadata = {
        'embedding': {
            'target': target.label,
            'multiplicities': [list(rho_a.multiplicities), list(rho_b.multiplicities)],
        },
        'pivot': {'real': np.round(omega.real, 12).tolist(), 'imag': np.round(omega.imag, 12).tolist()},
        'lambda': float(lam),
    }
    tunnel = _coupled_tunnel(L_a, L_b, dilated, coupling, lam, "bridge", lam, metadata,
                             {'extent': 2.0 * lam, 'length': float(lam)})
    return _verified(tunnel, f" at λ = {lam:g} (λ too small?)") if verify else tunnel


def _dilation(X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    H = np.zeros((2 * n, 2 * n), dtype=complex)
    H[:n, n:] = X
    H[n:, :n] = X.conj().T
    return matrix_to_coords(H)


def map_tunnel(L_a: LipNorm, L_b: LipNorm, psi: PositiveUnitalMap, eps: float, kind: str = "approx",
               prior: Optional[Dict[str, float]] = None, verify: bool = True) -> Tunnel:
    """Tunnel with L(a, b) = max{L_A(a), L_B(b), ‖ψ(a) − b‖ / ε} for a unital positive ψ: A -> B"""
    if psi.source != L_a.algebra or psi.target != L_b.algebra:
        raise AlgebraMismatchError(f"ψ maps {psi.source} -> {psi.target}")
    if eps <= 0:
        raise InputError(f"ε must be positive, got {eps}")
    if not psi.unital:
        raise InvalidObjectError("The coupling map must be unital")
    B = L_b.algebra
    coupling = np.hstack([psi.matrix, -np.eye(B.real_dim_sa)])
    morphism = preserves_products(psi)
    metadata = {'map': psi.label or "ψ", 'jordan_lie_morphism': morphism}
    tunnel = _coupled_tunnel(L_a, L_b, B, coupling, eps, kind, eps, metadata, prior or {})
    if not morphism:
        # ‖ψ(a) − b‖ is Leibniz only when ψ is multiplicative
        tunnel = replace(tunnel, lipnorm=replace(tunnel.lipnorm, certification=None))
    return _verified(tunnel, f" at ε = {eps:g}") if verify else tunnel


def preserves_products(psi: PositiveUnitalMap, tol: float = 1e-9) -> bool:
    """ψ(a∘b) = ψ(a)∘ψ(b) and ψ({a,b}) = {ψ(a),ψ(b)} on every pair of basis elements"""
    basis = psi.source.basis_elements()
    for i, a in enumerate(basis):
        for b in basis[i:]:
            for prod in (jordan, lie):
                gap = psi(prod(a, b)) - prod(psi(a), psi(b))
                if gap.norm() > tol:
                    return False
    return True


def distortion(X: FiniteMetricSpace, Y: FiniteMetricSpace, R: Sequence[Tuple[int, int]]) -> float:
    """sup of |d_X(x, x') − d_Y(y, y')| over pairs of R"""
    R = np.asarray(R, dtype=int).reshape(-1, 2)
    dx = X.dist[np.ix_(R[:, 0], R[:, 0])]
    dy = Y.dist[np.ix_(R[:, 1], R[:, 1])]
    return float(np.max(np.abs(dx - dy)))


def is_correspondence(X: FiniteMetricSpace, Y: FiniteMetricSpace, R: Sequence[Tuple[int, int]]) -> bool:
    pairs = [tuple(p) for p in R]
    if not pairs:
        return False
    if any(not (0 <= i < X.size and 0 <= j < Y.size) for i, j in pairs):
        return False
    return {i for i, _ in pairs} == set(range(X.size)) and {j for _, j in pairs} == set(range(Y.size))


def glued_space(X: FiniteMetricSpace, Y: FiniteMetricSpace, R: Sequence[Tuple[int, int]],
                radius: float) -> FiniteMetricSpace:
    """X ⊔ Y with d(x, y) = inf over (x', y') ∈ R of d_X(x, x') + radius + d_Y(y', y)"""
    R = np.asarray(R, dtype=int).reshape(-1, 2)
    cross = np.min(X.dist[:, R[:, 0]][:, None, :] + radius + Y.dist[R[:, 1], :].T[None, :, :], axis=2)
    n, m = X.size, Y.size
    dist = np.zeros((n + m, n + m))
    dist[:n, :n] = X.dist
    dist[n:, n:] = Y.dist
    dist[:n, n:] = cross
    dist[n:, :n] = cross.T
    labels = [f"X:{x}" for x in X.labels] + [f"Y:{y}" for y in Y.labels]
    return FiniteMetricSpace.from_matrix(dist, labels)


def correspondence_tunnel(X: FiniteMetricSpace, Y: FiniteMetricSpace, R: Sequence[Tuple[int, int]],
                          verify: bool = True) -> Tunnel:
    """
    Tunnel C(X ⊔ Y) for the metric glued along a correspondence R

    Cross distances carry dis(R)/2 (floored so the glued space stays a
    metric space); the Lipschitz seminorm of the glued space pushes forward
    to those of X and Y by McShane extension, and the extent is at most the
    glueing radius.
    """
    if not is_correspondence(X, Y, R):
        raise InvalidObjectError("R is not a correspondence: both projections must be onto")
    dis = distortion(X, Y, R)
    radius = max(dis / 2.0, setting('tunnel', 'correspondence_floor'))
    Z = glued_space(X, Y, R, radius)
    L_x, L_y, L_z = lip_from_metric(X), lip_from_metric(Y), lip_from_metric(Z)
    metadata = {'correspondence': [list(map(int, p)) for p in R], 'distortion': dis, 'radius': radius}
    tunnel = Tunnel((X.algebra, Y.algebra), L_z, (L_x, L_y), 0, 1, "correspondence", radius,
                    metadata, {'extent': radius, 'length': radius})
    return _verified(tunnel) if verify else tunnel


def _same_space(L1: LipNorm, L2: LipNorm, probes: int = 8) -> bool:
    if L1 is L2 or L1.ball is L2.ball:
        return True
    if L1.algebra != L2.algebra:
        return False
    rng = np.random.default_rng(0)
    elements = L1.algebra.basis_elements() + [L1.algebra.random_element(rng) for _ in range(probes)]
    for x in elements:
        g1, g2 = L1(x), L2(x)
        if abs(g1 - g2) > 1e-9 * max(1.0, abs(g1)):
            return False
    return True


def compose(t1: Tunnel, t2: Tunnel, eps: Optional[float] = None, verify: bool = True) -> Tunnel:
    """
    Tunnel from the left factor of t1 to the right factor of t2

    The domain is D_1 ⊕ D_2 with L(d_1, d_2) = max{L_1(d_1), L_2(d_2),
    ‖π(d_1) − π'(d_2)‖ / ε} where π, π' are the projections onto the shared
    middle space. Its extent is at most extent(t1) + extent(t2) + ε.
    """
    L_mid, L_mid2 = t1.factors[1], t2.factors[0]
    if L_mid.algebra != L_mid2.algebra or not _same_space(L_mid, L_mid2):
        raise AlgebraMismatchError("The right factor of the first tunnel is not the left factor of the second")
    if eps is None:
        total = diameter(t1.factors[0]) + diameter(L_mid) + diameter(t2.factors[1])
        eps = setting('tunnel', 'composition_eps_factor') * (total if total > 0 else 1.0)
    if eps <= 0:
        raise InputError(f"ε must be positive, got {eps}")

    D1, D2 = t1.domain, t2.domain
    D = D1.direct_sum(D2)
    m1 = D1.real_dim_sa
    P1 = np.hstack([np.eye(m1), np.zeros((m1, D2.real_dim_sa))])
    P2 = np.hstack([np.zeros((D2.real_dim_sa, m1)), np.eye(D2.real_dim_sa)])
    middle = t1.pi_right @ P1 - t2.pi_left @ P2
    terms = [PulledBackTerm(t1.ball, P1), PulledBackTerm(t2.ball, P2)]
    if np.abs(middle).max(initial=0.0) > 0:
        terms.append(SpectralTerm(L_mid.algebra, middle, eps))
    ball = HRepBall(D, terms)
    permissible, cert = _structural([t1.lipnorm, t2.lipnorm])
    lipnorm = LipNorm(D, ball, permissible, cert, label=f"{t1.lipnorm.label}∘{t2.lipnorm.label}")

    prior = extent(t1).upper + extent(t2).upper + eps
    tunnel = Tunnel(
        t1.components + t2.components, lipnorm, (t1.factors[0], t2.factors[1]),
        t1.left, len(t1.components) + t2.right, "composed", eps,
        {'stages': [t1.kind, t2.kind]}, {'extent': prior}, (t1, t2),
    )
    logger.info(f"Composed {t1.kind} ∘ {t2.kind} on {D} (ε = {eps:.3g}, extent ≤ {prior:.6g})")
    return _verified(tunnel) if verify else tunnel


# ---------------------------------------------------------------------------
# Extent, reach, depth, length
# ---------------------------------------------------------------------------


def _with_prior(tunnel: Tunnel, key: str, computed: Bracket) -> Bracket:
    """Attach the construction bound to a computed bracket without narrowing it"""
    prior = tunnel.prior.get(key)
    if prior is None:
        return computed
    tol = setting('tolerances', 'quotient')
    if computed.lower > prior + tol * max(1.0, prior):
        logger.warning(f"{key} of {tunnel.kind} tunnel: lower bound {computed.lower:.6g} above "
                       f"the construction bound {prior:.6g}")
    elif computed.upper > prior + tol * max(1.0, prior):
        logger.info(f"{key} of {tunnel.kind} tunnel: upper bound {computed.upper:.6g} does not "
                    f"certify the construction bound {prior:.6g}")
    return Bracket(computed.lower, computed.upper, computed.gap_closed, prior)


def _dc_bracket(cvx: SpectralFunctional, ccv: List[SpectralFunctional], tunnel: Tunnel,
                gap: Optional[float]) -> Bracket:
    res = dc_maximize(cvx, ccv, tunnel.ball, gap)
    return Bracket(max(0.0, res.lower), max(0.0, res.upper), res.gap_closed)


def _cached(tunnel: Tunnel, key: str, gap: Optional[float], compute) -> Bracket:
    cache_key = (key, gap)
    if cache_key not in tunnel._brackets:
        tunnel._brackets[cache_key] = compute()
    return tunnel._brackets[cache_key]


def _raw_extent(tunnel: Tunnel, gap: Optional[float]) -> Bracket:
    identity = SpectralFunctional.identity(tunnel.domain)
    sides = {tunnel.left, tunnel.right}
    return Bracket.combine(*[
        _dc_bracket(identity, [tunnel.factor_functional(i)], tunnel, gap) for i in sorted(sides)
    ])


def extent(tunnel: Tunnel, gap: Optional[float] = None) -> Bracket:
    """
    max over both factors of Haus(S(D), π*S(factor)), as a bracket

    Each one-sided distance equals sup over the L_D-ball of
    λ_max(d) − λ_max(π(d)).
    """
    return _cached(tunnel, 'extent', gap, lambda: _with_prior(tunnel, 'extent', _raw_extent(tunnel, gap)))


def reach(tunnel: Tunnel, gap: Optional[float] = None) -> Bracket:
    """Haus(π_left*S(A), π_right*S(B)) through the two one-sided DC problems"""
    def compute():
        if tunnel.left == tunnel.right:
            return Bracket(0.0, 0.0)
        f_l, f_r = tunnel.factor_functional(tunnel.left), tunnel.factor_functional(tunnel.right)
        return Bracket.combine(_dc_bracket(f_l, [f_r], tunnel, gap), _dc_bracket(f_r, [f_l], tunnel, gap))
    return _cached(tunnel, 'reach', gap, compute)


def depth(tunnel: Tunnel, gap: Optional[float] = None) -> Bracket:
    """Haus(S(D), convex hull of both pulled-back state spaces)"""
    def compute():
        identity = SpectralFunctional.identity(tunnel.domain)
        ccv = [tunnel.factor_functional(i) for i in sorted({tunnel.left, tunnel.right})]
        return _dc_bracket(identity, ccv, tunnel, gap)
    return _cached(tunnel, 'depth', gap, compute)


def length(tunnel: Tunnel, gap: Optional[float] = None) -> Bracket:
    """max(reach, depth)"""
    def compute():
        return _with_prior(tunnel, 'length', Bracket.combine(reach(tunnel, gap), depth(tunnel, gap)))
    return _cached(tunnel, 'length', gap, compute)


# ---------------------------------------------------------------------------
# Discretized state spaces
# ---------------------------------------------------------------------------

_PAULI_XYZ = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _sphere(count: int) -> np.ndarray:
    """The six axis points plus ``count`` golden-angle spiral points on S²"""
    axes = np.vstack([np.eye(3), -np.eye(3)])
    if count <= 0:
        return axes
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    r = np.sqrt(1.0 - z ** 2)
    theta = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.vstack([axes, np.column_stack([r * np.cos(theta), r * np.sin(theta), z])])


def _bloch(r: np.ndarray) -> np.ndarray:
    return 0.5 * (np.eye(2) + sum(c * s for c, s in zip(r, _PAULI_XYZ)))


def _lattice(k: int, steps: int) -> List[np.ndarray]:
    if k == 1:
        return [np.ones(1)]
    out = []
    for cut in itertools.combinations(range(steps + k - 1), k - 1):
        out.append((np.diff((-1,) + cut + (steps + k - 1,)) - 1) / steps)
    return out


def _state_from_params(F: FiniteCStarAlgebra, x: np.ndarray) -> StateFunctional:
    """Softmax block weights, then one Bloch vector (scaled into the ball) per 2x2 block"""
    k = len(F.blocks)
    u = x[:k] - np.max(x[:k])
    w = np.exp(u) / np.sum(np.exp(u))
    densities, pos = [], k
    for j, n in enumerate(F.blocks):
        if n == 1:
            densities.append(w[j] * np.ones((1, 1), dtype=complex))
            continue
        v = x[pos:pos + 3]
        pos += 3
        densities.append(w[j] * _bloch(v / max(1.0, float(np.linalg.norm(v)))))
    return StateFunctional(F, tuple(densities))


def _param_grid(F: FiniteCStarAlgebra, resolution: int, levels: int, steps: int) -> List[np.ndarray]:
    ball = np.vstack([np.zeros((1, 3))] + [(t / levels) * _sphere(resolution) for t in range(1, levels + 1)])
    grid = []
    for w in _lattice(len(F.blocks), steps):
        u = np.log(np.maximum(w, 1e-12))
        choices = [ball if n == 2 and w[j] > 0 else np.zeros((1, 3)) for j, n in enumerate(F.blocks) if n == 2]
        for picked in itertools.product(*choices):
            grid.append(np.concatenate([u] + list(picked)))
    return grid


def _pure_states(D: FiniteCStarAlgebra, resolution: int) -> List[Tuple[int, StateFunctional]]:
    out = []
    for j, n in enumerate(D.blocks):
        densities = [np.ones((1, 1), dtype=complex)] if n == 1 else [_bloch(r) for r in _sphere(resolution)]
        for rho in densities:
            blocks = [np.zeros((m, m), dtype=complex) for m in D.blocks]
            blocks[j] = rho
            out.append((j, StateFunctional(D, tuple(blocks))))
    return out


def discretized_extent(tunnel: Tunnel, resolution: int = 26, levels: int = 3, steps: int = 10,
                       max_evaluations: int = 300) -> float:
    """
    Extent by brute force over the state spaces, for domains with blocks of size ≤ 2

    The distance to a pulled-back state space is convex, so the supremum over
    S(D) runs over pure states (axis and spiral points of each Bloch sphere).
    The infimum over the factor's states starts from a grid (block weight
    lattice times Bloch ball shells) and is refined by Nelder-Mead. Every
    distance is an MK distance of two explicit states of D.
    """
    D = tunnel.domain
    if any(n > 2 for n in D.blocks):
        raise InputError(f"Discretized state spaces need blocks of size at most 2, got {D}")
    L = tunnel.lipnorm
    pure = _pure_states(D, resolution)
    value = 0.0
    for side in sorted({tunnel.left, tunnel.right}):
        F = tunnel.components[side]
        first = sum(len(C.blocks) for C in tunnel.components[:side])
        owned = range(first, first + len(F.blocks))

        def pulled(x: np.ndarray) -> StateFunctional:
            blocks = [np.zeros((m, m), dtype=complex) for m in D.blocks]
            blocks[first:first + len(F.blocks)] = _state_from_params(F, x).block_densities
            return StateFunctional(D, tuple(blocks))

        grid = _param_grid(F, resolution, levels, steps)
        for block, phi in pure:
            if block in owned:
                continue

            def dist(x: np.ndarray) -> float:
                return mk_distance(L, phi, pulled(np.asarray(x)))

            best, start = np.inf, grid[0]
            for x in grid:
                d = dist(x)
                if d < best:
                    best, start = d, x
                if best <= value:
                    break
            if best > value and F.real_dim_sa > 1:
                res = minimize(dist, start, method="Nelder-Mead",
                               options={'xatol': 1e-7, 'fatol': 1e-9, 'maxfev': max_evaluations})
                best = min(best, float(res.fun))
            value = max(value, best)
    logger.info(f"Discretized extent of {tunnel.kind} tunnel: {value:.6g}")
    return value


# ---------------------------------------------------------------------------
# Target sets
# ---------------------------------------------------------------------------


@dataclass
class TargetSetSample:
    """Images π_right(d) of lifts d of a with L_D(d) ≤ l"""

    element: np.ndarray
    level: float
    lifts: np.ndarray
    images: np.ndarray
    norm_bound: float
    max_lift_norm: float

    @property
    def norm_bound_holds(self) -> bool:
        return self.max_lift_norm <= self.norm_bound + 1e-7 * max(1.0, self.norm_bound)

    def to_dict(self) -> Dict:
        return {
            'element': np.round(self.element, 12).tolist(),
            'level': self.level,
            'samples': len(self.images),
            'norm_bound': self.norm_bound,
            'max_lift_norm': self.max_lift_norm,
            'norm_bound_holds': self.norm_bound_holds,
        }


def _pull_into(ball, base: np.ndarray, z: np.ndarray, level: float, steps: int = 50) -> np.ndarray:
    """The point of the segment [base, z] farthest from base with gauge ≤ level"""
    if ball.gauge_coords(z) <= level:
        return z
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if ball.gauge_coords(base + mid * (z - base)) <= level:
            lo = mid
        else:
            hi = mid
    return base + lo * (z - base)


def target_set_probe(tunnel: Tunnel, a: HermitianElement, level: float, count: int = 16,
                     rng: Optional[np.random.Generator] = None) -> TargetSetSample:
    """
    Sample the target set {π_right(d) : π_left(d) = a, L_D(d) ≤ l}

    Lifts come from linear programs with random objectives over the lift set,
    pulled back into the exact ball along the segment to a minimal lift. The
    record carries the bound ‖d‖ ≤ ‖a‖ + 2l·extent for every sampled lift.
    """
    L_a = tunnel.factors[0]
    if a.algebra != L_a.algebra:
        raise AlgebraMismatchError(f"Left factor is {L_a.algebra}, got {a.algebra}")
    tol = setting('tolerances', 'quotient')
    g = L_a(a)
    if level < g - tol * max(1.0, g):
        raise PreconditionError(f"Level {level:g} is below L(a) = {g:.6g}", witness={'gauge': g})

    rng = rng or np.random.default_rng(setting('run', 'seed'))
    ball = tunnel.ball
    P = tunnel.pi_left
    lower, upper, base = min_lift_gauge(ball, P, a.coords)
    if lower > level + tol * max(1.0, level) or not np.isfinite(upper):
        raise PreconditionError(f"No lift of a has L_D ≤ {level:g}", witness={'lift_lower': lower})
    level = max(level, upper)

    lifts = [base]
    m = tunnel.domain.real_dim_sa
    for _ in range(count - 1):
        program = CuttingPlaneProgram()
        z = program.add_variables(m)
        s = int(program.add_variables(1, level, level)[0])
        program.add_eq(program.embed(P, z), a.coords)
        ball.constrain(program, program.embed(np.eye(m), z), s)
        res = program.solve(program.embed(rng.normal(size=m), z)[0], maximize=True)
        if res.z is None:
            continue
        lifts.append(_pull_into(ball, base, res.z[z], level))

    lifts = np.array(lifts)
    images = lifts @ tunnel.pi_right.T
    D = tunnel.domain
    bound = a.norm() + 2.0 * level * extent(tunnel).upper
    max_norm = max(D.from_coords(d).norm() for d in lifts)
    sample = TargetSetSample(np.array(a.coords), float(level), lifts, images, float(bound), float(max_norm))
    marker = "✓" if sample.norm_bound_holds else "✗"
    logger.info(f"{marker} {len(lifts)} lifts, max norm {max_norm:.6g} vs bound {bound:.6g}")
    return sample


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def tunnel_to_dict(tunnel: Tunnel, compute: bool = False, precision: Optional[int] = None) -> Dict:
    """JSON-ready description; ``compute`` fills extent, reach, depth and length"""
    precision = precision or setting('run', 'precision')

    def num(x: float) -> float:
        return x if not np.isfinite(x) else float(f"{x:.{precision}g}")

    if compute:
        for fn in (extent, reach, depth, length):
            fn(tunnel)
    bounds = {}
    for (key, gap), br in sorted(tunnel._brackets.items(), key=lambda item: item[0][0]):
        if gap is None:
            bounds[key] = {
                'bounds': [num(br.lower), num(br.upper)],
                'gap_closed': br.gap_closed,
                'prior': None if br.prior is None else num(br.prior),
                'within_prior': br.within_prior,
            }
    return {
        'kind': tunnel.kind,
        'factors': [L.label or L.algebra.label for L in tunnel.factors],
        'factor_algebras': [L.algebra.label for L in tunnel.factors],
        'domain': tunnel.domain.label,
        'components': [C.label for C in tunnel.components],
        'left': tunnel.left,
        'right': tunnel.right,
        'epsilon': None if tunnel.eps is None else num(tunnel.eps),
        'metadata': tunnel.metadata,
        'prior': {k: num(v) for k, v in tunnel.prior.items()},
        'bounds': bounds,
        'stages': [t.kind for t in tunnel.parents],
    }
