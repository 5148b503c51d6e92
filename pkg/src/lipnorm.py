"""
Lip-norms as gauges of balls

Monge-Kantorovich distances and diameters of state spaces, permissible
functions and their sampled verification, quasi-Leibniz certification, the
Lipschitz seminorm of a finite metric space and the max of two Lip-norms.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import FiniteCStarAlgebra, HermitianElement, StateFunctional, jordan, lie
from .convexopt import (
    INF,
    Ball,
    HRepBall,
    LinearTerm,
    PulledBackTerm,
    SpectralFunctional,
    VRepBall,
    dc_maximize,
    section_polytope,
    support_point,
    support_points,
    to_vrep,
)
from .errors import AlgebraMismatchError, InputError, InvalidObjectError
from .settings import setting

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Permissible functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PermissibleFunction:
    """
    F(x, y, l_x, l_y) bounding L(a∘b) and L({a,b}) in terms of norms and
    Lip-norms of a and b

    ``tag`` is one of cd, power, sum, max, custom; ``params`` holds (C, D) for
    cd and (p, C, D) for power.
    """

    evaluator: Callable[[float, float, float, float], float]
    tag: str = "custom"
    params: Tuple[float, ...] = ()
    label: str = ""

    def __call__(self, x: float, y: float, lx: float, ly: float) -> float:
        return float(self.evaluator(x, y, lx, ly))

    @property
    def constants(self) -> Optional[Tuple[float, float]]:
        """(C, D) for the cd family"""
        return (self.params[0], self.params[1]) if self.tag == "cd" else None

    @classmethod
    def cd(cls, C: float, D: float) -> 'PermissibleFunction':
        C, D = float(C), float(D)
        return cls(
            lambda x, y, lx, ly: C * (x * ly + y * lx) + D * lx * ly,
            "cd", (C, D), f"F_{{{C:g},{D:g}}}",
        )

    @classmethod
    def power(cls, p: float, C: float, D: float) -> 'PermissibleFunction':
        p, C, D = float(p), float(C), float(D)
        if p < 1:
            raise InputError(f"The power family needs p ≥ 1, got {p}")

        def evaluator(x, y, lx, ly):
            return C * ((x * ly) ** p + (y * lx) ** p + D * (lx * ly) ** p) ** (1.0 / p)

        return cls(evaluator, "power", (p, C, D), f"F^{p:g}_{{{C:g},{D:g}}}")

    @classmethod
    def custom(cls, fn: Callable[[float, float, float, float], float], label: str = "custom") -> 'PermissibleFunction':
        return cls(fn, "custom", (), label)

    def __add__(self, other: 'PermissibleFunction') -> 'PermissibleFunction':
        if self.tag == "cd" and other.tag == "cd":
            return PermissibleFunction.cd(self.params[0] + other.params[0], self.params[1] + other.params[1])
        return PermissibleFunction(
            lambda *q: self(*q) + other(*q), "sum", (), f"{self.label}+{other.label}"
        )

    def pointwise_max(self, other: 'PermissibleFunction') -> 'PermissibleFunction':
        """max(F, G); for two cd functions the dominating F_{max C, max D}"""
        if self.tag == "cd" and other.tag == "cd":
            return PermissibleFunction.cd(max(self.params[0], other.params[0]), max(self.params[1], other.params[1]))
        return PermissibleFunction(
            lambda *q: max(self(*q), other(*q)), "max", (), f"max({self.label},{other.label})"
        )


@dataclass
class PermissibleReport:
    permissible: bool
    strongly_permissible: Optional[bool]
    samples: int
    counterexample: Optional[Dict] = None

    def to_dict(self) -> Dict:
        return {
            'permissible': self.permissible,
            'strongly_permissible': self.strongly_permissible,
            'samples': self.samples,
            'counterexample': self.counterexample,
        }


def check_permissible(F: PermissibleFunction, strong: bool = False, sample_count: Optional[int] = None,
                      seed: Optional[int] = None) -> PermissibleReport:
    """
    Sampled verification of monotonicity and the lower bound x·l_y + y·l_x ≤ F,
    plus scaling and continuity when ``strong`` is set

    Args:
        F: The function to check
        strong: Also check λμ·F(x,y,l_x,l_y) ≤ F(λx,μy,λl_x,μl_y) and continuity
        sample_count: Number of quadruples drawn from [0, 10]^4
        seed: Generator seed

    Returns:
        PermissibleReport: Verdict and the first counterexample
    """
    sample_count = sample_count or setting('lipnorm', 'permissible_samples')
    rng = np.random.default_rng(setting('run', 'seed') if seed is None else seed)
    Q = rng.uniform(0.0, 10.0, size=(sample_count, 4))
    Q[0] = (1.0, 1.0, 1.0, 1.0)
    steps = rng.uniform(0.0, 2.0, size=(sample_count, 4)) * (rng.random((sample_count, 4)) < 0.7)

    def fail(check: str, **data) -> PermissibleReport:
        witness = {'check': check}
        witness.update({k: (np.round(v, 12).tolist() if isinstance(v, np.ndarray) else v) for k, v in data.items()})
        logger.info(f"✗ {F.label or F.tag}: {check} fails at {witness}")
        return PermissibleReport(False, False if strong else None, sample_count, witness)

    for q, step in zip(Q, steps):
        value = F(*q)
        lower = q[0] * q[3] + q[1] * q[2]
        if not np.isfinite(value) or value < lower - 1e-9 * max(1.0, lower):
            return fail("lower_bound", quadruple=q, value=value, bound=lower)
        bigger = F(*(q + step))
        if bigger < value - 1e-9 * max(1.0, abs(value)):
            return fail("monotone", quadruple=q, larger=q + step, value=value, larger_value=bigger)

    if not strong:
        return PermissibleReport(True, None, sample_count)

    scales = rng.uniform(0.0, 4.0, size=(sample_count, 2))
    for q, (lam, mu) in zip(Q, scales):
        x, y, lx, ly = q
        lhs = lam * mu * F(x, y, lx, ly)
        rhs = F(lam * x, mu * y, lam * lx, mu * ly)
        if lhs > rhs + 1e-9 * max(1.0, abs(rhs)):
            return PermissibleReport(True, False, sample_count, {
                'check': 'scaling', 'quadruple': np.round(q, 12).tolist(), 'lambda': lam, 'mu': mu,
            })
        base = F(*q)
        for i in range(4):
            shifted = q.copy()
            shifted[i] += 1e-7
            if abs(F(*shifted) - base) > 1e-4 * (1.0 + abs(base)):
                return PermissibleReport(True, False, sample_count, {
                    'check': 'continuity', 'quadruple': np.round(q, 12).tolist(), 'coordinate': i,
                })
    return PermissibleReport(True, True, sample_count)


# ---------------------------------------------------------------------------
# Metric spaces and Lip-norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Labelled points with a symmetric distance matrix"""

    labels: Tuple[str, ...]
    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        n = len(self.labels)
        if d.shape != (n, n):
            raise InputError(f"Distance matrix must be {n}x{n}, got {d.shape}")
        if n == 0:
            raise InvalidObjectError("A metric space needs at least one point")
        scale = max(1.0, float(d.max()))
        if np.max(np.abs(d - d.T)) > 1e-12 * scale:
            raise InvalidObjectError("Distance matrix is not symmetric")
        if np.max(np.abs(np.diag(d))) > 0:
            raise InvalidObjectError("Distance matrix must have a zero diagonal")
        off = d[~np.eye(n, dtype=bool)]
        if off.size and off.min() <= 0:
            raise InvalidObjectError("Distinct points must have positive distance")
        # d[i, k] ≤ d[i, j] + d[j, k] for all triples
        slack = d[:, None, :] - d[:, :, None] - d[None, :, :]
        if slack.size and slack.max() > 1e-12 * scale:
            i, j, k = np.unravel_index(int(np.argmax(slack)), slack.shape)
            raise InvalidObjectError(
                f"Triangle inequality fails at ({self.labels[i]}, {self.labels[j]}, {self.labels[k]})"
            )
        d = (d + d.T) / 2.0
        d.setflags(write=False)
        object.__setattr__(self, 'dist', d)
        object.__setattr__(self, 'labels', tuple(str(x) for x in self.labels))

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def algebra(self) -> FiniteCStarAlgebra:
        return FiniteCStarAlgebra((1,) * self.size)

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    @classmethod
    def from_matrix(cls, dist, labels: Optional[Sequence[str]] = None) -> 'FiniteMetricSpace':
        dist = np.asarray(dist, dtype=float)
        labels = labels if labels is not None else [str(i) for i in range(dist.shape[0])]
        return cls(tuple(labels), dist)

    @classmethod
    def from_points(cls, points, labels: Optional[Sequence[str]] = None) -> 'FiniteMetricSpace':
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        dist = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
        return cls.from_matrix(dist, labels)

    @classmethod
    def path(cls, n: int, step: float = 1.0) -> 'FiniteMetricSpace':
        return cls.from_points(np.arange(n, dtype=float)[:, None] * step)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, dim: int = 2) -> 'FiniteMetricSpace':
        return cls.from_points(rng.uniform(0.0, 1.0, size=(n, dim)))

    def scaled(self, t: float) -> 'FiniteMetricSpace':
        if t <= 0:
            raise InvalidObjectError("Scale factor must be positive")
        return FiniteMetricSpace(self.labels, t * self.dist)

    def lipschitz_constant(self, values: Sequence[float]) -> float:
        f = np.asarray(values, dtype=float)
        if self.size < 2:
            return 0.0
        iu = np.triu_indices(self.size, 1)
        return float(np.max(np.abs(f[:, None] - f[None, :])[iu] / self.dist[iu]))


@dataclass
class Certification:
    """Outcome of a quasi-Leibniz check"""

    passed: bool
    grade: str
    permissible: str
    worst_ratio: float
    pairs_checked: int
    counterexample: Optional[Dict] = None

    def to_dict(self) -> Dict:
        return {
            'passed': self.passed,
            'grade': self.grade,
            'permissible': self.permissible,
            'worst_ratio': self.worst_ratio,
            'pairs_checked': self.pairs_checked,
            'counterexample': self.counterexample,
        }


@dataclass(frozen=True, eq=False)
class LipNorm:
    """A Lip-norm given by its unit ball"""

    algebra: FiniteCStarAlgebra
    ball: Ball
    permissible: Optional[PermissibleFunction] = None
    certification: Optional[Certification] = None
    space: Optional[FiniteMetricSpace] = None
    label: str = ""

    def __post_init__(self):
        if self.ball.algebra != self.algebra:
            raise AlgebraMismatchError(f"Ball lives on {self.ball.algebra}, Lip-norm on {self.algebra}")

    def __call__(self, a: HermitianElement) -> float:
        return self.ball.gauge(a)

    @property
    def base_state(self) -> StateFunctional:
        return self.ball.base_state

    def certified(self, certification: Certification) -> 'LipNorm':
        return replace(self, certification=certification)

    def validate(self) -> 'LipNorm':
        """Checks L(1) = 0 and a bounded μ₀-section"""
        if self.ball.gauge_coords(self.algebra.unit_coords) > 1e-9:
            raise InvalidObjectError("The Lip-norm does not vanish on the unit")
        if not section_is_bounded(self.ball):
            raise InvalidObjectError("The μ₀-section of the Lip-norm ball is unbounded")
        return self


def section_is_bounded(ball: Ball) -> bool:
    if isinstance(ball, VRepBall):
        return True
    sec = ball.section
    limit = 0.5 * setting('lp', 'box_radius')
    for i in range(sec.dim):
        for sign in (1.0, -1.0):
            f = sign * sec.R[i]
            value, _ = support_point(ball, f)
            if not np.isfinite(value) or value > limit:
                return False
    return True


def _same_algebra(L: LipNorm, *states: StateFunctional):
    for phi in states:
        if phi.algebra != L.algebra:
            raise AlgebraMismatchError(f"State on {phi.algebra}, Lip-norm on {L.algebra}")


def mk_distance(L: LipNorm, phi: StateFunctional, psi: StateFunctional) -> float:
    """Monge-Kantorovich distance sup{(φ − ψ)(a) : L(a) ≤ 1}"""
    _same_algebra(L, phi, psi)
    f = np.asarray(phi.coords) - np.asarray(psi.coords)
    if np.linalg.norm(f) <= 1e-15:
        return 0.0
    return float(max(0.0, L.ball.support_value(f)))


def diameter_bracket(L: LipNorm) -> Tuple[float, float]:
    """(lower, upper) bracket of the diameter of the state space"""
    ball = L.ball
    if ball.section.dim == 0:
        return 0.0, 0.0
    spread = SpectralFunctional.spread(L.algebra)
    if isinstance(ball, VRepBall):
        value = float(np.max(spread.target.lambda_max_batch(ball.G.T @ spread.matrix.T), initial=0.0))
        return value, value
    if not section_is_bounded(ball):
        return INF, INF
    if ball.polyhedral and ball.section.dim <= setting('lipnorm', 'vertex_enum_max_dim'):
        V = section_polytope(ball).vertices
        value = float(np.max(spread.target.lambda_max_batch(V @ spread.matrix.T), initial=0.0))
        return value, value
    res = dc_maximize(spread, [], ball)
    return res.lower, res.upper


def diameter(L: LipNorm) -> float:
    """Diameter of the state space for the Monge-Kantorovich metric (certified upper value)"""
    return diameter_bracket(L)[1]


# ---------------------------------------------------------------------------
# Quasi-Leibniz certification
# ---------------------------------------------------------------------------


def _centered(x: np.ndarray, algebra: FiniteCStarAlgebra) -> np.ndarray:
    """x − ((λ_max + λ_min)/2)·1, the norm-minimizing shift along the unit"""
    hi = algebra.lambda_max_batch(x[None, :])[0]
    lo = -algebra.lambda_max_batch(-x[None, :])[0]
    return x - 0.5 * (hi + lo) * algebra.unit_coords


def quasi_leibniz_check(L: LipNorm, F: PermissibleFunction, rng: Optional[np.random.Generator] = None) -> Certification:
    """
    Check gauge(a∘b) ≤ F(‖a‖, ‖b‖, 1, 1) and gauge({a,b}) ≤ F(‖a‖, ‖b‖, 1, 1)

    Generator-grade checks run over all pairs of generators (raw and
    norm-centred along the unit line) plus random convex probes; balls with
    no small vertex description are checked on sampled extreme points.

    Args:
        L: The Lip-norm
        F: The permissible function
        rng: Generator for the probes

    Returns:
        Certification: Verdict, grade, worst ratio and the first failing pair
    """
    rng = rng or np.random.default_rng(setting('run', 'seed'))
    A = L.algebra
    ball = L.ball
    tol = setting('tolerances', 'quasi_leibniz')
    probes = setting('lipnorm', 'quasi_leibniz_probes')

    grade = "generator"
    if not isinstance(ball, VRepBall):
        if ball.polyhedral and ball.section.dim <= setting('lipnorm', 'vertex_enum_max_dim'):
            ball = to_vrep(ball)
        else:
            grade = "sampled"

    if grade == "generator":
        extreme = ball.G.T
    else:
        count = setting('lipnorm', 'extreme_directions')
        dirs = rng.normal(size=(count, ball.section.dim)) @ ball.section.R
        extreme = support_points(ball, dirs) if len(dirs) else np.zeros((0, A.real_dim_sa))

    if len(extreme) == 0:
        return Certification(True, grade, F.label, 0.0, 0)

    points = [x for g in extreme for x in (g, _centered(g, A))]
    pairs = [(i, j) for i in range(len(points)) for j in range(i, len(points))]
    for _ in range(probes):
        w1 = rng.dirichlet(np.ones(len(extreme))) * rng.choice([-1.0, 1.0], size=len(extreme))
        w2 = rng.dirichlet(np.ones(len(extreme))) * rng.choice([-1.0, 1.0], size=len(extreme))
        points.append(_centered(w1 @ extreme, A) + rng.normal() * A.unit_coords)
        points.append(w2 @ extreme)
        pairs.append((len(points) - 2, len(points) - 1))

    worst = 0.0
    counterexample = None
    for i, j in pairs:
        a, b = A.from_coords(points[i]), A.from_coords(points[j])
        bound = F(a.norm(), b.norm(), 1.0, 1.0)
        for kind, prod in (("jordan", jordan(a, b)), ("lie", lie(a, b))):
            value = ball.gauge(prod)
            if value <= tol:
                continue
            ratio = value / bound if bound > 0 else INF
            worst = max(worst, ratio)
            if value > bound + tol * max(1.0, bound) and counterexample is None:
                counterexample = {
                    'product': kind,
                    'a': np.round(a.coords, 12).tolist(),
                    'b': np.round(b.coords, 12).tolist(),
                    'gauge': value,
                    'bound': bound,
                }
    passed = counterexample is None
    marker = "✓" if passed else "✗"
    logger.info(f"{marker} quasi-Leibniz {F.label or F.tag} ({grade}): worst ratio {worst:.6g} over {len(pairs)} pairs")
    return Certification(passed, grade, F.label or F.tag, float(worst), len(pairs), counterexample)


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------


def lip_from_metric(X: FiniteMetricSpace) -> LipNorm:
    """Lipschitz seminorm of C(X): ball {f : |f(x) − f(y)| ≤ d(x, y)}"""
    A = X.algebra
    n = X.size
    if n == 1:
        ball: Ball = VRepBall(A, [])
    else:
        terms = []
        for i in range(n):
            for j in range(i + 1, n):
                ell = np.zeros(n)
                ell[i], ell[j] = 1.0, -1.0
                terms.append(LinearTerm(ell, float(X.dist[i, j])))
        ball = HRepBall(A, terms)
        if n <= 6:
            ball = to_vrep(ball)
    # Lipschitz seminorms satisfy the Leibniz inequality exactly
    cert = Certification(True, "structural", "F_{1,0}", 1.0, 0)
    return LipNorm(A, ball, PermissibleFunction.cd(1.0, 0.0), cert, X, f"Lip[{n} points]")


def _as_terms(ball: Ball) -> List:
    if isinstance(ball, HRepBall):
        return list(ball.terms)
    return [PulledBackTerm(ball, np.eye(ball.algebra.real_dim_sa))]


def max_lipnorms(L1: LipNorm, L2: LipNorm) -> LipNorm:
    """max(L1, L2): the intersection of the two balls"""
    if L1.algebra != L2.algebra:
        raise AlgebraMismatchError(f"Lip-norms live on {L1.algebra} and {L2.algebra}")
    ball: Ball = HRepBall(L1.algebra, _as_terms(L1.ball) + _as_terms(L2.ball), L1.base_state)
    if ball.polyhedral and ball.section.dim <= setting('lipnorm', 'vertex_enum_max_dim'):
        ball = to_vrep(ball)

    permissible = None
    if L1.permissible is not None and L2.permissible is not None:
        permissible = L1.permissible.pointwise_max(L2.permissible)
    cert = None
    if L1.certification and L2.certification and L1.certification.passed and L2.certification.passed:
        cert = Certification(
            True, "structural", permissible.label if permissible else "",
            max(L1.certification.worst_ratio, L2.certification.worst_ratio), 0,
        )
    return LipNorm(L1.algebra, ball, permissible, cert, L1.space if L1.space is L2.space else None,
                   f"max({L1.label},{L2.label})")


def section_invariance_check(L: LipNorm, state: StateFunctional, samples: int = 20,
                             rng: Optional[np.random.Generator] = None) -> float:
    """Largest gauge difference between the ball and its rebuild from another base state"""
    _same_algebra(L, state)
    rng = rng or np.random.default_rng(setting('run', 'seed'))
    other = L.ball.rebased(state)
    worst = 0.0
    for _ in range(samples):
        x = L.algebra.random_element(rng).coords
        worst = max(worst, abs(L.ball.gauge_coords(x) - other.gauge_coords(x)))
    return float(worst)
