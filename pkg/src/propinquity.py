"""
Upper bounds on the dual propinquity

Every bound here is witnessed by a tunnel: the propinquity is the infimum of
extents over an appropriate class, so each construction contributes the upper
end of its extent bracket. The module also holds the combinatorial side of the
comparison with the Gromov-Hausdorff distance (correspondence search, covering
numbers) and the two compactness procedures: greedy ε-nets of finite families
and limits of sequences on a fixed algebra.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .algebra import FiniteCStarAlgebra, PositiveUnitalMap, UnitalEmbedding
from .approx import Compression, approx_lipnorm, approx_tunnel, ball_points, pseudo_diagonal_witness
from .convexopt import Polytope, VRepBall, hausdorff_polytopes, section_polytope
from .errors import InputError, PreconditionError, PropinquityError
from .lipnorm import (
    Certification,
    FiniteMetricSpace,
    LipNorm,
    PermissibleFunction,
    diameter,
    quasi_leibniz_check,
)
from .settings import setting
from .tunnel import (
    Bracket,
    Tunnel,
    TunnelClass,
    bridge_tunnel,
    compose,
    correspondence_tunnel,
    distortion,
    extent,
    identity_tunnel,
    map_tunnel,
    standard_tunnel,
    tunnel_to_dict,
    _same_space,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("standard", "identity", "bridge", "correspondence", "approx")


def parallel_map(fn: Callable, items: Sequence, workers: Optional[int] = None) -> List:
    """Order-preserving map over a thread pool"""
    workers = workers or setting('run', 'workers')
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Bounds and families
# ---------------------------------------------------------------------------


@dataclass
class PropinquityBound:
    """An upper bound on the propinquity with the tunnel that witnesses it"""

    pair: Tuple[str, str]
    upper: float
    witness: Optional[Tunnel]
    witness_kind: str
    stages: List[Bracket]
    candidates: List[Dict] = field(default_factory=list)

    def to_dict(self, include_tunnel: bool = True) -> Dict:
        data = {
            'pair': list(self.pair),
            'upper': self.upper,
            'witness_kind': self.witness_kind,
            'stages': [{'extent_lb': b.lower, 'extent_ub': b.upper, 'gap_closed': b.gap_closed}
                       for b in self.stages],
            'candidates': self.candidates,
        }
        if include_tunnel and self.witness is not None:
            data['tunnel'] = tunnel_to_dict(self.witness)
        return data


@dataclass
class SpaceFamily:
    """
    Finitely many quantum metric spaces sharing a tunnel class

    Members without a certificate are checked against the class permissible
    function on construction.
    """

    members: List[LipNorm]
    labels: List[str]
    tunnel_class: TunnelClass
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.members) != len(self.labels):
            raise InputError("Every member of the family needs a label")
        F = self.tunnel_class.permissible
        for k, (L, label) in enumerate(zip(self.members, self.labels)):
            if L.certification is None or not self.tunnel_class.dominates(L.permissible):
                cert = quasi_leibniz_check(L, F)
                self.members[k] = replace(L, permissible=F, certification=cert, label=L.label or label)
            if not self.members[k].certification.passed:
                raise PreconditionError(
                    f"Member {label} is not {F.label}-quasi-Leibniz",
                    witness=self.members[k].certification.counterexample,
                )
        self.metadata.setdefault('closure_assumed', True)

    def __len__(self) -> int:
        return len(self.members)


def _class_for(L_a: LipNorm, L_b: LipNorm, tunnel_class: Optional[TunnelClass]) -> TunnelClass:
    if tunnel_class is not None:
        return tunnel_class
    for L in (L_a, L_b):
        if L.certification is None or not L.certification.passed:
            raise PreconditionError(f"{L.label or L.algebra} has no passing quasi-Leibniz certificate")
    return TunnelClass(L_a.permissible.pointwise_max(L_b.permissible))


def _identity_bridge(L_a: LipNorm, L_b: LipNorm, lam: float) -> Tunnel:
    A = L_a.algebra
    target = FiniteCStarAlgebra((A.unit_size,))
    rho = UnitalEmbedding(A, target, (1,) * len(A.blocks))
    return bridge_tunnel(L_a, L_b, rho, rho, np.eye(A.unit_size), lam)


def _candidate_tunnels(L_a: LipNorm, L_b: LipNorm, strategies: Set[str], pivots: Sequence[Dict],
                       psi: Optional[PositiveUnitalMap], psi_eps: Sequence[float]) -> Iterable:
    """(strategy, detail, builder) for every construction that applies"""
    Dm = max(diameter(L_a), diameter(L_b))
    scale = Dm if Dm > 0 else 1.0
    if "standard" in strategies:
        for factor in setting('propinquity', 'standard_eps_factors'):
            eps = factor * scale
            yield "standard", {'epsilon': eps}, lambda eps=eps: standard_tunnel(L_a, L_b, eps)
    if "identity" in strategies and _same_space(L_a, L_b):
        lam = setting('propinquity', 'identity_floor') * scale
        yield "identity", {'lambda': lam}, lambda: _identity_bridge(L_a, L_b, lam)
    if "bridge" in strategies:
        for k, spec in enumerate(pivots):
            yield "bridge", {'pivot': k, 'lambda': spec['lam']}, lambda spec=spec: bridge_tunnel(
                L_a, L_b, spec['rho_a'], spec['rho_b'], spec['pivot'], spec['lam'])
    if "correspondence" in strategies and L_a.space is not None and L_b.space is not None:
        X, Y = L_a.space, L_b.space
        gh = gh_distance(X, Y)
        yield "correspondence", {'gh': gh.value, 'exact': gh.exact}, \
            lambda: correspondence_tunnel(X, Y, gh.correspondence)
    if "approx" in strategies and psi is not None:
        for eps in psi_eps:
            yield "approx", {'epsilon': eps}, lambda eps=eps: map_tunnel(L_a, L_b, psi, eps, kind="map")


def propinquity_upper(L_a: LipNorm, L_b: LipNorm, strategies: Optional[Iterable[str]] = None,
                      pivots: Sequence[Dict] = (), psi: Optional[PositiveUnitalMap] = None,
                      psi_eps: Sequence[float] = (), tunnel_class: Optional[TunnelClass] = None,
                      labels: Optional[Tuple[str, str]] = None, gap: Optional[float] = None,
                      witnesses: Sequence[Tunnel] = ()) -> PropinquityBound:
    """
    Smallest extent upper bound over the tunnels the enabled strategies build

    Args:
        L_a: Lip-norm of the first space
        L_b: Lip-norm of the second space
        strategies: Subset of standard, identity, bridge, correspondence, approx
        pivots: Bridge data, each {'rho_a', 'rho_b', 'pivot', 'lam'}
        psi: A unital positive map A -> B for the approx strategy
        psi_eps: Coupling radii tried with ψ
        tunnel_class: The class tunnels must belong to; defaults to the
            max of the two certified permissible functions
        labels: Names of the two spaces in the report
        gap: DC gap target for the extent brackets
        witnesses: Prebuilt tunnels from A to B entered as candidates

    Returns:
        PropinquityBound: The best bound, its witness and every candidate tried
    """
    strategies = set(strategies or STRATEGIES)
    unknown = strategies - set(STRATEGIES)
    if unknown:
        raise InputError(f"Unknown strategies {sorted(unknown)}")
    strategies.add("standard")
    cls = _class_for(L_a, L_b, tunnel_class)
    pair = labels or (L_a.label or L_a.algebra.label, L_b.label or L_b.algebra.label)

    supplied = [(t.kind, {'supplied': k}, lambda t=t: t) for k, t in enumerate(witnesses)]
    for t in witnesses:
        if t.factors[0].algebra != L_a.algebra or t.factors[1].algebra != L_b.algebra:
            raise InputError(f"Supplied {t.kind} tunnel does not join {L_a.algebra} to {L_b.algebra}")

    best: Optional[Tuple[float, Tunnel, str]] = None
    candidates = []
    builders = itertools.chain(_candidate_tunnels(L_a, L_b, strategies, pivots, psi, psi_eps), supplied)
    for strategy, detail, build in builders:
        record = {'strategy': strategy, **detail}
        try:
            tunnel = build()
            if not cls.contains(tunnel):
                tunnel = cls.certify(tunnel)
                if not cls.contains(tunnel):
                    record.update(status="outside_class")
                    candidates.append(record)
                    continue
            br = extent(tunnel, gap)
        except PreconditionError as e:
            logger.info(f"✗ {strategy} tunnel rejected: {e}")
            record.update(status="rejected", error=str(e))
            candidates.append(record)
            continue
        record.update(status="ok", extent=br.to_list(), gap_closed=br.gap_closed)
        candidates.append(record)
        logger.info(f"✓ {strategy} tunnel: extent in [{br.lower:.6g}, {br.upper:.6g}]")
        if best is None or br.upper < best[0]:
            best = (br.upper, tunnel, strategy)

    if best is None:
        raise PropinquityError(f"No tunnel could be built between {pair[0]} and {pair[1]}")
    upper, witness, kind = best
    logger.info(f"Propinquity({pair[0]}, {pair[1]}) ≤ {upper:.6g} via {kind}")
    return PropinquityBound(pair, float(max(0.0, upper)), witness, kind, [extent(witness, gap)], candidates)


def chain_bound(t1: Tunnel, t2: Tunnel, eps: Optional[float] = None,
                labels: Optional[Tuple[str, str]] = None) -> PropinquityBound:
    """Triangle inequality: the composed tunnel bounds the distance between the outer spaces"""
    tau = compose(t1, t2, eps)
    br = extent(tau)
    pair = labels or (t1.factors[0].label or str(t1.factors[0].algebra),
                      t2.factors[1].label or str(t2.factors[1].algebra))
    logger.info(f"Chained bound {br.upper:.6g} ≤ {extent(t1).upper:.6g} + {extent(t2).upper:.6g} + {tau.eps:.3g}")
    return PropinquityBound(pair, br.upper, tau, "composed", [extent(t1), extent(t2)])


def pairwise_bounds(family: SpaceFamily, strategies: Optional[Iterable[str]] = None,
                    workers: Optional[int] = None) -> pd.DataFrame:
    """Symmetric matrix of propinquity upper bounds, one cell per pair"""
    n = len(family)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def cell(pair):
        i, j = pair
        bound = propinquity_upper(family.members[i], family.members[j], strategies,
                                  tunnel_class=family.tunnel_class,
                                  labels=(family.labels[i], family.labels[j]))
        return bound.upper

    logger.info(f"Computing {len(pairs)} pairwise bounds")
    values = parallel_map(cell, pairs, workers)
    matrix = np.zeros((n, n))
    for (i, j), v in zip(pairs, values):
        matrix[i, j] = matrix[j, i] = v
    return pd.DataFrame(matrix, index=family.labels, columns=family.labels)


# ---------------------------------------------------------------------------
# Gromov-Hausdorff distance and covering numbers
# ---------------------------------------------------------------------------


@dataclass
class GHEstimate:
    """Half the distortion of a correspondence; exact when found by full search"""

    value: float
    correspondence: List[Tuple[int, int]]
    exact: bool
    nodes: int = 0

    def to_dict(self) -> Dict:
        return {
            'value': self.value,
            'correspondence': [list(p) for p in self.correspondence],
            'exact': self.exact,
            'nodes': self.nodes,
        }


class _CorrespondenceSearch:
    """
    Branch and bound over minimal correspondences

    Every correspondence contains the graph of some f: X -> Y together with
    one partner for each y outside the image of f, and distortion only grows
    with R, so these unions realise the minimum.
    """

    def __init__(self, X: FiniteMetricSpace, Y: FiniteMetricSpace):
        self.dx, self.dy = X.dist, Y.dist
        self.n, self.m = X.size, Y.size
        ecc_x, ecc_y = self.dx.max(axis=1), self.dy.max(axis=1)
        # try partners with similar eccentricity first
        self.order_y = [list(np.argsort(np.abs(ecc_y - ecc_x[i]))) for i in range(self.n)]
        self.order_x = [list(np.argsort(np.abs(ecc_x - ecc_y[j]))) for j in range(self.m)]
        self.floor = abs(self.dx.max() - self.dy.max())
        self.best = np.inf
        self.best_pairs: List[Tuple[int, int]] = []
        self.nodes = 0

    def _extend(self, xs: List[int], ys: List[int], x: int, y: int, cur: float) -> float:
        if not xs:
            return cur
        return max(cur, float(np.max(np.abs(self.dx[x, xs] - self.dy[y, ys]))))

    def run(self) -> Tuple[float, List[Tuple[int, int]], int]:
        self._assign_x(0, [], [], 0.0)
        return self.best, self.best_pairs, self.nodes

    def _done(self) -> bool:
        return self.best <= self.floor + 1e-15

    def _assign_x(self, i: int, xs: List[int], ys: List[int], cur: float):
        if self._done():
            return
        if i == self.n:
            uncovered = [j for j in range(self.m) if j not in set(ys)]
            self._assign_y(uncovered, 0, xs, ys, cur)
            return
        for y in self.order_y[i]:
            self.nodes += 1
            new = self._extend(xs, ys, i, y, cur)
            if new >= self.best:
                continue
            self._assign_x(i + 1, xs + [i], ys + [int(y)], new)

    def _assign_y(self, uncovered: List[int], k: int, xs: List[int], ys: List[int], cur: float):
        if self._done():
            return
        if k == len(uncovered):
            self.best = cur
            self.best_pairs = list(zip(xs, ys))
            return
        j = uncovered[k]
        for x in self.order_x[j]:
            self.nodes += 1
            new = self._extend(xs, ys, int(x), j, cur)
            if new >= self.best:
                continue
            self._assign_y(uncovered, k + 1, xs + [int(x)], ys + [j], new)


def _gh_heuristic(X: FiniteMetricSpace, Y: FiniteMetricSpace, restarts: int,
                  rng: np.random.Generator) -> Tuple[float, List[Tuple[int, int]]]:
    """Random functions X -> Y improved by single-point moves"""
    n, m = X.size, Y.size

    def build(f: np.ndarray) -> List[Tuple[int, int]]:
        pairs = [(i, int(f[i])) for i in range(n)]
        covered = set(f.tolist())
        for j in range(m):
            if j not in covered:
                # partner minimising the added distortion
                xs = np.array([p[0] for p in pairs])
                ys = np.array([p[1] for p in pairs])
                costs = [np.max(np.abs(X.dist[i, xs] - Y.dist[j, ys])) for i in range(n)]
                pairs.append((int(np.argmin(costs)), j))
        return pairs

    best, best_pairs = np.inf, []
    for _ in range(restarts):
        f = rng.integers(m, size=n)
        value = distortion(X, Y, build(f))
        improved = True
        while improved:
            improved = False
            for i in range(n):
                for y in range(m):
                    if y == f[i]:
                        continue
                    g = f.copy()
                    g[i] = y
                    v = distortion(X, Y, build(g))
                    if v < value - 1e-15:
                        f, value, improved = g, v, True
        if value < best:
            best, best_pairs = value, build(f)
    return best, best_pairs


def gh_distance(X: FiniteMetricSpace, Y: FiniteMetricSpace, max_pairs: Optional[int] = None,
                rng: Optional[np.random.Generator] = None) -> GHEstimate:
    """
    Gromov-Hausdorff distance as half the least distortion of a correspondence

    Exact by pruned search while |X|·|Y| stays within ``max_pairs``; beyond
    that an upper bound from local search, flagged as not exact.
    """
    cap = max_pairs or setting('propinquity', 'gh_max_pairs')
    if X.size * Y.size > cap:
        logger.warning(f"|X|·|Y| = {X.size * Y.size} exceeds {cap}: heuristic upper bound only")
        rng = rng or np.random.default_rng(setting('run', 'seed'))
        value, pairs = _gh_heuristic(X, Y, setting('propinquity', 'gh_restarts'), rng)
        return GHEstimate(value / 2.0, pairs, False)
    value, pairs, nodes = _CorrespondenceSearch(X, Y).run()
    logger.debug(f"Correspondence search visited {nodes} nodes")
    return GHEstimate(value / 2.0, sorted(pairs), True, nodes)


def metric_cover(X: FiniteMetricSpace, eps: float) -> Tuple[List[int], bool]:
    """Centres of a smallest cover by closed ε-balls (exact up to the configured size)"""
    if eps <= 0:
        raise InputError(f"ε must be positive, got {eps}")
    covers = X.dist <= eps + 1e-12
    n = X.size
    if n <= setting('propinquity', 'exact_cover_max'):
        for k in range(1, n + 1):
            for centres in itertools.combinations(range(n), k):
                if covers[list(centres)].any(axis=0).all():
                    return list(centres), True
    centres = []
    left = np.ones(n, dtype=bool)
    while left.any():
        gains = (covers & left[None, :]).sum(axis=1)
        c = int(np.argmax(gains))
        centres.append(c)
        left &= ~covers[c]
    return centres, False


def metric_cov_number(X: FiniteMetricSpace, eps: float) -> int:
    """Smallest number of closed ε-balls covering X"""
    return len(metric_cover(X, eps)[0])


# ---------------------------------------------------------------------------
# Covering numbers of quantum metric spaces
# ---------------------------------------------------------------------------


@dataclass
class CoveringEstimate:
    """Smallest dimension of a finite-dimensional space found within ε"""

    eps: float
    dimension: Optional[int]
    bound: Optional[float]
    witness: str
    status: str
    candidates: List[Dict]

    def to_dict(self) -> Dict:
        return {
            'epsilon': self.eps,
            'dimension': self.dimension,
            'bound': self.bound,
            'witness': self.witness,
            'status': self.status,
            'candidates': self.candidates,
        }


def covering_number_estimate(L: LipNorm, eps: float, budget: Optional[int] = None) -> CoveringEstimate:
    """
    Upper bound on the covering number by searching compressions of A

    Candidates, in increasing complex dimension: the one-point space, the
    corners and block-diagonal pinchings of A run through the approximation
    pipeline at ε/4, and A itself at distance 0.
    """
    if eps <= 0:
        raise InputError(f"ε must be positive, got {eps}")
    budget = budget or setting('propinquity', 'covering_budget')
    A = L.algebra
    F = L.permissible or PermissibleFunction.cd(1.0, 0.0)
    point = FiniteCStarAlgebra((1,))
    # every seminorm on C vanishes identically
    L_point = LipNorm(point, VRepBall(point, []), F, Certification(True, "structural", F.label, 0.0, 0), label="C")
    delta = eps / 4.0
    dense = ball_points(L)

    def score_point() -> float:
        return propinquity_upper(L, L_point, {"standard"}, tunnel_class=TunnelClass(F)).upper

    def score(compression: Compression) -> float:
        witness = pseudo_diagonal_witness(A, dense, delta, compression)
        approx = approx_lipnorm(L, witness.psi, delta, phi=witness.phi, strict=False)
        tunnel = approx_tunnel(L, approx)
        bound = propinquity_upper(L, approx.lipnorm, {"standard"}, tunnel_class=TunnelClass(approx.permissible),
                                  witnesses=[tunnel])
        return bound.upper

    plan: List[Tuple[int, str, Callable[[], float]]] = [(1, "point", score_point)]
    # every Lip-norm on C is zero, so the point candidate stands for all of them
    proper = [c for c in Compression.candidates(A) if c.target.dim_complex > 1]
    for comp in proper[:budget]:
        plan.append((comp.target.dim_complex, comp.label, lambda comp=comp: score(comp)))
    plan.append((A.dim_complex, "self", lambda: extent(identity_tunnel(L)).upper))
    plan.sort(key=lambda item: item[0])

    records = []
    for dim, label, fn in plan:
        try:
            value = float(fn())
        except PropinquityError as e:
            logger.info(f"✗ dimension {dim} ({label}) rejected: {e}")
            records.append({'dimension': dim, 'witness': label, 'status': 'rejected', 'error': str(e)})
            continue
        records.append({'dimension': dim, 'witness': label, 'bound': value, 'status': 'ok'})
        marker = "✓" if value <= eps else "✗"
        logger.info(f"{marker} dimension {dim} ({label}): bound {value:.6g} vs ε = {eps:g}")
        if value <= eps:
            return CoveringEstimate(eps, dim, value, label, "found", records)
    return CoveringEstimate(eps, None, None, "", "no witness within budget", records)


# ---------------------------------------------------------------------------
# Compactness
# ---------------------------------------------------------------------------


@dataclass
class TotalBoundedness:
    eps: float
    net: List[str]
    bounds: pd.DataFrame
    assignment: Dict[str, str]
    certified: bool

    def to_dict(self) -> Dict:
        return {
            'epsilon': self.eps,
            'net': self.net,
            'net_size': len(self.net),
            'assignment': self.assignment,
            'certified': self.certified,
            'bounds': self.bounds.round(12).values.tolist(),
            'labels': list(self.bounds.index),
        }


def total_boundedness_check(family: SpaceFamily, eps: float, strategies: Optional[Iterable[str]] = None,
                            workers: Optional[int] = None) -> TotalBoundedness:
    """Greedy ε-net of a finite family from its pairwise bound matrix"""
    if eps <= 0:
        raise InputError(f"ε must be positive, got {eps}")
    bounds = pairwise_bounds(family, strategies, workers)
    D = bounds.values
    n = len(family)
    net: List[int] = []
    for i in range(n):
        if not any(D[i, j] <= eps for j in net):
            net.append(i)
    assignment = {}
    for i in range(n):
        j = min(net, key=lambda k: D[i, k])
        assignment[family.labels[i]] = family.labels[j]
    certified = all(min(D[i, j] for j in net) <= eps for i in range(n))
    logger.info(f"{'✓' if certified else '✗'} ε-net of size {len(net)} for {n} spaces at ε = {eps:g}")
    return TotalBoundedness(eps, [family.labels[i] for i in net], bounds, assignment, certified)


@dataclass
class SequenceLimit:
    """Outcome of the limit procedure on a sequence of Lip-norms on one algebra"""

    converged: bool
    limit: Optional[LipNorm]
    method: str
    group: Tuple[int, ...]
    indices: List[int]
    cauchy_start: Optional[int]
    window_max: Optional[float]
    stages: List[Dict]
    certification: Optional[Dict] = None

    @property
    def uppers(self) -> List[float]:
        return [s['extent'][1] for s in self.stages]

    @property
    def monotone(self) -> bool:
        u = self.uppers
        return all(b <= a + 1e-9 for a, b in zip(u, u[1:]))

    def to_dict(self) -> Dict:
        limit = None
        if self.limit is not None:
            limit = {
                'algebra': self.limit.algebra.label,
                'generators': np.round(self.limit.ball.G.T, 12).tolist(),
            }
        return {
            'converged': self.converged,
            'method': self.method,
            'group': list(self.group),
            'indices': self.indices,
            'cauchy_start': self.cauchy_start,
            'window_max': self.window_max,
            'limit': limit,
            'certification': self.certification,
            'stages': self.stages,
            'monotone': self.monotone,
        }


def _tracked_limit(polys: List[np.ndarray], h: np.ndarray) -> Optional[np.ndarray]:
    """Match vertices along the tail and extrapolate each one to h = 0"""
    ref = polys[-1]
    if any(len(P) != len(ref) for P in polys):
        return None
    tracks = []
    for P in polys:
        cost = np.linalg.norm(P[:, None, :] - ref[None, :, :], axis=-1)
        rows, cols = linear_sum_assignment(cost)
        matched = np.empty_like(P)
        matched[cols] = P[rows]
        tracks.append(matched)
    tracks = np.array(tracks)
    deg = min(2, len(polys) - 1)
    limit = np.empty_like(ref)
    for v in range(ref.shape[0]):
        for c in range(ref.shape[1]):
            limit[v, c] = np.polyval(np.polyfit(h, tracks[:, v, c], deg), 0.0)
    return limit


def sequence_limit(seq: Sequence[LipNorm], tol: float, dim_cap: Optional[int] = None,
                   diameter_bound: Optional[float] = None, indices: Optional[Sequence[int]] = None,
                   permissible: Optional[PermissibleFunction] = None) -> SequenceLimit:
    """
    Limit of a sequence of polyhedral Lip-norms on algebras of bounded dimension

    Members are grouped by block pattern and the largest group is kept. On a
    fixed state its sections are compared in Hausdorff distance; the first
    window of consecutive members within ``tol`` starts the Cauchy tail. The
    limit section extrapolates tracked vertices over the tail (or takes the
    hull of the late vertex sets), and every tail member is joined to the limit
    by the tunnel max{L_n(a), L(b), ‖a − b‖/ε_n} with ε_n the Hausdorff
    distance of the sections, whose extent is at most 2ε_n.
    """
    if not seq:
        raise InputError("Empty sequence")
    indices = list(indices) if indices is not None else list(range(1, len(seq) + 1))
    if dim_cap is not None:
        big = [k for k, L in zip(indices, seq) if L.algebra.dim_complex > dim_cap]
        if big:
            raise InputError(f"Members {big} exceed the dimension cap {dim_cap}")
    if diameter_bound is not None:
        diams = [diameter(L) for L in seq]
        if max(diams) > diameter_bound + 1e-9:
            k = int(np.argmax(diams))
            raise PreconditionError(f"Member {indices[k]} has diameter {diams[k]:.6g} > {diameter_bound:g}",
                                    witness={'index': indices[k], 'diameter': diams[k]})

    groups: Dict[Tuple[int, ...], List[int]] = {}
    for pos, L in enumerate(seq):
        groups.setdefault(L.algebra.blocks, []).append(pos)
    pattern = max(groups, key=lambda b: (len(groups[b]), groups[b][-1]))
    members = groups[pattern]
    A = seq[members[0]].algebra
    state = A.trace_state()
    F = permissible or seq[members[0]].permissible or PermissibleFunction.cd(1.0, 0.0)
    logger.info("=" * 60)
    logger.info(f"Sequence limit on {A}: {len(members)} of {len(seq)} members")
    logger.info("=" * 60)

    polys = [section_polytope(seq[p].ball.rebased(state)).vertices for p in members]
    cache: Dict[Tuple[int, int], float] = {}

    def haus(i: int, j: int) -> float:
        key = (min(i, j), max(i, j))
        if key not in cache:
            cache[key] = hausdorff_polytopes(Polytope(A, polys[i]), Polytope(A, polys[j]))
        return cache[key]

    window = min(setting('propinquity', 'compactness_window'), len(members))
    start, window_max = None, None
    for s in range(len(members) - window + 1):
        worst = max((haus(i, j) for i in range(s, s + window) for j in range(i + 1, s + window)), default=0.0)
        logger.debug(f"Window at {indices[members[s]]}: max Hausdorff {worst:.3e}")
        if worst < tol:
            start, window_max = s, worst
            break
    member_indices = [indices[p] for p in members]
    if start is None:
        logger.warning(f"✗ No window of {window} consecutive members within {tol:g}")
        return SequenceLimit(False, None, "none", pattern, member_indices, None, None, [])

    tail = list(range(start, len(members)))
    late = tail[-setting('propinquity', 'extrapolation_points'):]
    h = np.array([1.0 / indices[members[k]] for k in late])
    V = _tracked_limit([polys[k] for k in late], h) if len(late) > 1 else polys[late[-1]]
    method = "extrapolation"
    if V is None:
        V = np.vstack([polys[k] for k in late[-window:]])
        method = "union"
    limit = LipNorm(A, VRepBall(A, list(V), state), F, label="limit")
    cert = quasi_leibniz_check(limit, F)
    limit = limit.certified(cert)
    limit_poly = Polytope(A, section_polytope(limit.ball).vertices)

    floor = setting('propinquity', 'identity_floor') * max(diameter(limit), 1e-12)
    identity = PositiveUnitalMap.identity(A)
    stages = []
    for k in tail:
        L_n = seq[members[k]]
        dist = hausdorff_polytopes(Polytope(A, polys[k]), limit_poly)
        eps_n = max(dist, floor) * (1.0 + 1e-6)
        tunnel = map_tunnel(L_n, limit, identity, eps_n, kind="sequence",
                            prior={'extent': 2.0 * eps_n, 'length': eps_n})
        br = extent(tunnel)
        stages.append({
            'index': indices[members[k]],
            'hausdorff': dist,
            'epsilon': eps_n,
            'extent': br.to_list(),
            'within_bound': bool(br.upper <= 2.0 * eps_n + 1e-9),
        })
        logger.info(f"n = {indices[members[k]]}: Haus {dist:.3e}, extent ≤ {br.upper:.6g}")
    logger.info(f"{'✓' if cert.passed else '✗'} limit ({method}) certified {F.label}: worst ratio {cert.worst_ratio:.4g}")
    return SequenceLimit(True, limit, method, pattern, member_indices, indices[members[start]], window_max,
                         stages, cert.to_dict())
