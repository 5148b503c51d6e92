"""
Convex geometry over the real coordinate space of sa(A)

Balls of Lip-norms (generator and constraint representations), their gauges
and support functions, a dense LP core, a cutting-plane engine that handles
every spectral constraint through eigenvector cuts, vertex enumeration of
polyhedral sections, Hausdorff distances between polytopes and the DC engine
that maximizes λ_max(cvx) − max_j λ_max(ccv_j) over a ball.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .algebra import (
    FiniteCStarAlgebra,
    HermitianElement,
    PositiveUnitalMap,
    StateFunctional,
    coords_to_matrix,
    matrix_to_coords,
)
from .errors import AlgebraMismatchError, InputError, InvalidObjectError
from .settings import setting

logger = logging.getLogger(__name__)

INF = float('inf')

# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------


@dataclass
class LPProblem:
    """
    Minimize (or maximize) c·x subject to A_i·x (<=, >=, =) b_i and
    per-variable bounds; ``None`` marks an infinite side.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Sequence[str]
    bounds: Optional[Sequence[Tuple[Optional[float], Optional[float]]]] = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise InputError(f"Constraint matrix must have {n} columns, got shape {A.shape}")
        self.A = A
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = tuple(self.senses)
        if self.b.size != A.shape[0] or len(self.senses) != A.shape[0]:
            raise InputError("Rows, right-hand sides and senses must have equal length")
        bad = [s for s in self.senses if s not in ('<=', '>=', '=')]
        if bad:
            raise InputError(f"Unknown constraint sense {bad[0]!r}")
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if len(self.bounds) != n:
            raise InputError(f"Expected {n} variable bounds, got {len(self.bounds)}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(self.b))):
            raise InputError("LP data must be finite")


@dataclass
class LPSolution:
    status: str
    value: float
    x: Optional[np.ndarray]
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == 'optimal'


def _pivot(tab: np.ndarray, r: int, j: int):
    tab[r] /= tab[r, j]
    col = tab[:, j].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])


def _pivot_loop(tab, basis, cost, allowed, tol, max_pivots) -> Tuple[str, int]:
    m = tab.shape[0]
    for it in range(max_pivots):
        reduced = cost - cost[basis] @ tab[:, :-1]
        entering = np.flatnonzero((reduced < -tol) & allowed)
        if entering.size == 0:
            return 'optimal', it
        j = int(entering[0])
        col = tab[:, j]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            return 'unbounded', it
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol]
        r = int(ties[np.argmin(np.asarray(basis)[ties])])
        _pivot(tab, r, j)
        basis[r] = j
    return 'iteration_limit', max_pivots


def _bland_simplex(p: LPProblem, tol: float, max_pivots: int) -> LPSolution:
    n = p.c.size
    columns = []
    x0 = np.zeros(n)
    upper_rows = []
    for i, (lo, hi) in enumerate(p.bounds):
        lo = -INF if lo is None else float(lo)
        hi = INF if hi is None else float(hi)
        if lo > hi:
            return LPSolution('infeasible', float('nan'), None)
        e = np.zeros(n)
        e[i] = 1.0
        if np.isfinite(lo):
            x0[i] = lo
            if np.isfinite(hi):
                upper_rows.append((len(columns), hi - lo))
            columns.append(e)
        elif np.isfinite(hi):
            x0[i] = hi
            columns.append(-e)
        else:
            columns.append(e)
            columns.append(-e)
    T = np.array(columns).T if columns else np.zeros((n, 0))
    N = T.shape[1]

    c = -p.c if p.maximize else p.c
    A = p.A @ T
    b = p.b - p.A @ x0
    senses = list(p.senses)
    for k, width in upper_rows:
        row = np.zeros(N)
        row[k] = 1.0
        A = np.vstack([A, row])
        b = np.append(b, width)
        senses.append('<=')
    m = A.shape[0]

    flip = {'<=': '>=', '>=': '<=', '=': '='}
    for r in range(m):
        if b[r] < 0:
            A[r] *= -1.0
            b[r] *= -1.0
            senses[r] = flip[senses[r]]

    n_slack = sum(1 for s in senses if s != '=')
    n_art = sum(1 for s in senses if s != '<=')
    total = N + n_slack + n_art
    tab = np.zeros((m, total + 1))
    tab[:, :N] = A
    tab[:, -1] = b
    basis = []
    is_art = np.zeros(total, dtype=bool)
    s_col, a_col = N, N + n_slack
    for r, sense in enumerate(senses):
        if sense == '<=':
            tab[r, s_col] = 1.0
            basis.append(s_col)
            s_col += 1
        else:
            if sense == '>=':
                tab[r, s_col] = -1.0
                s_col += 1
            tab[r, a_col] = 1.0
            is_art[a_col] = True
            basis.append(a_col)
            a_col += 1

    pivots = 0
    if n_art:
        cost1 = is_art.astype(float)
        status, it = _pivot_loop(tab, basis, cost1, np.ones(total, dtype=bool), tol, max_pivots)
        pivots += it
        infeasibility = float(cost1[basis] @ tab[:, -1])
        if infeasibility > setting('lp', 'feasibility') * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LPSolution('infeasible', float('nan'), None, pivots)
        keep = []
        for r in range(m):
            if is_art[basis[r]]:
                candidates = np.flatnonzero((np.abs(tab[r, :-1]) > tol) & ~is_art)
                if candidates.size == 0:
                    continue  # redundant row
                _pivot(tab, r, int(candidates[0]))
                basis[r] = int(candidates[0])
            keep.append(r)
        tab = tab[keep]
        basis = [basis[r] for r in keep]

    cost2 = np.zeros(total)
    cost2[:N] = c @ T
    status, it = _pivot_loop(tab, basis, cost2, ~is_art, tol, max_pivots)
    pivots += it
    if status != 'optimal':
        return LPSolution(status, float('nan'), None, pivots)
    y = np.zeros(total)
    y[basis] = tab[:, -1]
    x = x0 + T @ y[:N]
    return LPSolution('optimal', float(p.c @ x), x, pivots)


def _highs(p: LPProblem) -> LPSolution:
    c = -p.c if p.maximize else p.c
    le = [i for i, s in enumerate(p.senses) if s == '<=']
    ge = [i for i, s in enumerate(p.senses) if s == '>=']
    eq = [i for i, s in enumerate(p.senses) if s == '=']
    A_ub = np.vstack([p.A[le], -p.A[ge]]) if le or ge else None
    b_ub = np.concatenate([p.b[le], -p.b[ge]]) if le or ge else None
    A_eq = p.A[eq] if eq else None
    b_eq = p.b[eq] if eq else None
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=list(p.bounds), method='highs')
    if res.status == 0:
        return LPSolution('optimal', float(p.c @ res.x), np.asarray(res.x), int(res.nit))
    status = {1: 'iteration_limit', 2: 'infeasible', 3: 'unbounded'}.get(res.status, 'error')
    return LPSolution(status, float('nan'), None, int(getattr(res, 'nit', 0)))


def lp_solve(p: LPProblem, method: Optional[str] = None) -> LPSolution:
    """
    Solve an LP

    Args:
        p: The problem
        method: "bland" for the dense two-phase tableau with Bland's rule
            (default), "highs" for scipy's HiGHS backend

    Returns:
        LPSolution: status is optimal, infeasible or unbounded
    """
    method = method or 'bland'
    if method == 'bland':
        return _bland_simplex(p, setting('lp', 'bland_tolerance'), setting('lp', 'max_pivots'))
    if method == 'highs':
        return _highs(p)
    raise InputError(f"Unknown LP method {method!r}")


def solve_lp(p: LPProblem) -> LPSolution:
    """lp_solve with the configured backend"""
    return lp_solve(p, setting('lp', 'method'))


# ---------------------------------------------------------------------------
# Cutting-plane programs
# ---------------------------------------------------------------------------


def _block_tops(target: FiniteCStarAlgebra, y: np.ndarray) -> List[Tuple[float, np.ndarray]]:
    """Per block, λ_max and the coordinates of a top eigenstate"""
    tops = []
    for n, sl in zip(target.blocks, target.coord_slices):
        w = np.zeros(target.real_dim_sa)
        if n == 1:
            w[sl.start] = 1.0
            tops.append((float(y[sl.start]), w))
            continue
        vals, vecs = np.linalg.eigh(coords_to_matrix(y[sl], n))
        v = vecs[:, -1]
        w[sl] = matrix_to_coords(np.outer(v, v.conj()))
        tops.append((float(vals[-1]), w))
    return tops


@dataclass
class SpectralConstraint:
    """λ_max(M·z + offset) ≤ bound·z"""

    target: FiniteCStarAlgebra
    matrix: np.ndarray
    bound: np.ndarray
    offset: np.ndarray


@dataclass
class ProgramResult:
    status: str
    value: float
    z: Optional[np.ndarray]
    rounds: int
    converged: bool


class CuttingPlaneProgram:
    """
    An LP whose spectral constraints are enforced lazily by eigenvector cuts

    The relaxation value of a solve is a valid bound on the true optimum
    (an upper bound when maximizing); the optimizer may violate spectral
    constraints by at most the cut tolerance once ``converged`` is set.
    """

    def __init__(self, box_radius: Optional[float] = None):
        self.box_radius = float(box_radius or setting('lp', 'box_radius'))
        self.lower: List[float] = []
        self.upper: List[float] = []
        self._le: List[Tuple[np.ndarray, float]] = []
        self._eq: List[Tuple[np.ndarray, float]] = []
        self.constraints: List[SpectralConstraint] = []
        self._one: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.lower)

    def add_variables(self, count: int, lower: Optional[float] = None, upper: Optional[float] = None) -> np.ndarray:
        lo = -self.box_radius if lower is None else float(lower)
        hi = self.box_radius if upper is None else float(upper)
        start = self.n
        self.lower.extend([lo] * count)
        self.upper.extend([hi] * count)
        return np.arange(start, start + count)

    def one(self) -> int:
        """Index of a variable fixed to 1"""
        if self._one is None:
            self._one = int(self.add_variables(1, 1.0, 1.0)[0])
        return self._one

    def unit(self, index: int) -> np.ndarray:
        e = np.zeros(self.n)
        e[index] = 1.0
        return e

    def embed(self, matrix: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """A matrix acting on the given variables, as a map on all current variables"""
        matrix = np.atleast_2d(matrix)
        out = np.zeros((matrix.shape[0], self.n))
        out[:, indices] = matrix
        return out

    def _pad(self, arr: np.ndarray) -> np.ndarray:
        if arr.ndim == 1:
            return np.pad(arr, (0, self.n - arr.size))
        return np.pad(arr, ((0, 0), (0, self.n - arr.shape[1])))

    def add_le(self, row: np.ndarray, rhs: float = 0.0):
        self._le.append((np.asarray(row, dtype=float).copy(), float(rhs)))

    def add_eq(self, rows: np.ndarray, rhs):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (rows.shape[0],))
        for row, b in zip(rows, rhs):
            self._eq.append((row.copy(), float(b)))

    def add_spectral(self, target: FiniteCStarAlgebra, matrix: np.ndarray, bound: np.ndarray, offset=None):
        offset = np.zeros(target.real_dim_sa) if offset is None else np.asarray(offset, dtype=float)
        con = SpectralConstraint(target, self._pad(np.asarray(matrix, dtype=float)),
                                 self._pad(np.asarray(bound, dtype=float)), offset)
        self.constraints.append(con)
        for w in target.seed_state_coords:
            self._cut(con, w)

    def add_norm_bound(self, target: FiniteCStarAlgebra, matrix: np.ndarray, bound: np.ndarray, offset=None):
        """‖M·z + offset‖ ≤ bound·z"""
        offset = np.zeros(target.real_dim_sa) if offset is None else np.asarray(offset, dtype=float)
        self.add_spectral(target, matrix, bound, offset)
        self.add_spectral(target, -np.asarray(matrix, dtype=float), bound, -offset)

    def _cut(self, con: SpectralConstraint, w: np.ndarray):
        self._le.append((w @ con.matrix - con.bound, -float(w @ con.offset)))

    def _separate(self, z: np.ndarray, tol: float) -> int:
        added = 0
        for con in self.constraints:
            M = self._pad(con.matrix)
            h = self._pad(con.bound) @ z
            y = M @ z + con.offset
            for val, w in _block_tops(con.target, y):
                if val - h > tol * max(1.0, abs(h)):
                    self._cut(con, w)
                    added += 1
        return added

    def _problem(self, objective: np.ndarray, maximize: bool) -> LPProblem:
        rows = [self._pad(r) for r, _ in self._le] + [self._pad(r) for r, _ in self._eq]
        A = np.array(rows) if rows else np.zeros((0, self.n))
        b = [rhs for _, rhs in self._le] + [rhs for _, rhs in self._eq]
        senses = ['<='] * len(self._le) + ['='] * len(self._eq)
        return LPProblem(self._pad(np.asarray(objective, dtype=float)), A, b, senses,
                         list(zip(self.lower, self.upper)), maximize)

    def solve(self, objective: np.ndarray, maximize: bool = True, tol: Optional[float] = None,
              max_rounds: Optional[int] = None) -> ProgramResult:
        tol = setting('cutting_plane', 'gap') if tol is None else tol
        max_rounds = max_rounds or setting('cutting_plane', 'max_rounds')
        sol = None
        for rounds in range(1, max_rounds + 1):
            sol = solve_lp(self._problem(objective, maximize))
            if not sol.optimal:
                return ProgramResult(sol.status, float('nan'), None, rounds, False)
            if self._separate(sol.x, tol) == 0:
                return ProgramResult('optimal', sol.value, sol.x, rounds, True)
        logger.debug(f"Cutting-plane loop stopped after {max_rounds} rounds")
        return ProgramResult('optimal', sol.value, sol.x, max_rounds, False)


# ---------------------------------------------------------------------------
# Sections and vertex enumeration
# ---------------------------------------------------------------------------


class Section:
    """Reduced coordinates y of the slice {x : μ₀(x) = 0}, x = Q·y"""

    def __init__(self, algebra: FiniteCStarAlgebra, base_state: StateFunctional):
        w = np.asarray(base_state.coords)
        self.algebra = algebra
        self.w = w
        self.Q = null_space(w[None, :])
        self.R = self.Q.T @ (np.eye(algebra.real_dim_sa) - np.outer(algebra.unit_coords, w))

    @property
    def dim(self) -> int:
        return self.Q.shape[1]

    def lift(self, y: np.ndarray) -> np.ndarray:
        return self.Q @ y

    def reduce(self, x: np.ndarray) -> np.ndarray:
        return self.R @ x

    def project(self, x: np.ndarray) -> np.ndarray:
        """x − μ₀(x)·1"""
        return x - (self.w @ x) * self.algebra.unit_coords


def _unique_rows(points: np.ndarray, decimals: int = 9) -> np.ndarray:
    if points.size == 0:
        return points
    _, idx = np.unique(np.round(points, decimals), axis=0, return_index=True)
    return points[np.sort(idx)]


def enumerate_vertices(A: np.ndarray, b: np.ndarray, interior: np.ndarray) -> np.ndarray:
    """
    Vertices of the bounded polyhedron {y : A·y ≤ b}

    Args:
        A, b: Halfspace rows
        interior: A strictly interior point

    Returns:
        np.ndarray: Vertex array, one vertex per row
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    interior = np.asarray(interior, dtype=float)
    d = interior.size
    if d == 0:
        return np.zeros((1, 0))
    norms = np.linalg.norm(A, axis=1)
    live = norms > 1e-14
    if np.any(b[~live] < -1e-12):
        raise InvalidObjectError("Polyhedron is empty")
    A = A[live] / norms[live, None]
    b = b[live] / norms[live]
    if np.any(b - A @ interior <= 0):
        raise InvalidObjectError("Interior point is not strictly inside the polyhedron")
    if d == 1:
        a = A[:, 0]
        hi = np.min(b[a > 0] / a[a > 0]) if np.any(a > 0) else INF
        lo = np.max(b[a < 0] / a[a < 0]) if np.any(a < 0) else -INF
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise InvalidObjectError("Polyhedron is unbounded")
        return np.array([[lo], [hi]])
    halfspaces = np.hstack([A, -b[:, None]])
    try:
        hs = HalfspaceIntersection(halfspaces, interior)
    except QhullError:
        logger.debug("Halfspace intersection failed, retrying with joggled input")
        hs = HalfspaceIntersection(halfspaces, interior, qhull_options="QJ")
    points = hs.intersections
    if not np.all(np.isfinite(points)) or np.max(np.abs(points)) > 1e12:
        raise InvalidObjectError("Polyhedron is unbounded")
    return _unique_rows(points)


def _hull_facets(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Facet rows (a·y ≤ 1) of the convex hull of points containing 0 in its interior"""
    d = points.shape[1]
    if d == 0:
        return np.zeros((0, 0)), np.zeros(0)
    if d == 1:
        lo, hi = points[:, 0].min(), points[:, 0].max()
        return np.array([[1.0 / hi], [1.0 / lo]]), np.ones(2)
    try:
        hull = ConvexHull(points)
    except QhullError:
        hull = ConvexHull(points, qhull_options="QJ")
    normals = hull.equations[:, :-1]
    offsets = -hull.equations[:, -1]
    rows = _unique_rows(normals / offsets[:, None])
    return rows, np.ones(len(rows))


def _hull_vertices(points: np.ndarray) -> np.ndarray:
    d = points.shape[1]
    if d == 0 or len(points) <= d + 1:
        return _unique_rows(points)
    if d == 1:
        return np.array([[points[:, 0].min()], [points[:, 0].max()]])
    try:
        hull = ConvexHull(points)
    except QhullError:
        return _unique_rows(points)
    return points[np.sort(hull.vertices)]


def trace_norm(algebra: FiniteCStarAlgebra, f: np.ndarray) -> float:
    """sup{f·x : ‖x‖ ≤ 1}, the trace norm of the matrix with coordinates f"""
    total = 0.0
    for n, sl in zip(algebra.blocks, algebra.coord_slices):
        total += float(np.sum(np.abs(np.linalg.eigvalsh(coords_to_matrix(f[sl], n)))))
    return total


# ---------------------------------------------------------------------------
# Balls
# ---------------------------------------------------------------------------


class Ball:
    """
    A closed balanced convex set containing ℝ·1, read through its gauge

    Subclasses implement ``gauge_coords``, ``constrain`` (gauge(E·z) ≤ z_s
    inside a cutting-plane program), ``outer_rows`` and ``separate``.
    """

    polyhedral = False

    def __init__(self, algebra: FiniteCStarAlgebra, base_state: Optional[StateFunctional] = None):
        self.algebra = algebra
        self.base_state = base_state or algebra.trace_state()
        if self.base_state.algebra != algebra:
            raise AlgebraMismatchError("Base state lives on another algebra")

    @cached_property
    def section(self) -> Section:
        return Section(self.algebra, self.base_state)

    def gauge_coords(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gauge(self, x: HermitianElement) -> float:
        if x.algebra != self.algebra:
            raise AlgebraMismatchError(f"Ball lives on {self.algebra}, element on {x.algebra}")
        return self.gauge_coords(x.coords)

    def constrain(self, program: CuttingPlaneProgram, E: np.ndarray, s: int):
        raise NotImplementedError

    def outer_rows(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def separate(self, x: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
        """A row r with r·x > rhs while r·x' ≤ rhs on the ball, or None"""
        return None

    def support_value(self, f: np.ndarray) -> float:
        """sup{f·x : gauge(x) ≤ 1, μ₀(x) = 0}, an upper bound when not exact"""
        return support_point(self, f)[0]

    def feasible(self, x: np.ndarray) -> np.ndarray:
        """Scale x into the ball"""
        g = self.gauge_coords(x)
        if not np.isfinite(g):
            return np.zeros_like(x)
        return x / max(1.0, g)

    def rebased(self, state: StateFunctional) -> 'Ball':
        raise NotImplementedError


class VRepBall(Ball):
    """Balanced convex hull of generators plus the unit line"""

    polyhedral = True

    def __init__(self, algebra: FiniteCStarAlgebra, generators: Sequence[Union[HermitianElement, np.ndarray]],
                 base_state: Optional[StateFunctional] = None):
        super().__init__(algebra, base_state)
        cols = []
        for g in generators:
            if isinstance(g, HermitianElement):
                if g.algebra != algebra:
                    raise AlgebraMismatchError(f"Generator lives on {g.algebra}, ball on {algebra}")
                g = g.coords
            g = np.asarray(g, dtype=float)
            if g.shape != (algebra.real_dim_sa,):
                raise InputError(f"Generator has shape {g.shape}, expected ({algebra.real_dim_sa},)")
            g = self.section.project(g)
            if np.linalg.norm(g) > 1e-12:
                cols.append(g)
        self.G = np.array(cols).T if cols else np.zeros((algebra.real_dim_sa, 0))
        span = np.column_stack([self.G, algebra.unit_coords])
        if np.linalg.matrix_rank(span, tol=1e-9) < algebra.real_dim_sa:
            raise InvalidObjectError(
                "Generators and the unit do not span sa(A): the Lip-norm would not have a dense domain"
            )

    @property
    def generators(self) -> List[HermitianElement]:
        return [self.algebra.from_coords(g) for g in self.G.T]

    def rebased(self, state: StateFunctional) -> 'VRepBall':
        return VRepBall(self.algebra, list(self.G.T), state)

    def gauge_coords(self, x: np.ndarray) -> float:
        r = self.section.project(np.asarray(x, dtype=float))
        k = self.G.shape[1]
        if k == 0:
            return 0.0 if np.linalg.norm(r) <= 1e-10 else INF
        p = LPProblem(np.ones(2 * k), np.hstack([self.G, -self.G]), r, ['='] * len(r))
        sol = solve_lp(p)
        if sol.status == 'infeasible':
            return INF
        if not sol.optimal:
            raise InvalidObjectError(f"Gauge LP ended with status {sol.status}")
        return max(0.0, sol.value)

    def support_value(self, f: np.ndarray) -> float:
        if abs(f @ self.algebra.unit_coords) > 1e-9:
            return INF
        return float(np.max(np.abs(f @ self.G))) if self.G.size else 0.0

    def constrain(self, program: CuttingPlaneProgram, E: np.ndarray, s: int):
        k = self.G.shape[1]
        u = program.add_variables(k, 0.0, None)
        v = program.add_variables(k, 0.0, None)
        tau = program.add_variables(1)
        rows = program._pad(E) - program.embed(self.algebra.unit_coords[:, None], tau)
        rows -= program.embed(self.G, u) - program.embed(self.G, v)
        program.add_eq(rows, 0.0)
        row = np.zeros(program.n)
        row[u] = 1.0
        row[v] = 1.0
        row[s] -= 1.0
        program.add_le(row, 0.0)

    @cached_property
    def _facets(self) -> Tuple[np.ndarray, np.ndarray]:
        sec = self.section
        if sec.dim == 0:
            return np.zeros((0, self.algebra.real_dim_sa)), np.zeros(0)
        Y = (sec.R @ self.G).T
        rows, rhs = _hull_facets(np.vstack([Y, -Y]))
        return rows @ sec.R, rhs

    def outer_rows(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._facets

    def separate(self, x: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
        A, b = self._facets
        if not len(b):
            return None
        viol = A @ x - b
        i = int(np.argmax(viol))
        return (A[i], b[i]) if viol[i] > 1e-9 else None


@dataclass(frozen=True, eq=False)
class LinearTerm:
    """|ℓ·x| ≤ bound"""

    functional: np.ndarray
    bound: float = 1.0


@dataclass(frozen=True, eq=False)
class SpectralTerm:
    """‖M·x‖ ≤ bound, M a linear map into a target algebra"""

    target: FiniteCStarAlgebra
    matrix: np.ndarray
    bound: float = 1.0


@dataclass(frozen=True, eq=False)
class PulledBackTerm:
    """gauge_factor(P·x) ≤ 1 for a factor ball and a unital projection P"""

    ball: Ball
    projection: np.ndarray


Term = Union[LinearTerm, SpectralTerm, PulledBackTerm]


class HRepBall(Ball):
    """Intersection of constraint terms; the gauge is the max of the term gauges"""

    def __init__(self, algebra: FiniteCStarAlgebra, terms: Sequence[Term],
                 base_state: Optional[StateFunctional] = None):
        super().__init__(algebra, base_state)
        unit = algebra.unit_coords
        m = algebra.real_dim_sa
        cleaned = []
        for term in terms:
            if isinstance(term, LinearTerm):
                ell = np.asarray(term.functional, dtype=float)
                if ell.shape != (m,):
                    raise InputError(f"Functional has shape {ell.shape}, expected ({m},)")
                if term.bound <= 0:
                    raise InvalidObjectError("Constraint bounds must be positive")
                if abs(ell @ unit) > 1e-9 * max(1.0, np.linalg.norm(ell)):
                    raise InvalidObjectError("Constraint functionals must vanish on the unit")
                cleaned.append(LinearTerm(ell, float(term.bound)))
            elif isinstance(term, SpectralTerm):
                M = np.asarray(term.matrix, dtype=float)
                if M.shape != (term.target.real_dim_sa, m):
                    raise InputError(f"Spectral map has shape {M.shape}")
                if term.bound <= 0:
                    raise InvalidObjectError("Constraint bounds must be positive")
                if np.max(np.abs(M @ unit), initial=0.0) > 1e-9 * max(1.0, np.abs(M).max(initial=0.0)):
                    raise InvalidObjectError("Spectral constraint maps must vanish on the unit")
                cleaned.append(SpectralTerm(term.target, M, float(term.bound)))
            elif isinstance(term, PulledBackTerm):
                P = np.asarray(term.projection, dtype=float)
                factor = term.ball.algebra
                if P.shape != (factor.real_dim_sa, m):
                    raise InputError(f"Projection has shape {P.shape}")
                if np.max(np.abs(P @ unit - factor.unit_coords)) > 1e-9:
                    raise InvalidObjectError("Pulled-back terms need a unital projection")
                cleaned.append(PulledBackTerm(term.ball, P))
            else:
                raise InputError(f"Unknown term {term!r}")
        self.terms = tuple(cleaned)
        self.polyhedral = all(
            isinstance(t, LinearTerm) or (isinstance(t, PulledBackTerm) and t.ball.polyhedral)
            for t in self.terms
        )

    def rebased(self, state: StateFunctional) -> 'HRepBall':
        return HRepBall(self.algebra, self.terms, state)

    @staticmethod
    def term_gauge(term: Term, x: np.ndarray) -> float:
        if isinstance(term, LinearTerm):
            return abs(float(term.functional @ x)) / term.bound
        if isinstance(term, SpectralTerm):
            y = term.matrix @ x
            top = term.target.lambda_max_batch(np.vstack([y, -y]))
            return float(max(top.max(), 0.0)) / term.bound
        return term.ball.gauge_coords(term.projection @ x)

    def gauge_coords(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return max([self.term_gauge(t, x) for t in self.terms], default=0.0)

    def constrain(self, program: CuttingPlaneProgram, E: np.ndarray, s: int):
        for term in self.terms:
            E_now = program._pad(E)
            if isinstance(term, LinearTerm):
                row = term.functional @ E_now
                e_s = program.unit(s) * term.bound
                program.add_le(row - e_s, 0.0)
                program.add_le(-row - e_s, 0.0)
            elif isinstance(term, SpectralTerm):
                program.add_norm_bound(term.target, term.matrix @ E_now, program.unit(s) * term.bound)
            else:
                term.ball.constrain(program, term.projection @ E_now, s)

    @cached_property
    def _outer(self) -> Tuple[np.ndarray, np.ndarray]:
        rows, rhs = [], []
        for term in self.terms:
            if isinstance(term, LinearTerm):
                rows.extend([term.functional / term.bound, -term.functional / term.bound])
                rhs.extend([1.0, 1.0])
            elif isinstance(term, SpectralTerm):
                for w in term.target.seed_state_coords:
                    r = w @ term.matrix / term.bound
                    rows.extend([r, -r])
                    rhs.extend([1.0, 1.0])
            else:
                A, b = term.ball.outer_rows()
                rows.extend(list(A @ term.projection))
                rhs.extend(list(b))
        if not rows:
            return np.zeros((0, self.algebra.real_dim_sa)), np.zeros(0)
        return np.array(rows), np.array(rhs)

    def outer_rows(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._outer

    def separate(self, x: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
        if not self.terms:
            return None
        values = [self.term_gauge(t, x) for t in self.terms]
        i = int(np.argmax(values))
        if values[i] <= 1.0 + 1e-9:
            return None
        term = self.terms[i]
        if isinstance(term, LinearTerm):
            sign = np.sign(term.functional @ x)
            return sign * term.functional / term.bound, 1.0
        if isinstance(term, SpectralTerm):
            y = term.matrix @ x
            best = max(
                [(val, sign, w) for sign in (1.0, -1.0) for val, w in _block_tops(term.target, sign * y)],
                key=lambda item: item[0],
            )
            return best[1] * (best[2] @ term.matrix) / term.bound, 1.0
        cut = term.ball.separate(term.projection @ x)
        if cut is None:
            return None
        return cut[0] @ term.projection, cut[1]


class ImageBall(Ball):
    """
    {b : ∃a, gauge_A(a) ≤ 1, ‖b − ψ(a)‖ ≤ ε} for a unital positive map ψ
    and the source ball of gauge_A
    """

    def __init__(self, source: Ball, psi: PositiveUnitalMap, eps: float,
                 base_state: Optional[StateFunctional] = None):
        super().__init__(psi.target, base_state)
        if psi.source != source.algebra:
            raise AlgebraMismatchError(f"Map source {psi.source} differs from ball algebra {source.algebra}")
        if eps <= 0:
            raise InvalidObjectError("The image ball needs ε > 0")
        if not psi.unital:
            raise InvalidObjectError("The image ball needs a unital map")
        self.source = source
        self.psi = psi
        self.eps = float(eps)

    def rebased(self, state: StateFunctional) -> 'ImageBall':
        return ImageBall(self.source, self.psi, self.eps, state)

    def constrain(self, program: CuttingPlaneProgram, E: np.ndarray, s: int):
        a = program.add_variables(self.source.algebra.real_dim_sa)
        self.source.constrain(program, program.embed(np.eye(a.size), a), s)
        residual = program._pad(E) - program.embed(self.psi.matrix, a)
        program.add_norm_bound(self.algebra, residual, program.unit(s) * self.eps)

    def gauge_coords(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if np.linalg.norm(self.section.project(x)) <= 1e-12:
            return 0.0
        program = CuttingPlaneProgram()
        a = program.add_variables(self.source.algebra.real_dim_sa)
        s = int(program.add_variables(1, 0.0, None)[0])
        self.source.constrain(program, program.embed(np.eye(a.size), a), s)
        program.add_norm_bound(self.algebra, -program.embed(self.psi.matrix, a), program.unit(s) * self.eps, x)
        res = program.solve(program.unit(s), maximize=False)
        if res.z is None:
            raise InvalidObjectError(f"Image-ball gauge program ended with status {res.status}")
        a_star = res.z[a]
        residual = self.algebra.from_coords(x - self.psi.matrix @ a_star).norm()
        return float(max(res.value, self.source.gauge_coords(a_star), residual / self.eps))

    def support_value(self, f: np.ndarray) -> float:
        if abs(f @ self.algebra.unit_coords) > 1e-9:
            return INF
        return self.source.support_value(self.psi.matrix.T @ f) + self.eps * trace_norm(self.algebra, f)

    @cached_property
    def inner_points(self) -> np.ndarray:
        """Section points of a polytope inside the ball: ψ(vertices) + ε·(self-adjoint unitaries)"""
        rng = np.random.default_rng(setting('run', 'seed'))
        source_vertices = section_polytope(self.source).vertices
        images = np.array([self.section.project(self.psi.matrix @ v) for v in source_vertices])
        unitaries = norm_ball_points(self.algebra, setting('approx', 'norm_ball_directions'), rng)
        unitaries = np.array([self.section.project(u) for u in unitaries])
        sums = (images[:, None, :] + self.eps * unitaries[None, :, :]).reshape(-1, self.algebra.real_dim_sa)
        reduced = _hull_vertices(_unique_rows(sums @ self.section.R.T))
        return reduced @ self.section.Q.T

    @cached_property
    def sandwich(self) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        Inner facet rows (A·x ≤ 1 on the inner polytope), the exact support of
        the ball along each facet normal, and the inflation factor r with
        inner ⊆ ball ⊆ r·inner
        """
        sec = self.section
        Y = self.inner_points @ sec.R.T
        A_y, _ = _hull_facets(Y)
        A = A_y @ sec.R
        support = np.array([self.support_value(row) for row in A])
        r = float(max(1.0, support.max(initial=1.0)))
        return A, support, r

    def outer_rows(self) -> Tuple[np.ndarray, np.ndarray]:
        A, support, _ = self.sandwich
        return A, support

    def separate(self, x: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
        y = self.section.reduce(x)
        if np.linalg.norm(y) <= 1e-12:
            return None
        f = (y / np.linalg.norm(y)) @ self.section.R
        h = self.support_value(f)
        return (f, h) if f @ x > h + 1e-9 else None


def norm_ball_points(algebra: FiniteCStarAlgebra, directions: int, rng: np.random.Generator,
                     cap: int = 4096) -> np.ndarray:
    """Coordinates of self-adjoint unitaries: ±1 or ±(2vv* − 1) on every block"""
    options = []
    for n in algebra.blocks:
        mats = [np.eye(n), -np.eye(n)]
        if n > 1:
            vectors = [np.eye(n)[i] for i in range(n)]
            for i in range(n):
                for j in range(i + 1, n):
                    for phase in (1.0, 1j):
                        v = np.zeros(n, dtype=complex)
                        v[i], v[j] = 1.0, phase
                        vectors.append(v / np.sqrt(2.0))
            while len(vectors) < directions:
                vectors.append(rng.normal(size=n) + 1j * rng.normal(size=n))
            for v in vectors[:max(directions, 1)]:
                v = np.asarray(v, dtype=complex)
                v = v / np.linalg.norm(v)
                u = 2.0 * np.outer(v, v.conj()) - np.eye(n)
                mats.extend([u, -u])
        options.append([matrix_to_coords(mat) for mat in mats])
    total = int(np.prod([len(o) for o in options]))
    if total <= cap:
        return np.array([np.concatenate(c) for c in itertools.product(*options)])
    points = []
    for _ in range(cap // 2):
        p = np.concatenate([o[int(rng.integers(len(o)))] for o in options])
        points.extend([p, -p])
    return np.array(points)


def gauge(ball: Ball, x: Union[HermitianElement, np.ndarray]) -> float:
    """inf{λ > 0 : x ∈ λ·ball}; +∞ when x is outside the cone of the ball"""
    if isinstance(x, HermitianElement):
        return ball.gauge(x)
    return ball.gauge_coords(np.asarray(x, dtype=float))


def _section_program(ball: Ball) -> Tuple[CuttingPlaneProgram, np.ndarray]:
    program = CuttingPlaneProgram()
    sec = ball.section
    y = program.add_variables(sec.dim)
    ball.constrain(program, program.embed(sec.Q, y), program.one())
    return program, y


def support_point(ball: Ball, f: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    sup of f·x over the section of the ball

    Returns:
        tuple: (relaxation value, a maximizer scaled into the ball)
    """
    f = np.asarray(f, dtype=float)
    if abs(f @ ball.algebra.unit_coords) > 1e-9:
        return INF, np.zeros_like(f)
    if isinstance(ball, VRepBall):
        if not ball.G.size:
            return 0.0, np.zeros_like(f)
        vals = f @ ball.G
        k = int(np.argmax(np.abs(vals)))
        return float(abs(vals[k])), np.sign(vals[k]) * ball.G[:, k]
    sec = ball.section
    if sec.dim == 0:
        return 0.0, np.zeros_like(f)
    program, y = _section_program(ball)
    res = program.solve(program.embed(f @ sec.Q, y)[0], maximize=True)
    if res.z is None:
        raise InvalidObjectError(f"Support program ended with status {res.status}: section unbounded?")
    x = ball.feasible(sec.lift(res.z[y]))
    return float(res.value), x


def support_points(ball: Ball, directions: np.ndarray) -> np.ndarray:
    """Feasible extreme points of the section maximizing each direction"""
    return np.array([support_point(ball, f)[1] for f in np.atleast_2d(directions)])


def min_lift_gauge(ball: Ball, E: np.ndarray, target: np.ndarray) -> Tuple[float, float, np.ndarray]:
    """
    inf{gauge(z) : E·z = target}

    Returns:
        tuple: (lower bound, upper bound, feasible z attaining the upper bound)
    """
    program = CuttingPlaneProgram()
    z = program.add_variables(ball.algebra.real_dim_sa)
    s = int(program.add_variables(1, 0.0, None)[0])
    program.add_eq(program.embed(E, z), target)
    ball.constrain(program, program.embed(np.eye(z.size), z), s)
    res = program.solve(program.unit(s), maximize=False)
    if res.z is None:
        return INF, INF, np.zeros(z.size)
    z_star = res.z[z]
    return float(res.value), float(max(res.value, ball.gauge_coords(z_star))), z_star


# ---------------------------------------------------------------------------
# Polytopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex hull of finitely many points of sa(A), in coordinates"""

    algebra: FiniteCStarAlgebra
    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.size == 0 or V.shape[1] != self.algebra.real_dim_sa:
            raise InvalidObjectError("A polytope needs at least one vertex of the right dimension")
        object.__setattr__(self, 'vertices', V)

    def elements(self) -> List[HermitianElement]:
        return [self.algebra.from_coords(v) for v in self.vertices]

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return all(np.min(np.abs(self.vertices + v).max(axis=1)) <= tol for v in self.vertices)


def support(section: Polytope, f: Union[np.ndarray, HermitianElement]) -> float:
    """max over vertices of f(v)"""
    if isinstance(f, HermitianElement):
        f = f.coords
    return float(np.max(section.vertices @ np.asarray(f, dtype=float)))


def section_polytope(ball: Ball, max_dim: Optional[int] = None) -> Polytope:
    """Vertices of the μ₀-section of a polyhedral ball"""
    sec = ball.section
    m = ball.algebra.real_dim_sa
    if sec.dim == 0:
        return Polytope(ball.algebra, np.zeros((1, m)))
    if isinstance(ball, VRepBall):
        Y = (sec.R @ ball.G).T
        return Polytope(ball.algebra, _hull_vertices(np.vstack([Y, -Y])) @ sec.Q.T)
    if not ball.polyhedral:
        raise InputError("The section of this ball is not a polytope")
    max_dim = max_dim or setting('lipnorm', 'vertex_enum_max_dim')
    if sec.dim > max_dim:
        raise InputError(f"Section dimension {sec.dim} exceeds the vertex enumeration cap {max_dim}")
    A, b = ball.outer_rows()
    A_y = A @ sec.Q
    for i in range(sec.dim):
        for sign in (1.0, -1.0):
            c = np.zeros(sec.dim)
            c[i] = sign
            sol = solve_lp(LPProblem(c, A_y, b, ['<='] * len(b), [(None, None)] * sec.dim, maximize=True))
            if sol.status == 'unbounded':
                raise InvalidObjectError("The section of the ball is unbounded")
    return Polytope(ball.algebra, enumerate_vertices(A_y, b, np.zeros(sec.dim)) @ sec.Q.T)


def to_vrep(ball: Ball, max_dim: Optional[int] = None) -> VRepBall:
    """Generator form of a polyhedral ball, one generator per ± vertex pair"""
    if isinstance(ball, VRepBall):
        return ball
    V = section_polytope(ball, max_dim).vertices
    kept = []
    for v in V:
        if np.linalg.norm(v) <= 1e-12:
            continue
        if not any(np.allclose(v, -k, atol=1e-9) or np.allclose(v, k, atol=1e-9) for k in kept):
            kept.append(v)
    return VRepBall(ball.algebra, kept, ball.base_state)


def _point_distance(v: np.ndarray, Q: Polytope) -> Tuple[float, float]:
    """Operator-norm distance from v to a polytope: (lower, upper)"""
    V = Q.vertices
    direct = np.min(np.abs(V - v).max(axis=1))
    if direct <= 1e-14:
        return 0.0, 0.0
    if len(V) == 1:
        d = Q.algebra.from_coords(v - V[0]).norm()
        return d, d
    program = CuttingPlaneProgram()
    lam = program.add_variables(len(V), 0.0, 1.0)
    t = int(program.add_variables(1, 0.0, None)[0])
    program.add_eq(program.embed(np.ones((1, len(V))), lam), 1.0)
    program.add_norm_bound(Q.algebra, -program.embed(V.T, lam), program.unit(t), v)
    res = program.solve(program.unit(t), maximize=False, tol=setting('hausdorff', 'gap'),
                        max_rounds=setting('hausdorff', 'max_rounds'))
    if res.z is None:
        raise InvalidObjectError(f"Distance program ended with status {res.status}")
    weights = np.clip(res.z[lam], 0.0, None)
    weights /= weights.sum()
    upper = Q.algebra.from_coords(v - V.T @ weights).norm()
    return float(max(0.0, res.value)), float(upper)


def hausdorff_polytopes(P: Polytope, Q: Polytope) -> float:
    """Operator-norm Hausdorff distance between two polytopes (certified upper value)"""
    if P.algebra != Q.algebra:
        raise AlgebraMismatchError(f"Polytopes live in {P.algebra} and {Q.algebra}")

    def one_sided(X: Polytope, Y: Polytope) -> float:
        return max(_point_distance(v, Y)[1] for v in X.vertices)

    return float(max(one_sided(P, Q), one_sided(Q, P)))


# ---------------------------------------------------------------------------
# Spectral functionals and the DC engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralFunctional:
    """x ↦ λ_max(M·x) for a linear map M into a target algebra"""

    target: FiniteCStarAlgebra
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if M.shape[0] != self.target.real_dim_sa:
            raise InputError(f"Map has {M.shape[0]} rows, target needs {self.target.real_dim_sa}")
        object.__setattr__(self, 'matrix', M)

    def __call__(self, x: np.ndarray) -> float:
        return float(self.target.lambda_max_batch((self.matrix @ x)[None, :])[0])

    def top_state(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        """Value and a subgradient w·M in source coordinates"""
        val, w = self.target.top_state_coords(self.matrix @ x)
        return val, w @ self.matrix

    def blocks(self) -> List['SpectralFunctional']:
        return [
            SpectralFunctional(FiniteCStarAlgebra((n,)), self.matrix[sl], f"{self.label}[{j}]")
            for j, (n, sl) in enumerate(zip(self.target.blocks, self.target.coord_slices))
        ]

    def has_block(self, other: 'SpectralFunctional') -> bool:
        """Whether a single-block functional equals one of our blocks"""
        return any(
            b.target == other.target and np.allclose(b.matrix, other.matrix, atol=1e-12)
            for b in self.blocks()
        )

    @classmethod
    def identity(cls, A: FiniteCStarAlgebra) -> 'SpectralFunctional':
        return cls(A, np.eye(A.real_dim_sa), "id")

    @classmethod
    def from_matrix(cls, target: FiniteCStarAlgebra, matrix: np.ndarray, label: str = "") -> 'SpectralFunctional':
        return cls(target, matrix, label)

    @classmethod
    def spread(cls, A: FiniteCStarAlgebra) -> 'SpectralFunctional':
        """x ↦ λ_max(x) − λ_min(x) as λ_max of ⊕_{j,k} (x_j ⊗ 1 − 1 ⊗ x_kᵀ)"""
        pairs = [(j, k) for j in range(len(A.blocks)) for k in range(len(A.blocks))]
        target = FiniteCStarAlgebra(tuple(A.blocks[j] * A.blocks[k] for j, k in pairs))
        cols = []
        for e in A.basis_elements():
            blocks = []
            for j, k in pairs:
                xj, xk = e.block_data[j], e.block_data[k]
                blocks.append(np.kron(xj, np.eye(A.blocks[k])) - np.kron(np.eye(A.blocks[j]), xk.T))
            cols.append(target.element(blocks).coords)
        return cls(target, np.array(cols).T, "spread")


@dataclass
class DCResult:
    lower: float
    upper: float
    witness: np.ndarray
    gap_closed: bool
    iterations: int = 0

    @property
    def bracket(self) -> Tuple[float, float]:
        return self.lower, self.upper


class _Region:
    """A convex region parametrized as x = offset + L·y"""

    exact = True

    def __init__(self, lift: np.ndarray, offset: np.ndarray, A: np.ndarray, b: np.ndarray, interior: np.ndarray):
        self.lift = lift
        self.offset = offset
        self.A = A
        self.b = b
        self.interior = interior

    @property
    def dim(self) -> int:
        return self.lift.shape[1]

    def point(self, y: np.ndarray) -> np.ndarray:
        return self.offset + self.lift @ y

    def feasible(self, y: np.ndarray) -> np.ndarray:
        return y

    def separate(self, y: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
        return None

    def embed(self, program: CuttingPlaneProgram) -> np.ndarray:
        raise NotImplementedError

    def random_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def vertex_points(self) -> np.ndarray:
        """Vertices of the region in y coordinates, empty when they are not known"""
        return np.zeros((0, self.dim))


class _BallRegion(_Region):
    def __init__(self, ball: Ball):
        sec = ball.section
        A, b = ball.outer_rows()
        super().__init__(sec.Q, np.zeros(ball.algebra.real_dim_sa), A @ sec.Q, b, np.zeros(sec.dim))
        self.ball = ball
        self.exact = ball.polyhedral

    def feasible(self, y: np.ndarray) -> np.ndarray:
        g = self.ball.gauge_coords(self.point(y))
        return y / max(1.0, g) if np.isfinite(g) else np.zeros_like(y)

    def separate(self, y: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
        cut = self.ball.separate(self.point(y))
        if cut is None:
            return None
        return cut[0] @ self.lift, cut[1]

    def embed(self, program: CuttingPlaneProgram) -> np.ndarray:
        y = program.add_variables(self.dim)
        self.ball.constrain(program, program.embed(self.lift, y), program.one())
        return y

    def random_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((0, 0))
        points = []
        for d in rng.normal(size=(count, self.dim)):
            g = self.ball.gauge_coords(self.point(d))
            if np.isfinite(g) and g > 1e-12:
                points.append(d / g)
        return np.array(points).reshape(-1, self.dim)

    def vertex_points(self) -> np.ndarray:
        if self.dim == 0 or not self.exact:
            return np.zeros((0, self.dim))
        try:
            V = section_polytope(self.ball).vertices
        except (InputError, InvalidObjectError) as e:
            logger.debug(f"No vertex starts: {e}")
            return np.zeros((0, self.dim))
        return V @ self.lift


class _PolytopeRegion(_Region):
    def __init__(self, polytope: Polytope):
        V = polytope.vertices
        k = len(V)
        lift = (V[:-1] - V[-1]).T if k > 1 else np.zeros((V.shape[1], 0))
        A = np.vstack([-np.eye(k - 1), np.ones((1, k - 1))]) if k > 1 else np.zeros((0, 0))
        b = np.concatenate([np.zeros(k - 1), [1.0]]) if k > 1 else np.zeros(0)
        super().__init__(lift, V[-1].copy(), A, b, np.full(k - 1, 1.0 / k))

    def embed(self, program: CuttingPlaneProgram) -> np.ndarray:
        y = program.add_variables(self.dim, 0.0, 1.0)
        if self.dim:
            program.add_le(program.embed(np.ones((1, self.dim)), y)[0], 1.0)
        return y

    def random_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((0, 0))
        return rng.dirichlet(np.ones(self.dim + 1), size=count)[:, :-1]

    def vertex_points(self) -> np.ndarray:
        return np.vstack([np.eye(self.dim), np.zeros((1, self.dim))])


def _as_region(region: Union[Ball, Polytope, _Region]) -> _Region:
    if isinstance(region, _Region):
        return region
    if isinstance(region, Ball):
        return _BallRegion(region)
    if isinstance(region, Polytope):
        return _PolytopeRegion(region)
    raise InputError(f"Unsupported region {type(region).__name__}")


class _DCProblem:
    """max over the region of cvx(x) − max_j ccv_j(x), cvx a single block"""

    def __init__(self, cvx: SpectralFunctional, ccv: List[SpectralFunctional], region: _Region):
        self.cvx = cvx
        self.ccv = ccv
        self.region = region
        self._memo: Dict[tuple, np.ndarray] = {}

    def value(self, x: np.ndarray) -> float:
        val = self.cvx(x)
        if self.ccv:
            val -= max(c(x) for c in self.ccv)
        return val

    def concave_step(self, g: np.ndarray) -> Tuple[float, np.ndarray]:
        """max of g·x − max_j ccv_j(x): relaxation value and a feasible maximizer y"""
        key = tuple(np.round(g, 9))
        if key in self._memo:
            return self._memo[key]
        region = self.region
        program = CuttingPlaneProgram()
        y = region.embed(program)
        objective = program.embed(g @ region.lift, y)[0]
        constant = float(g @ region.offset)
        if self.ccv:
            t = int(program.add_variables(1)[0])
            for c in self.ccv:
                program.add_spectral(c.target, program.embed(c.matrix @ region.lift, y),
                                     program.unit(t), c.matrix @ region.offset)
            objective = program._pad(objective) - program.unit(t)
        res = program.solve(objective, maximize=True)
        if res.z is None:
            raise InvalidObjectError(f"DC subproblem ended with status {res.status}")
        out = (float(res.value) + constant, region.feasible(res.z[y]))
        self._memo[key] = out
        return out

    def dca(self, y0: np.ndarray, iterations: int) -> Tuple[float, np.ndarray]:
        y = y0
        val = self.value(self.region.point(y))
        for _ in range(iterations):
            _, g = self.cvx.top_state(self.region.point(y))
            _, y_new = self.concave_step(g)
            new_val = self.value(self.region.point(y_new))
            if new_val <= val + 1e-12:
                break
            y, val = y_new, new_val
        return val, y


def _lp_box(A: np.ndarray, b: np.ndarray, dim: int) -> np.ndarray:
    radii = np.zeros(dim)
    for i in range(dim):
        for sign in (1.0, -1.0):
            c = np.zeros(dim)
            c[i] = sign
            sol = solve_lp(LPProblem(c, A, b, ['<='] * len(b), [(None, None)] * dim, maximize=True))
            if not sol.optimal:
                raise InvalidObjectError("The region of the DC problem is unbounded")
            radii[i] = max(radii[i], abs(sol.value))
    return radii


def _norm_bound(fn: SpectralFunctional, region: _Region, radii: np.ndarray) -> float:
    """Bound on ‖M·x‖ over the box |y_i| ≤ r_i of the region"""
    total = fn.target.from_coords(fn.matrix @ region.offset).norm()
    for i, r in enumerate(radii):
        total += r * fn.target.from_coords(fn.matrix @ region.lift[:, i]).norm()
    return float(total)


def _lifted_search(prob: _DCProblem, lower: float, witness: np.ndarray,
                   gap: float, max_iterations: int, max_dim: int) -> Tuple[float, float, np.ndarray, int, bool]:
    """Outer approximation of the hypograph, refined at the best vertices"""
    region = prob.region
    d = region.dim
    radii = _lp_box(region.A, region.b, d) if d else np.zeros(0)
    t_cap = 1.0
    for c in prob.ccv:
        t_cap = max(t_cap, _norm_bound(c, region, radii) + 1.0)
    lifted = d + (1 if prob.ccv else 0)

    if lifted > max_dim:
        upper = _norm_bound(prob.cvx, region, radii) + (t_cap if prob.ccv else 0.0)
        logger.debug(f"Lifted dimension {lifted} above cap {max_dim}; box bound {upper:.6g}")
        return lower, max(upper, lower), witness, 0, upper - lower <= gap

    rows = [np.hstack([region.A, np.zeros((len(region.b), lifted - d))])]
    rhs = [region.b]
    box = np.vstack([np.eye(d), -np.eye(d)])
    rows.append(np.hstack([box, np.zeros((2 * d, lifted - d))]))
    rhs.append(np.concatenate([radii, radii]) + 1e-9)
    if prob.ccv:
        rows.append(np.array([np.concatenate([np.zeros(d), [1.0]]), np.concatenate([np.zeros(d), [-1.0]])]))
        rhs.append(np.array([t_cap, t_cap]))
        for c in prob.ccv:
            for w in c.target.seed_state_coords:
                rows.append(np.concatenate([w @ c.matrix @ region.lift, [-1.0]])[None, :])
                rhs.append(np.array([-float(w @ c.matrix @ region.offset)]))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    interior = region.interior
    if prob.ccv:
        x_int = region.point(interior)
        t_int = 0.5 * (max(c(x_int) for c in prob.ccv) + t_cap)
        interior = np.concatenate([interior, [t_int]])

    upper = INF
    iteration = 0
    top_k = 4
    for iteration in range(1, max_iterations + 1):
        V = enumerate_vertices(A, b, interior)
        Y = V[:, :d]
        X = region.offset + Y @ region.lift.T
        scores = prob.cvx.target.lambda_max_batch(X @ prob.cvx.matrix.T)
        if prob.ccv:
            scores = scores - V[:, d]
        upper = float(scores.max())
        if upper - lower <= gap:
            break
        new_rows, new_rhs = [], []
        for idx in np.argsort(-scores)[:top_k]:
            y = Y[idx]
            if not region.exact:
                cut = region.separate(y)
                if cut is not None:
                    new_rows.append(np.concatenate([cut[0], np.zeros(lifted - d)]))
                    new_rhs.append(cut[1])
                    continue
            x = region.point(region.feasible(y))
            val = prob.value(x)
            if val > lower:
                lower, witness = val, x
            if prob.ccv:
                xv = region.point(y)
                values = [c(xv) for c in prob.ccv]
                j = int(np.argmax(values))
                if values[j] > V[idx, d] + 1e-10:
                    _, w = prob.ccv[j].target.top_state_coords(prob.ccv[j].matrix @ xv)
                    new_rows.append(np.concatenate([w @ prob.ccv[j].matrix @ region.lift, [-1.0]]))
                    new_rhs.append(-float(w @ prob.ccv[j].matrix @ region.offset))
        if upper - lower <= gap:
            break
        if not new_rows:
            logger.debug("Lifted search made no progress")
            break
        A = np.vstack([A, np.array(new_rows)])
        b = np.concatenate([b, new_rhs])
    return lower, max(upper, lower), witness, iteration, upper - lower <= gap


def dc_maximize(
    cvx: SpectralFunctional,
    ccv_list: Sequence[SpectralFunctional],
    section: Union[Ball, Polytope],
    gap: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    workers: Optional[int] = None,
) -> DCResult:
    """
    Bracket sup over the region of cvx(x) − max_j ccv_j(x)

    Args:
        cvx: Convex part λ_max(M·x)
        ccv_list: Subtracted parts (empty for a plain convex maximization)
        section: A ball (its μ₀-section) or a polytope
        gap: Target bracket width (defaults to the configured DC gap)
        rng: Generator for the random starting points
        workers: Thread count for the multi-start loop

    Returns:
        DCResult: lower bound attained at ``witness``, certified upper bound
    """
    gap = setting('dc', 'gap') if gap is None else gap
    rng = rng or np.random.default_rng(setting('run', 'seed'))
    workers = workers or setting('run', 'workers')
    max_iterations = setting('dc', 'max_iterations')
    dca_iterations = setting('dc', 'dca_iterations')
    max_dim = setting('dc', 'max_lifted_dim')
    region = _as_region(section)
    ccv = list(ccv_list)

    def objective(x: np.ndarray) -> float:
        val = cvx(x)
        if ccv:
            val -= max(c(x) for c in ccv)
        return val

    x_int = region.point(region.feasible(region.interior))
    lower, witness = objective(x_int), x_int
    upper = -INF
    closed = True
    iterations = 0

    vertex_starts = region.vertex_points() if region.dim else np.zeros((0, 0))
    cap = setting('dc', 'vertex_starts')
    if len(vertex_starts) > cap:
        logger.debug(f"Using {cap} of {len(vertex_starts)} vertices as DCA starts")
        vertex_starts = vertex_starts[rng.choice(len(vertex_starts), cap, replace=False)]

    blocks = cvx.blocks()
    kept = [blk for blk in blocks if not any(c.has_block(blk) for c in ccv)]
    if len(kept) < len(blocks):
        upper = 0.0

    for blk in kept:
        prob = _DCProblem(blk, ccv, region)
        if blk.target.blocks[0] == 1:
            val, y = prob.concave_step(blk.matrix[0])
            x = region.point(y)
            exact = prob.value(x)
            if exact > lower:
                lower, witness = exact, x
            upper = max(upper, val)
            continue

        starts = list(vertex_starts) + list(region.random_points(rng, setting('dc', 'random_starts')))
        if region.dim:
            starts.append(region.interior)

        def run(y0):
            return prob.dca(y0, dca_iterations)

        if workers > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, starts))
        else:
            results = [run(y0) for y0 in starts]
        for val, y in results:
            if val > lower:
                lower, witness = val, region.point(y)

        lo, up, wit, its, ok = _lifted_search(prob, lower, witness, gap, max_iterations, max_dim)
        iterations += its
        if lo > lower:
            lower, witness = lo, wit
        upper = max(upper, up)
        closed = closed and ok

    if upper == -INF:
        upper = lower
    upper = max(upper, lower)
    closed = closed and upper - lower <= gap * max(1.0, abs(upper)) + 1e-9
    if not closed:
        logger.warning(f"DC bracket not closed: [{lower:.6g}, {upper:.6g}]")
    return DCResult(float(lower), float(upper), witness, closed, iterations)
