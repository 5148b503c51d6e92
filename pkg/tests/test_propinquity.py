import itertools
import json

import numpy as np
import pytest

from src.convexopt import Polytope, VRepBall, hausdorff_polytopes, section_polytope
from src.errors import InputError, PreconditionError
from src.lipnorm import FiniteMetricSpace, LipNorm, PermissibleFunction, diameter, lip_from_metric, quasi_leibniz_check
from src.propinquity import (
    SpaceFamily,
    chain_bound,
    covering_number_estimate,
    gh_distance,
    metric_cov_number,
    metric_cover,
    pairwise_bounds,
    propinquity_upper,
    sequence_limit,
    total_boundedness_check,
)
from src.settings import config_override
from src.tunnel import TunnelClass, extent, standard_tunnel

from .conftest import PAULI_X, PAULI_Y, PAULI_Z
from .test_tunnel import brute_force_gh

TOL = 1e-6
LEIBNIZ = PermissibleFunction.cd(1.0, 0.0)


@pytest.fixture
def pauli_lip(m2, pauli_ball):
    L = LipNorm(m2, pauli_ball, LEIBNIZ, label="pauli")
    return L.certified(quasi_leibniz_check(L, LEIBNIZ))


def two_point(r):
    return lip_from_metric(FiniteMetricSpace.path(2, step=r))


def rotated_pauli(m2, theta):
    c, s = np.cos(theta), np.sin(theta)
    gens = [m2.element([c * PAULI_X + s * PAULI_Y]), m2.element([-s * PAULI_X + c * PAULI_Y]), m2.element([PAULI_Z])]
    return LipNorm(m2, VRepBall(m2, gens), LEIBNIZ)


def brute_force_cover(X, eps):
    for k in range(1, X.size + 1):
        for centres in itertools.combinations(range(X.size), k):
            if all(min(X.dist[c, x] for c in centres) <= eps for x in range(X.size)):
                return k


class TestPropinquityUpper:
    def test_identical_spaces_at_floor(self):
        L = two_point(1.0)
        bound = propinquity_upper(L, L, {"identity"})
        assert bound.upper <= 1e-3 + TOL
        assert bound.witness_kind == "identity"

    @pytest.mark.slow
    def test_diameter_bound(self, pauli_lip):
        L = two_point(1.0)
        bound = propinquity_upper(pauli_lip, L, {"standard"})
        Dm = max(diameter(pauli_lip), diameter(L))
        assert bound.upper <= Dm + 0.1 * Dm + TOL

    def test_gh_dominance(self):
        rng = np.random.default_rng(21)
        for _ in range(4):
            X = FiniteMetricSpace.random(int(rng.integers(2, 4)), rng)
            Y = FiniteMetricSpace.random(3, rng)
            bound = propinquity_upper(lip_from_metric(X), lip_from_metric(Y), {"correspondence"})
            assert bound.upper <= gh_distance(X, Y).value + TOL

    def test_symmetric(self):
        a, b = two_point(1.0), two_point(0.4)
        ab = propinquity_upper(a, b, {"standard"})
        ba = propinquity_upper(b, a, {"standard"})
        assert ab.upper == pytest.approx(ba.upper, abs=TOL)

    def test_diameter_lipschitz(self):
        spaces = [two_point(1.0), two_point(0.3), lip_from_metric(FiniteMetricSpace.path(3, step=0.5))]
        for L_a, L_b in itertools.combinations(spaces, 2):
            bound = propinquity_upper(L_a, L_b)
            assert abs(diameter(L_a) - diameter(L_b)) <= 2 * bound.upper + TOL

    def test_candidates_are_recorded(self):
        bound = propinquity_upper(two_point(1.0), two_point(0.5), {"standard", "correspondence"})
        strategies = {c['strategy'] for c in bound.candidates}
        assert strategies == {"standard", "correspondence"}
        assert bound.upper == pytest.approx(min(c['extent'][1] for c in bound.candidates if c['status'] == "ok"))

    def test_report_serializes(self):
        bound = propinquity_upper(two_point(1.0), two_point(0.5), {"standard"})
        data = json.loads(json.dumps(bound.to_dict()))
        assert data['upper'] == pytest.approx(bound.upper)
        assert data['stages'][0]['extent_ub'] >= data['stages'][0]['extent_lb'] - TOL

    def test_unknown_strategy(self):
        with pytest.raises(InputError):
            propinquity_upper(two_point(1.0), two_point(1.0), {"teleport"})

    def test_uncertified_space(self, m2, pauli_ball):
        with pytest.raises(PreconditionError):
            propinquity_upper(LipNorm(m2, pauli_ball), two_point(1.0))

    def test_chain_bound(self):
        t1 = standard_tunnel(two_point(1.0), two_point(0.5), 0.1)
        t2 = standard_tunnel(t1.factors[1], two_point(0.2), 0.1)
        bound = chain_bound(t1, t2, 0.05)
        assert bound.upper <= extent(t1).upper + extent(t2).upper + 0.05 + TOL
        assert bound.witness_kind == "composed"


class TestGromovHausdorff:
    def test_same_space(self):
        X = FiniteMetricSpace.path(3)
        gh = gh_distance(X, X)
        assert gh.value == pytest.approx(0.0)
        assert gh.correspondence == [(0, 0), (1, 1), (2, 2)]

    def test_two_points_to_one(self):
        gh = gh_distance(FiniteMetricSpace.path(2), FiniteMetricSpace.from_matrix([[0.0]]))
        assert gh.value == pytest.approx(0.5)
        assert gh.exact

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        X, Y = FiniteMetricSpace.random(3, rng), FiniteMetricSpace.random(3, rng)
        expected, _ = brute_force_gh(X, Y)
        assert gh_distance(X, Y).value == pytest.approx(expected, abs=1e-12)

    def test_four_points_match_brute_force(self):
        rng = np.random.default_rng(4)
        X, Y = FiniteMetricSpace.random(4, rng), FiniteMetricSpace.random(2, rng)
        expected, _ = brute_force_gh(X, Y)
        assert gh_distance(X, Y).value == pytest.approx(expected, abs=1e-12)

    def test_heuristic_beyond_cap(self):
        rng = np.random.default_rng(9)
        X, Y = FiniteMetricSpace.random(3, rng), FiniteMetricSpace.random(3, rng)
        exact = gh_distance(X, Y)
        rough = gh_distance(X, Y, max_pairs=4)
        assert not rough.exact
        assert rough.value >= exact.value - 1e-12


class TestCoveringNumbers:
    def test_large_radius(self):
        X = FiniteMetricSpace.random(5, np.random.default_rng(1))
        assert metric_cov_number(X, X.diameter * 1.01) == 1

    def test_two_points(self):
        assert metric_cov_number(FiniteMetricSpace.path(2), 0.4) == 2

    def test_path_matches_brute_force(self):
        X = FiniteMetricSpace.path(5)
        assert metric_cov_number(X, 1.0) == brute_force_cover(X, 1.0) == 2

    def test_greedy_beyond_cap(self):
        X = FiniteMetricSpace.path(5)
        with config_override({'propinquity': {'exact_cover_max': 2}}):
            centres, exact = metric_cover(X, 1.0)
        assert not exact
        assert len(centres) >= brute_force_cover(X, 1.0)

    def test_point_suffices_past_diameter(self):
        est = covering_number_estimate(two_point(1.0), 1.01)
        assert est.dimension == 1
        assert est.witness == "point"

    def test_self_witness_for_small_eps(self):
        L = two_point(1.0)
        est = covering_number_estimate(L, 1e-4)
        assert est.dimension == L.algebra.dim_complex
        assert est.witness == "self"

    @pytest.mark.slow
    def test_pauli_is_consistent_with_candidates(self, pauli_lip):
        est = covering_number_estimate(pauli_lip, 0.3)
        good = [c['dimension'] for c in est.candidates if c['status'] == "ok" and c['bound'] <= 0.3]
        assert est.dimension == min(good)
        assert est.dimension <= 4

    def test_bad_eps(self):
        with pytest.raises(InputError):
            covering_number_estimate(two_point(1.0), 0.0)


class TestTotalBoundedness:
    def test_identical_spaces(self):
        L = two_point(1.0)
        fam = SpaceFamily([L, L, L], ["a", "b", "c"], TunnelClass(LEIBNIZ))
        res = total_boundedness_check(fam, 0.1, {"identity"})
        assert res.net == ["a"]
        assert res.certified

    def test_scaled_two_point_family(self):
        radii = [round(0.1 * k, 1) for k in range(1, 11)]
        fam = SpaceFamily([two_point(r) for r in radii], [f"r={r}" for r in radii], TunnelClass(LEIBNIZ))
        res = total_boundedness_check(fam, 0.15, {"correspondence"})
        assert len(res.net) <= 4
        assert res.certified
        D = res.bounds.values
        for i, j in itertools.combinations(range(len(radii)), 2):
            assert D[i, j] <= abs(radii[i] - radii[j]) / 2 + TOL

    def test_outlier_joins_the_net(self):
        fam = SpaceFamily([two_point(1.0), two_point(1.05), two_point(10.0)], ["near", "close", "far"],
                          TunnelClass(LEIBNIZ))
        res = total_boundedness_check(fam, 0.1, {"correspondence"})
        assert "far" in res.net
        assert res.assignment["close"] == "near"

    def test_parallel_matches_serial(self):
        fam = SpaceFamily([two_point(r) for r in (0.2, 0.5, 0.9)], ["x", "y", "z"], TunnelClass(LEIBNIZ))
        serial = pairwise_bounds(fam, {"correspondence"}, workers=1)
        threaded = pairwise_bounds(fam, {"correspondence"}, workers=3)
        np.testing.assert_allclose(serial.values, threaded.values)

    def test_member_outside_class(self, m2, paulis):
        flat = LipNorm(m2, VRepBall(m2, [paulis[0], paulis[1], 0.01 * paulis[2]]))
        with pytest.raises(PreconditionError):
            SpaceFamily([flat], ["flat"], TunnelClass(LEIBNIZ))

    def test_closure_is_assumed(self):
        fam = SpaceFamily([two_point(1.0)], ["a"], TunnelClass(LEIBNIZ))
        assert fam.metadata['closure_assumed'] is True


class TestSequenceLimit:
    def test_constant_sequence(self):
        L = two_point(1.0)
        res = sequence_limit([L] * 5, 1e-6)
        assert res.converged
        assert res.cauchy_start == 1
        assert res.limit(L.algebra.function([1.0, 0.0])) == pytest.approx(1.0, abs=1e-9)
        assert all(s['within_bound'] for s in res.stages)
        assert res.certification['passed']

    def test_scaled_segments(self):
        res = sequence_limit([two_point(1.0 + 1.0 / n) for n in range(1, 13)], 0.05)
        assert res.converged
        assert res.method == "extrapolation"
        assert diameter(res.limit) == pytest.approx(1.0, abs=1e-6)
        for s in res.stages:
            assert s['hausdorff'] <= 0.5 / s['index'] + TOL

    @pytest.mark.slow
    def test_constant_pauli_sequence(self, pauli_lip):
        res = sequence_limit([pauli_lip] * 6, 1e-6)
        assert res.converged
        assert res.cauchy_start == 1
        limit = Polytope(pauli_lip.algebra, section_polytope(res.limit.ball).vertices)
        pauli = Polytope(pauli_lip.algebra, section_polytope(pauli_lip.ball).vertices)
        assert hausdorff_polytopes(limit, pauli) <= 1e-9
        assert all(s['within_bound'] for s in res.stages)
        assert res.certification['passed']

    @pytest.mark.slow
    def test_interpolated_balls(self, m2):
        seq = [LipNorm(m2, VRepBall(m2, [m2.element([PAULI_X]), m2.element([PAULI_Y]),
                                         m2.element([(1.0 + 1.0 / n) * PAULI_Z])]), LEIBNIZ)
               for n in range(1, 21)]
        res = sequence_limit(seq, 0.02)
        assert res.converged
        pauli = VRepBall(m2, [m2.element([p]) for p in (PAULI_X, PAULI_Y, PAULI_Z)])
        dist = hausdorff_polytopes(Polytope(m2, section_polytope(res.limit.ball).vertices),
                                   Polytope(m2, section_polytope(pauli).vertices))
        assert dist <= 1e-4
        for s in res.stages:
            assert s['hausdorff'] <= 1.0 / s['index'] + TOL

    @pytest.mark.slow
    def test_rotated_pauli(self, m2):
        seq = [rotated_pauli(m2, 1.0 / n) for n in range(1, 33)]
        res = sequence_limit(seq, 0.05)
        assert res.converged
        pauli = rotated_pauli(m2, 0.0)
        dist = hausdorff_polytopes(Polytope(m2, section_polytope(res.limit.ball).vertices),
                                   Polytope(m2, section_polytope(pauli.ball).vertices))
        assert dist <= 1e-3
        haus = [s['hausdorff'] for s in res.stages]
        assert all(b <= a + TOL for a, b in zip(haus, haus[1:]))
        for s in res.stages:
            assert s['extent'][1] <= 2 * s['epsilon'] + TOL
        assert res.uppers[-1] <= 2.0 / 32 + 1e-3

    def test_no_cauchy_window(self, m2, paulis):
        wide = LipNorm(m2, VRepBall(m2, [2.0 * p for p in paulis]), LEIBNIZ)
        narrow = LipNorm(m2, VRepBall(m2, paulis), LEIBNIZ)
        res = sequence_limit([wide, narrow] * 4, 0.01)
        assert not res.converged
        assert res.limit is None

    def test_groups_by_block_pattern(self, pauli_lip):
        L = two_point(1.0)
        res = sequence_limit([pauli_lip, L, L, L, L], 1e-6)
        assert res.group == (1, 1)
        assert res.indices == [2, 3, 4, 5]

    def test_dimension_cap(self, pauli_lip):
        with pytest.raises(InputError):
            sequence_limit([pauli_lip], 0.1, dim_cap=2)

    def test_diameter_bound(self, pauli_lip):
        with pytest.raises(PreconditionError):
            sequence_limit([pauli_lip], 0.1, diameter_bound=0.5)

    def test_report_serializes(self):
        res = sequence_limit([two_point(1.0)] * 4, 1e-6)
        data = json.loads(json.dumps(res.to_dict()))
        assert data['converged']
        assert len(data['stages']) == 4
