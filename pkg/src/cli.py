"""
Command-line front end

    python -m src.cli mkdist data/two_point_mk.json
    python -m src.cli propinquity data/pauli_pair.json --strategy standard --strategy bridge
    python -m src.cli approx data/pauli_pinch.json --format table
    python -m src.cli selftest

Every command reads one JSON file, writes its result to stdout (or --output)
and logs to stderr. Errors print a JSON error object and exit with the code of
their class: 2 input, 3 invalid object, 4 precondition, 5 gap not closed.
"""

import argparse
import json
import logging
import sys
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .algebra import FiniteCStarAlgebra
from .approx import (
    Compression,
    approx_certificate,
    approx_constants,
    approx_lipnorm,
    approx_tunnel,
    ball_points,
    dense_subset_of_ball,
    pseudo_diagonal_witness,
)
from .convexopt import LPProblem, Polytope, SpectralFunctional, dc_maximize, lp_solve
from .errors import GapNotClosedError, InputError, PropinquityError
from .lipnorm import (
    FiniteMetricSpace,
    check_permissible,
    diameter_bracket,
    lip_from_metric,
    mk_distance,
    quasi_leibniz_check,
)
from .propinquity import (
    STRATEGIES,
    covering_number_estimate,
    gh_distance,
    propinquity_upper,
    sequence_limit,
    total_boundedness_check,
)
from .report import FORMATS, emit, header, rounded, save_report, save_results, summary_report
from .schemas import (
    load_json,
    parse_compression,
    parse_family,
    parse_metric_space,
    parse_permissible,
    parse_sequence,
    parse_space,
    parse_state,
)
from .settings import config_override, load_config, setting
from .tunnel import (
    compose,
    correspondence_tunnel,
    depth,
    discretized_extent,
    extent,
    identity_tunnel,
    length,
    map_tunnel,
    reach,
    standard_tunnel,
    tunnel_to_dict,
)

logger = logging.getLogger(__name__)

COMMANDS = ("mkdist", "diameter", "qleibniz", "tunnel", "propinquity", "gh", "compactness", "approx", "selftest")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="qmetric",
        description="Metric invariants of finite-dimensional quantum compact metric spaces",
    )
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('operands', nargs='*', metavar="[action] input",
                        help="JSON input file; tunnel takes build, extent or compose first")
    parser.add_argument('--config', help="YAML configuration (default config/config.yaml)")
    parser.add_argument('--tol', type=float, help="DC gap target and quotient tolerance")
    parser.add_argument('--seed', type=int)
    parser.add_argument('--workers', type=int)
    parser.add_argument('--format', choices=FORMATS)
    parser.add_argument('--precision', type=int, help="Significant digits in the output")
    parser.add_argument('--strategy', action='append', choices=STRATEGIES,
                        help="Propinquity strategy (repeatable; default: all)")
    parser.add_argument('--output', help="Write the result here instead of stdout")
    parser.add_argument('--strict-gap', action='store_true',
                        help="Exit 5 when a reported bracket did not close its gap")
    parser.add_argument('--save-report', action='store_true', help="Keep a text summary under outputs/reports")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true')
    verbosity.add_argument('--quiet', action='store_true')

    args = parser.parse_args(argv)
    operands = list(args.operands)
    args.action = None
    if args.command == "tunnel":
        if not operands or operands[0] not in ("build", "extent", "compose"):
            parser.error("tunnel needs one of build, extent, compose")
        args.action = operands.pop(0)
    if len(operands) > 1:
        parser.error(f"{args.command} takes a single input file")
    args.input = operands[0] if operands else None
    if args.command != "selftest" and args.input is None:
        parser.error(f"{args.command} needs an input file")
    if args.tol is not None and args.tol <= 0:
        parser.error("--tol must be positive")
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    return args


def _overrides(args: argparse.Namespace) -> Dict:
    run = {k: v for k, v in (('seed', args.seed), ('workers', args.workers), ('format', args.format),
                             ('precision', args.precision)) if v is not None}
    out: Dict = {'run': run}
    if args.tol is not None:
        out['dc'] = {'gap': args.tol}
        out['tolerances'] = {'quotient': args.tol}
    if args.save_report:
        out['outputs'] = {'save_reports': True}
    return out


def _rng() -> np.random.Generator:
    return np.random.default_rng(setting('run', 'seed'))


def _bracket(br) -> Dict:
    return {'bounds': br.to_list(), 'gap_closed': br.gap_closed}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_mkdist(data: Dict, args: argparse.Namespace) -> Dict:
    L = parse_space(data.get('space'), "space", certify=False)
    states = data.get('states') or [data.get('phi'), data.get('psi')]
    if len(states) != 2 or any(s is None for s in states):
        raise InputError("mkdist needs two states")
    phi = parse_state(L.algebra, states[0], "states[0]")
    psi = parse_state(L.algebra, states[1], "states[1]")
    value = mk_distance(L, phi, psi)
    logger.info(f"mk_L(φ, ψ) = {value:.9g}")
    return {'space': L.label, 'distance': value}


def cmd_diameter(data: Dict, args: argparse.Namespace) -> Dict:
    L = parse_space(data.get('space'), "space", certify=False)
    lo, hi = diameter_bracket(L)
    return {'space': L.label, 'diameter': [lo, hi]}


def cmd_qleibniz(data: Dict, args: argparse.Namespace) -> Dict:
    L = parse_space(data.get('space'), "space", certify=False)
    F = parse_permissible(data.get('permissible', {'C': 1.0, 'D': 0.0}))
    result: Dict = {'space': L.label}
    if data.get('check_permissible', True):
        result['permissible'] = check_permissible(F, strong=bool(data.get('strong')),
                                                  seed=setting('run', 'seed')).to_dict()
    cert = quasi_leibniz_check(L, F, _rng())
    logger.info(f"{'✓' if cert.passed else '✗'} {F.label}: worst ratio {cert.worst_ratio:.6g} ({cert.grade})")
    result['certification'] = cert.to_dict()
    return result


def _build_tunnel(data: Dict, where: str = "tunnel"):
    kind = data.get('kind', 'standard')
    L_a = parse_space(data.get('left'), f"{where}.left")
    L_b = parse_space(data.get('right'), f"{where}.right")
    eps = float(data.get('epsilon', 0.0))
    if kind == "standard":
        return standard_tunnel(L_a, L_b, eps, restarts=data.get('restarts'), rng=_rng())
    if kind == "identity":
        return identity_tunnel(L_a)
    if kind == "correspondence":
        if L_a.space is None or L_b.space is None:
            raise InputError(f"{where}: correspondence tunnels join metric spaces")
        pairs = data.get('correspondence')
        R = [tuple(p) for p in pairs] if pairs else gh_distance(L_a.space, L_b.space).correspondence
        return correspondence_tunnel(L_a.space, L_b.space, R)
    if kind == "map":
        comp = parse_compression(L_a.algebra, data.get('compression'), f"{where}.compression")
        return map_tunnel(L_a, L_b, comp.psi, eps, kind="map")
    raise InputError(f"{where}: unknown tunnel kind '{kind}'")


def cmd_tunnel(data: Dict, args: argparse.Namespace) -> Dict:
    if args.action == "compose":
        t1 = _build_tunnel(data.get('first', {}), "first")
        t2 = _build_tunnel(data.get('second', {}), "second")
        tau = compose(t1, t2, data.get('epsilon'))
        result = {
            'first': _bracket(extent(t1)),
            'second': _bracket(extent(t2)),
            'epsilon': tau.eps,
            'composed': tunnel_to_dict(tau, compute=True),
        }
        result['subadditive'] = extent(tau).upper <= extent(t1).upper + extent(t2).upper + tau.eps + 1e-6
        return result
    tunnel = _build_tunnel(data)
    if args.action == "extent":
        return {'kind': tunnel.kind, 'extent': _bracket(extent(tunnel))}
    return tunnel_to_dict(tunnel, compute=True)


def cmd_propinquity(data: Dict, args: argparse.Namespace) -> Dict:
    L_a = parse_space(data.get('left'), "left")
    L_b = parse_space(data.get('right'), "right")
    psi, psi_eps = None, ()
    if 'compression' in data:
        psi = parse_compression(L_a.algebra, data['compression']).psi
        psi_eps = [float(e) for e in data.get('psi_eps', [0.1])]
    bound = propinquity_upper(L_a, L_b, args.strategy or data.get('strategies'), psi=psi, psi_eps=psi_eps,
                              labels=(L_a.label, L_b.label))
    return bound.to_dict()


def cmd_gh(data: Dict, args: argparse.Namespace) -> Dict:
    X = parse_metric_space(data.get('X'), "X")
    Y = parse_metric_space(data.get('Y'), "Y")
    est = gh_distance(X, Y, data.get('max_pairs'), _rng())
    result = est.to_dict()
    if data.get('propinquity', False):
        bound = propinquity_upper(lip_from_metric(X), lip_from_metric(Y), args.strategy, labels=("X", "Y"))
        result['propinquity_upper'] = bound.upper
        result['dominated'] = bound.upper <= est.value + 1e-6
    return result


def cmd_compactness(data: Dict, args: argparse.Namespace) -> Dict:
    if 'family' in data:
        family = parse_family(data['family'])
        eps = float(data.get('epsilon', 0.5))
        result = total_boundedness_check(family, eps, args.strategy, setting('run', 'workers')).to_dict()
        if data.get('covering'):
            result['covering'] = {label: covering_number_estimate(L, eps).to_dict()
                                  for label, L in zip(family.labels, family.members)}
        return result
    if 'sequence' in data:
        seq = parse_sequence(data['sequence'])
        F = parse_permissible(data['permissible']) if 'permissible' in data else None
        limit = sequence_limit(seq, float(data.get('tol', 0.05)), data.get('dim_cap'),
                               data.get('diameter_bound'), permissible=F)
        return limit.to_dict()
    raise InputError("compactness needs a family or a sequence")


def cmd_approx(data: Dict, args: argparse.Namespace) -> Dict:
    L_A = parse_space(data.get('space') or data.get('lipnorm'), "space")
    A = L_A.algebra
    eps = float(data.get('epsilon', 0.1))
    comp = parse_compression(A, data.get('compression'))
    mu = parse_state(A, data['mu'], "mu") if 'mu' in data else None

    F = None
    dense_record = None
    if 'dense' in data:
        dense = dense_subset_of_ball(L_A, mu, float(data['dense'].get('delta', eps ** 2)), _rng())
        F, dense_record = dense.elements, {'points': len(dense), 'delta': dense.delta, 'radius': dense.radius}
    witness = pseudo_diagonal_witness(A, F if F is not None else ball_points(L_A), eps ** 2, comp)
    approx = approx_lipnorm(L_A, witness.psi, eps, F=F, mu=mu, phi=witness.phi,
                            strict=bool(data.get('strict', True)))
    tunnel = approx_tunnel(L_A, approx)
    cert = approx_certificate(tunnel, approx)
    result = {
        'witness': witness.to_dict(),
        'approximation': approx.to_dict(),
        'certificate': cert,
        'tunnel': tunnel_to_dict(tunnel),
    }
    if dense_record is not None:
        result['dense_subset'] = dense_record
    logger.info(f"{'✓' if cert['length_within_bound'] else '✗'} length ≤ ε + 3ε² = {cert['length_bound']:.6g}")
    return result


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------


def _check_mk_recovery(rng: np.random.Generator) -> List:
    worst = 0.0
    for _ in range(20):
        X = FiniteMetricSpace.random(int(rng.integers(2, 6)), rng)
        L = lip_from_metric(X)
        for i in range(X.size):
            for j in range(i + 1, X.size):
                d = mk_distance(L, X.algebra.dirac_state(i), X.algebra.dirac_state(j))
                worst = max(worst, abs(d - X.dist[i, j]))
    return [("Dirac states recover d_X", worst <= 1e-8, f"max error {worst:.2e}")]


def _check_lp_backends(rng: np.random.Generator) -> List:
    worst = 0.0
    for _ in range(20):
        n, m = int(rng.integers(2, 5)), int(rng.integers(2, 6))
        A = rng.uniform(-1, 1, (m, n))
        p = LPProblem(rng.uniform(-1, 1, n), A, rng.uniform(0.5, 2.0, m), ['<='] * m,
                      [(-1.0, 1.0)] * n, maximize=True)
        a, b = lp_solve(p, "bland"), lp_solve(p, "highs")
        worst = max(worst, abs(a.value - b.value))
    return [("Bland tableau agrees with HiGHS", worst <= 1e-7, f"max difference {worst:.2e}")]


def _check_extent_values() -> List:
    two = lip_from_metric(FiniteMetricSpace.path(2))
    point = lip_from_metric(FiniteMetricSpace.from_matrix([[0.0]]))
    tau = standard_tunnel(two, point, 0.1, restarts=0)
    checks = []
    for name, fn, value in (("extent", extent, 1.1), ("reach", reach, 1.1), ("depth", depth, 0.0),
                            ("length", length, 1.1)):
        br = fn(tau)
        ok = br.lower - 1e-6 <= value <= br.upper + 1e-6 and br.upper - br.lower <= 1e-3
        checks.append((f"two points to one: {name} = {value}", ok, f"[{br.lower:.6g}, {br.upper:.6g}]"))
    br_e, br_l = extent(tau), length(tau)
    checks.append(("length / extent sandwich", br_l.lower <= br_e.upper + 1e-9 and br_e.lower <= 2 * br_l.upper + 1e-9,
                   ""))
    return checks


def _check_extent_oracle() -> List:
    pauli = parse_space({'kind': "preset", 'name': "pauli"}, "selftest", certify=False)
    two = lip_from_metric(FiniteMetricSpace.path(2, 2.0))
    tau = map_tunnel(pauli, two, Compression.pinch(pauli.algebra).psi, 0.5, kind="map")
    br = extent(tau)
    value = discretized_extent(tau, resolution=0, levels=2, steps=4, max_evaluations=80)
    ok = br.lower - 1e-3 <= value <= br.upper + 1e-3
    return [("pinching tunnel on M2 ⊕ C²: extent matches the state-space grid", ok,
             f"grid {value:.6g}, bracket [{br.lower:.6g}, {br.upper:.6g}]")]


def _check_dc_oracle(rng: np.random.Generator) -> List:
    A = FiniteCStarAlgebra((2, 2))
    V = np.array([A.random_element(rng).coords for _ in range(4)])
    M2 = FiniteCStarAlgebra((2,))
    first = SpectralFunctional(M2, np.hstack([np.eye(4), np.zeros((4, 4))]))
    second = SpectralFunctional(M2, np.hstack([np.zeros((4, 4)), np.eye(4)]))
    res = dc_maximize(first, [second], Polytope(A, V))
    X = rng.dirichlet(np.ones(len(V)), size=20000) @ V
    oracle = float(np.max(M2.lambda_max_batch(X[:, :4]) - M2.lambda_max_batch(X[:, 4:])))
    # samples only reach below the supremum, so the oracle bounds the upper end
    ok = oracle <= res.upper + 1e-8 and res.lower <= res.upper
    if res.gap_closed:
        ok = ok and res.lower >= oracle - 1e-3
    return [("DC bracket contains the sampled optimum", ok,
             f"oracle {oracle:.6g} in [{res.lower:.6g}, {res.upper:.6g}]")]


def _check_gh(rng: np.random.Generator) -> List:
    checks = []
    a, b = 1.0, 1.6
    est = gh_distance(FiniteMetricSpace.path(2, a), FiniteMetricSpace.path(2, b))
    checks.append(("GH of two-point spaces is |a − b|/2", abs(est.value - abs(a - b) / 2) <= 1e-9,
                   f"{est.value:.6g}"))
    worst = -np.inf
    for _ in range(5):
        X = FiniteMetricSpace.random(int(rng.integers(2, 4)), rng)
        Y = FiniteMetricSpace.random(int(rng.integers(2, 4)), rng)
        gh = gh_distance(X, Y).value
        up = propinquity_upper(lip_from_metric(X), lip_from_metric(Y), ["correspondence", "standard"]).upper
        worst = max(worst, up - gh)
    checks.append(("propinquity ≤ GH on commutative pairs", worst <= 1e-6, f"max excess {worst:.2e}"))
    return checks


def _check_approx_constants() -> List:
    checks = []
    for eps in (0.2, 0.1, 0.05):
        C, D = approx_constants(1.0, 0.0, eps)
        ok = np.isclose(C, 1 + 2 * eps) and np.isclose(D, 2 * eps + 10 * eps ** 2 + 12 * eps ** 3)
        checks.append((f"approximation constants at ε = {eps}", bool(ok), f"({C:.6g}, {D:.6g})"))
    return checks


def cmd_selftest(data: Optional[Dict], args: argparse.Namespace) -> Dict:
    rng = _rng()
    sections = [
        ("Monge-Kantorovich", _check_mk_recovery(rng)),
        ("Linear programming", _check_lp_backends(rng)),
        ("Tunnel measurements", _check_extent_values() + _check_extent_oracle()),
        ("DC brackets", _check_dc_oracle(rng)),
        ("Gromov-Hausdorff", _check_gh(rng)),
        ("Approximation", _check_approx_constants()),
    ]
    failed = [label for _, checks in sections for label, ok, _ in checks if not ok]
    text = summary_report("Quantum metric self test", {'Version': __version__, 'Seed': setting('run', 'seed')},
                          sections)
    if setting('outputs', 'save_reports'):
        save_report(text, "selftest")
    for line in text.splitlines():
        logger.info(line)
    return {
        'passed': not failed,
        'failed': failed,
        'table': [{'section': name, 'check': label, 'passed': ok, 'detail': detail}
                  for name, checks in sections for label, ok, detail in checks],
    }


HANDLERS: Dict[str, Callable[[Optional[Dict], argparse.Namespace], Dict]] = {
    'mkdist': cmd_mkdist,
    'diameter': cmd_diameter,
    'qleibniz': cmd_qleibniz,
    'tunnel': cmd_tunnel,
    'propinquity': cmd_propinquity,
    'gh': cmd_gh,
    'compactness': cmd_compactness,
    'approx': cmd_approx,
    'selftest': cmd_selftest,
}


def _open_gaps(obj) -> List[str]:
    """Paths of every 'gap_closed': false in a result"""
    found = []

    def walk(node, path):
        if isinstance(node, dict):
            if node.get('gap_closed') is False:
                found.append(path or "result")
            for k, v in node.items():
                walk(v, f"{path}.{k}" if path else str(k))
        elif isinstance(node, list):
            for i, v in enumerate(node):
                walk(v, f"{path}[{i}]")

    walk(obj, "")
    return found


def run(args: argparse.Namespace) -> Dict:
    load_config(args.config)
    with config_override(_overrides(args)):
        data = load_json(args.input) if args.input else None
        command = args.command + (f" {args.action}" if args.action else "")
        logger.info("=" * 60)
        logger.info(f"{command} (seed {setting('run', 'seed')})")
        logger.info("=" * 60)
        result = HANDLERS[args.command](data, args)
        gaps = _open_gaps(result)
        if gaps:
            logger.warning(f"Brackets with open gaps: {', '.join(gaps)}")
            if args.strict_gap:
                raise GapNotClosedError("A reported bracket did not close its gap", witness={'paths': gaps})
        payload = {'header': header(command, __version__), 'result': result}
        text = emit(payload, setting('run', 'format'), args.output, setting('run', 'precision'))
        if setting('outputs', 'save_reports'):
            save_results(payload, command.replace(" ", "_"))
    if not args.output:
        sys.stdout.write(text)
    return result


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                        stream=sys.stderr)
    try:
        result = run(args)
    except PropinquityError as e:
        logger.error(f"✗ {e.kind}: {e.message}")
        sys.stdout.write(json.dumps(rounded(e.to_dict()), indent=2, sort_keys=True, default=str) + "\n")
        return e.exit_code
    if args.command == "selftest" and not result['passed']:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
