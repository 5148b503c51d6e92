"""
JSON input schemas

Every command reads one JSON document. The pieces below turn its parts into
library objects and raise InputError with the offending path on any schema
violation:

    algebra      [2] | {"blocks": [1, 1]}
    matrix       [[...]] | {"re": [[...]], "im": [[...]]}
    element      {"blocks": [matrix, ...]} | {"coords": [...]} | {"values": [...]}
    state        "trace" | {"kind": "dirac", "point": i}
                 | {"kind": "vector", "block": j, "vector": [...], "vector_im": [...]}
                 | {"kind": "density", "blocks": [matrix, ...]} | {"densities": [matrix, ...]}
    permissible  {"C": 1, "D": 0} | {"family": "power", "p": 2, "C": 1.5, "D": 0}
    space        {"kind": "metric", "dist": [[...]]} | {"kind": "metric", "points": [[...]]}
                 | {"kind": "vrep", "algebra": ..., "generators": [element, ...]}
                 | {"kind": "hrep", "algebra": ..., "functionals": [element, ...],
                    "spectral": [{"target": algebra, "matrix": [[...]], "bound": c}, ...]}
                 | {"kind": "preset", "name": "pauli" | "two_point" | "point"}
                 with optional "label", "permissible" and "base_state"; "type" is
                 accepted for "kind" throughout
    compression  {"kind": "identity" | "pinch"} | {"kind": "corner", "projection": element}
                 | {"kind": "corner", "blocks": [j, ...]}
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .algebra import FiniteCStarAlgebra, HermitianElement, StateFunctional
from .approx import Compression
from .convexopt import HRepBall, LinearTerm, SpectralTerm, VRepBall
from .errors import InputError
from .lipnorm import FiniteMetricSpace, LipNorm, PermissibleFunction, lip_from_metric, quasi_leibniz_check
from .propinquity import SpaceFamily
from .tunnel import TunnelClass

logger = logging.getLogger(__name__)

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def load_json(path: str) -> Dict:
    """Read a JSON input file"""
    p = Path(path)
    if not p.exists():
        raise InputError(f"Input file not found: {p}")
    try:
        with open(p, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"Invalid JSON in {p}: {e}") from e
    if not isinstance(data, dict):
        raise InputError(f"Input root must be an object: {p}")
    logger.debug(f"Loaded input from {p}")
    return data


def _require(obj: Dict, key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise InputError(f"{where}: missing '{key}'")
    return obj[key]


def _array(value: Any, where: str, ndim: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise InputError(f"{where}: not a numeric array") from e
    if ndim is not None and arr.ndim != ndim:
        raise InputError(f"{where}: expected a {ndim}-dimensional array, got shape {arr.shape}")
    return arr


def parse_algebra(obj: Any, where: str = "algebra") -> FiniteCStarAlgebra:
    blocks = obj.get('blocks') if isinstance(obj, dict) else obj
    if not isinstance(blocks, list) or not blocks or not all(isinstance(n, int) and n > 0 for n in blocks):
        raise InputError(f"{where}: blocks must be a non-empty list of positive integers")
    return FiniteCStarAlgebra(tuple(blocks))


def parse_matrix(obj: Any, where: str) -> np.ndarray:
    """Real nested lists, [re, im] entries, or a {"re", "im"} pair"""
    if isinstance(obj, dict):
        re = _array(_require(obj, 're', where), f"{where}.re", 2)
        im = _array(obj.get('im', np.zeros_like(re)), f"{where}.im", 2)
        if re.shape != im.shape:
            raise InputError(f"{where}: real and imaginary parts differ in shape")
        return re + 1j * im
    arr = _array(obj, where)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim != 2:
        raise InputError(f"{where}: expected a matrix, got shape {arr.shape}")
    return arr.astype(complex)


def _kind(obj: Any, where: str) -> str:
    if isinstance(obj, dict) and 'type' in obj and 'kind' not in obj:
        return obj['type']
    return _require(obj, 'kind', where)


def parse_element(A: FiniteCStarAlgebra, obj: Any, where: str = "element") -> HermitianElement:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object with blocks, coords or values")
    if 'blocks' in obj:
        blocks = obj['blocks']
        if not isinstance(blocks, list):
            raise InputError(f"{where}.blocks: expected a list")
        return A.element([parse_matrix(b, f"{where}.blocks[{j}]") for j, b in enumerate(blocks)])
    if 'coords' in obj:
        return A.from_coords(_array(obj['coords'], f"{where}.coords", 1))
    if 'values' in obj:
        return A.function(_array(obj['values'], f"{where}.values", 1))
    raise InputError(f"{where}: expected blocks, coords or values")


def parse_state(A: FiniteCStarAlgebra, obj: Any, where: str = "state") -> StateFunctional:
    if obj == "trace" or obj is None:
        return A.trace_state()
    if isinstance(obj, dict) and 'densities' in obj:
        obj = {'kind': 'density', 'blocks': obj['densities']}
    kind = _kind(obj, where)
    if kind == "trace":
        return A.trace_state()
    if kind == "dirac":
        return A.dirac_state(int(_require(obj, 'point', where)))
    if kind == "vector":
        re = _array(_require(obj, 'vector', where), f"{where}.vector", 1)
        im = _array(obj.get('vector_im', np.zeros_like(re)), f"{where}.vector_im", 1)
        return A.vector_state(int(obj.get('block', 0)), re + 1j * im)
    if kind == "density":
        blocks = _require(obj, 'blocks', where)
        return StateFunctional(A, tuple(parse_matrix(b, f"{where}.blocks[{j}]") for j, b in enumerate(blocks)))
    raise InputError(f"{where}: unknown state kind '{kind}'")


def parse_permissible(obj: Any, where: str = "permissible") -> PermissibleFunction:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object")
    family = obj.get('family', 'cd')
    if family == 'cd':
        return PermissibleFunction.cd(float(obj.get('C', 1.0)), float(obj.get('D', 0.0)))
    if family == 'power':
        return PermissibleFunction.power(float(_require(obj, 'p', where)), float(obj.get('C', 1.0)),
                                         float(obj.get('D', 0.0)))
    raise InputError(f"{where}: unknown family '{family}'")


def _preset(name: str, where: str) -> LipNorm:
    if name == "pauli":
        A = FiniteCStarAlgebra((2,))
        return LipNorm(A, VRepBall(A, [A.element([s]) for s in PAULI]), label="pauli")
    if name == "two_point":
        return lip_from_metric(FiniteMetricSpace.path(2))
    if name == "point":
        return lip_from_metric(FiniteMetricSpace.from_matrix([[0.0]]))
    raise InputError(f"{where}: unknown preset '{name}'")


def parse_space(obj: Any, where: str = "space", certify: bool = True) -> LipNorm:
    """
    A Lip-norm from its JSON description

    Spaces given without a certificate are checked against their permissible
    function (Leibniz by default); the verdict is attached, not enforced.
    """
    kind = _kind(obj, where)
    if kind == "metric":
        if 'dist' in obj:
            X = FiniteMetricSpace.from_matrix(_array(obj['dist'], f"{where}.dist", 2), obj.get('labels'))
        else:
            X = FiniteMetricSpace.from_points(_array(_require(obj, 'points', where), f"{where}.points", 2),
                                              obj.get('labels'))
        L = lip_from_metric(X)
    elif kind == "vrep":
        A = parse_algebra(_require(obj, 'algebra', where), f"{where}.algebra")
        gens = [parse_element(A, g, f"{where}.generators[{k}]")
                for k, g in enumerate(_require(obj, 'generators', where))]
        L = LipNorm(A, VRepBall(A, gens, parse_state(A, obj.get('base_state'), f"{where}.base_state")))
    elif kind == "hrep":
        A = parse_algebra(_require(obj, 'algebra', where), f"{where}.algebra")
        terms: List = [LinearTerm(parse_element(A, t, f"{where}.functionals[{k}]").coords,
                                  float(t.get('bound', 1.0)))
                       for k, t in enumerate(obj.get('functionals', []))]
        for k, t in enumerate(obj.get('spectral', [])):
            target = parse_algebra(_require(t, 'target', f"{where}.spectral[{k}]"), f"{where}.spectral[{k}].target")
            M = _array(_require(t, 'matrix', f"{where}.spectral[{k}]"), f"{where}.spectral[{k}].matrix", 2)
            if M.shape != (target.real_dim_sa, A.real_dim_sa):
                raise InputError(f"{where}.spectral[{k}].matrix must be {target.real_dim_sa}x{A.real_dim_sa}")
            terms.append(SpectralTerm(target, M, float(t.get('bound', 1.0))))
        if not terms:
            raise InputError(f"{where}: an hrep space needs functionals or spectral terms")
        L = LipNorm(A, HRepBall(A, terms, parse_state(A, obj.get('base_state'), f"{where}.base_state")))
    elif kind == "preset":
        L = _preset(_require(obj, 'name', where), where)
    else:
        raise InputError(f"{where}: unknown space kind '{kind}'")

    label = obj.get('label', L.label)
    F = parse_permissible(obj['permissible'], f"{where}.permissible") if 'permissible' in obj else \
        (L.permissible or PermissibleFunction.cd(1.0, 0.0))
    L = LipNorm(L.algebra, L.ball, F, L.certification if L.permissible is F else None, L.space, label)
    L.validate()
    if certify and L.certification is None:
        L = L.certified(quasi_leibniz_check(L, F))
    return L


def parse_compression(A: FiniteCStarAlgebra, obj: Any, where: str = "compression") -> Compression:
    kind = _kind(obj, where) if obj is not None else "identity"
    if kind == "identity":
        return Compression.identity(A)
    if kind == "pinch":
        return Compression.pinch(A)
    if kind == "corner":
        if 'projection' in obj:
            return Compression.corner(parse_element(A, obj['projection'], f"{where}.projection"))
        keep = _require(obj, 'blocks', where)
        if not keep or any(not 0 <= j < len(A.blocks) for j in keep):
            raise InputError(f"{where}.blocks: block indices out of range for {A}")
        P = A.element([np.eye(n) if j in keep else np.zeros((n, n)) for j, n in enumerate(A.blocks)])
        return Compression.corner(P)
    raise InputError(f"{where}: unknown compression kind '{kind}'")


def parse_metric_space(obj: Any, where: str) -> FiniteMetricSpace:
    if isinstance(obj, dict) and 'points' in obj:
        return FiniteMetricSpace.from_points(_array(obj['points'], f"{where}.points", 2), obj.get('labels'))
    dist = obj.get('dist') if isinstance(obj, dict) else obj
    return FiniteMetricSpace.from_matrix(_array(dist, f"{where}.dist", 2))


def parse_family(obj: Any, where: str = "family") -> SpaceFamily:
    members = _require(obj, 'members', where)
    if not isinstance(members, list) or not members:
        raise InputError(f"{where}.members: expected a non-empty list")
    F = parse_permissible(obj.get('permissible', {}), f"{where}.permissible")
    spaces = [parse_space(m, f"{where}.members[{k}]", certify=False) for k, m in enumerate(members)]
    labels = [m.get('label', f"m{k}") for k, m in enumerate(members)]
    return SpaceFamily(spaces, labels, TunnelClass(F), metadata=dict(obj.get('metadata', {})))


def _rotated_pauli(theta: float) -> LipNorm:
    A = FiniteCStarAlgebra((2,))
    c, s = np.cos(theta), np.sin(theta)
    X, Y, Z = PAULI
    gens = [A.element([c * X + s * Y]), A.element([-s * X + c * Y]), A.element([Z])]
    return LipNorm(A, VRepBall(A, gens), PermissibleFunction.cd(1.0, 0.0), label=f"pauli[θ={theta:.4g}]")


def parse_sequence(obj: Any, where: str = "sequence") -> List[LipNorm]:
    """Explicit members, or the generated family {"kind": "rotated_pauli", "length": n}"""
    if obj.get('kind') == "rotated_pauli":
        n = int(_require(obj, 'length', where))
        if n < 1:
            raise InputError(f"{where}.length must be positive")
        return [_rotated_pauli(1.0 / k) for k in range(1, n + 1)]
    members = _require(obj, 'members', where)
    return [parse_space(m, f"{where}.members[{k}]", certify=False) for k, m in enumerate(members)]
