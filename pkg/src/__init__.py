"""
Quantum Metric Toolkit

Monge-Kantorovich distances, quasi-Leibniz certificates, tunnels and upper
bounds on the dual Gromov-Hausdorff propinquity for finite-dimensional
quantum compact metric spaces, with finite-dimensional approximation and
compactness procedures built on them.
"""

__version__ = "1.0.0"
__author__ = "Research Team"

from .algebra import FiniteCStarAlgebra, HermitianElement, PositiveUnitalMap, StateFunctional
from .approx import Compression, approx_lipnorm, approx_tunnel, pseudo_diagonal_witness, unitalize
from .errors import PropinquityError
from .lipnorm import FiniteMetricSpace, LipNorm, PermissibleFunction, lip_from_metric, mk_distance
from .propinquity import gh_distance, propinquity_upper, sequence_limit, total_boundedness_check
from .tunnel import compose, extent, length, standard_tunnel

__all__ = [
    'FiniteCStarAlgebra',
    'HermitianElement',
    'PositiveUnitalMap',
    'StateFunctional',
    'Compression',
    'approx_lipnorm',
    'approx_tunnel',
    'pseudo_diagonal_witness',
    'unitalize',
    'PropinquityError',
    'FiniteMetricSpace',
    'LipNorm',
    'PermissibleFunction',
    'lip_from_metric',
    'mk_distance',
    'gh_distance',
    'propinquity_upper',
    'sequence_limit',
    'total_boundedness_check',
    'compose',
    'extent',
    'length',
    'standard_tunnel',
]
