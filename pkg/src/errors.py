"""
Exception hierarchy for the propinquity toolkit.

Every error carries the process exit code the CLI reports for it:
0 success, 2 input error, 3 invalid mathematical object,
4 precondition failure, 5 internal gap-not-closed.
"""

from typing import Dict, Optional


class PropinquityError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 1
    kind = "error"

    def __init__(self, message: str, witness: Optional[Dict] = None):
        super().__init__(message)
        self.message = message
        self.witness = witness or {}

    def to_dict(self) -> Dict:
        return {
            'error': self.kind,
            'message': self.message,
            'witness': self.witness,
        }


class InputError(PropinquityError, ValueError):
    """Malformed input: schema violations, wrong shapes, unknown options"""

    exit_code = 2
    kind = "input_error"


class AlgebraMismatchError(InputError):
    """Two operands live in different algebras"""

    kind = "algebra_mismatch"


class InvalidObjectError(PropinquityError, ValueError):
    """A value violates the defining invariants of its mathematical type"""

    exit_code = 3
    kind = "invalid_object"


class PreconditionError(PropinquityError):
    """A stated hypothesis of a construction fails on the supplied data"""

    exit_code = 4
    kind = "precondition_failure"


class SpectralGapError(PreconditionError):
    """The spectrum of the unit image has no gap around the cut"""

    kind = "spectral_gap"


class QuotientConditionError(PreconditionError):
    """A tunnel does not push its Lip-norm forward onto a factor"""

    kind = "quotient_condition"


class GapNotClosedError(PropinquityError):
    """An optimisation bracket stayed wider than the requested tolerance"""

    exit_code = 5
    kind = "gap_not_closed"
