"""
Error hierarchy for the Boutroux toolkit.
Every failure carries a details dict so the CLI can emit it as machine-readable JSON.
Exit codes: 1 input error, 2 numerical failure, 3 invariant-audit failure.
"""
from typing import Any, Dict


class BoutrouxError(Exception):
    """Base class; subclasses pick the CLI exit code."""

    exit_code = 2

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "details": {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(value: Any) -> Any:
    """Coerce numpy / complex detail values into JSON-friendly objects."""
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if hasattr(value, "tolist"):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return repr(value)


# ---- Input errors (exit 1) ----

class InputError(BoutrouxError):
    exit_code = 1


class CollinearSupport(InputError):
    pass


class NotHyperelliptic(InputError):
    pass


class NonRealResidues(InputError):
    pass


class ResidueSumNonzero(InputError):
    pass


class SchemaError(InputError):
    pass


class ReconstructionUnsupported(InputError):
    pass


# ---- Numerical failures (exit 2) ----

class NumericalError(BoutrouxError):
    exit_code = 2


class DegenerateSegment(NumericalError):
    pass


class IllConditionedDiscriminant(NumericalError):
    pass


class SheetCollision(NumericalError):
    pass


class PathThroughBranchPoint(NumericalError):
    pass


class RadiusTooLarge(NumericalError):
    pass


class BranchMismatch(NumericalError):
    pass


class UnpairableBranchPoints(NumericalError):
    pass


class SingularNormalization(NumericalError):
    pass


class DiscsOverlap(NumericalError):
    pass


class QuadratureNonConvergent(NumericalError):
    pass


class ImTauNotPositive(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class MarkingJump(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class TraceBudgetExceeded(NumericalError):
    pass


class LostSheet(NumericalError):
    pass


class NegativeDensity(NumericalError):
    pass


class FaceCountMismatch(NumericalError):
    pass


# ---- Audit failures (exit 3) ----

class AuditError(BoutrouxError):
    exit_code = 3


class CylinderDetected(AuditError):
    pass


class EulerMismatch(AuditError):
    pass


class AuditFailed(AuditError):
    pass
