"""Exception hierarchy.

Every error carries a machine-readable ``category`` which the command line
front end maps onto an exit code.
"""

from __future__ import annotations


class NLCHError(Exception):
    category = "error"


class ConfigError(NLCHError, ValueError):
    category = "config"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainMismatchError(NLCHError, ValueError):
    category = "domain-mismatch"


class InvalidKernelError(NLCHError, ValueError):
    category = "invalid-kernel"


class InadmissibleKernelError(InvalidKernelError):
    category = "inadmissible-kernel"


class OutsideDomainError(NLCHError, ValueError):
    """A value lies outside the effective domain of a monotone graph."""

    category = "outside-domain"


class RootFindingError(NLCHError, ArithmeticError):
    category = "root-finding"


class CouplingError(NLCHError, ValueError):
    category = "invalid-coupling"


class NonConvergenceError(NLCHError):
    """An iteration ran out of budget; ``history`` holds the residuals."""

    category = "non-convergence"

    def __init__(self, message: str, history=()):
        self.history = list(history)
        super().__init__(message)


class PicardNonConvergenceError(NonConvergenceError):
    category = "picard-non-convergence"


class OuterNonConvergenceError(NonConvergenceError):
    category = "outer-non-convergence"


class DivergenceError(NLCHError, ArithmeticError):
    category = "divergence"


class ConstraintBlowUpError(NLCHError):
    category = "constraint-blow-up"


class StepRejectedError(NLCHError):
    """dt halving could not restore a positive reaction coefficient."""

    category = "step-rejected"


class LinearSolveError(NLCHError):
    category = "linear-solve"


class InvariantViolation(NLCHError, AssertionError):
    category = "invariant-violation"


class EnergyBoundViolation(InvariantViolation):
    category = "energy-bound"

    def __init__(self, message: str, ledger=None):
        self.ledger = ledger
        super().__init__(message)
