"""Exception hierarchy.

Errors deriving from :class:`MathematicalRejection` mean the input is
well-formed but fails a mathematical hypothesis (resonant perturbation,
degenerate integrable part, non-closed form). The CLI maps them to exit
code 2; everything else is a usage or numerical failure.
"""


class NFTKError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(NFTKError, ValueError):
    """Array shapes do not match the grid they are supposed to live on."""


class SymmetryError(NFTKError, ValueError):
    """Fourier coefficients violate f(-k) = conj(f(k))."""


class DomainError(NFTKError, ValueError):
    """An action value lies outside the action box."""


class InvalidModeError(NFTKError, ValueError):
    """A lattice vector is not admissible (e.g. k = 0 where k != 0 is needed)."""


class PreconditionError(NFTKError, ValueError):
    """A documented precondition of an operation does not hold."""


class StiffnessError(NFTKError, RuntimeError):
    """The adaptive integrator could not complete the requested flow."""


class ConfigError(NFTKError, ValueError):
    """Configuration file is unreadable or violates the schema."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class MathematicalRejection(NFTKError):
    """Input violates a mathematical hypothesis of the requested operation."""


class CertificationError(MathematicalRejection):
    """No small-divisor certificate (T, C) could be produced."""

    def __init__(self, message, worst_direction=None, worst_point=None):
        self.worst_direction = worst_direction
        self.worst_point = worst_point
        super().__init__(message)


class DegeneracyError(MathematicalRejection):
    """The gradient of a divisor vanishes where it must not."""


class ResonanceError(MathematicalRejection):
    """The perturbation has non-vanishing resonant Fourier coefficients."""

    def __init__(self, verdict):
        self.verdict = verdict
        n = len(verdict.violations)
        super().__init__(f"perturbation is resonant: {n} violation(s)")


class SmallDivisorError(MathematicalRejection):
    """A homological quotient blew up."""

    def __init__(self, k, xi, value):
        self.k = tuple(int(v) for v in k)
        self.xi = tuple(float(v) for v in xi)
        self.value = float(value)
        super().__init__(f"small divisor blow-up at k={self.k}, xi={self.xi}: |G|={self.value:.3e}")


class NonClosedInputError(MathematicalRejection, PreconditionError):
    """A 1-form expected to be closed (or exact) is not."""


class NonSymplecticInputError(MathematicalRejection, PreconditionError):
    """A vector field expected to be symplectic is not."""
