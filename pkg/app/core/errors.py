"""Exception hierarchy shared by the services and the command line."""


class KMLabError(Exception):
    """Base class for every error raised by the laboratory"""


class InvalidDimensionError(KMLabError, ValueError):
    """Lattice parameter or vector length is not admissible"""


class DimensionMismatchError(KMLabError, ValueError):
    """Operands live in spaces of different dimension"""


class DomainError(KMLabError, ValueError):
    """Input lies outside the domain of a map (e.g. a square root of a negative product)"""


class UsageError(KMLabError):
    """Invalid command-line configuration"""


class IntegrationError(KMLabError, ArithmeticError):
    """Integrator produced a non-finite state; the run is reported as a failed Trajectory"""
