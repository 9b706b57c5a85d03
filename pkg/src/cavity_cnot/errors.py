"""Exception and warning types used across the package."""


class CavityCnotError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimensionError(CavityCnotError, ValueError):
    """A Fock-space dimension is too small or otherwise invalid."""


class LayoutError(CavityCnotError, ValueError):
    """Operands live on incompatible mode layouts."""


class NumericError(CavityCnotError, ArithmeticError):
    """A numerical routine produced or received non-finite data."""


class NoTransitionError(CavityCnotError, ValueError):
    """The requested sideband transition does not exist (no control photon)."""


class ExpansionValidityError(CavityCnotError, ValueError):
    """Pump strength outside the validity range of the fourth-order expansion."""


class PhysicalityError(CavityCnotError, ValueError):
    """Coherence parameters violate T2 <= 2*T1."""


class IntegrationError(CavityCnotError, RuntimeError):
    """The master-equation integrator failed to converge."""


class CalibrationError(CavityCnotError, RuntimeError):
    """Gate timing calibration found no solution within the search window."""


class PreconditionError(CavityCnotError, ValueError):
    """An operation's input-state precondition is violated."""


class TruncationError(CavityCnotError, ValueError):
    """A state does not fit in the requested truncated Fock space."""


class UnderdeterminedError(CavityCnotError, ValueError):
    """Measurement set is too small to determine the density matrix."""


class LeakageError(CavityCnotError, RuntimeError):
    """Channel output leaks outside the logical code space."""


class ConfigError(CavityCnotError, ValueError):
    """A configuration file is malformed or contains unknown keys."""


class TruncationWarning(UserWarning):
    """Result may be affected by Fock-space truncation."""
