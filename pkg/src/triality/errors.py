"""Exception hierarchy shared by every solver stage."""


class TrialityError(Exception):
    """Base class for all errors raised by the package."""


class NegativeCostError(TrialityError, ValueError):
    """A cost function produced b(r) < 0."""


class OutOfDomainError(TrialityError, ValueError):
    """A query fell outside the domain where a quantity is defined."""


class UnsupportedPotentialError(TrialityError, ValueError):
    """The potential has no representation usable by the requested operation."""


class TruncationDomainError(TrialityError, ValueError):
    """A truncated series was evaluated beyond its trusted radius."""


class StepSizeUnderflowError(TrialityError, ArithmeticError):
    """The adaptive integrator could not meet the tolerance without the step collapsing."""


class DomainError(TrialityError, ValueError):
    """An asymptotic expansion was requested where its hypotheses fail."""


class DomainExitError(TrialityError, RuntimeError):
    """Too many simulated paths left the solved radial domain."""


class ConfigError(TrialityError, ValueError):
    """A configuration failed validation."""
