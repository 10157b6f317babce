"""Exception types shared across the package."""


class FanofibError(Exception):
    """Base class for package-specific failures."""


class ConfigError(FanofibError):
    """Malformed configuration input."""


class ModelOrientationError(FanofibError):
    """Class coefficients do not collapse the fiber direction first."""


class PositivityError(FanofibError):
    """A form or density that must be positive fails the pointwise check."""

    def __init__(self, message, worst=None, location=None):
        super().__init__(message)
        self.worst = worst
        self.location = location


class ModelRegularityError(FanofibError):
    """A boundary limit that must be finite is not."""


class SolvabilityError(FanofibError):
    """Linear problem rejected: compatibility integral off tolerance."""

    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


class NonConvergence(FanofibError):
    """Newton iteration failed; carries the residual-norm trace."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ContractViolation(FanofibError):
    """Residual and Jacobian callbacks disagree at the probe point."""


class PullbackStructureError(FanofibError):
    """A field expected to be a pullback from the base has vertical content."""
