"""Exception types shared across the package."""


class WidebandLqgError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(WidebandLqgError):
    pass


class NotSymmetric(WidebandLqgError):
    pass


class NotPSD(WidebandLqgError):
    """A matrix required to be positive semi-definite is not (names the offender)."""

    def __init__(self, name, min_eig=None):
        self.name = name
        self.min_eig = min_eig
        msg = f"matrix {name!r} is not positive semi-definite"
        if min_eig is not None:
            msg += f" (min eigenvalue {min_eig:.3e})"
        super().__init__(msg)


class NotPD(WidebandLqgError):
    """A matrix required to be positive definite is not."""

    def __init__(self, name, min_eig=None):
        self.name = name
        self.min_eig = min_eig
        msg = f"matrix {name!r} is not positive definite"
        if min_eig is not None:
            msg += f" (min eigenvalue {min_eig:.3e})"
        super().__init__(msg)


class BadHorizon(WidebandLqgError):
    pass


class GridTooCoarse(WidebandLqgError):
    pass


class UnknownPreset(WidebandLqgError):
    pass


class BlowUp(WidebandLqgError):
    """Finite-escape detection in a Riccati integration."""


class ScheduleOutOfRange(WidebandLqgError):
    pass


class UnsupportedCross(WidebandLqgError):
    """A cross-covariance kernel cannot be factored on its own."""


class FactorizationMismatch(WidebandLqgError):
    """Two relaxing-function variants fail the common Gram-reproduction check."""


class GridMismatch(WidebandLqgError):
    pass


class UnsupportedExperiment(WidebandLqgError):
    pass


class ConfigError(WidebandLqgError):
    pass
