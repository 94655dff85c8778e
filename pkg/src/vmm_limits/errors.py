"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument or parameter outside the admissible domain."""


class BesselOverflowError(OverflowError):
    """K_nu(z) is not representable as a float; use ``bessel_k_log``."""


class QuadratureError(ArithmeticError):
    """Numerical integration did not reach the requested accuracy."""

    def __init__(self, message, error_estimate):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3g})")
        self.error_estimate = float(error_estimate)


class MomentDivergenceError(ArithmeticError):
    """The requested moment is infinite."""


class ConfigError(ValueError):
    """Invalid configuration document."""
