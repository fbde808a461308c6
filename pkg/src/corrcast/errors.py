"""Exception types shared across the package."""


class SingularCovarianceError(Exception):
    """A covariance (or capacitance) matrix failed Cholesky even after jitter."""


class NumericalError(Exception):
    """A numerical computation produced NaN/inf or otherwise diverged."""


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""
