"""Exception types raised across the package."""


class QCMError(Exception):
    """Base class for all package errors."""


class ConfigError(QCMError, ValueError):
    """Invalid configuration or parameter value."""


class DomainError(QCMError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularDesignError(QCMError):
    """Cornish-Fisher design matrix is (numerically) rank deficient."""


class DegenerateScaleError(QCMError):
    """Fitted volatility coefficient is too close to zero to form skewness/kurtosis."""


class DegenerateError(QCMError):
    """Input has no variation where the estimator needs some."""


class EstimationError(QCMError):
    """An optimizer or estimation routine failed to produce a usable result."""


class InsufficientPoolError(EstimationError):
    """Too few quantile paths survived filtering to fit the regression."""


class ParseError(QCMError, ValueError):
    """Malformed input file."""
