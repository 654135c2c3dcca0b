"""Exception hierarchy.

``ConfigError`` subclasses map to CLI exit code 2, ``NumericalError``
subclasses to exit code 3.
"""


class DiffnetError(Exception):
    """Base class for all package errors."""


class ConfigError(DiffnetError):
    """Invalid configuration or input structure."""


class NumericalError(DiffnetError):
    """A numerical procedure failed or left its domain of validity."""


# --- network ---------------------------------------------------------------

class InvalidSizes(ConfigError):
    """Cluster/group size lists are inconsistent."""


class ConnectivityUnreachable(NumericalError):
    """Edge sampling never produced connected cluster/group subgraphs."""


# --- models ----------------------------------------------------------------

class NonPositiveVariance(ConfigError):
    """A variance parameter is zero or negative."""


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive definite is not."""


# --- combination -----------------------------------------------------------

class AsymmetricNeighborhoods(ConfigError):
    """Neighbor sets are not symmetric (l in N_k but k not in N_l)."""


class NoConvergence(NumericalError):
    """An iterative procedure exhausted its iteration budget."""


# --- diffusion -------------------------------------------------------------

class DivergenceDetected(NumericalError):
    """A simulation iterate became non-finite."""

    def __init__(self, message, iteration=None, trial=None):
        super().__init__(message)
        self.iteration = iteration
        self.trial = trial


# --- analysis --------------------------------------------------------------

class UnstableD(NumericalError):
    """Spectral radius of the transition matrix is not below one."""


class SingularAggregateHessian(NumericalError):
    """A Perron-weighted Hessian sum is numerically singular."""


class StepSizeTooLarge(NumericalError):
    """Step size violates the validity condition of a closed-form bound."""


class ThresholdOutOfRange(ConfigError):
    """Detection threshold is outside (0, ||d*||^2)."""


class DegenerateDelta(NumericalError):
    """d* has mass in the null space of Delta; Gaussian model degenerates."""


class DomainError(ConfigError):
    """Argument outside the mathematical domain of a density or bound."""
