""" Exceptions raised by the critsde numerics and launcher.

Everything derives from CritError so callers can catch the whole family, and
each class also derives from the builtin it refines (ValueError for bad
inputs, RuntimeError for runs that went wrong part way).
"""


class CritError(Exception):
    pass


class DomainError(CritError, ValueError):
    """ Raised when an argument lies outside the domain an operation is
    defined on (t <= 0, q <= 1, empty grids, negative test functions...).
    """
    pass


class DataError(CritError, ValueError):
    """ Raised when gridded values contain NaN/inf or have the wrong shape. """
    pass


class ResolutionError(DomainError):
    """ Raised when a grid is too coarse for the requested scale. """
    pass


class TruncationError(DomainError):
    """ Strict-mode escalation of KernelTruncationWarning. """
    pass


class KernelTruncationWarning(UserWarning):
    """ The heat kernel is wider than a third of the truncated domain. """
    pass


class SmallnessError(DomainError):
    """ Raised when a transport field is too large for the Picard map to
    contract. ratio is C0 times the weighted norm of the field.
    """
    def __init__(self, msg, ratio=None, threshold=None):
        super(SmallnessError, self).__init__(msg)
        self.ratio = ratio
        self.threshold = threshold


class ConvergenceError(CritError, RuntimeError):
    def __init__(self, msg, residual=None, iterations=None):
        super(ConvergenceError, self).__init__(msg)
        self.residual = residual
        self.iterations = iterations


class SimulationError(CritError, RuntimeError):
    """ Too many paths were excluded for non-finite drift evaluations. """
    def __init__(self, msg, n_excluded=0, n_paths=0):
        super(SimulationError, self).__init__(msg)
        self.n_excluded = n_excluded
        self.n_paths = n_paths


class FitError(CritError, ValueError):
    pass


class EllipticityError(DomainError):
    pass


class SpecificationError(CritError, ValueError):
    """ Raised when a catalog entry lacks something an operation needs. """
    pass


class BandwidthError(CritError, ValueError):
    pass


class ConfigError(CritError, ValueError):
    pass


class ManifestError(CritError, ValueError):
    pass
