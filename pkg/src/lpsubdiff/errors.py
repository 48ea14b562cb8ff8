"""Exception hierarchy shared by all modules."""


class LpSubdiffError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(LpSubdiffError, ValueError):
    """An argument is outside its admissible range."""


class DimensionError(LpSubdiffError, ValueError):
    """Arrays or grid functions live on incompatible grids."""


class NotApplicableError(LpSubdiffError):
    """The requested criterion or set is not defined for these exponents."""


class UnsupportedProfileError(LpSubdiffError):
    """A profile family does not support the requested operation."""


class NoCrossingError(LpSubdiffError):
    """A monotone search found no crossing on the probed range."""


class DivergenceError(LpSubdiffError):
    """An iterative solver produced a non-finite or increasing objective."""
