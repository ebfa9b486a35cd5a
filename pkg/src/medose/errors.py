"""Exception hierarchy shared across the package.

Everything derives from :class:`MedoseError` so callers can catch the
package's failures with a single except clause.  Classes additionally
subclass the closest builtin (``ValueError``, ``KeyError``, ...) so that
generic handling keeps working.
"""


class MedoseError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(MedoseError, ValueError):
    """Curve parameters violate the model family's constraints."""


class DomainError(MedoseError, ValueError):
    """An argument lies outside its mathematically valid domain."""


class DegenerateDataError(MedoseError, ValueError):
    """The data cannot identify the requested model (constant responses,
    too few distinct dose levels, ...)."""


class SchemaError(MedoseError, ValueError):
    """An input file is missing a required column."""


class ParseError(MedoseError, ValueError):
    """A cell in an input file could not be parsed; carries the row number."""


class ValidationError(MedoseError, ValueError):
    """A parsed value violates a dataset invariant; carries the row number."""


class RankDeficiencyError(MedoseError, ValueError):
    """The Jacobian at the optimum is singular; covariance is undefined."""


class MethodError(MedoseError, ValueError):
    """The requested inference method is incompatible with the fit."""


class UnknownCurveError(MedoseError, KeyError):
    """A curve identifier is not present in the fit or dataset."""


class ResourceLimitError(MedoseError, ValueError):
    """A guard against runaway resource use fired (for example a
    tensor-product quadrature grid that would exceed the point budget)."""


class NoSolutionError(MedoseError, ValueError):
    """A root could not be bracketed within the search range."""


class EvaluationError(MedoseError, ValueError):
    """A derived functional produced a non-finite value during numerical
    differentiation; carries the coordinate at fault."""


class DivisionHazardError(MedoseError, ZeroDivisionError):
    """A ratio's denominator is numerically indistinguishable from zero."""
