"""Exception hierarchy.

``InputError`` covers anything wrong with data or arguments supplied by the
caller; ``NumericalError`` covers linear systems that could not be solved
to the required accuracy. The CLI maps these to exit codes 1 and 2.
"""


class LSRKError(Exception):
    """Base class for all errors raised by this package."""


class InputError(LSRKError, ValueError):
    """Invalid data, schema, or argument."""


class SchemaError(InputError):
    """A required CSV column is missing."""


class ParseError(InputError):
    """A CSV cell could not be parsed as a number."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConsistencyError(InputError):
    """A scalar covariate varies within one subject."""


class InsufficientDataError(InputError):
    """Too few subjects or observations for estimation."""


class ContractError(InputError):
    """An operation precondition was violated."""


class NumericalError(LSRKError, ArithmeticError):
    """A linear system could not be solved reliably."""


class SingularSystemError(NumericalError):
    """The pointwise coefficient system stayed singular after ridging."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
