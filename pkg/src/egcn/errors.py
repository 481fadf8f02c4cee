"""Exception hierarchy shared by every module."""


class EgcnError(Exception):
    """Base class for all errors raised by the package."""


class StructuralError(EgcnError, ValueError):
    """Shapes or graph structure violate an operation's preconditions."""


class CapacityError(StructuralError):
    """A sample does not fit into the requested padded batch."""


class ParameterError(EgcnError, ValueError):
    """A scalar or configuration parameter is out of range."""


class DataError(EgcnError, ValueError):
    """Input data (files, labels) is malformed."""


class NumericalError(EgcnError, ArithmeticError):
    """Non-finite values or a failed numerical routine."""
