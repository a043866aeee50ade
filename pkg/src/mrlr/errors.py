"""Exception hierarchy shared across the package.

Data-shaped problems (bad arguments, malformed files, degenerate inputs)
derive from ``DataError``; problems that only show up in the numerics
(singular systems, diverged alignment) derive from ``NumericalError``.
The CLI maps the two families to distinct exit codes.
"""


class MrlrError(Exception):
    """Base class for all package-specific errors."""


class DataError(MrlrError):
    """Invalid input data or arguments."""


class InvalidInputError(DataError):
    """Argument outside its documented domain (dims, ranges, indices)."""


class InvalidTransformError(DataError):
    """Similarity transform is degenerate or non-finite."""


class ZeroNormError(DataError):
    """Data that must be normalized has zero norm."""


class PgmFormatError(DataError):
    """Malformed or unsupported PGM stream."""


class DictionaryFormatError(DataError):
    """Malformed dictionary binary file."""


class NumericalError(MrlrError):
    """Numerical failure not attributable to malformed input."""


class SingularSystemError(NumericalError):
    """Linear system remained ill-posed after the damped retry."""


class AlignmentError(NumericalError):
    """Alignment aborted; carries the partial iteration trace."""

    def __init__(self, message, trace=None, selected_atoms=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.selected_atoms = list(selected_atoms) if selected_atoms is not None else []
