"""Exception hierarchy shared by all modules.

Data problems (bad input files, sequences that are too short) derive from
:class:`DataError`; numerical problems (domain violations, series that fail
to converge, singular matrices) derive from :class:`NumericError`.  The CLI
maps the two families onto distinct exit codes.
"""

from __future__ import annotations


class NtmError(Exception):
    """Base class for every error raised by this package."""


class DataError(NtmError, ValueError):
    """Input data cannot be used as given."""


class MalformedInputError(DataError):
    """A bit-string source contains a character other than '0', '1' or whitespace."""

    def __init__(self, position: int, char: str):
        self.position = position
        self.char = char
        super().__init__(f"invalid character {char!r} at position {position}")


class SequenceTooShortError(DataError):
    pass


class BlockTooShortError(DataError):
    pass


class TemplateError(NtmError, ValueError):
    """Invalid template or template combination."""


class UnsupportedLengthError(TemplateError):
    pass


class LengthMismatchError(TemplateError):
    pass


class InvalidTemplateError(TemplateError):
    pass


class InvalidPairError(TemplateError):
    pass


class ContractError(NtmError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""


class NumericError(NtmError, ArithmeticError):
    pass


class DomainError(NumericError, ValueError):
    pass


class ConvergenceError(NumericError):
    """A series hit its term cap before reaching the requested tolerance."""

    def __init__(self, message: str, partial_sum: float, bound: float, terms: int):
        self.partial_sum = partial_sum
        self.bound = bound
        self.terms = terms
        super().__init__(
            f"{message} (partial sum {partial_sum!r}, error bound {bound!r}, {terms} terms)"
        )


class SingularMatrixError(NumericError):
    """The correlation matrix is rank deficient; ``groups`` lists dependent templates."""

    def __init__(self, message: str, groups):
        self.groups = groups
        listed = "; ".join("{" + ", ".join(str(t) for t in g) + "}" for g in groups)
        super().__init__(f"{message}: dependent groups {listed}")
