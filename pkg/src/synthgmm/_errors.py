"""Exception and warning types.

Every error carries a ``category`` string; the CLI maps categories to exit
codes so scripted callers can tell a malformed file from an unidentifiable
model.
"""


class SynthGMMError(Exception):
    category = "error"


class UsageError(SynthGMMError, ValueError):
    category = "usage"


class StructuralError(SynthGMMError, ValueError):
    """Shapes or block layouts that do not fit together."""

    category = "structural"


class DomainError(SynthGMMError, ValueError):
    """Non-finite or out-of-range numeric input."""

    category = "domain"


class IdentificationError(SynthGMMError, ValueError):
    category = "identification"


class DegenerateMomentsError(IdentificationError):
    category = "degenerate-moments"


class ParseError(SynthGMMError, ValueError):
    category = "parse"


class SchemaError(SynthGMMError, ValueError):
    category = "schema"


class ConvergenceWarning(UserWarning):
    category = "convergence-warning"
