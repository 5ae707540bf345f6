"""Exception types shared across the package.

Everything raised deliberately derives from ToolkitError so the service and
CLI can map failures to exit codes / HTTP statuses in one place: input-side
problems (schema, joins, domain preconditions) are ValidationFailure
subclasses; anything else escaping an operation is treated as internal.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for deliberate failures."""


class ValidationFailure(ToolkitError):
    """Input-side failure: bad data, bad parameters, violated preconditions."""


class DomainError(ValidationFailure):
    """A value is outside the mathematical domain of an operation."""


class InsufficientLiquidity(ValidationFailure):
    """The pool cannot fill any part of the requested swap (or exact-out target)."""


class SchemaError(ValidationFailure):
    """A file or record does not match its declared schema."""


class JoinError(ValidationFailure):
    """Referential-integrity violation between dataset files."""


class MissingField(ValidationFailure):
    """A required field or joined record is absent."""


class ModeError(ValidationFailure):
    """An estimation mode was requested outside its supported range."""


class EmptyInput(ValidationFailure):
    """An aggregate was requested over an empty collection."""


class SeparationError(ValidationFailure):
    """Perfect separation detected while fitting a logit."""


class SingularDesign(ValidationFailure):
    """The regression design matrix is rank deficient."""


class ConvergenceError(ToolkitError):
    """An iterative fit ran out of iterations without meeting tolerance."""
