"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1,
PreconditionError -> 2, InvariantError -> 3.
"""


class OscextError(Exception):
    """Base class for all package errors."""


class ValidationError(OscextError):
    """Malformed input: schema violations, metric-axiom failures, bad parameters."""


class PreconditionError(OscextError):
    """A documented operation precondition does not hold for these inputs."""


class InvariantError(OscextError):
    """An internal construction invariant failed; indicates an implementation bug."""
