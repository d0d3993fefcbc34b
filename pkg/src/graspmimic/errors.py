"""Exception taxonomy shared across the package.

ValidationError maps to CLI exit code 2, NumericalError to exit code 3.
"""


class ValidationError(Exception):
    """Bad input: malformed documents, unreadable meshes, schema violations."""


class NumericalError(Exception):
    """Numerical failure: non-finite losses or gradients, degenerate rotations."""
