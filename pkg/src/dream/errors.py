"""Error types shared across the package.

The CLI maps ValidationError (and other ValueErrors) to exit code 1 and
NumericalError to exit code 2.
"""


class ValidationError(ValueError):
    """Bad user input: config values, CLI arguments, file contents."""


class NumericalError(RuntimeError):
    """A computation produced non-finite or otherwise unusable numbers."""
