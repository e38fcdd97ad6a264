"""Exception types shared across the toolkit.

The CLI maps ValidationError to exit code 1 and NumericalError to exit
code 2; everything else is a bug.
"""


class ValidationError(ValueError):
    """Malformed input: bad records, unresolvable ids, invalid config."""


class NumericalError(RuntimeError):
    """Numerical failure: non-finite values, non-convergence."""
