"""Exception types shared across the library.

The CLI maps these onto exit codes (validation -> 2, numerical -> 3);
library code raises them directly.
"""


class ValidationError(ValueError):
    """Invalid input: shape/range/frame mismatches, malformed files."""


class NumericalError(RuntimeError):
    """Numerical failure: solver non-convergence, divergent training, NaNs."""
