"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An instance violates a model assumption or a file is malformed."""


class InfeasibleError(RuntimeError):
    """A selection problem has no admissible solution under its preconditions."""


class SearchSpaceError(RuntimeError):
    """A brute-force search space exceeds the hard enumeration guard."""
