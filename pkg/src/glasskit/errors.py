class ValidationError(ValueError):
    """Input data violates a format contract or invariant."""
