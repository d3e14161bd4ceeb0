class DataError(ValueError):
    """Raised when input data (frames, manifests, images) violates a contract."""
