import numpy as np

from services.linalg_service import Field, Matrix


def gaussian(n, field="real", seed=0):
    """Gaussian / sqrt(n): entries of order 1/sqrt(n), so permanents stay O(1)."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n))
    if Field(field) is Field.COMPLEX:
        g = (g + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    return Matrix(Field(field), g / np.sqrt(n))
