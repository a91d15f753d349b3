"""
Exact rational linear algebra on numpy object arrays of Fractions.
"""
from fractions import Fraction
from typing import Iterable, Union

import numpy as np

from app.utils.errors import ConvergenceError, ValidationError

Number = Union[int, float, str, Fraction]


def to_fraction(value: Number) -> Fraction:
    """
    Convert a scalar to an exact Fraction.

    Floats convert to their exact binary value; strings such as '1/3' parse
    as rationals.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (np.integer, int)):
        return Fraction(int(value))
    if isinstance(value, (np.floating, float)):
        if not np.isfinite(value):
            raise ValidationError(f"cannot represent {value} exactly")
        return Fraction(float(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValidationError(f"unsupported numeric value {value!r}")


def fraction_array(values: Iterable) -> np.ndarray:
    """Object array of Fractions with the shape of `values`."""
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, value in np.ndenumerate(arr):
        out[idx] = to_fraction(value)
    return out


def is_exact(arr: np.ndarray) -> bool:
    """True for object arrays (the rational representation)."""
    return isinstance(arr, np.ndarray) and arr.dtype == object


def as_float(arr) -> np.ndarray:
    """Float view of a Fraction or float array."""
    return np.asarray(arr, dtype=float)


def identity(n: int) -> np.ndarray:
    return np.array([[Fraction(int(i == j)) for j in range(n)] for i in range(n)], dtype=object)


def solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve matrix @ x = rhs exactly by Gauss-Jordan elimination.

    Only rows with a nonzero entry in the pivot column are updated, which keeps
    banded systems (absorption chains, walks on a lattice) cheap.

    Args:
        matrix: (n, n) object array of Fractions
        rhs: (n,) or (n, k) object array of Fractions

    Returns:
        Solution with the shape of `rhs`
    """
    a = np.array(matrix, dtype=object, copy=True)
    b = np.array(rhs, dtype=object, copy=True)
    vector = b.ndim == 1
    if vector:
        b = b.reshape(-1, 1)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")

    for i in range(n):
        # first nonzero pivot from (i, i) downwards
        column = a[i:, i]
        nonzero = np.flatnonzero(column != 0)
        if nonzero.size == 0:
            raise ConvergenceError("singular system", column=i)
        j = i + int(nonzero[0])
        if j != i:
            a[[i, j]] = a[[j, i]]
            b[[i, j]] = b[[j, i]]

        pivot = a[i, i]
        a[i, :] = a[i, :] / pivot
        b[i, :] = b[i, :] / pivot

        rows = np.flatnonzero(a[:, i] != 0)
        rows = rows[rows != i]
        if rows.size:
            factors = a[rows, i].reshape(-1, 1)
            a[rows, :] = a[rows, :] - factors * a[i, :]
            b[rows, :] = b[rows, :] - factors * b[i, :]

    return b[:, 0] if vector else b


def matmul(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Exact product of two object arrays."""
    return np.dot(left, right)


def to_decimal_fraction(value: Number) -> Fraction:
    """
    Like to_fraction, but floats are read through their shortest decimal repr,
    so 0.1 becomes 1/10 rather than its binary expansion.
    """
    if isinstance(value, (np.floating, float)):
        if not np.isfinite(value):
            raise ValidationError(f"cannot represent {value} exactly")
        return Fraction(repr(float(value)))
    return to_fraction(value)
