"""Dense small-matrix primitives.

Everything here works on plain ``numpy`` arrays of shape ``(n, n)``.  Matrix
entries are indexed ``A[i, j]`` with 0-based storage; the mathematical 1-based
entry ``A_{ij}`` lives at ``A[i - 1, j - 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Largest dimension accepted by :func:`char_poly_coeffs`.
MAX_CHARPOLY_DIM = 8


class DimensionTooLargeError(ValueError):
    pass


class DegenerateRowError(ArithmeticError):
    """Raised when Gram-Schmidt meets a row with (near) zero self inner product."""


def as_square_matrix(A, name: str = "A") -> np.ndarray:
    """Validate ``A`` as a finite real square matrix and return it as a float array."""
    M = np.asarray(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return M


@dataclass(frozen=True)
class BilinearForm:
    """Diagonal non-degenerate bilinear form ``<u, v> = u^T diag(d) v``."""

    diagonal: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(x) for x in self.diagonal)
        if not d:
            raise ValueError("bilinear form needs at least one entry")
        if any(x == 0.0 or not math.isfinite(x) for x in d):
            raise ValueError(f"form diagonal must be finite and non-zero, got {d}")
        object.__setattr__(self, "diagonal", d)

    @classmethod
    def euclidean(cls, n: int) -> "BilinearForm":
        return cls((1.0,) * n)

    @property
    def dim(self) -> int:
        return len(self.diagonal)

    @property
    def is_positive_definite(self) -> bool:
        return all(x > 0 for x in self.diagonal)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)

    def __call__(self, u, v) -> float:
        return float(np.dot(np.asarray(u) * self.diagonal, v))


@dataclass(frozen=True)
class CharPolyCoeffs:
    """Coefficients of ``c(x) = det(A - x I)`` in ascending powers of ``x``."""

    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x: float) -> float:
        return float(np.polynomial.polynomial.polyval(x, self.coeffs))

    def evaluate_matrix(self, A) -> np.ndarray:
        """Evaluate ``c(A)`` with Horner's rule (zero by Cayley-Hamilton)."""
        A = np.asarray(A, dtype=float)
        eye = np.eye(A.shape[0])
        out = self.coeffs[-1] * eye
        for c in self.coeffs[-2::-1]:
            out = out @ A + c * eye
        return out


def trace_powers(A, kmax: int) -> list[float]:
    """Return ``[tr A, tr A^2, ..., tr A^kmax]`` by accumulating matrix products."""
    A = as_square_matrix(A)
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    out = []
    power = A
    for k in range(kmax):
        if k:
            power = power @ A
        out.append(float(np.trace(power)))
    return out


@lru_cache(maxsize=None)
def integer_partitions(m: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """All partitions of ``m`` as tuples of ``(part, multiplicity)`` pairs."""
    if m == 0:
        return ((),)

    def gen(remaining, largest):
        if remaining == 0:
            yield ()
            return
        for part in range(min(remaining, largest), 0, -1):
            for r in range(remaining // part, 0, -1):
                for rest in gen(remaining - r * part, part - 1):
                    yield ((part, r),) + rest

    return tuple(gen(m, m))


def _elementary_symmetric(traces: list[float], m: int) -> float:
    # Sum over conjugacy classes of S_m labelled by partitions 1^r1 2^r2 ...
    total = 0.0
    for partition in integer_partitions(m):
        term = 1.0
        for j, r in partition:
            sign = -1.0 if (r * (j + 1)) % 2 else 1.0
            term *= sign * traces[j - 1] ** r / (math.factorial(r) * j**r)
        total += term
    return total


def char_poly_coeffs(A) -> CharPolyCoeffs:
    """Characteristic polynomial ``det(A - x I)`` from traces of powers of ``A``.

    The determinant of each principal-minor sum (elementary symmetric function
    ``e_m`` of the eigenvalues) is expanded over the partitions of ``m``, so
    only ``tr A, ..., tr A^n`` are needed.  The coefficient of ``x^k`` is
    ``(-1)^k e_{n-k}``.
    """
    A = as_square_matrix(A)
    n = A.shape[0]
    if n > MAX_CHARPOLY_DIM:
        raise DimensionTooLargeError(
            f"partition expansion supports n <= {MAX_CHARPOLY_DIM}, got {n}"
        )
    traces = trace_powers(A, n)
    coeffs = np.empty(n + 1)
    for k in range(n + 1):
        sign = -1.0 if k % 2 else 1.0
        coeffs[k] = sign * _elementary_symmetric(traces, n - k)
    return CharPolyCoeffs(coeffs)


def _binary_power_counted(A: np.ndarray, n: int) -> tuple[np.ndarray, int]:
    result = None
    square = A
    mults = 0
    k = n
    while True:
        if k & 1:
            if result is None:
                result = square
            else:
                result = result @ square
                mults += 1
        k >>= 1
        if not k:
            break
        square = square @ square
        mults += 1
    return result, mults


def binary_power(A, n: int) -> np.ndarray:
    """``A**n`` by repeated squaring, for a non-negative integer ``n``."""
    A = as_square_matrix(A)
    if n < 0:
        raise ValueError("exponent must be non-negative")
    if n == 0:
        return np.eye(A.shape[0])
    return _binary_power_counted(A, int(n))[0].copy()


def spectral_norm_bound(A, antisymmetric_hint: bool = False) -> float:
    """Cheap upper bound on the spectral norm: ``sqrt(tr A A^T)``.

    Antisymmetric matrices have eigenvalues in conjugate pairs, which halves
    the bound under the square root.
    """
    A = np.asarray(A, dtype=float)
    s = float(np.sum(A * A))
    if antisymmetric_hint:
        s *= 0.5
    return math.sqrt(s)


def gram_schmidt_project(M, form: BilinearForm | None = None) -> np.ndarray:
    """Orthonormalise the rows of ``M`` with respect to ``form``.

    Rows are made mutually orthogonal and each normalised to
    ``|<r, r>| = 1``.  ``M`` must already be close to orthonormal: no attempt
    is made to fix up signs of rows in the indefinite case.
    """
    M = as_square_matrix(M, "M")
    n = M.shape[0]
    d = np.ones(n) if form is None else np.asarray(form.diagonal)
    if d.shape != (n,):
        raise ValueError(f"form dimension {d.shape[0]} does not match matrix {n}")
    out = M.copy()
    norms = np.empty(n)
    for i in range(n):
        row = out[i]
        for j in range(i):
            rj = out[j]
            row -= (np.dot(row * d, rj) / norms[j]) * rj
        nn = np.dot(row * d, row)
        if abs(nn) < 1e-8:
            raise DegenerateRowError(
                f"row {i} has self inner product {nn:.3e}; input is not near orthonormal"
            )
        row /= math.sqrt(abs(nn))
        norms[i] = math.copysign(1.0, nn)
    return out
