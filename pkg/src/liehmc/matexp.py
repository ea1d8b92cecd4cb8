"""Matrix exponentials for small Lie-algebra elements.

Four routes are provided:

* a degree ``N - 1`` Taylor polynomial reduced modulo the characteristic
  polynomial (only ``A, ..., A^{n-1}`` are ever formed), valid below a
  radius ``delta`` that guarantees an absolute error ``<= eps``;
* scaling and squaring on top of it for arbitrary norms;
* Rodrigues' formula and its spectral-projector generalisation for
  antisymmetric matrices of dimension up to 5;
* a complex Schur form (Householder-Hessenberg plus shifted QR) followed by
  Parlett's recurrence, for non-normal matrices with distinct eigenvalues.

:func:`exp_dispatch` routes between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import (
    _binary_power_counted,
    as_square_matrix,
    char_poly_coeffs,
    spectral_norm_bound,
)

RODRIGUES_SERIES_SWITCH = 1e-4
PROJECTOR_SEPARATION = 1e-6
PARLETT_MIN_GAP = 1e-8
MERGE_TOL = 1e-12
# dispatch falls back to scaling and squaring well before Parlett breaks down
PARLETT_DISPATCH_GAP = 1e-5
STRUCTURE_TOL = 1e-12


class MatExpError(ArithmeticError):
    pass


class ThresholdExceededError(MatExpError):
    pass


class DegenerateEigenvalueError(MatExpError):
    pass


class SchurConvergenceError(MatExpError):
    pass


class Strategy(str, Enum):
    AUTO = "auto"
    TAYLOR_ONLY = "taylor_only"
    RODRIGUES = "rodrigues"
    SCHUR_PARLETT = "schur_parlett"


class Structure(str, Enum):
    ANTISYMMETRIC = "antisymmetric"
    NORMAL = "normal"
    GENERAL = "general"


@dataclass(frozen=True)
class ExpConfig:
    taylor_degree: int = 10
    target_accuracy: float = 1e-6
    safety_factor: float = 0.9
    strategy: Strategy = Strategy.AUTO

    def __post_init__(self):
        if int(self.taylor_degree) != self.taylor_degree or self.taylor_degree < 2:
            raise ValueError(f"taylor_degree must be an integer >= 2, got {self.taylor_degree}")
        if not 0.0 < self.target_accuracy < 1.0:
            raise ValueError(f"target_accuracy must lie in (0, 1), got {self.target_accuracy}")
        if not 0.0 < self.safety_factor < 1.0:
            raise ValueError(f"safety_factor must lie in (0, 1), got {self.safety_factor}")
        object.__setattr__(self, "taylor_degree", int(self.taylor_degree))
        object.__setattr__(self, "strategy", Strategy(self.strategy))


@dataclass(frozen=True)
class ExpThreshold:
    delta: float


def taylor_threshold(config: ExpConfig) -> ExpThreshold:
    """Radius below which the truncated series is accurate to ``target_accuracy``.

    The tail of ``exp`` after ``N`` terms is bounded by
    ``x^N / N! / (1 - x/N)``; requiring ``x/N <= alpha`` and
    ``x <= (eps N! (1 - alpha))^(1/N)`` keeps it under ``eps``.
    """
    N = config.taylor_degree
    alpha = config.safety_factor
    second = (config.target_accuracy * math.factorial(N) * (1.0 - alpha)) ** (1.0 / N)
    return ExpThreshold(min(alpha * N, second))


def _taylor_remainder_coeffs(charpoly: np.ndarray, N: int) -> np.ndarray:
    """Ascending coefficients of ``sum_{k<N} x^k/k!`` modulo ``charpoly``."""
    rem = np.array([1.0 / math.factorial(k) for k in range(N)])
    n = len(charpoly) - 1
    lead = charpoly[-1]
    for top in range(len(rem) - 1, n - 1, -1):
        q = rem[top] / lead
        if q:
            rem[top - n : top + 1] -= q * charpoly
        rem[top] = 0.0
    return rem[: min(n, N)]


def _is_antisymmetric(A: np.ndarray, tol: float = STRUCTURE_TOL) -> bool:
    return float(np.max(np.abs(A + A.T), initial=0.0)) <= tol * max(1.0, float(np.max(np.abs(A))))


def _horner_matrix(coeffs: np.ndarray, A: np.ndarray) -> np.ndarray:
    eye = np.eye(A.shape[0])
    out = coeffs[-1] * eye
    for c in coeffs[-2::-1]:
        out = out @ A
        out += c * eye
    return out


def exp_taylor_reduced(A, config: ExpConfig = ExpConfig()) -> np.ndarray:
    """Truncated Taylor series of ``exp(A)`` reduced by Cayley-Hamilton.

    Raises :class:`ThresholdExceededError` if the norm bound of ``A`` exceeds
    :func:`taylor_threshold`; use :func:`exp_scale_square` in that case.
    """
    A = as_square_matrix(A)
    delta = taylor_threshold(config).delta
    norm = spectral_norm_bound(A, _is_antisymmetric(A))
    if norm > delta * (1.0 + 1e-12):
        raise ThresholdExceededError(f"norm bound {norm:.6g} exceeds Taylor radius {delta:.6g}")
    return _taylor_reduced_unchecked(A, config.taylor_degree)


def _taylor_reduced_unchecked(A: np.ndarray, N: int) -> np.ndarray:
    coeffs = _taylor_remainder_coeffs(char_poly_coeffs(A).coeffs, N)
    return _horner_matrix(coeffs, A)


def scale_square_steps(norm: float, config: ExpConfig) -> int:
    """Number of factors ``k`` so that ``exp(A) = exp(A/k)^k`` stays within ``eps``."""
    delta = taylor_threshold(config).delta
    if norm <= delta:
        return 1
    N = config.taylor_degree
    return int(math.ceil((norm / delta) ** (N / (N - 1))))


def exp_scale_square(A, config: ExpConfig = ExpConfig()) -> np.ndarray:
    """``exp(A)`` by scaling, reduced Taylor and binary powering."""
    A = as_square_matrix(A)
    norm = spectral_norm_bound(A, _is_antisymmetric(A))
    k = scale_square_steps(norm, config)
    if k == 1:
        return _taylor_reduced_unchecked(A, config.taylor_degree)
    base = _taylor_reduced_unchecked(A / k, config.taylor_degree)
    return _binary_power_counted(base, k)[0]


def _rodrigues_coeffs(xi: float) -> tuple[float, float]:
    if xi < RODRIGUES_SERIES_SWITCH:
        x2 = xi * xi
        return 1.0 - x2 / 6.0, 0.5 - x2 / 24.0
    return math.sin(xi) / xi, (1.0 - math.cos(xi)) / (xi * xi)


def exp_rodrigues_so3(A) -> np.ndarray:
    """Rodrigues' formula ``I + sin(x)/x A + (1 - cos x)/x^2 A^2`` on so(3)."""
    A = as_square_matrix(A)
    if A.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {A.shape}")
    if not _is_antisymmetric(A):
        raise ValueError("Rodrigues' formula needs an antisymmetric matrix")
    A2 = A @ A
    xi = math.sqrt(max(0.0, -0.5 * float(np.trace(A2))))
    a, b = _rodrigues_coeffs(xi)
    return np.eye(3) + a * A + b * A2


def _distinct_eigs_of_square(A: np.ndarray, A2: np.ndarray) -> list[float]:
    """Distinct eigenvalues (all <= 0) of ``A @ A`` for antisymmetric ``A``, n <= 5."""
    n = A.shape[0]
    t2 = float(np.trace(A2))
    if n == 2:
        return [0.5 * t2]
    if n == 3:
        return [0.0, 0.5 * t2]
    t4 = float(np.sum(A2 * A2.T))
    disc = max(0.0, 4.0 * t4 - t2 * t2)
    sq = math.sqrt(disc)
    roots = [(t2 + sq) / 4.0, (t2 - sq) / 4.0]
    if n == 5:
        roots.insert(0, 0.0)
    return roots


def exp_projector_son(A) -> np.ndarray | None:
    """Exponential on so(n), n <= 5, by spectral projectors of ``A^2``.

    ``exp(A)`` is the product over the distinct eigenvalues ``-theta_j^2`` of
    ``A^2`` of ``I + (sin(theta)/theta A + (1 - cos theta)/theta^2 A^2) P_j``.
    Eigenvalues equal up to rounding are merged into one projector.  Returns
    ``None`` when two distinct eigenvalues of ``A^2`` are closer than
    ``PROJECTOR_SEPARATION``; callers should then use scaling and squaring.
    """
    A = as_square_matrix(A)
    n = A.shape[0]
    if n > 5:
        raise ValueError(f"projector exponential supports n <= 5, got {n}")
    if not _is_antisymmetric(A):
        raise ValueError("projector exponential needs an antisymmetric matrix")
    eye = np.eye(n)
    if n == 1:
        return eye
    A2 = A @ A
    roots = []
    scale = max(1.0, abs(float(np.trace(A2))))
    for mu in _distinct_eigs_of_square(A, A2):
        # roots equal up to rounding are one eigenvalue; near-equal ones are unstable
        gaps = [abs(mu - other) for other in roots]
        if any(g <= MERGE_TOL * scale for g in gaps):
            continue
        if any(g <= PROJECTOR_SEPARATION for g in gaps):
            return None
        roots.append(mu)
    out = eye
    for j, mu in enumerate(roots):
        theta = math.sqrt(max(0.0, -mu))
        if theta == 0.0:
            continue
        P = eye
        for k, other in enumerate(roots):
            if k != j:
                P = P @ (A2 - other * eye) / (mu - other)
        a, b = _rodrigues_coeffs(theta)
        out = out @ (eye + (a * A + b * A2) @ P)
    return out


def hessenberg(A) -> tuple[np.ndarray, np.ndarray]:
    """Householder reduction ``A = Q H Q^H`` with ``H`` upper Hessenberg."""
    H = np.array(A, dtype=complex)
    n = H.shape[0]
    Q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = H[k + 1 :, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[k + 1 :, :] -= 2.0 * np.outer(v, v.conj() @ H[k + 1 :, :])
        H[:, k + 1 :] -= 2.0 * np.outer(H[:, k + 1 :] @ v, v.conj())
        Q[:, k + 1 :] -= 2.0 * np.outer(Q[:, k + 1 :] @ v, v.conj())
        H[k + 2 :, k] = 0.0
    return H, Q


def _givens(a: complex, b: complex) -> tuple[float, complex]:
    # G = [[c, s], [-conj(s), c]] with G @ [a, b] = [r, 0]
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    r = math.hypot(abs(a), abs(b))
    c = abs(a) / r
    s = (a / abs(a)) * np.conj(b) / r
    return c, s


def _wilkinson_shift(H: np.ndarray, hi: int) -> complex:
    a, b = H[hi - 1, hi - 1], H[hi - 1, hi]
    c, d = H[hi, hi - 1], H[hi, hi]
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr / 4.0 - det)
    l1, l2 = tr / 2.0 + disc, tr / 2.0 - disc
    return l1 if abs(l1 - d) <= abs(l2 - d) else l2


def complex_schur(A, max_iter: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Complex Schur form ``A = Z T Z^H`` by shifted QR on the Hessenberg form."""
    A = as_square_matrix(A)
    n = A.shape[0]
    # work at unit scale so the shift arithmetic cannot underflow or overflow
    norm = float(np.abs(A).sum(axis=0).max())
    if norm == 0.0:
        return np.zeros((n, n), dtype=complex), np.eye(n, dtype=complex)
    H, Z = hessenberg(A / norm)
    if max_iter is None:
        max_iter = 100 * n * n
    eps = np.finfo(float).eps
    hi = n - 1
    iters = 0
    since_deflation = 0
    while hi > 0:
        # deflate negligible subdiagonal entries
        lo = hi
        while lo > 0:
            scale = abs(H[lo, lo]) + abs(H[lo - 1, lo - 1])
            if scale == 0.0:
                scale = np.linalg.norm(H, 1)
            if abs(H[lo, lo - 1]) <= eps * scale:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            since_deflation = 0
            continue
        iters += 1
        since_deflation += 1
        if iters > max_iter:
            raise SchurConvergenceError(f"QR iteration did not converge in {max_iter} steps")
        if since_deflation % 11 == 10:
            mu = H[hi, hi] + 0.75 * abs(H[hi, hi - 1])
        else:
            mu = _wilkinson_shift(H, hi)
        for k in range(lo, hi + 1):
            H[k, k] -= mu
        rotations = []
        for k in range(lo, hi):
            c, s = _givens(H[k, k], H[k + 1, k])
            rows = H[k : k + 2, :].copy()
            H[k, :] = c * rows[0] + s * rows[1]
            H[k + 1, :] = -np.conj(s) * rows[0] + c * rows[1]
            rotations.append((k, c, s))
        for k, c, s in rotations:
            cols = H[:, k : k + 2].copy()
            H[:, k] = c * cols[:, 0] + np.conj(s) * cols[:, 1]
            H[:, k + 1] = -s * cols[:, 0] + c * cols[:, 1]
            zc = Z[:, k : k + 2].copy()
            Z[:, k] = c * zc[:, 0] + np.conj(s) * zc[:, 1]
            Z[:, k + 1] = -s * zc[:, 0] + c * zc[:, 1]
        for k in range(lo, hi + 1):
            H[k, k] += mu
    return norm * np.triu(H), Z


def parlett_exp_triangular(T: np.ndarray, min_gap: float = PARLETT_MIN_GAP) -> np.ndarray:
    """``exp(T)`` for upper-triangular ``T`` with distinct diagonal, via Parlett."""
    n = T.shape[0]
    diag = np.diag(T)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(diag[i] - diag[j]) < min_gap:
                raise DegenerateEigenvalueError(
                    f"eigenvalues {diag[i]:.6g} and {diag[j]:.6g} are too close for Parlett"
                )
    F = np.zeros_like(T, dtype=complex)
    F[np.diag_indices(n)] = np.exp(diag)
    for p in range(1, n):
        for i in range(n - p):
            j = i + p
            s = T[i, j] * (F[i, i] - F[j, j])
            k = slice(i + 1, j)
            s += F[i, k] @ T[k, j] - T[i, k] @ F[k, j]
            F[i, j] = s / (T[i, i] - T[j, j])
    return F


def exp_schur_parlett(A, min_gap: float = PARLETT_MIN_GAP) -> np.ndarray:
    """``exp(A) = Z exp(T) Z^H`` from the complex Schur form ``A = Z T Z^H``."""
    A = as_square_matrix(A)
    if not np.any(A):
        return np.eye(A.shape[0])
    T, Z = complex_schur(A)
    F = parlett_exp_triangular(T, min_gap)
    return (Z @ F @ Z.conj().T).real


def _min_eigen_gap(T: np.ndarray) -> float:
    d = np.diag(T)
    if len(d) < 2:
        return math.inf
    return float(min(abs(d[i] - d[j]) for i in range(len(d)) for j in range(i + 1, len(d))))


def detect_structure(A, tol: float = STRUCTURE_TOL) -> Structure:
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(A))))
    if _is_antisymmetric(A, tol):
        return Structure.ANTISYMMETRIC
    comm = A @ A.T - A.T @ A
    if float(np.max(np.abs(comm))) <= tol * scale * scale:
        return Structure.NORMAL
    return Structure.GENERAL


def _exp_antisymmetric(A: np.ndarray, config: ExpConfig) -> np.ndarray:
    n = A.shape[0]
    if n == 3:
        return exp_rodrigues_so3(A)
    if 3 < n <= 5:
        out = exp_projector_son(A)
        if out is not None:
            return out
    return exp_scale_square(A, config)


def _exp_general(A: np.ndarray, config: ExpConfig) -> np.ndarray:
    try:
        T, Z = complex_schur(A)
    except SchurConvergenceError:
        return exp_scale_square(A, config)
    scale = max(1.0, float(np.max(np.abs(np.diag(T)))))
    if _min_eigen_gap(T) < PARLETT_DISPATCH_GAP * scale:
        return exp_scale_square(A, config)
    F = parlett_exp_triangular(T)
    return (Z @ F @ Z.conj().T).real


def exp_dispatch(
    A, config: ExpConfig = ExpConfig(), structure_hint: Structure | str | None = None
) -> np.ndarray:
    """Matrix exponential routed by ``config.strategy`` and matrix structure.

    With the ``auto`` strategy: antisymmetric matrices of dimension 3 use
    Rodrigues and dimensions 4-5 the projector formula; other normal matrices
    use scaling and squaring; non-normal ones use Schur-Parlett, falling back
    to scaling and squaring near repeated eigenvalues.
    """
    A = as_square_matrix(A)
    structure = detect_structure(A) if structure_hint is None else Structure(structure_hint)
    strategy = config.strategy
    if strategy is Strategy.TAYLOR_ONLY:
        return exp_scale_square(A, config)
    if strategy is Strategy.RODRIGUES:
        if structure is not Structure.ANTISYMMETRIC:
            raise ValueError("rodrigues strategy needs antisymmetric matrices")
        return _exp_antisymmetric(A, config)
    if strategy is Strategy.SCHUR_PARLETT:
        return exp_schur_parlett(A)
    if structure is Structure.ANTISYMMETRIC:
        return _exp_antisymmetric(A, config)
    if structure is Structure.NORMAL:
        return exp_scale_square(A, config)
    return _exp_general(A, config)
