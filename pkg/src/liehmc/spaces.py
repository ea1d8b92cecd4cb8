"""Homogeneous spaces ``G/K`` described as plain matrix data.

A space is a bundle of generator matrices: a basis of the stabiliser algebra
``k`` and of its complement ``p`` (the horizontal directions), the bilinear
form the group preserves, the base point ``p0`` whose orbit is the manifold,
and the kinetic eigenvalues of the chosen inner product on ``p``.  New spaces
are added by writing a factory, not by subclassing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import BilinearForm
from .matexp import ExpConfig, Structure, exp_dispatch

MAX_SPHERE_DIM = 5

#: Exponential settings for the structural checkers; residual targets around
#: 1e-10 need a tighter series tolerance than the sampler default.
CHECK_EXP_CONFIG = ExpConfig(target_accuracy=1e-12)


@dataclass(frozen=True, eq=False)
class HomogeneousSpaceSpec:
    """A homogeneous space ``G/K`` embedded in ``GL(n)``.

    Attributes
    ----------
    name : str
        Registry name, e.g. ``"s2"``.
    n : int
        Dimension of the matrix representation.
    k_generators, p_generators : tuple of ndarray
        Bases of the stabiliser algebra and of the horizontal complement.
    kinetic_eigenvalues : ndarray
        ``lambda_j`` with kinetic energy ``sum_j lambda_j p_j**2`` in the
        coefficients of ``P = sum_j p_j T_j``.  Negative entries mark an
        indefinite (pseudo-Riemannian) kinetic form.
    invariant_form : BilinearForm
        ``M`` with ``g^T M g = M`` for every group element.
    base_point : ndarray
        ``p0``; the manifold is the orbit ``{g @ p0}``.
    riemannian : bool
        False when no momentum refreshment exists (indefinite kinetic form).
    inner_product : {"frobenius", "trace"}
        ``tr(A^T B)`` or ``tr(A B)`` on the algebra.
    p_structure : Structure
        Structure shared by every element of ``p``; used as an exponential
        routing hint.
    """

    name: str
    n: int
    k_generators: tuple
    p_generators: tuple
    kinetic_eigenvalues: np.ndarray
    invariant_form: BilinearForm
    base_point: np.ndarray
    riemannian: bool = True
    inner_product: str = "frobenius"
    p_structure: Structure | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.invariant_form.dim != self.n or self.base_point.shape != (self.n,):
            raise ValueError("form and base point must match the representation dimension")
        if len(self.kinetic_eigenvalues) != len(self.p_generators):
            raise ValueError("need one kinetic eigenvalue per p generator")
        # flattened generator stacks for fast contractions
        object.__setattr__(self, "_p_stack", np.array(self.p_generators, dtype=float))
        object.__setattr__(self, "_k_stack", np.array(self.k_generators, dtype=float).reshape(-1, self.n, self.n))

    @property
    def dim_p(self) -> int:
        return len(self.p_generators)

    @property
    def dim_k(self) -> int:
        return len(self.k_generators)

    @property
    def p_stack(self) -> np.ndarray:
        return self._p_stack

    @property
    def k_stack(self) -> np.ndarray:
        return self._k_stack

    def algebra_inner(self, A, B) -> float:
        if self.inner_product == "trace":
            return float(np.sum(A * B.T))
        return float(np.sum(A * B))

    def momentum_matrix(self, coeffs) -> np.ndarray:
        """``sum_j coeffs[j] T_j``."""
        return np.tensordot(np.asarray(coeffs, dtype=float), self._p_stack, axes=1)

    def velocity_matrix(self, coeffs) -> np.ndarray:
        """Algebra element generating the position flow, ``sum_j 2 lambda_j p_j T_j``."""
        c = 2.0 * self.kinetic_eigenvalues * np.asarray(coeffs, dtype=float)
        return np.tensordot(c, self._p_stack, axes=1)

    def kinetic_energy(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(np.dot(self.kinetic_eigenvalues, c * c))

    def project(self, Q) -> np.ndarray:
        return project_to_manifold(Q, self)

    @property
    def has_normal_split(self) -> bool:
        """Every horizontal generator is symmetric or antisymmetric."""
        return all(
            np.allclose(T, T.T, atol=0) or np.allclose(T, -T.T, atol=0) for T in self.p_generators
        )


def _gen(n: int, entries: dict) -> np.ndarray:
    # entries keyed by 1-based (row, col)
    T = np.zeros((n, n))
    for (i, j), v in entries.items():
        T[i - 1, j - 1] = v
    return T


def so3_generators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(T_i)_{jk} = epsilon_{ijk}``."""
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return eps[0], eps[1], eps[2]


def _normalised(generators, inner) -> tuple[list[np.ndarray], np.ndarray]:
    """Scale each generator to ``|<T, T>| = 2`` and return the kinetic eigenvalues."""
    out, lams = [], []
    for T in generators:
        g = inner(T, T)
        out.append(T * math.sqrt(2.0 / abs(g)))
        lams.append(0.5 * math.copysign(1.0, g))
    return out, np.array(lams)


def _frobenius(A, B):
    return float(np.sum(A * B))


def _trace(A, B):
    return float(np.sum(A * B.T))


def make_sphere_s2() -> HomogeneousSpaceSpec:
    """The two-sphere ``SO(3)/SO(2)`` with ``k = span(T1)`` and ``p = span(T2, T3)``."""
    T1, T2, T3 = so3_generators()
    return HomogeneousSpaceSpec(
        name="s2",
        n=3,
        k_generators=(T1,),
        p_generators=(T2, T3),
        kinetic_eigenvalues=np.array([0.5, 0.5]),
        invariant_form=BilinearForm.euclidean(3),
        base_point=np.array([1.0, 0.0, 0.0]),
        p_structure=Structure.ANTISYMMETRIC,
    )


def h2_twosheet_generators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    W1 = _gen(3, {(2, 3): 1, (3, 2): -1})
    W2 = _gen(3, {(1, 3): -1, (3, 1): -1})
    W3 = _gen(3, {(1, 2): 1, (2, 1): 1})
    return W1, W2, W3


def make_h2_twosheet() -> HomogeneousSpaceSpec:
    """Upper sheet of the two-sheeted hyperboloid ``SO(2,1)/SO(2)``.

    The group preserves ``diag(-1, 1, 1)``; ``p`` is spanned by the symmetric
    generators ``W2, W3`` and the inner product is ``tr(A^T B)``.
    """
    W1, W2, W3 = h2_twosheet_generators()
    p, lams = _normalised((W2, W3), _frobenius)
    return HomogeneousSpaceSpec(
        name="h2-twosheet",
        n=3,
        k_generators=(W1,),
        p_generators=tuple(p),
        kinetic_eigenvalues=lams,
        invariant_form=BilinearForm((-1.0, 1.0, 1.0)),
        base_point=np.array([1.0, 0.0, 0.0]),
        p_structure=Structure.NORMAL,
    )


def h2_onesheet_generators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    W1 = _gen(3, {(2, 3): -1, (3, 2): -1})
    W2 = _gen(3, {(1, 3): 1, (3, 1): 1})
    W3 = _gen(3, {(1, 2): 1, (2, 1): -1})
    return W1, W2, W3


def make_h2_onesheet() -> HomogeneousSpaceSpec:
    """Single-sheeted hyperboloid ``x^2 + y^2 - z^2 = 1`` as ``SO(2,1)/SO(1,1)``.

    The stabiliser of ``p0 = (1, 0, 0)`` is generated by the boost ``W1'``;
    ``p = span(W2', W3')``.  The invariant product ``tr(A B)`` is indefinite
    on ``p``, so the space supports trajectories but not momentum refreshment.
    Generic elements of ``p`` are neither symmetric nor antisymmetric.
    """
    W1, W2, W3 = h2_onesheet_generators()
    p, lams = _normalised((W2, W3), _trace)
    return HomogeneousSpaceSpec(
        name="h2-onesheet",
        n=3,
        k_generators=(W1,),
        p_generators=tuple(p),
        kinetic_eigenvalues=lams,
        invariant_form=BilinearForm((1.0, 1.0, -1.0)),
        base_point=np.array([1.0, 0.0, 0.0]),
        riemannian=False,
        inner_product="trace",
        p_structure=Structure.GENERAL,
    )


def make_son_sphere(n: int) -> HomogeneousSpaceSpec:
    """``S^{n-1} = SO(n)/SO(n-1)`` with base point ``e1``.

    ``p`` holds the rotations ``e_j e_1^T - e_1 e_j^T`` mixing coordinate 1
    with ``j = 2..n``; ``k`` holds the rotations among coordinates ``2..n``.
    """
    if not 3 <= n <= MAX_SPHERE_DIM:
        raise ValueError(f"sphere-n supports 3 <= n <= {MAX_SPHERE_DIM}, got {n}")
    p = [_gen(n, {(j, 1): 1, (1, j): -1}) for j in range(2, n + 1)]
    k = [_gen(n, {(a, b): 1, (b, a): -1}) for a in range(2, n + 1) for b in range(a + 1, n + 1)]
    return HomogeneousSpaceSpec(
        name="sphere-n",
        n=n,
        k_generators=tuple(k),
        p_generators=tuple(p),
        kinetic_eigenvalues=np.full(n - 1, 0.5),
        invariant_form=BilinearForm.euclidean(n),
        base_point=np.eye(n)[0],
        p_structure=Structure.ANTISYMMETRIC,
        params={"n": n},
    )


SPACES: dict[str, Callable[..., HomogeneousSpaceSpec]] = {
    "s2": make_sphere_s2,
    "h2-twosheet": make_h2_twosheet,
    "h2-onesheet": make_h2_onesheet,
    "sphere-n": make_son_sphere,
}


def get_space(name: str, **params) -> HomogeneousSpaceSpec:
    try:
        factory = SPACES[name]
    except KeyError:
        raise KeyError(f"unknown space {name!r}; known: {sorted(SPACES)}") from None
    return factory(**params)


def project_to_manifold(Q, spec: HomogeneousSpaceSpec) -> np.ndarray:
    """Manifold point ``Q @ p0`` (the first column when ``p0 = e1``)."""
    return np.asarray(Q) @ spec.base_point


def membership_residual(Q, spec: HomogeneousSpaceSpec) -> float:
    """``max |Q^T M Q - M|`` for the invariant form ``M``."""
    M = spec.invariant_form.matrix
    return float(np.max(np.abs(Q.T @ M @ Q - M)))


def _span_residual(X: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Component of ``X`` orthogonal (Frobenius) to the span of ``basis``."""
    if len(basis) == 0:
        return X
    B = basis.reshape(len(basis), -1).T
    coeffs, *_ = np.linalg.lstsq(B, X.ravel(), rcond=None)
    return X - (B @ coeffs).reshape(X.shape)


def algebra_components(X, spec: HomogeneousSpaceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Split ``X`` in ``g = k + p`` into coefficient vectors ``(k_coeffs, p_coeffs)``."""
    basis = np.concatenate([spec.k_stack, spec.p_stack])
    B = basis.reshape(len(basis), -1).T
    coeffs, *_ = np.linalg.lstsq(B, np.asarray(X, dtype=float).ravel(), rcond=None)
    return coeffs[: spec.dim_k], coeffs[spec.dim_k :]


def momentum_residual_in_k(P, spec: HomogeneousSpaceSpec) -> float:
    """Frobenius norm of the ``k`` component of the algebra element ``P``."""
    kc, _ = algebra_components(P, spec)
    if spec.dim_k == 0:
        return 0.0
    return float(np.linalg.norm(np.tensordot(kc, spec.k_stack, axes=1)))


def reductivity_residual(spec: HomogeneousSpaceSpec) -> float:
    """``max || [K_i, T_j] - proj_p [K_i, T_j] ||`` over generator pairs."""
    worst = 0.0
    for K in spec.k_generators:
        for T in spec.p_generators:
            r = _span_residual(K @ T - T @ K, spec.p_stack)
            worst = max(worst, float(np.linalg.norm(r)))
    return worst


def symmetric_bracket_residual(spec: HomogeneousSpaceSpec) -> float:
    """``max || [T_i, T_j] - proj_k [T_i, T_j] ||``; zero for symmetric spaces."""
    worst = 0.0
    for i, A in enumerate(spec.p_generators):
        for B in spec.p_generators[i + 1 :]:
            r = _span_residual(A @ B - B @ A, spec.k_stack)
            worst = max(worst, float(np.linalg.norm(r)))
    return worst


def algebra_form_residual(spec: HomogeneousSpaceSpec) -> float:
    """``max || G^T M + M G ||`` over all generators."""
    M = spec.invariant_form.matrix
    gens = list(spec.k_generators) + list(spec.p_generators)
    return max(float(np.max(np.abs(G.T @ M + M @ G))) for G in gens)


def generator_gram(spec: HomogeneousSpaceSpec) -> np.ndarray:
    """Gram matrix of the ``p`` generators under the space's inner product."""
    return np.array([[spec.algebra_inner(A, B) for B in spec.p_generators] for A in spec.p_generators])


def stabilizer_residual(
    spec: HomogeneousSpaceSpec, ts=(-3.0, -1.0, -0.1, 0.1, 1.0, 3.0), config: ExpConfig = CHECK_EXP_CONFIG
) -> float:
    worst = 0.0
    for K in spec.k_generators:
        for t in ts:
            g = exp_dispatch(t * K, config)
            worst = max(worst, float(np.max(np.abs(g @ spec.base_point - spec.base_point))))
    return worst


def horizontal_form_residual(
    spec: HomogeneousSpaceSpec,
    rng: np.random.Generator,
    trials: int = 100,
    max_norm: float = 3.0,
    config: ExpConfig = CHECK_EXP_CONFIG,
) -> float:
    """``max |exp(P)^T M exp(P) - M|`` over random ``P`` in ``p`` with ``||P||_F <= max_norm``."""
    worst = 0.0
    for _ in range(trials):
        c = rng.standard_normal(spec.dim_p)
        P = spec.momentum_matrix(c)
        P *= max_norm * rng.uniform() / max(np.linalg.norm(P), 1e-300)
        g = exp_dispatch(P, config, spec.p_structure)
        worst = max(worst, membership_residual(g, spec))
    return worst


def ad_invariance_check(
    spec: HomogeneousSpaceSpec,
    trials: int,
    rng: np.random.Generator,
    config: ExpConfig = CHECK_EXP_CONFIG,
) -> float:
    """Largest violation of ``Ad_K``-invariance of the inner product on ``p``.

    For random ``k = exp(X)``, ``X`` in ``k``, and random ``A, B`` in ``p`` this
    returns the maximum of ``|<k A k^-1, k B k^-1> - <A, B>|`` and of the
    distance of ``k A k^-1`` from ``p``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst = 0.0
    for _ in range(trials):
        X = np.tensordot(rng.uniform(-2.0, 2.0, spec.dim_k), spec.k_stack, axes=1)
        k = exp_dispatch(X, config)
        k_inv = exp_dispatch(-X, config)
        A = spec.momentum_matrix(rng.standard_normal(spec.dim_p))
        B = spec.momentum_matrix(rng.standard_normal(spec.dim_p))
        Ak = k @ A @ k_inv
        Bk = k @ B @ k_inv
        worst = max(
            worst,
            abs(spec.algebra_inner(Ak, Bk) - spec.algebra_inner(A, B)),
            float(np.linalg.norm(_span_residual(Ak, spec.p_stack))),
        )
    return worst
