"""Target potentials ``U`` on the ambient coordinates of the manifold point."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .matexp import exp_dispatch
from .spaces import HomogeneousSpaceSpec


class GradientMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    """Negative log density ``fn(y)`` with ambient gradient ``grad(y)``.

    ``y`` is the manifold point ``Q @ p0``; the lift to the group is
    ``V(Q) = fn(Q @ p0)``, which is constant on cosets by construction.
    """

    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    description: str = ""
    dim: int | None = None

    def validate(
        self,
        spec: HomogeneousSpaceSpec,
        rng: np.random.Generator,
        n_points: int = 100,
        rel_tol: float = 1e-5,
        h: float = 1e-6,
    ) -> float:
        """Compare ``grad`` with central differences of ``fn`` at random manifold points.

        Returns the worst relative error; raises :class:`GradientMismatchError`
        above ``rel_tol``.
        """
        if self.dim is not None and self.dim != spec.n:
            raise ValueError(f"potential is defined on R^{self.dim}, space lives in R^{spec.n}")
        worst = 0.0
        eye = np.eye(spec.n)
        for _ in range(n_points):
            P = spec.momentum_matrix(rng.uniform(-1.0, 1.0, spec.dim_p))
            y = exp_dispatch(P, structure_hint=spec.p_structure) @ spec.base_point
            g = np.asarray(self.grad(y), dtype=float)
            fd = np.array([(self.fn(y + h * e) - self.fn(y - h * e)) / (2 * h) for e in eye])
            if not (np.all(np.isfinite(g)) and np.isfinite(self.fn(y))):
                raise GradientMismatchError(f"non-finite potential or gradient at {y}")
            err = float(np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))
            worst = max(worst, err)
        if worst > rel_tol:
            raise GradientMismatchError(
                f"gradient of {self.description or 'potential'} disagrees with finite differences "
                f"(relative error {worst:.2e} > {rel_tol:.0e})"
            )
        return worst


def _zero(y):
    return 0.0


def _zero_grad(y):
    return np.zeros_like(np.asarray(y, dtype=float))


def _yz2expx2(y):
    x1, x2, x3 = y
    return x2 * x3**2 * np.exp(x1**2)


def _yz2expx2_grad(y):
    x1, x2, x3 = y
    e = np.exp(x1**2)
    return np.array([2 * x1 * x2 * x3**2 * e, x3**2 * e, 2 * x2 * x3 * e])


def _y3expz2x2(y):
    x1, x2, x3 = y
    return x2**3 * np.exp(x3**2 + x1**2)


def _y3expz2x2_grad(y):
    x1, x2, x3 = y
    e = np.exp(x3**2 + x1**2)
    return np.array([2 * x1 * x2**3 * e, 3 * x2**2 * e, 2 * x3 * x2**3 * e])


def _y_z2_expx2(y):
    x1, x2, x3 = y
    return x2 + x3**2 + np.exp(x1**2)


def _y_z2_expx2_grad(y):
    x1, x2, x3 = y
    return np.array([2 * x1 * np.exp(x1**2), 1.0, 2 * x3])


def _yexpz2_2x2(y):
    x1, x2, x3 = y
    return x2 * np.exp(x3**2 + 2 * x1**2)


def _yexpz2_2x2_grad(y):
    x1, x2, x3 = y
    e = np.exp(x3**2 + 2 * x1**2)
    return np.array([4 * x1 * x2 * e, e, 2 * x3 * x2 * e])


def _h2fig(y):
    x1, x2, x3 = y
    return (x2**2 + 4) * x3**2 * np.exp(x1**3)


def _h2fig_grad(y):
    x1, x2, x3 = y
    e = np.exp(x1**3)
    return np.array(
        [3 * x1**2 * (x2**2 + 4) * x3**2 * e, 2 * x2 * x3**2 * e, 2 * (x2**2 + 4) * x3 * e]
    )


POTENTIALS: dict[str, Potential] = {
    "none": Potential(_zero, _zero_grad, "U = 0"),
    "yz2expx2": Potential(_yz2expx2, _yz2expx2_grad, "U = y z^2 exp(x^2)", 3),
    "y3expz2x2": Potential(_y3expz2x2, _y3expz2x2_grad, "U = y^3 exp(z^2 + x^2)", 3),
    "y_z2_expx2": Potential(_y_z2_expx2, _y_z2_expx2_grad, "U = y + z^2 + exp(x^2)", 3),
    "yexpz2_2x2": Potential(_yexpz2_2x2, _yexpz2_2x2_grad, "U = y exp(z^2 + 2 x^2)", 3),
    "h2fig": Potential(_h2fig, _h2fig_grad, "U = (y^2 + 4) z^2 exp(x^3)", 3),
}


def get_potential(name: str) -> Potential:
    try:
        return POTENTIALS[name]
    except KeyError:
        raise KeyError(f"unknown potential {name!r}; known: {sorted(POTENTIALS)}") from None


def linear_potential(B) -> Potential:
    """``U = b . y``; on the group this is ``tr(B x)`` with ``B = p0 b^T``."""
    b = np.asarray(B, dtype=float)
    return Potential(lambda y: float(b @ y), lambda y: b.copy(), f"U = {b.tolist()} . y", len(b))
