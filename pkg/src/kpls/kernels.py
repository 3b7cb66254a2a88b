"""Bounded kernels and Gram matrices.

Every shipped kernel satisfies ``k(x, x) <= 1`` on its input domain, so that
the covariance operator built from it has norm at most one:

* ``gaussian``: ``exp(-|x - x'|^2 / (2 sigma^2))``, any input.
* ``linear``: ``<x, x'>``, inputs must lie in the closed unit ball.
* ``polynomial``: ``((1 + <x, x'>) / 2) ** degree``, inputs in the unit ball.

Only the gaussian kernel is universal; consistency guarantees for the
stopping rules are therefore kernel-conditional.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BoundsError, ParameterError

# slack on the unit-ball check for pre-scaled inputs
_DIAG_TOL = 1e-12


class KernelFamily(str, Enum):
    GAUSSIAN = "gaussian"
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"


_ALIASES = {
    "gaussian": KernelFamily.GAUSSIAN,
    "rbf": KernelFamily.GAUSSIAN,
    "linear": KernelFamily.LINEAR,
    "linear-normalized": KernelFamily.LINEAR,
    "poly": KernelFamily.POLYNOMIAL,
    "polynomial": KernelFamily.POLYNOMIAL,
    "polynomial-normalized": KernelFamily.POLYNOMIAL,
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its parameters.

    ``params`` is ``(sigma,)`` for gaussian, ``()`` for linear and
    ``(degree,)`` for polynomial.
    """

    family: KernelFamily
    params: tuple[float, ...] = ()
    unit_bounded: bool = True

    def __post_init__(self):
        family = _ALIASES.get(str(getattr(self.family, "value", self.family)))
        if family is None:
            raise ParameterError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if not self.unit_bounded:
            raise ParameterError("only unit-bounded kernels are supported")
        self.validate()

    @classmethod
    def gaussian(cls, sigma: float) -> KernelSpec:
        return cls(KernelFamily.GAUSSIAN, (sigma,))

    @classmethod
    def linear(cls) -> KernelSpec:
        return cls(KernelFamily.LINEAR, ())

    @classmethod
    def polynomial(cls, degree: int) -> KernelSpec:
        return cls(KernelFamily.POLYNOMIAL, (degree,))

    def validate(self) -> None:
        if self.family is KernelFamily.GAUSSIAN:
            if len(self.params) != 1:
                raise ParameterError("gaussian kernel takes exactly one parameter (sigma)")
            sigma = self.params[0]
            if not np.isfinite(sigma) or sigma <= 0:
                raise ParameterError(f"gaussian bandwidth must be > 0, got {sigma}")
        elif self.family is KernelFamily.LINEAR:
            if self.params:
                raise ParameterError("linear kernel takes no parameters")
        else:
            if len(self.params) != 1:
                raise ParameterError("polynomial kernel takes exactly one parameter (degree)")
            degree = self.params[0]
            if degree < 1 or degree != int(degree):
                raise ParameterError(f"polynomial degree must be an integer >= 1, got {degree}")

    def to_dict(self) -> dict:
        return {"family": self.family.value, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> KernelSpec:
        return cls(d["family"], tuple(d.get("params", ())))


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ParameterError(f"expected a 2-d array of observations, got shape {X.shape}")
    return X


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(A[i], B[j])``."""
    A = _as_rows(A)
    B = _as_rows(B)
    if A.shape[1] != B.shape[1]:
        raise ParameterError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.family is KernelFamily.GAUSSIAN:
        sigma = spec.params[0]
        sq = (
            np.sum(A**2, axis=1)[:, None]
            + np.sum(B**2, axis=1)[None, :]
            - 2.0 * A @ B.T
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * sigma**2))
    for name, Z in (("A", A), ("B", B)):
        if Z.size and np.max(np.sum(Z**2, axis=1)) > 1.0 + _DIAG_TOL:
            raise BoundsError(
                f"{spec.family.value} kernel requires inputs in the unit ball ({name} violates it)"
            )
    inner = A @ B.T
    if spec.family is KernelFamily.LINEAR:
        return inner
    return ((1.0 + inner) / 2.0) ** int(spec.params[0])


def eval_kernel(spec: KernelSpec, x, x_prime) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    return float(cross_gram(spec, x[None, :], x_prime[None, :])[0, 0])


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric Gram matrix of the rows of ``X``.

    The upper triangle is mirrored onto the lower one so the result equals its
    transpose exactly; for the gaussian kernel the diagonal is set to one.
    """
    X = _as_rows(X)
    if X.shape[0] < 1:
        raise ParameterError("gram_matrix needs at least one observation")
    G = cross_gram(spec, X, X)
    upper = np.triu(G)
    G = upper + np.triu(G, 1).T
    if spec.family is KernelFamily.GAUSSIAN:
        np.fill_diagonal(G, 1.0)
    if np.max(np.diag(G)) > 1.0 + _DIAG_TOL:
        raise BoundsError("kernel diagonal exceeds 1; rescale inputs into the unit ball")
    return G


def median_heuristic(X) -> float:
    """Median of the nonzero pairwise Euclidean distances (1.0 if all coincide)."""
    X = _as_rows(X)
    sq = np.sum(X**2, axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    iu = np.triu_indices(X.shape[0], k=1)
    d = np.sqrt(np.maximum(D2[iu], 0.0))
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(np.median(d))
