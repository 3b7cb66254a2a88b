"""RKHS calculus in coefficient space.

An element ``g = sum_i a_i k(x_i, .)`` of the kernel space is stored as its
coefficient vector ``a`` over a fixed set of expansion points. With point
weights ``w`` (``1/n`` for the empirical measure, the probability masses for
a discrete population) the operators act as

* ``T g``    -> ``G a``              (values at the expansion points)
* ``T* v``   -> ``w * v``
* ``S g``    -> ``w * (G a)``
* ``<g, h>`` -> ``a^T G b``
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContextMismatchError, SizeError
from .kernels import KernelSpec, cross_gram

_ids = itertools.count()


@dataclass(frozen=True, eq=False)
class OperatorContext:
    gram: np.ndarray
    weights: Optional[np.ndarray] = None
    context_id: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        gram = np.asarray(self.gram, dtype=float)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise SizeError(f"gram must be square, got shape {gram.shape}")
        n = gram.shape[0]
        if self.weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(self.weights, dtype=float).ravel()
            if weights.shape[0] != n:
                raise SizeError(f"{weights.shape[0]} weights for a {n}x{n} gram")
        gram.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    def element(self, coeffs) -> RkhsElement:
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if coeffs.shape[0] != self.n:
            raise SizeError(f"expected {self.n} coefficients, got {coeffs.shape[0]}")
        return RkhsElement(coeffs, self.context_id)

    def zero(self) -> RkhsElement:
        return RkhsElement(np.zeros(self.n), self.context_id)

    def digest(self) -> str:
        return hashlib.sha256(self.gram.tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class RkhsElement:
    coeffs: np.ndarray
    context_id: int

    def _check(self, other: RkhsElement) -> None:
        if other.context_id != self.context_id:
            raise ContextMismatchError(
                f"elements belong to contexts {self.context_id} and {other.context_id}"
            )

    def __add__(self, other: RkhsElement) -> RkhsElement:
        self._check(other)
        return RkhsElement(self.coeffs + other.coeffs, self.context_id)

    def __sub__(self, other: RkhsElement) -> RkhsElement:
        self._check(other)
        return RkhsElement(self.coeffs - other.coeffs, self.context_id)

    def __mul__(self, scalar: float) -> RkhsElement:
        return RkhsElement(float(scalar) * self.coeffs, self.context_id)

    __rmul__ = __mul__

    def __neg__(self) -> RkhsElement:
        return RkhsElement(-self.coeffs, self.context_id)


def _own(ctx: OperatorContext, *elements: RkhsElement) -> None:
    for e in elements:
        if e.context_id != ctx.context_id:
            raise ContextMismatchError(
                f"element from context {e.context_id} used with context {ctx.context_id}"
            )


def tstar_apply(ctx: OperatorContext, v) -> RkhsElement:
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != ctx.n:
        raise SizeError(f"vector of length {v.shape[0]} for context of size {ctx.n}")
    return RkhsElement(ctx.weights * v, ctx.context_id)


def t_apply(ctx: OperatorContext, g: RkhsElement) -> np.ndarray:
    """Values of ``g`` at the expansion points."""
    _own(ctx, g)
    return ctx.gram @ g.coeffs


def apply_S(ctx: OperatorContext, g: RkhsElement) -> RkhsElement:
    return tstar_apply(ctx, t_apply(ctx, g))


def h_inner(ctx: OperatorContext, g: RkhsElement, h: RkhsElement) -> float:
    _own(ctx, g, h)
    return float(g.coeffs @ (ctx.gram @ h.coeffs))


def h_norm(ctx: OperatorContext, g: RkhsElement) -> float:
    return float(np.sqrt(max(h_inner(ctx, g, g), 0.0)))


def l2_norm_sq(ctx: OperatorContext, v) -> float:
    """Squared norm of a vector of point values under the weighted measure."""
    v = np.asarray(v, dtype=float)
    return float(ctx.weights @ (v * v))


def evaluate(ctx: OperatorContext, g: RkhsElement, X_train, spec: KernelSpec, X_new) -> np.ndarray:
    """Values ``sum_i a_i k(x_i, x_new_j)`` at new points."""
    _own(ctx, g)
    K = cross_gram(spec, X_new, X_train)
    if K.shape[1] != ctx.n:
        raise SizeError(f"X_train has {K.shape[1]} rows, context has {ctx.n}")
    return K @ g.coeffs
