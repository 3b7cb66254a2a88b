"""Kernel PLS as conjugate gradients on the normal equation ``S g = T* y``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .errors import ContextMismatchError, ParameterError
from .kernels import KernelSpec, cross_gram, gram_matrix
from .rkhs import OperatorContext, RkhsElement, apply_S, h_norm, tstar_apply

logger = logging.getLogger(__name__)

TAU_FIT = 1e-14
TAU_BREAKDOWN = 1e-12
# semi-orthogonality limit for residuals; beyond it the Krylov space is numerically exhausted
TAU_ORTH = 1e-8
DEFAULT_M_CAP = 100


class ExitReason(str, Enum):
    MAX_ITER = "max_iter"
    EXACT_FIT = "exact_fit"
    BREAKDOWN = "breakdown"
    CALLBACK = "callback"


@dataclass(frozen=True)
class CgIteration:
    """State at iteration ``m``.

    ``g``, ``u``, ``d`` are the iterate, residual ``T*y - S g`` and search
    direction at step ``m``; ``alpha``/``beta`` and ``d_S_d`` are only set
    when the step from ``m`` to ``m + 1`` was actually taken.
    """

    m: int
    g: RkhsElement
    u: RkhsElement
    d: RkhsElement
    ls_error: float
    u_norm2: float
    d_norm2: float
    d_S_d: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None

    @property
    def u_next_norm2(self) -> Optional[float]:
        return None if self.beta is None else self.beta * self.u_norm2


@dataclass
class CgTrace:
    iterations: list[CgIteration]
    exit_reason: ExitReason
    ctx: OperatorContext = field(repr=False)

    @property
    def steps(self) -> int:
        """Number of completed CG steps."""
        return len(self.iterations) - 1

    @property
    def g(self) -> RkhsElement:
        return self.iterations[-1].g

    def g_at(self, m: int) -> RkhsElement:
        if not 0 <= m <= self.steps:
            raise ParameterError(f"iterate {m} not available (trace has {self.steps} steps)")
        return self.iterations[m].g

    def ls_errors(self) -> np.ndarray:
        return np.array([it.ls_error for it in self.iterations])

    def to_dict(self, coefficients: bool = True) -> dict:
        rows = []
        for it in self.iterations:
            row = {
                "m": it.m,
                "alpha": it.alpha,
                "beta": it.beta,
                "ls_error": it.ls_error,
                "u_norm2": it.u_norm2,
                "d_S_d": it.d_S_d,
            }
            if coefficients:
                row["g"] = it.g.coeffs.tolist()
                row["u"] = it.u.coeffs.tolist()
                row["d"] = it.d.coeffs.tolist()
            rows.append(row)
        return {"exit_reason": self.exit_reason.value, "iterations": rows}


def default_m_max(n: int) -> int:
    return min(n, DEFAULT_M_CAP)


def conjugate_gradient(
    ctx: OperatorContext,
    target,
    m_max: int,
    callback: Optional[Callable[[CgIteration], bool]] = None,
    orth_tol: Optional[float] = TAU_ORTH,
) -> CgTrace:
    """Run CG on ``S g = T* target`` for at most ``m_max`` steps.

    ``callback`` sees each completed step (with ``alpha``/``beta`` filled in)
    and may return True to stop after it.

    Without reorthogonalization, finite precision destroys the mutual
    orthogonality of the residuals once the Krylov space is numerically
    exhausted, and later iterates no longer minimize the least-squares
    criterion over their Krylov space. A step whose new residual has
    ``|cos(u_{m+1}, u_j)| > orth_tol`` for some ``j <= m`` is therefore
    discarded and reported as a breakdown. ``orth_tol=None`` disables this.
    """
    if m_max < 1:
        raise ParameterError(f"m_max must be >= 1, got {m_max}")
    target = np.asarray(target, dtype=float).ravel()
    G, w = ctx.gram, ctx.weights

    g = np.zeros(ctx.n)
    fitted = np.zeros(ctx.n)
    u = tstar_apply(ctx, target).coeffs
    d = u.copy()
    Gu = G @ u
    u_norm2 = float(u @ Gu)
    tau_fit = TAU_FIT * (u_norm2 + 1.0)

    iterations: list[CgIteration] = []
    past_u: list[np.ndarray] = []
    past_norm: list[float] = []
    reason = ExitReason.MAX_ITER
    m = 0
    while True:
        ls = float(w @ (target - fitted) ** 2)
        if u_norm2 <= tau_fit:
            reason = ExitReason.EXACT_FIT
        elif m >= m_max:
            reason = ExitReason.MAX_ITER
        else:
            Gd = G @ d
            d_norm2 = float(d @ Gd)
            Sd = w * Gd
            dSd = float(Gd @ Sd)
            if dSd <= TAU_BREAKDOWN * d_norm2:
                reason = ExitReason.BREAKDOWN
            else:
                alpha = u_norm2 / dSd
                g_next = g + alpha * d
                u_next = u - alpha * Sd
                Gu = G @ u_next
                u_next_norm2 = float(u_next @ Gu)
                if orth_tol is not None and u_next_norm2 > tau_fit:
                    past_u.append(u)
                    past_norm.append(np.sqrt(u_norm2))
                    cos = np.abs(np.stack(past_u) @ Gu) / (
                        np.array(past_norm) * np.sqrt(u_next_norm2)
                    )
                    if np.max(cos) > orth_tol:
                        reason = ExitReason.BREAKDOWN
                        iterations.append(_final(ctx, m, g, u, d, ls, u_norm2))
                        break
                beta = u_next_norm2 / u_norm2
                d_next = u_next + beta * d

                rec = CgIteration(
                    m, ctx.element(g), ctx.element(u), ctx.element(d), ls,
                    u_norm2, d_norm2, dSd, alpha, beta,
                )
                iterations.append(rec)
                g, u, d, u_norm2 = g_next, u_next, d_next, u_next_norm2
                fitted = fitted + alpha * Gd
                m += 1
                if callback is not None and callback(rec):
                    reason = ExitReason.CALLBACK
                    ls = float(w @ (target - fitted) ** 2)
                    iterations.append(_final(ctx, m, g, u, d, ls, u_norm2))
                    break
                continue
        iterations.append(_final(ctx, m, g, u, d, ls, u_norm2))
        break
    return CgTrace(iterations, reason, ctx)


def _final(ctx, m, g, u, d, ls, u_norm2) -> CgIteration:
    return CgIteration(
        m, ctx.element(g), ctx.element(u), ctx.element(d), ls,
        u_norm2, float(d @ (ctx.gram @ d)),
    )


def make_context(dataset: Dataset, spec: KernelSpec) -> OperatorContext:
    return OperatorContext(gram_matrix(spec, dataset.X))


def fit_cg(
    dataset: Dataset,
    spec: KernelSpec,
    m_max: Optional[int] = None,
    hooks: Optional[Callable[[CgIteration], bool]] = None,
    ctx: Optional[OperatorContext] = None,
    orth_tol: Optional[float] = TAU_ORTH,
) -> CgTrace:
    """Empirical KPLS: CG iterates for ``m = 0 .. m_max`` (or until exit)."""
    if ctx is None:
        ctx = make_context(dataset, spec)
    elif ctx.n != dataset.n:
        raise ContextMismatchError(f"context of size {ctx.n} for dataset of size {dataset.n}")
    if m_max is None:
        m_max = default_m_max(dataset.n)
    return conjugate_gradient(ctx, dataset.y, m_max, hooks, orth_tol)


def predict(dataset: Dataset, spec: KernelSpec, g: RkhsElement, X_new,
            ctx: Optional[OperatorContext] = None) -> np.ndarray:
    """Predictions on the original response scale."""
    if g.coeffs.shape[0] != dataset.n or (ctx is not None and ctx.context_id != g.context_id):
        raise ContextMismatchError("element was not fit on this dataset")
    values = cross_gram(spec, X_new, dataset.X) @ g.coeffs
    return dataset.y_mean + dataset.y_scale * values


def krylov_basis_dim(trace: CgTrace, m: int, tol: float = 1e-10) -> int:
    """Numerical dimension of ``span{d_0, ..., d_{m-1}}``."""
    if m < 0 or m > len(trace.iterations):
        raise ParameterError(f"m={m} outside 0..{len(trace.iterations)}")
    if m == 0:
        return 0
    D = np.stack([it.d.coeffs for it in trace.iterations[:m]], axis=1)
    C = D.T @ trace.ctx.gram @ D
    scale = np.sqrt(np.maximum(np.diag(C), 0.0))
    keep = scale > 0
    if not np.any(keep):
        return 0
    C = C[np.ix_(keep, keep)] / np.outer(scale[keep], scale[keep])
    eig = np.linalg.eigvalsh((C + C.T) / 2)
    return int(np.sum(eig > tol * eig[-1]))


def residual_drift(trace: CgTrace, target) -> np.ndarray:
    """Gap between recursive residuals and ``T* y - S g_m``, relative to ``|T* y|``."""
    ctx = trace.ctx
    rhs = tstar_apply(ctx, target)
    ref = h_norm(ctx, rhs)
    out = []
    for it in trace.iterations:
        fresh = rhs - apply_S(ctx, it.g)
        gap = h_norm(ctx, fresh - it.u)
        out.append(gap / ref if ref > 0 else gap)
    drift = np.array(out)
    late = np.nonzero(drift[31:] > 1e-8)[0]
    if late.size:
        logger.warning("CG residual drift %.3g past iteration 30", float(drift[31 + late[0]]))
    return drift
