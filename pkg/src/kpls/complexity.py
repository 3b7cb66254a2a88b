"""Closed-form Krylov representation and the second stopping rule.

With ``R_m v = sum_i v_i S^(i-1) T* y`` the m-th CG iterate is
``g_m = R_m M_m^-1 R_m* T* y`` where ``M_m = R_m* S R_m``; ``M'_m = R_m* R_m``.
The monomial basis is badly conditioned, so this path serves verification
and the complexity statistic; :func:`kpls.cg.fit_cg` remains the estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .cg import default_m_max, fit_cg, make_context
from .data import Dataset
from .errors import ParameterError, SingularityError
from .kernels import KernelSpec
from .rkhs import OperatorContext, RkhsElement

TAU_SING = 1e-12


class _KrylovColumns:
    """Lazily grown columns ``S^(i-1) T* y`` and their H_k Gram matrix."""

    def __init__(self, ctx: OperatorContext, target):
        self.ctx = ctx
        first = ctx.weights * np.asarray(target, dtype=float).ravel()
        self.cols = [first]
        self.gcols = [ctx.gram @ first]

    def ensure(self, k: int) -> None:
        while len(self.cols) < k:
            nxt = self.ctx.weights * self.gcols[-1]
            self.cols.append(nxt)
            self.gcols.append(self.ctx.gram @ nxt)

    def bundle(self, m: int) -> KrylovBundle:
        self.ensure(m + 1)
        C = np.stack(self.cols[: m + 1], axis=1)
        GC = np.stack(self.gcols[: m + 1], axis=1)
        Q = C.T @ GC
        Q = (Q + Q.T) / 2
        M_prime = Q[:m, :m].copy()
        # <R_i, S R_j> = <R_i, R_(j+1)>
        M = Q[:m, 1 : m + 1].copy()
        M = (M + M.T) / 2
        return KrylovBundle.from_matrices(m, C[:, :m], M, M_prime, self.ctx)


@dataclass
class KrylovBundle:
    m: int
    R: np.ndarray  # n x m coefficient matrix, column i is S^i T* y
    M: np.ndarray
    M_prime: np.ndarray
    norm_M_prime: float
    norm_M_inv: float
    singular: bool
    ctx: OperatorContext = field(repr=False)

    @classmethod
    def from_matrices(cls, m, R, M, M_prime, ctx) -> KrylovBundle:
        eig = np.linalg.eigvalsh(M)
        eig_p = np.linalg.eigvalsh(M_prime)
        norm_M_prime = float(max(abs(eig_p[0]), abs(eig_p[-1])))
        top = float(max(abs(eig[0]), abs(eig[-1])))
        singular = not (top > 0 and eig[0] > TAU_SING * top)
        norm_M_inv = math.inf if singular else float(1.0 / eig[0])
        return cls(m, R, M, M_prime, norm_M_prime, norm_M_inv, singular, ctx)

    @property
    def columns(self) -> list[RkhsElement]:
        return [self.ctx.element(self.R[:, i]) for i in range(self.m)]

    @property
    def condition(self) -> float:
        return self.norm_M_inv * float(np.max(np.abs(np.linalg.eigvalsh(self.M))))


def krylov_bundle(ctx: OperatorContext, target, m: int) -> KrylovBundle:
    if m < 1 or m > ctx.n:
        raise ParameterError(f"Krylov order must lie in 1..{ctx.n}, got {m}")
    return _KrylovColumns(ctx, target).bundle(m)


def build_krylov(dataset: Dataset, spec: KernelSpec, m: int,
                 ctx: Optional[OperatorContext] = None) -> KrylovBundle:
    if ctx is None:
        ctx = make_context(dataset, spec)
    return krylov_bundle(ctx, dataset.y, m)


def closed_form_g(bundle: KrylovBundle, dataset: Optional[Dataset] = None) -> RkhsElement:
    """``R M^-1 R* T* y`` via a diagonally equilibrated Cholesky solve."""
    if bundle.singular:
        raise SingularityError(f"M_{bundle.m} is numerically singular")
    rhs = bundle.M_prime[:, 0]  # <S^(i-1) T*y, T*y>
    scale = np.sqrt(np.diag(bundle.M))
    A = bundle.M / np.outer(scale, scale)
    try:
        z = linalg.cho_solve(linalg.cho_factor(A), rhs / scale)
    except linalg.LinAlgError as exc:
        raise SingularityError(f"M_{bundle.m} is not numerically positive definite") from exc
    w = z / scale
    return bundle.ctx.element(bundle.R @ w)


def complexity(bundle: KrylovBundle) -> float:
    """``m * (max(|M'|, 1/m) * |M^-1|)^2``; infinite when ``M`` is singular."""
    if bundle.singular:
        return math.inf
    m = bundle.m
    return m * (max(bundle.norm_M_prime, 1.0 / m) * bundle.norm_M_inv) ** 2


@dataclass(frozen=True)
class ComplexityRecord:
    m: int
    complexity_value: float
    singular: bool


@dataclass
class ComplexityReport:
    records: list[ComplexityRecord]
    threshold: float
    chosen_m: int

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "chosen_m": self.chosen_m,
            "records": [
                {
                    "m": r.m,
                    "complexity": None if math.isinf(r.complexity_value) else r.complexity_value,
                    "singular": r.singular,
                }
                for r in self.records
            ],
        }


@dataclass
class RuleTwoResult:
    chosen_m: int
    g: RkhsElement
    report: ComplexityReport


def complexity_path(ctx: OperatorContext, target, m_max: int, threshold: float = math.inf):
    """Complexity for ``m = 1, 2, ...`` up to ``m_max`` or the first value >= threshold."""
    cols = _KrylovColumns(ctx, target)
    records = []
    for m in range(1, min(m_max, ctx.n) + 1):
        b = cols.bundle(m)
        value = complexity(b)
        records.append(ComplexityRecord(m, value, b.singular))
        if value >= threshold:
            break
    return records


def stopping_rule_2(
    dataset: Dataset,
    spec: KernelSpec,
    nu: float = 0.25,
    m_max: Optional[int] = None,
    ctx: Optional[OperatorContext] = None,
) -> RuleTwoResult:
    """Stop before the first ``m`` whose complexity reaches ``n^nu``."""
    if not 0 < nu < 0.5:
        raise ParameterError(f"nu must lie in (0, 1/2), got {nu}")
    n = dataset.n
    if ctx is None:
        ctx = make_context(dataset, spec)
    if m_max is None:
        m_max = default_m_max(n)
    threshold = n**nu
    records = complexity_path(ctx, dataset.y, m_max, threshold)
    if records and records[-1].complexity_value >= threshold:
        chosen = records[-1].m - 1
    else:
        chosen = len(records)
    if chosen == 0:
        g = ctx.zero()
    else:
        trace = fit_cg(dataset, spec, m_max=chosen, ctx=ctx)
        chosen = min(chosen, trace.steps)
        g = trace.g_at(chosen)
    return RuleTwoResult(chosen, g, ComplexityReport(records, threshold, chosen))
