"""Error monitoring for the CG iterates and the first stopping rule.

The monitor propagates an observable upper bound ``delta_g`` on the distance
between the empirical iterate ``g_m`` and its population counterpart. The
only input that is not observed is the size ``eps`` of the perturbation of
``S`` and ``T* y``; by default it is the high-probability level
``epsilon_n(n) = 4 sqrt(log(n) / n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .cg import CgIteration, CgTrace, default_m_max, fit_cg
from .data import Dataset
from .errors import ParameterError, UndefinedBound
from .kernels import KernelSpec
from .rkhs import OperatorContext, RkhsElement


def zeta(x: float, dx: float) -> float:
    """Bound on the error of ``1/x`` when ``x`` is known up to ``dx``."""
    if not (x > dx >= 0):
        raise UndefinedBound(f"zeta needs x > dx >= 0, got x={x!r}, dx={dx!r}")
    return dx / (x * (x - dx))


def _check_nonneg(*args: float) -> None:
    for a in args:
        if not a >= 0:
            raise ParameterError(f"error-control arguments must be >= 0, got {a!r}")


def xi(x: float, y: float, dx: float, dy: float) -> float:
    """Bound on the error of a product ``x * y``."""
    _check_nonneg(x, y, dx, dy)
    return x * dy + y * dx + dx * dy


def xi_prime(x: float, y: float, dx: float, dy: float) -> float:
    """As :func:`xi` without the second-order term.

    Valid when ``x`` is the norm of the *perturbed* first factor, since
    ``AB - CD = (A - C) B + C (B - D)``.
    """
    _check_nonneg(x, y, dx, dy)
    return x * dy + y * dx


def epsilon_n(n: int) -> float:
    if n < 2:
        raise ParameterError(f"epsilon_n needs n >= 2, got {n}")
    return 4.0 * math.sqrt(math.log(n) / n)


@dataclass(frozen=True)
class MonitorState:
    """Error bounds entering step ``m``.

    ``delta_g``, ``delta_u``, ``delta_d`` bound the errors of ``g_m``, ``u_m``,
    ``d_m`` and ``eps4`` that of ``|u_m|^2``. The remaining fields hold the
    intermediate quantities of the step that produced this state.
    """

    m: int
    delta_g: float
    delta_u: float
    delta_d: float
    eps4: float
    eps_n: float
    delta_alpha: float = 0.0
    delta_beta: float = 0.0
    eps1: float = 0.0
    eps2: float = 0.0
    eps3: float = 0.0
    eps5: float = 0.0
    defined: bool = True

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in self.__dict__.items()}


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def monitor_init(u0_norm: float, eps: float) -> MonitorState:
    return MonitorState(
        m=0,
        delta_g=0.0,
        delta_u=eps,
        delta_d=eps,
        eps4=xi(u0_norm, u0_norm, eps, eps),
        eps_n=eps,
    )


def monitor_step(prev: MonitorState, it: CgIteration) -> MonitorState:
    """Advance the bounds across the CG step recorded in ``it``.

    Returns a state with ``defined=False`` when one of the inverse bounds is
    undefined; the caller treats this as an exit.
    """
    if not prev.defined:
        raise ParameterError("cannot advance an undefined monitor state")
    if it.alpha is None or it.m != prev.m:
        raise ParameterError(f"iteration record {it.m} does not match monitor step {prev.m}")
    eps = prev.eps_n
    d_norm = math.sqrt(max(it.d_norm2, 0.0))
    u_norm2 = it.u_norm2
    u_next_norm2 = it.u_next_norm2
    u_next_norm = math.sqrt(max(u_next_norm2, 0.0))
    inf = math.inf

    eps1 = xi_prime(d_norm, 1.0, prev.delta_d, eps)
    eps2 = xi(d_norm, d_norm, prev.delta_d, eps1)
    try:
        eps3 = zeta(it.d_S_d, eps2)
    except UndefinedBound:
        return MonitorState(prev.m + 1, inf, inf, inf, inf, eps, inf, inf, eps1, eps2, inf, inf, False)
    delta_alpha = xi(u_norm2, 1.0 / it.d_S_d, prev.eps4, eps3)
    delta_g = prev.delta_g + xi(it.alpha, d_norm, delta_alpha, prev.delta_d)
    delta_u = prev.delta_u + xi(it.alpha, d_norm, delta_alpha, eps1)
    try:
        eps5 = zeta(u_norm2, prev.eps4)
    except UndefinedBound:
        return MonitorState(prev.m + 1, delta_g, delta_u, inf, inf, eps, delta_alpha, inf,
                            eps1, eps2, eps3, inf, False)
    eps4_next = xi(u_next_norm, u_next_norm, delta_u, delta_u)
    # (|u_m|^2)^-1 is the factor whose error eps5 bounds
    delta_beta = xi(u_next_norm2, 1.0 / u_norm2, eps4_next, eps5)
    delta_d = prev.delta_d + xi(it.beta, d_norm, delta_beta, prev.delta_d)
    return MonitorState(
        m=prev.m + 1,
        delta_g=delta_g,
        delta_u=delta_u,
        delta_d=delta_d,
        eps4=eps4_next,
        eps_n=eps,
        delta_alpha=delta_alpha,
        delta_beta=delta_beta,
        eps1=eps1,
        eps2=eps2,
        eps3=eps3,
        eps5=eps5,
    )


def monitor_trace(trace: CgTrace, eps: float) -> list[MonitorState]:
    """Run the monitor over a finished trace until it becomes undefined."""
    states = [monitor_init(math.sqrt(max(trace.iterations[0].u_norm2, 0.0)), eps)]
    for it in trace.iterations:
        if it.alpha is None or not states[-1].defined:
            break
        states.append(monitor_step(states[-1], it))
    return states


@dataclass
class RuleOneResult:
    chosen_m: int
    g: RkhsElement
    trace: CgTrace
    monitor: list[MonitorState]
    threshold: float
    eps: float

    @property
    def delta_g(self) -> list[float]:
        return [s.delta_g for s in self.monitor]


def stopping_rule_1(
    dataset: Dataset,
    spec: KernelSpec,
    gamma: float = 0.25,
    m_max: Optional[int] = None,
    eps: Optional[float] = None,
    ctx: Optional[OperatorContext] = None,
) -> RuleOneResult:
    """Stop before the first step whose bound ``delta_g`` exceeds ``n^-gamma``.

    The estimate returned is the one preceding the first step at which either
    the monitor becomes undefined, ``delta_g > n^-gamma``, or CG exits.
    ``eps`` overrides ``epsilon_n(n)``.
    """
    if not 0 < gamma < 0.5:
        raise ParameterError(f"gamma must lie in (0, 1/2), got {gamma}")
    n = dataset.n
    if eps is None:
        eps = epsilon_n(n)
    if eps < 0:
        raise ParameterError(f"eps must be >= 0, got {eps}")
    if m_max is None:
        m_max = default_m_max(n)
    threshold = n ** (-gamma)

    states: list[MonitorState] = []
    stop_at: list[int] = []

    def hook(it: CgIteration) -> bool:
        if not states:
            states.append(monitor_init(math.sqrt(max(it.u_norm2, 0.0)), eps))
        nxt = monitor_step(states[-1], it)
        states.append(nxt)
        if not nxt.defined or nxt.delta_g > threshold:
            stop_at.append(it.m)
            return True
        return False

    trace = fit_cg(dataset, spec, m_max=m_max, hooks=hook, ctx=ctx)
    if not states:
        states.append(monitor_init(math.sqrt(max(trace.iterations[0].u_norm2, 0.0)), eps))
    chosen = stop_at[0] if stop_at else trace.steps
    return RuleOneResult(chosen, trace.g_at(chosen), trace, states, threshold, eps)

