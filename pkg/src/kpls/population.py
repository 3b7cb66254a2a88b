"""Exact population quantities for finite discrete input distributions.

When ``P_X`` is supported on ``N`` grid points, every population operator is
an ``N x N`` matrix: population KPLS is CG run with the grid Gram matrix and
the probability masses as weights, and ``L2(P_X)`` is a weighted Euclidean
space. This turns the population statements about KPLS into finite checks.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cg import CgTrace, conjugate_gradient, make_context, predict
from .complexity import complexity_path, stopping_rule_2
from .data import ClipPolicy, Dataset, preprocess
from .errors import ConfigError, ParameterError, SizeError
from .kernels import KernelSpec, gram_matrix
from .monitor import epsilon_n, stopping_rule_1
from .rkhs import OperatorContext, RkhsElement

SEED_STRIDE = 7919
TAU_RANGE = 1e-12


def sin_bump(x: np.ndarray) -> np.ndarray:
    return 0.8 * np.sin(3.0 * x[:, 0]) * np.exp(-x[:, 0] ** 2)


FORMULAS = {"sin_bump": sin_bump}


@dataclass(frozen=True, eq=False)
class PopulationModel:
    """Discrete ``P_X`` on ``grid`` with masses ``weights`` and ``E[Y|X] = f_bar``.

    Responses are ``f_bar(X) + U`` with ``U`` uniform on
    ``[-half_width, half_width]`` (``half_width = 0`` means no noise).
    """

    grid: np.ndarray
    weights: np.ndarray
    f_bar: np.ndarray
    spec: KernelSpec
    half_width: float = 0.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        f_bar = np.asarray(self.f_bar, dtype=float).ravel()
        N = grid.shape[0]
        if weights.shape[0] != N or f_bar.shape[0] != N:
            raise SizeError(f"grid has {N} points, weights {weights.shape[0]}, f_bar {f_bar.shape[0]}")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights must be >= 0 and sum to 1 (sum = {weights.sum()!r})")
        if self.half_width < 0:
            raise ConfigError("noise half-width must be >= 0")
        if np.max(np.abs(f_bar)) + self.half_width > 1.0 + 1e-12:
            raise ConfigError("max|f_bar| + half_width exceeds 1")
        for a in (grid, weights, f_bar):
            a.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "f_bar", f_bar)

    @property
    def N(self) -> int:
        return self.grid.shape[0]

    @cached_property
    def gram(self) -> np.ndarray:
        return gram_matrix(self.spec, self.grid)

    @cached_property
    def ctx(self) -> OperatorContext:
        return OperatorContext(self.gram, self.weights)

    @property
    def f_centered(self) -> np.ndarray:
        """``f_bar`` minus its mean: the population analogue of centered responses."""
        return self.f_bar - self.weights @ self.f_bar

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (descending) and eigenfunction values of ``K f = G (w * f)``.

        Eigenfunctions are orthonormal in ``L2(P_X)``; only eigenvalues above
        ``TAU_RANGE`` times the largest are kept.
        """
        pos = self.weights > 0
        sw = np.sqrt(self.weights[pos])
        A = sw[:, None] * self.gram[np.ix_(pos, pos)] * sw[None, :]
        lam, V = np.linalg.eigh((A + A.T) / 2)
        order = np.argsort(lam)[::-1]
        lam, V = lam[order], V[:, order]
        keep = lam > TAU_RANGE * lam[0] if lam[0] > 0 else np.zeros_like(lam, dtype=bool)
        lam, V = lam[keep], V[:, keep]
        phi = np.empty((self.N, lam.shape[0]))
        phi[pos] = V / sw[:, None]
        if np.any(~pos):
            # extend to massless points through phi = K phi / lambda
            phi[~pos] = (self.gram[np.ix_(~pos, pos)] @ (sw[:, None] * V)) / lam[None, :]
        return lam, phi

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "weights": self.weights.tolist(),
            "f_bar": self.f_bar.tolist(),
            "kernel": self.spec.to_dict(),
            "noise": {"type": "bounded_uniform" if self.half_width > 0 else "none",
                      "half_width": self.half_width},
        }


def default_model() -> PopulationModel:
    """20 equispaced points on [-1, 1], uniform masses, gaussian kernel (sigma 0.5)."""
    grid = np.linspace(-1.0, 1.0, 20)[:, None]
    half_width = 0.1
    f = np.clip(sin_bump(grid), -(1.0 - half_width), 1.0 - half_width)
    return PopulationModel(grid, np.full(20, 1 / 20), f, KernelSpec.gaussian(0.5), half_width)


def random_model(rng: np.random.Generator, N: int = 20, sigma: Optional[float] = None) -> PopulationModel:
    """Random grid, masses and regression function for property checks."""
    grid = np.sort(rng.uniform(-1.0, 1.0, N))[:, None]
    weights = rng.dirichlet(np.ones(N))
    half_width = 0.1
    f = rng.uniform(-1.0, 1.0, N)
    f = f / np.max(np.abs(f)) * (1.0 - half_width)
    if sigma is None:
        sigma = float(rng.uniform(0.3, 1.0))
    return PopulationModel(grid, weights, f, KernelSpec.gaussian(sigma), half_width)


def load_population(source) -> PopulationModel:
    """Build a model from a JSON config (path or already-parsed dict).

    Keys: ``grid`` (list of points, or ``{"linspace": [a, b, N]}``),
    ``weights`` (list or ``"uniform"``), ``f_bar`` (list or
    ``{"formula": name}``), ``kernel`` (``{"family", "params"}``) and
    ``noise`` (``{"type": "none" | "bounded_uniform", "half_width"}``).
    """
    if isinstance(source, (str, Path)):
        try:
            cfg = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON ({exc})") from exc
    else:
        cfg = dict(source)
    try:
        g = cfg["grid"]
        if isinstance(g, dict):
            a, b, N = g["linspace"]
            grid = np.linspace(float(a), float(b), int(N))[:, None]
        else:
            grid = np.asarray(g, dtype=float)
            if grid.ndim == 1:
                grid = grid[:, None]
        N = grid.shape[0]
        w = cfg.get("weights", "uniform")
        weights = np.full(N, 1.0 / N) if w == "uniform" else np.asarray(w, dtype=float)
        noise = cfg.get("noise", {"type": "none"})
        half_width = float(noise.get("half_width", 0.0)) if noise.get("type") != "none" else 0.0
        f = cfg["f_bar"]
        if isinstance(f, dict):
            name = f["formula"]
            if name not in FORMULAS:
                raise ConfigError(f"unknown formula {name!r}; known: {sorted(FORMULAS)}")
            margin = float(f.get("margin", half_width))
            f_bar = np.clip(FORMULAS[name](grid), -(1.0 - margin), 1.0 - margin)
        else:
            f_bar = np.asarray(f, dtype=float)
        spec = KernelSpec.from_dict(cfg["kernel"])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid population config: {exc}") from exc
    return PopulationModel(grid, weights, f_bar, spec, half_width)


@dataclass
class PopulationTrace:
    trace: CgTrace
    f_values: list[np.ndarray]  # f_bar_m at the grid for m = 0 .. steps

    @property
    def g(self) -> list[RkhsElement]:
        return [it.g for it in self.trace.iterations]


def population_cg(pop: PopulationModel, m_max: Optional[int] = None, target=None) -> PopulationTrace:
    """Population KPLS iterates; ``target`` defaults to ``f_bar``."""
    if m_max is None:
        m_max = pop.N
    if m_max > pop.N:
        raise ParameterError(f"m_max={m_max} exceeds the number of support points {pop.N}")
    if target is None:
        target = pop.f_bar
    trace = conjugate_gradient(pop.ctx, target, m_max)
    return PopulationTrace(trace, [pop.gram @ it.g.coeffs for it in trace.iterations])


def projection(pop: PopulationModel, f=None) -> np.ndarray:
    """Projection onto the closure of the range of the kernel operator."""
    return pca_truncation(pop, None, f)


def pca_truncation(pop: PopulationModel, m: Optional[int], f=None) -> np.ndarray:
    """Projection of ``f`` onto the top ``m`` eigenfunctions (all if ``m`` is None)."""
    f = pop.f_bar if f is None else np.asarray(f, dtype=float)
    lam, phi = pop.spectrum
    if m is None:
        m = lam.shape[0]
    if m < 0 or m > pop.N:
        raise ParameterError(f"m must lie in 0..{pop.N}, got {m}")
    m = min(m, lam.shape[0])
    coef = phi[:, :m].T @ (pop.weights * f)
    return phi[:, :m] @ coef


def l2_error(pop: PopulationModel, f_values, g_values) -> float:
    f_values = np.asarray(f_values, dtype=float)
    g_values = np.asarray(g_values, dtype=float)
    if f_values.shape != (pop.N,) or g_values.shape != (pop.N,):
        raise SizeError(f"expected vectors of length {pop.N}")
    return float(np.sqrt(pop.weights @ (f_values - g_values) ** 2))


def sample(pop: PopulationModel, n: int, seed) -> Dataset:
    """Draw ``n`` observations and center the responses.

    Raw responses satisfy ``|Y| <= 1`` by the model invariant, but centering
    can double their range; the rescale policy shrinks them back when needed
    and leaves them untouched otherwise.
    """
    if n < 2:
        raise SizeError(f"need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(pop.N, size=n, p=pop.weights)
    y = pop.f_bar[idx]
    if pop.half_width > 0:
        y = y + rng.uniform(-pop.half_width, pop.half_width, n)
    ds = preprocess(pop.grid[idx], y, ClipPolicy.RESCALE)
    return Dataset(ds.X, ds.y, ds.y_mean, ds.y_scale, index=idx)


@dataclass(frozen=True)
class DominanceRow:
    m: int
    kpls_error: float
    pca_error: float
    violated: bool


def dominance_check(pop: PopulationModel, m_max: Optional[int] = None, target=None,
                   rtol: float = 1e-9) -> list[DominanceRow]:
    """Compare ``|P f - f_m|`` (population KPLS) with ``|P f - f~_m|`` (PCA).

    Rows cover ``m = 0`` up to ``m_max`` or the saturation of the population
    Krylov space, whichever comes first. A row is flagged when the KPLS error
    exceeds the PCA error by more than ``rtol * |P f|``.
    """
    f = pop.f_bar if target is None else np.asarray(target, dtype=float)
    if m_max is None:
        m_max = pop.N
    ptrace = population_cg(pop, min(m_max, pop.N), f)
    Pf = projection(pop, f)
    scale = math.sqrt(pop.weights @ Pf**2)
    rows = []
    for m, fm in enumerate(ptrace.f_values):
        e_cg = l2_error(pop, Pf, fm)
        e_pca = l2_error(pop, Pf, pca_truncation(pop, m, f))
        rows.append(DominanceRow(m, e_cg, e_pca, e_cg > e_pca + rtol * scale))
    return rows


# ---------------------------------------------------------------------------
# comparisons between an empirical fit and the population version


def to_grid(pop: PopulationModel, dataset: Dataset, g: RkhsElement) -> np.ndarray:
    """Coefficients of an empirical element re-expressed over the grid."""
    if dataset.index is None:
        raise ParameterError("dataset was not sampled from a population model")
    return np.bincount(dataset.index, weights=g.coeffs, minlength=pop.N)


def h_distance(pop: PopulationModel, dataset: Dataset, g: RkhsElement, g_bar: RkhsElement) -> float:
    """``|g - g_bar|`` in H_k for an empirical ``g`` and a population ``g_bar``."""
    diff = to_grid(pop, dataset, g) - g_bar.coeffs
    return float(np.sqrt(max(diff @ pop.gram @ diff, 0.0)))


def operator_deviation(pop: PopulationModel, dataset: Dataset) -> tuple[float, float]:
    """Exact ``(|S - S_bar|, |T* y - T_bar* f_c|)`` in H_k.

    Both perturbations live in the span of the grid sections, where the
    H_k geometry is that of ``K^(1/2)``.
    """
    if dataset.index is None:
        raise ParameterError("dataset was not sampled from a population model")
    n = dataset.n
    emp = np.bincount(dataset.index, minlength=pop.N) / n
    lam, V = np.linalg.eigh(pop.gram)
    half = (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T
    D = half @ ((emp - pop.weights)[:, None] * half)
    op_dev = float(np.max(np.abs(np.linalg.eigvalsh((D + D.T) / 2))))
    rhs = np.bincount(dataset.index, weights=dataset.y, minlength=pop.N) / n
    diff = rhs - pop.weights * pop.f_centered
    vec_dev = float(np.sqrt(max(diff @ pop.gram @ diff, 0.0)))
    return op_dev, vec_dev


def deviation_ratios(pop: PopulationModel, dataset: Dataset, ms: Sequence[int],
                  pop_trace: Optional[PopulationTrace] = None) -> dict[int, float]:
    """``|g_m - g_bar_m| / (m eps_n (max(|M'_m|, 1/m) |M_m^-1|)^2)`` per order.

    Orders beyond either CG trace, or with a singular ``M_m``, are skipped.
    """
    ctx = make_context(dataset, pop.spec)
    top = max(ms)
    if pop_trace is None:
        pop_trace = population_cg(pop, min(top, pop.N), pop.f_centered)
    trace = conjugate_gradient(ctx, dataset.y, top)
    path = complexity_path(ctx, dataset.y, min(top, trace.steps))
    eps = epsilon_n(dataset.n)
    out = {}
    for rec in path:
        m = rec.m
        if m not in ms or m > pop_trace.trace.steps or rec.singular:
            continue
        dist = h_distance(pop, dataset, trace.g_at(m), pop_trace.g[m])
        out[m] = dist / (eps * rec.complexity_value)
    return out


# ---------------------------------------------------------------------------
# learning curves


@dataclass(frozen=True)
class Rule:
    name: str  # "rule1" or "rule2"
    param: float = 0.25

    def __post_init__(self):
        if self.name not in ("rule1", "rule2"):
            raise ParameterError(f"unknown rule {self.name!r}")
        if not 0 < self.param < 0.5:
            raise ParameterError(f"{self.name} parameter must lie in (0, 1/2), got {self.param}")


@dataclass(frozen=True)
class RunRow:
    n: int
    rep: int
    seed: int
    chosen_m: int
    l2_error: float


@dataclass
class ExperimentResult:
    rule: Rule
    rows: list[RunRow]
    summary: list[tuple[int, float, float]] = field(default_factory=list)  # n, median m, median error

    def to_csv(self) -> str:
        lines = [f"# kpls-experiment v1 rule={self.rule.name} param={self.rule.param!r}",
                 "n,rep,seed,chosen_m,l2_error"]
        lines += [f"{r.n},{r.rep},{r.seed},{r.chosen_m},{r.l2_error!r}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        lines = ["n,median_chosen_m,median_l2_error"]
        lines += [f"{n},{mm!r},{me!r}" for n, mm, me in self.summary]
        return "\n".join(lines) + "\n"


def fit_with_rule(dataset: Dataset, spec: KernelSpec, rule: Rule, m_max: Optional[int] = None):
    """Return ``(chosen_m, g, ctx)`` for one stopping rule."""
    ctx = make_context(dataset, spec)
    if rule.name == "rule1":
        res = stopping_rule_1(dataset, spec, rule.param, m_max, ctx=ctx)
    else:
        res = stopping_rule_2(dataset, spec, rule.param, m_max, ctx=ctx)
    return res.chosen_m, res.g, ctx


def _one_run(args) -> RunRow:
    pop, rule, n, rep, seed, m_max = args
    ds = sample(pop, n, seed)
    chosen, g, ctx = fit_with_rule(ds, pop.spec, rule, m_max)
    fitted = predict(ds, pop.spec, g, pop.grid, ctx)
    return RunRow(n, rep, seed, chosen, l2_error(pop, pop.f_bar, fitted))


def consistency_experiment(
    pop: PopulationModel,
    rule: Rule,
    n_list: Sequence[int],
    reps: int,
    seed: int = 0,
    m_max: Optional[int] = None,
    workers: int = 1,
) -> ExperimentResult:
    """Stopped-estimator errors ``|f_bar - f^(n)|`` over repeated samples.

    Repetition ``r`` uses seed ``seed + r * SEED_STRIDE`` for every ``n``.
    """
    if reps < 1 or not n_list:
        raise ParameterError("need reps >= 1 and a non-empty n_list")
    jobs = [(pop, rule, int(n), r, seed + r * SEED_STRIDE, m_max) for n in n_list for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_one_run, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_one_run(j) for j in jobs]
    summary = []
    for n in n_list:
        sel = [r for r in rows if r.n == int(n)]
        summary.append((
            int(n),
            float(np.median([r.chosen_m for r in sel])),
            float(np.median([r.l2_error for r in sel])),
        ))
    return ExperimentResult(rule, rows, summary)
