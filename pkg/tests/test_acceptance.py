"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from kpls.cg import ExitReason, fit_cg, make_context
from kpls.complexity import closed_form_g, complexity_path, krylov_bundle
from kpls.errors import SingularityError
from kpls.monitor import stopping_rule_1, xi, xi_prime, zeta
from kpls.population import (
    Rule,
    consistency_experiment,
    default_model,
    h_distance,
    deviation_ratios,
    population_cg,
    random_model,
    sample,
    dominance_check,
)
from kpls.rkhs import apply_S, h_inner, h_norm

from conftest import ACCEPTANCE_LINES, random_dataset

pytestmark = pytest.mark.slow


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def structural_datasets():
    rng = np.random.default_rng(20240601)
    sizes = [10, 50, 200]
    return [random_dataset(rng, sizes[i % 3]) for i in range(50)]


# ---------------------------------------------------------------------------


def test_criterion_1_cg_structure(structural_datasets):
    t0 = time.perf_counter()
    worst_orth = worst_conj = 0.0
    ls_ok = True
    for ds, spec in structural_datasets:
        tr = fit_cg(ds, spec)
        ctx = tr.ctx
        its = tr.iterations
        if tr.exit_reason is ExitReason.EXACT_FIT:
            # the final residual is numerically zero and has no direction
            its = its[:-1]
        U = np.stack([it.u.coeffs for it in its], axis=1)
        Gu = U.T @ ctx.gram @ U
        nu = np.sqrt(np.diag(Gu))
        C = np.abs(Gu) / np.outer(nu, nu)
        np.fill_diagonal(C, 0.0)
        worst_orth = max(worst_orth, C.max(initial=0.0))
        steps = its[:-1]
        if len(steps) > 1:
            D = np.stack([it.d.coeffs for it in steps], axis=1)
            SD = ctx.weights[:, None] * (ctx.gram @ D)
            Q = D.T @ ctx.gram @ SD
            dsd = np.sqrt(np.diag(Q))
            R = np.abs(Q) / np.outer(dsd, dsd)
            np.fill_diagonal(R, 0.0)
            worst_conj = max(worst_conj, R.max())
        ls_ok &= bool(np.all(np.diff(tr.ls_errors()) <= 0.0))
    elapsed = time.perf_counter() - t0
    ok = worst_orth <= 1e-8 and worst_conj <= 1e-8 and ls_ok and elapsed < 30
    report(1, ok, f"max |cos(u_j,u_k)|={worst_orth:.2e}, max S-conjugacy={worst_conj:.2e}, "
                  f"ls_error monotone={ls_ok}, {elapsed:.1f}s")


def test_criterion_2_krylov_optimality(structural_datasets):
    rng = np.random.default_rng(2)
    worst = -math.inf
    for ds, spec in structural_datasets:
        tr = fit_cg(ds, spec, m_max=8)
        G, w, y = tr.ctx.gram, tr.ctx.weights, ds.y
        for m in range(1, tr.steps + 1):
            basis = np.stack([it.d.coeffs for it in tr.iterations[:m]], axis=1)
            base = tr.iterations[m].ls_error
            a_m = tr.g_at(m).coeffs
            for k in range(100):
                c = rng.normal(size=m)
                # half global draws, half local perturbations of the iterate
                if k % 2:
                    c *= 10.0 ** rng.uniform(-6, 0)
                    a = a_m + basis @ c * (np.linalg.norm(a_m) / max(np.linalg.norm(basis @ c), 1e-300))
                else:
                    a = basis @ c
                ls = float(w @ (y - G @ a) ** 2)
                worst = max(worst, base - ls)
    ok = worst <= 1e-10
    report(2, ok, f"max (ls_error(g_m) - ls_error(competitor)) = {worst:.2e} over m<=8")


def test_criterion_3_closed_form(structural_datasets):
    worst, compared, skipped = 0.0, 0, 0
    for ds, spec in structural_datasets:
        ctx = make_context(ds, spec)
        tr = fit_cg(ds, spec, m_max=8, ctx=ctx)
        for m in range(1, tr.steps + 1):
            b = krylov_bundle(ctx, ds.y, m)
            if b.singular or b.condition > 1e10:
                skipped += 1
                continue
            g_cg = tr.g_at(m)
            diff = h_norm(ctx, closed_form_g(b) - g_cg) / (1.0 + h_norm(ctx, g_cg))
            worst = max(worst, diff)
            compared += 1
    # constructed degeneracy: duplicated points collapse the Krylov rank
    from kpls.data import preprocess
    from kpls.kernels import KernelSpec

    dup = preprocess(np.repeat([[0.0], [1.0]], 3, axis=0), np.repeat([0.0, 1.0], 3))
    spec = KernelSpec.gaussian(1.0)
    try:
        closed_form_g(krylov_bundle(make_context(dup, spec), dup.y, 3))
        routed = False
    except SingularityError:
        routed = True
    ok = worst <= 1e-6 and compared > 0 and routed
    report(3, ok, f"max rel H_k gap={worst:.2e} over {compared} iterates "
                  f"({skipped} ill-conditioned skipped), singular case raises={routed}")


def test_criterion_4_kpls_dominates_pca():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    violations, rows = 0, 0
    for _ in range(10):
        pop = random_model(rng, N=20)
        res = dominance_check(pop, rtol=1e-9)
        violations += sum(r.violated for r in res)
        rows += len(res)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 10
    report(4, ok, f"{violations} violations over {rows} (model, m) pairs, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# monitor soundness and the deviation ratio share one set of oracle samples


@pytest.fixture(scope="module")
def oracle_runs():
    pop = default_model()
    ptrace = population_cg(pop, target=pop.f_centered)
    runs = {}
    t0 = time.perf_counter()
    for n in (100, 400, 1600):
        out = []
        for rep in range(200):
            ds = sample(pop, n, seed=10_000 * n + rep)
            res = stopping_rule_1(ds, pop.spec, 0.25)
            out.append((ds, res))
        runs[n] = out
    return pop, ptrace, runs, time.perf_counter() - t0


def test_criterion_5_monitor_soundness(oracle_runs):
    pop, ptrace, runs, elapsed = oracle_runs
    g_bar = ptrace.g
    parts, ok = [], elapsed < 300
    for n in (100, 400):
        good, chosen = 0, []
        for ds, res in runs[n]:
            holds = all(
                h_distance(pop, ds, res.trace.g_at(m), g_bar[min(m, len(g_bar) - 1)])
                <= res.monitor[m].delta_g
                for m in range(res.chosen_m + 1)
            )
            good += holds
            chosen.append(res.chosen_m)
        frac = good / len(runs[n])
        ok &= frac >= 0.95
        parts.append(f"n={n}: {frac:.1%} of runs sound (chosen m: max {max(chosen)})")
    degenerate = all(res.chosen_m == 0 for n in (100, 400) for _, res in runs[n])
    note = "; degenerate: rule 1 stops at m=0 in every run" if degenerate else ""
    report(5, ok, "; ".join(parts) + f"{note}; {elapsed:.1f}s")


def test_criterion_6_zero_perturbation():
    rng = np.random.default_rng(6)
    fields = ("delta_g", "delta_u", "delta_d", "eps4", "delta_alpha", "delta_beta",
              "eps1", "eps2", "eps3", "eps5")
    ok, checked = True, 0
    for _ in range(10):
        ds, spec = random_dataset(rng, 50, sigma=1.0)
        m_max = 4
        res = stopping_rule_1(ds, spec, 0.25, m_max=m_max, eps=0.0)
        if res.trace.exit_reason is not ExitReason.MAX_ITER:
            continue
        checked += 1
        ok &= res.chosen_m == m_max
        ok &= all(s.defined and getattr(s, f) == 0.0 for s in res.monitor for f in fields)
    ok &= checked >= 5
    report(6, ok, f"eps=0: all deltas exactly 0 and chosen_m = m_max on {checked} datasets")


def _spd(rng, k=5):
    Q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    return (Q * rng.uniform(0.2, 3.0, k)) @ Q.T


def _sym(rng, k=5):
    E = rng.normal(size=(k, k))
    return (E + E.T) / 2


def test_criterion_7_perturbation_inequalities():
    rng = np.random.default_rng(7)
    norm = lambda A: np.linalg.norm(A, 2)  # noqa: E731
    v_zeta = v_xi = v_xip = 0
    for _ in range(500):
        A = _spd(rng)
        lam_min = 1.0 / norm(np.linalg.inv(A))
        E = _sym(rng)
        B = A + E * (rng.uniform(0, 0.99) * lam_min / norm(E))
        delta = norm(A - B) * (1 + 1e-12)
        v_zeta += norm(np.linalg.inv(A) - np.linalg.inv(B)) > zeta(lam_min, delta) * (1 + 1e-10)
    for _ in range(500):
        A, Bp = _spd(rng), _spd(rng)
        C = A + _sym(rng) * rng.uniform(0, 0.5)
        Bpp = Bp + _sym(rng) * rng.uniform(0, 0.5)
        d1, d2 = norm(A - C), norm(Bp - Bpp)
        lhs = norm(A @ Bp - C @ Bpp)
        v_xi += lhs > xi(norm(A), norm(Bp), d1, d2) * (1 + 1e-12)
        v_xip += lhs > xi_prime(norm(C), norm(Bp), d1, d2) * (1 + 1e-12)
    ok = v_zeta == v_xi == v_xip == 0
    report(7, ok, f"violations over 500 trials each: zeta={v_zeta}, xi={v_xi}, xi'={v_xip}")


# ---------------------------------------------------------------------------


N_LIST = (100, 400, 1600)
MASTER_SEED = 8


@pytest.fixture(scope="module")
def experiments():
    pop = default_model()
    t0 = time.perf_counter()
    out = {name: consistency_experiment(pop, Rule(name, 0.25), N_LIST, 50, seed=MASTER_SEED)
           for name in ("rule1", "rule2")}
    return out, time.perf_counter() - t0


def test_criterion_8_consistency_trend(experiments):
    results, elapsed = experiments
    ok, parts = elapsed < 600, []
    all_zero = True
    for name, res in results.items():
        meds = [s[2] for s in res.summary]
        ms = [s[1] for s in res.summary]
        ok &= all(a > b for a, b in zip(meds, meds[1:]))
        ok &= all(a <= b for a, b in zip(ms, ms[1:]))
        all_zero &= all(r.chosen_m == 0 for r in res.rows)
        parts.append(f"{name}: median error {' > '.join(f'{e:.5f}' for e in meds)}, "
                     f"median m {ms}")
    note = "; degenerate: chosen m=0 in every run, trend comes from the mean estimate" if all_zero else ""
    report(8, ok, "; ".join(parts) + f"{note}; {elapsed:.1f}s")


def test_criterion_9_deviation_ratio(oracle_runs):
    pop, ptrace, runs, _ = oracle_runs
    # the stopped orders are all 0, so the ratio is taken at the orders the
    # population Krylov space supports
    ms = list(range(1, ptrace.trace.steps + 1))
    maxima = {}
    for n in (100, 1600):
        vals = [r for ds, _ in runs[n] for r in deviation_ratios(pop, ds, ms, ptrace).values()]
        maxima[n] = max(vals) if vals else math.nan
    ok = all(math.isfinite(v) for v in maxima.values()) and maxima[1600] <= 3 * maxima[100]
    report(9, ok, f"m in {ms}: max ratio n=100 {maxima[100]:.3e}, n=1600 {maxima[1600]:.3e} "
                  f"(factor {maxima[1600] / maxima[100]:.2f}, limit 3)")


def test_criterion_10_determinism(experiments):
    results, _ = experiments
    pop = default_model()
    same = all(
        consistency_experiment(pop, Rule(name, 0.25), N_LIST, 50, seed=MASTER_SEED).to_csv()
        == res.to_csv()
        for name, res in results.items()
    )
    report(10, same, "identical CSVs from two runs with the same master seed" if same
           else "CSVs differ between runs")
