"""Monitor soundness with the perturbation level measured exactly.

The default level ``epsilon_n`` is so conservative at desk-scale ``n`` that
the first stopping rule never takes a step. Feeding the monitor the exact
operator deviations from the population oracle exercises the bound at
non-trivial orders (from n = 400 on; at n = 100 even the exact level
leaves the first step undefined).
"""

import numpy as np
import pytest

from kpls.cg import fit_cg
from kpls.monitor import monitor_trace
from kpls.population import default_model, h_distance, operator_deviation, population_cg, sample


@pytest.mark.parametrize("n", [400, 1600])
def test_bound_holds_with_exact_deviation(n):
    pop = default_model()
    ptrace = population_cg(pop, target=pop.f_centered)
    g_bar = ptrace.g
    checked = 0
    for rep in range(40):
        ds = sample(pop, n, seed=rep)
        eps = max(operator_deviation(pop, ds))
        tr = fit_cg(ds, pop.spec, m_max=ptrace.trace.steps)
        for s in monitor_trace(tr, eps):
            if not s.defined:
                break
            dist = h_distance(pop, ds, tr.g_at(s.m), g_bar[s.m])
            assert dist <= s.delta_g
            checked += s.m > 0
    assert checked > 0
