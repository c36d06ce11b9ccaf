import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochbal.instance import gen_budgeted_gap
from stochbal.rounding import (
    MatchingError,
    build_st_graph,
    decompose,
    min_cost_matching,
    round_budgeted,
    round_gap,
    solve_aux_lp,
    st_graph_from_edges,
)


def random_fractional(rng, m, n):
    y = rng.random((m, n)) * (rng.random((m, n)) < 0.7)
    y[rng.integers(m), :] += 1e-3
    return y / y.sum(axis=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 7), st.integers(0, 10**6))
def test_st_graph_invariants(m, n, seed):
    rng = np.random.default_rng(seed)
    y = random_fractional(rng, m, n)
    p = rng.uniform(0, 1, (m, n))
    c = rng.uniform(0, 2, (m, n))
    g = build_st_graph(y, p, c)
    assert np.all(g.copy_fill() <= 1 + 1e-9)
    assert np.allclose(g.job_fraction(), 1.0)
    assert g.fractional_cost() == pytest.approx(float((y * c).sum()))
    for i in range(m):
        assert g.t[i] == math.ceil(y[i].sum() - 1e-7)
        # copies are filled in nonincreasing p order
        groups = g.groups(i)
        for a, b in zip(groups, groups[1:]):
            assert min(p[i, j] for j in a) >= max(p[i, j] for j in b) - 1e-12

    sol = round_gap(g)
    assert sorted(sol.machine_of) == list(range(n))
    assert sol.cost <= g.fractional_cost() + 1e-9
    loads = sol.loads(p)
    for i in range(m):
        pmax = max((p[i, j] for j in range(n) if y[i, j] > 1e-9), default=0.0)
        assert loads[i] <= (p[i] * y[i]).sum() + pmax + 1e-9
    for j, i in sol.machine_of.items():
        assert y[i, j] > 0


def test_integral_input_is_kept():
    y = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    sol = round_gap(build_st_graph(y, np.ones_like(y), np.zeros_like(y)))
    assert sol.machine_of == {0: 0, 1: 1, 2: 0}


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10**6))
def test_matching_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    right = n + int(rng.integers(0, 3))
    cost = rng.uniform(0, 10, (n, right))
    mask = rng.random((n, right)) < 0.8
    edges = [(u, v, float(cost[u, v])) for u in range(n) for v in range(right) if mask[u, v]]
    best = math.inf
    for perm in itertools.permutations(range(right), n):
        if all(mask[u, perm[u]] for u in range(n)):
            best = min(best, sum(cost[u, perm[u]] for u in range(n)))
    if math.isinf(best):
        with pytest.raises(MatchingError):
            min_cost_matching(n, right, edges)
    else:
        got = min_cost_matching(n, right, edges)
        assert sum(cost[u, v] for u, v in got.items()) == pytest.approx(best)
        assert len(set(got.values())) == n


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_budgeted_gap_fixture(n):
    f = gen_budgeted_gap(n)
    g = st_graph_from_edges(f.m, f.n, list(f.edges))
    lp_sol = solve_aux_lp(g, f.rewards, f.target)
    assert lp_sol.objective <= f.m + f.eps * f.m * f.n
    out = round_budgeted(g, f.rewards, f.target)
    assert out.reward >= f.target
    assert out.cost <= lp_sol.objective + n
    assert sum(1 for _ in [out.double_copy] if _ is not None) <= 1


def test_decompose_splits_alternating_path():
    f = gen_budgeted_gap(4)
    g = st_graph_from_edges(f.m, f.n, list(f.edges))
    z = solve_aux_lp(g, f.rewards, f.target).x
    m1, m2, is_cycle, lam = decompose(g, z)
    assert not is_cycle and 0 < lam < 1
    for ms in (m1, m2):
        jobs = [g.edges[k].job for k in ms]
        copies = [g.edges[k].copy for k in ms]
        assert len(set(jobs)) == len(jobs) and len(set(copies)) == len(copies)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(2, 6), st.integers(0, 10**6))
def test_budgeted_rounding_guarantees(m, n, seed):
    rng = np.random.default_rng(seed)
    edges = [(i, j, float(rng.integers(0, 5))) for i in range(m) for j in range(n) if rng.random() < 0.6]
    if not edges:
        return
    rewards = rng.integers(1, 6, n).astype(float)
    reachable = sorted({j for _, j, _ in edges})
    # target at most what some matching could reach
    top = sorted((rewards[j] for j in reachable), reverse=True)[:m]
    target = float(rng.uniform(0.3, 1.0) * sum(top))
    g = st_graph_from_edges(m, n, edges)
    lp_sol = solve_aux_lp(g, rewards, target)
    if not lp_sol.optimal:
        return
    out = round_budgeted(g, rewards, target)
    cmax = max(c for _, _, c in edges)
    assert out.reward >= target
    assert out.cost <= lp_sol.objective + cmax + 1e-6
    per_copy = {}
    for j, c in out.pairs:
        per_copy[c] = per_copy.get(c, 0) + 1
    assert sum(1 for v in per_copy.values() if v > 1) <= 1
    assert max(per_copy.values(), default=0) <= 2
    assert len({j for j, _ in out.pairs}) == len(out.pairs)
