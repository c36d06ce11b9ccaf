import numpy as np
import pytest

from stochbal.budgeted import build_budgeted_lp, solve_budgeted
from stochbal.dist import DiscreteDist, effective_size, mean, truncate_split
from stochbal.evaluate import brute_force_optimum, exact_expected_makespan
from stochbal.instance import Instance, Job, gen_random
from stochbal.makespan import solve_makespan


def test_zero_target_allows_empty_schedule():
    inst = Instance(2, (Job("a", {0: DiscreteDist.point(5.0)}, 5.0),), reward_target=0.0)
    r = solve_budgeted(inst)
    assert r.passed
    assert r.assignment.placement == {}


def test_single_job_full_target():
    inst = Instance(1, (Job("a", {0: DiscreteDist.point(5.0)}, 5.0),), reward_target=5.0)
    r = solve_budgeted(inst)
    assert r.assignment.placement == {"a": 0}
    assert r.details["reward"] == 5.0 and r.passed


def test_heavy_pair_has_no_variable():
    inst = Instance(2, (Job("a", {0: DiscreteDist.point(3.0), 1: DiscreteDist.point(0.5)}),))
    lpd = build_budgeted_lp(inst, 17.0, 1.0)
    assert (0, 0) not in lpd.y and (1, 0) in lpd.y


def test_full_target_matches_makespan_guarantees():
    inst = gen_random(3, 5, 4)
    rb = solve_budgeted(inst)
    rm = solve_makespan(inst)
    assert len(rb.assignment.placement) == inst.n
    assert rb.passed and rm.passed
    assert rb.scale <= rm.scale * 1.02


@pytest.mark.parametrize("seed", range(6))
def test_random_rewarded(seed):
    inst = gen_random(2 + seed % 2, 5, seed, rewards=True)
    r = solve_budgeted(inst)
    assert r.passed, [c for c in r.checks if not c.passed]
    index = inst.job_index()
    reward = sum(inst.jobs[index[j]].reward for j in r.assignment.placement)
    assert reward >= inst.target
    M, classes = r.scale, r.details["classes"]
    cost = 0.0
    loads = np.zeros(inst.m)
    for jid, i in r.assignment.placement.items():
        tr, ex = truncate_split(inst.dist(i, index[jid]).scale(1 / M), 1.0)
        cost += mean(ex)
        loads[i] += effective_size(tr, classes[i])
    assert cost <= 4 + 1e-6
    assert loads.max(initial=0) <= 17 + 2 + 1e-6


def test_ratio_against_subset_brute_force():
    for seed in range(4):
        inst = gen_random(2, 4, 100 + seed, rewards=True)
        r = solve_budgeted(inst)
        _, opt = brute_force_optimum(inst, budgeted=True)
        got = exact_expected_makespan(inst, r.assignment).value
        if opt.value > 0:
            assert got / opt.value <= 4 * 17 + 10
