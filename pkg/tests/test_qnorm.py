import itertools
import math

import numpy as np
import pytest

from stochbal.dist import DiscreteDist
from stochbal.evaluate import brute_force_optimum, exact_expected_makespan
from stochbal.instance import Instance, Job, gen_random
from stochbal.makespan import solve_makespan
from stochbal.qnorm import (
    CpInfeasible,
    bell_number,
    explicit_ratio,
    reduce_to_qdetsched,
    rosenthal_constant,
    round_qdetsched,
    solve_qdetsched_cp,
    solve_qnorm,
)


def test_reduction_example():
    d = DiscreteDist([0.5, 3.0], [0.5, 0.5])
    qi = reduce_to_qdetsched(Instance(1, (Job("a", {0: d}),)), 1.0, 2)
    assert qi.p[0, 0] == pytest.approx(0.25)
    assert qi.c[0, 0] == pytest.approx(1.5)
    assert qi.d[0, 0] == pytest.approx(0.125)
    assert (qi.C, qi.D) == (2.0, 16.0)


def test_zero_jobs_reduce_to_zero():
    z = DiscreteDist.point(0.0)
    qi = reduce_to_qdetsched(Instance(2, (Job("a", {0: z, 1: z}),)), 1.0, 3)
    assert not qi.p.any() and not qi.c.any() and not qi.d.any()


def test_single_job_cp():
    d = DiscreteDist.point(0.5)
    qi = reduce_to_qdetsched(Instance(1, (Job("a", {0: d}),)), 1.0, 2)
    cp = solve_qdetsched_cp(qi)
    assert cp.x[0, 0] == pytest.approx(1.0)
    assert cp.value == pytest.approx(0.25 + 0.25)


def grid_minimum(qi, steps=40):
    """Brute-force minimum of the convex objective over a grid of the simplex product."""
    m, n = qi.shape
    per_job = []
    for j in range(n):
        machines = [i for i in range(m) if qi.allowed[i, j]]
        options = []
        for w in itertools.product(range(steps + 1), repeat=len(machines) - 1):
            if sum(w) <= steps:
                frac = [k / steps for k in w] + [1 - sum(w) / steps]
                options.append(dict(zip(machines, frac)))
        per_job.append(options)
    best = math.inf
    for combo in itertools.product(*per_job):
        x = np.zeros((m, n))
        for j, opt in enumerate(combo):
            for i, v in opt.items():
                x[i, j] = v
        if (qi.c * x).sum() > qi.C + 1e-12 or (qi.d * x).sum() > qi.D + 1e-12:
            continue
        loads = (qi.p * x).sum(axis=1)
        best = min(best, float((loads**qi.q).sum() + (qi.p**qi.q * x).sum()))
    return best


def test_cp_two_identical_machines_matches_grid():
    d = DiscreteDist([0.0, 0.8], [0.5, 0.5])
    inst = Instance(2, (Job("a", {0: d, 1: d}), Job("b", {0: d, 1: d})))
    qi = reduce_to_qdetsched(inst, 1.0, 2)
    cp = solve_qdetsched_cp(qi, 1e-6)
    assert cp.value == pytest.approx(grid_minimum(qi), rel=1e-3)
    assert cp.value == pytest.approx(2 * 0.4**2 + 2 * 0.4**2, rel=1e-5)


@pytest.mark.parametrize("seed", range(4))
def test_cp_random_matches_grid(seed):
    inst = gen_random(2, 3, seed, family="two-point")
    qi = reduce_to_qdetsched(inst, 1.5, 2)
    try:
        cp = solve_qdetsched_cp(qi, 1e-4)
    except CpInfeasible:
        return
    ref = grid_minimum(qi, steps=20)
    # the grid is coarse, so it can only be above the true minimum
    assert cp.value <= ref * (1 + 1e-4) + 1e-12
    assert cp.value >= (cp.value - cp.gap) and cp.relative_gap <= 1e-4
    assert all(b <= a + 1e-12 for a, b in zip(cp.history, cp.history[1:]))


def test_cp_infeasible_budget():
    d = DiscreteDist.point(10.0)
    qi = reduce_to_qdetsched(Instance(1, (Job("a", {0: d}),)), 1.0, 2)
    with pytest.raises(CpInfeasible):
        solve_qdetsched_cp(qi)


def test_integral_cp_rounds_to_itself():
    d = DiscreteDist.point(1.0)
    inst = Instance(2, (Job("a", {0: d}), Job("b", {1: d})))
    qi = reduce_to_qdetsched(inst, 2.0, 2)
    cp = solve_qdetsched_cp(qi)
    rnd = round_qdetsched(qi, cp)
    assert rnd.machine_of == {0: 0, 1: 1}
    assert all(c.passed for c in rnd.checks)


def test_bell_and_rosenthal():
    assert [bell_number(k) for k in range(7)] == [1, 1, 2, 5, 15, 52, 203]
    assert rosenthal_constant(1) == 1.0
    assert rosenthal_constant(2) == math.sqrt(2)
    assert rosenthal_constant(3) == 5 ** (1 / 3)
    with pytest.raises(ValueError):
        rosenthal_constant(2.5)


def test_explicit_ratio():
    assert explicit_ratio(2) == pytest.approx(6 + 8 * math.sqrt(2))
    assert explicit_ratio(3) == pytest.approx(14.04, abs=0.01)
    assert explicit_ratio(2, 0.1) == pytest.approx(1.1 * explicit_ratio(2))
    vals = [explicit_ratio(q) for q in range(2, 7)]
    # decreasing through q = 5, then a small rise at q = 6
    assert all(b < a for a, b in zip(vals[:4], vals[1:4]))
    assert vals[4] > vals[3]


def test_q1_matches_min_expectation():
    d1, d2 = DiscreteDist([0.0, 2.0], [0.5, 0.5]), DiscreteDist.point(0.5)
    inst = Instance(1, (Job("a", {0: d1}), Job("b", {0: d2})))
    r = solve_qnorm(inst, 1)
    assert r.evaluation.value == pytest.approx(1.5)


def test_unit_jobs_q2_balanced():
    d = DiscreteDist.point(1.0)
    inst = Instance(2, tuple(Job(f"u{j}", {0: d, 1: d}) for j in range(4)))
    r = solve_qnorm(inst, 2)
    assert r.evaluation.value == pytest.approx(math.sqrt(2 * 2**2))
    assert r.passed


@pytest.mark.parametrize("seed", range(5))
def test_random_q2_postconditions(seed):
    inst = gen_random(2 + seed % 2, 4, seed)
    r = solve_qnorm(inst, 2)
    assert r.passed, [c for c in r.checks if not c.passed]
    _, opt = brute_force_optimum(inst, "qnorm", 2)
    assert r.evaluation.value / opt.value <= explicit_ratio(2, 0.01)


def test_large_q_close_to_makespan_solver():
    d = DiscreteDist.bernoulli(0.5, 1.0)
    inst = Instance(4, tuple(Job(f"j{k}", {i: d for i in range(4)}) for k in range(8)))
    rq = solve_qnorm(inst, 2 * math.ceil(math.log(4)))
    rm = solve_makespan(inst)
    assert exact_expected_makespan(inst, rq.assignment).value <= 3 * rm.evaluation.value
