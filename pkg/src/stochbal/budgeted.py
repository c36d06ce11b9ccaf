"""Budgeted variant: schedule a subset of jobs whose total reward reaches a target.

Same scaled LP as the makespan solver except that a job may stay unassigned,
a reward row is added, and pairs with exceptional mean above the cost budget
are removed.  Rounding goes through the budgeted GAP on the copy graph.
"""
from __future__ import annotations

import numpy as np

from . import lp
from .evaluate import evaluate
from .instance import Assignment, Instance
from .makespan import (
    DEFAULT_B,
    DEFAULT_EPS,
    EXCEPTIONAL_BUDGET,
    SCALE_FLOOR,
    CHECK_TOL,
    MakespanLp,
    build_makespan_lp,
    geometric_search,
    probe_makespan,
    trace_monotone,
)
from .report import Check, SolveReport
from .rounding import build_st_graph, round_budgeted

LOWER_BRACKET_RATIO = 1e-9


def build_budgeted_lp(inst: Instance, b: float, scale: float = 1.0) -> MakespanLp:
    return build_makespan_lp(inst, b, scale, budgeted=True)


def budgeted_bracket(inst: Instance) -> tuple[float, float]:
    # a partial schedule can be far cheaper than any full one, so the lower
    # end is only a floor
    hi = float(inst.mean_matrix().min(axis=0).sum())
    lo = max(hi * LOWER_BRACKET_RATIO, SCALE_FLOOR)
    return lo, max(hi, lo)


def solve_budgeted(
    inst: Instance,
    b: float = DEFAULT_B,
    eps: float = DEFAULT_EPS,
    samples: int = 100_000,
    seed: int = 0,
    evaluate_solution: bool = True,
    threads: int | None = None,
) -> SolveReport:
    if b <= 0:
        raise ValueError("b must be positive")
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    lo, hi = budgeted_bracket(inst)
    probe, trace, doublings = geometric_search(lambda M: probe_makespan(inst, M, b, budgeted=True), lo, hi, eps)
    lpd, x = probe.lp, probe.solution.x
    table = lpd.table
    classes = probe.classes.classes
    m, n = inst.m, inst.n
    y = lpd.y_matrix(x)
    p = np.stack([table.beta[i, :, classes[i] - 1] for i in range(m)]) if m else np.zeros((0, n))
    c = table.cost
    g = build_st_graph(y, p, c)
    rewards = inst.rewards
    sol = round_budgeted(g, rewards, inst.target, seed=seed)

    placement = {inst.jobs[j].id: i for j, i in sorted(sol.machine_of.items())}
    assignment = Assignment(placement)
    loads = sol.loads(p)
    frac_loads = (p * y).sum(axis=1)
    frac_cost = float((c * y).sum())
    reward = float(sum(rewards[j] for j in sol.machine_of))
    used_pairs = [(i, j) for j, i in sol.machine_of.items()]
    pruned_used = [pair for pair in used_pairs if pair not in lpd.y]
    c_max = max((float(c[i, j]) for (i, j) in lpd.y), default=0.0)
    checks = [
        Check("reward", reward, inst.target, reward >= inst.target, "achieved reward vs target, no tolerance"),
        Check.le("lp_exceptional_cost", frac_cost, EXCEPTIONAL_BUDGET + CHECK_TOL),
        Check.le("rounded_cost", sol.cost, 2 * EXCEPTIONAL_BUDGET + CHECK_TOL),
        Check.le("rounded_cost_vs_aux_lp", sol.cost, (sol.lp_cost or 0.0) + c_max + CHECK_TOL),
        Check.le("max_machine_effective_load", float(loads.max(initial=0.0)), b + 2 + CHECK_TOL),
        Check.le("pruned_pairs_used", len(pruned_used), 0),
        Check("class_counts", float(probe.classes.counts_ok()), 1.0, probe.classes.counts_ok()),
    ]
    notes = list(sol.notes)
    if doublings:
        notes.append(f"upper bracket infeasible; doubled {doublings} time(s)")
    if probe.classes.relaxed:
        notes.append("class test used slack")
    if not trace_monotone(trace):
        notes.append("feasibility was not monotone along the trace")
    notes.append(f"infeasible probes are certificates only within LP tolerance {lp.FEAS_TOL:g}")
    details = {
        "reward": reward,
        "reward_target": inst.target,
        "two_jobs_on_one_copy": sol.double_copy is not None,
        "double_copy_machine": None if sol.double_copy is None else g.copy_machine[sol.double_copy],
        "classes": classes,
        "machine_effective_loads": loads.tolist(),
        "fractional_effective_loads": frac_loads.tolist(),
        "lp_exceptional_cost": frac_cost,
        "aux_lp_cost": sol.lp_cost,
        "rounded_exceptional_cost": sol.cost,
        "aux_lp_perturbed": sol.perturbed,
        "unassigned_jobs": [inst.jobs[j].id for j in range(n) if j not in sol.machine_of],
    }
    evaluation = None
    if evaluate_solution:
        evaluation = evaluate(inst, assignment, "makespan", samples=samples, seed=seed, threads=threads)
    return SolveReport(
        objective="budgeted",
        scale=probe.scale,
        bracket=(lo, hi),
        trace=trace,
        assignment=assignment,
        checks=checks,
        evaluation=evaluation,
        params={"b": b, "epsilon": eps},
        details=details,
        notes=notes,
        lp_model=probe.lp.model,
    )
