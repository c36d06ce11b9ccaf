"""Expected-makespan approximation on unrelated machines.

For a guessed scale M all sizes are divided by M and split at 1 into a
truncated part (priced by effective sizes) and an exceptional part (priced by
its mean).  An LP over fractional assignments y_ij and per-machine effective
loads z_i(k) either certifies (within tolerance) that the optimum exceeds M or
yields a point that is rounded through a GAP instance.  A geometric binary
search finds the smallest M that is not certified infeasible.

The subset family ``sum_{i in K} z_i(k) <= b*k`` is exponential and handled by
row generation.  The LP minimizes the multiplier ``u <= b`` on the right-hand
side, so feasibility is unchanged while the returned point is as balanced in
effective-size terms as the instance allows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lp
from .dist import DiscreteDist, SupportOverflow, convolve_all, effective_sizes, mean, truncate_split
from .evaluate import evaluate, exceptional_lower_bound
from .instance import Assignment, Instance
from .report import BracketError, Check, SolveReport
from .rounding import build_st_graph, round_gap

DEFAULT_B = 17.0
DEFAULT_EPS = 0.01
EXCEPTIONAL_BUDGET = 2.0
ORACLE_TOL = 1e-7
CLASS_SLACK = 1e-6
CHECK_TOL = 1e-6
SCALE_FLOOR = 1e-12
REWARD_GUARD = 2e-9


class EmptyClassError(RuntimeError):
    """No remaining machine passed the class test, even with slack."""


@dataclass
class ScaledPairs:
    """Per-pair quantities of the instance scaled down by ``scale`` and split at 1."""

    scale: float
    allowed: np.ndarray  # (m, n) bool
    cost: np.ndarray  # (m, n) E[X''], 0 on forbidden pairs
    beta: np.ndarray  # (m, n, m) beta_k(X') at [i, j, k-1]
    truncated: dict[tuple[int, int], DiscreteDist]


def scaled_pairs(inst: Instance, scale: float) -> ScaledPairs:
    m, n = inst.m, inst.n
    allowed = np.zeros((m, n), dtype=bool)
    cost = np.zeros((m, n))
    beta = np.zeros((m, n, m))
    truncated = {}
    ks = np.arange(1, m + 1)
    memo: dict[DiscreteDist, tuple] = {}
    for j, job in enumerate(inst.jobs):
        for i, d in job.dists.items():
            if d not in memo:
                tr, ex = truncate_split(d.scale(1.0 / scale), 1.0)
                memo[d] = (tr, mean(ex), effective_sizes(tr, ks))
            tr, c, b = memo[d]
            allowed[i, j] = True
            cost[i, j] = c
            beta[i, j] = b
            truncated[(i, j)] = tr
    return ScaledPairs(scale, allowed, cost, beta, truncated)


def subset_violation(zk: np.ndarray, k: int, bound: float, tol: float = ORACLE_TOL) -> list[int] | None:
    """Machines of the most loaded k-subset if its z(k) sum exceeds bound*k."""
    zk = np.asarray(zk, dtype=float)
    top = np.argsort(-zk, kind="stable")[:k]
    if zk[top].sum() > bound * k + tol * k:
        return sorted(int(i) for i in top)
    return None


def separate(z: np.ndarray, bound: float, tol: float = ORACLE_TOL) -> list[tuple[int, list[int]]]:
    """All violated (k, subset) pairs, one per k; ``z[i, k-1]`` holds z_i(k)."""
    m = z.shape[0]
    out = []
    for k in range(1, m + 1):
        K = subset_violation(z[:, k - 1], k, bound, tol)
        if K is not None:
            out.append((k, K))
    return out


@dataclass
class MakespanLp:
    model: lp.LpModel
    oracle: Callable
    y: dict[tuple[int, int], int]
    z: np.ndarray  # (m, m) variable indices
    u: int
    b: float
    table: ScaledPairs
    pruned: int = 0

    def y_matrix(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros(self.table.allowed.shape)
        for (i, j), v in self.y.items():
            y[i, j] = max(0.0, x[v])
        return y

    def z_matrix(self, x: np.ndarray) -> np.ndarray:
        return x[self.z]


def build_makespan_lp(
    inst: Instance,
    b: float,
    scale: float = 1.0,
    budgeted: bool = False,
    table: ScaledPairs | None = None,
) -> MakespanLp:
    """Assignment LP with explicit load rows and a separation oracle for subset rows.

    With ``budgeted`` each job is assigned at most once, a reward row is added
    and pairs whose exceptional mean exceeds the budget get no variable.
    """
    table = table or scaled_pairs(inst, scale)
    m, n = inst.m, inst.n
    model = lp.LpModel()
    y: dict[tuple[int, int], int] = {}
    pruned = 0
    for i, j in inst.allowed_pairs():
        if budgeted and table.cost[i, j] > EXCEPTIONAL_BUDGET:
            pruned += 1
            continue
        y[(i, j)] = model.add_var(f"y_{i}_{j}")
    z = np.array([[model.add_var(f"z_{i}_{k}") for k in range(1, m + 1)] for i in range(m)], dtype=int)
    u = model.add_var("u", 0.0, b, cost=1.0)

    for j in range(n):
        row = {y[(i, j)]: 1.0 for i in range(m) if (i, j) in y}
        if budgeted:
            if row:
                model.add_row(row, lp.LE, 1.0, f"assign_{j}")
        else:
            model.add_row(row, lp.EQ, 1.0, f"assign_{j}")
    for i in range(m):
        for k in range(1, m + 1):
            row = {z[i, k - 1]: 1.0}
            for j in range(n):
                if (i, j) in y:
                    row[y[(i, j)]] = -float(table.beta[i, j, k - 1])
            model.add_row(row, lp.EQ, 0.0, f"load_{i}_{k}")
    model.add_row({v: float(table.cost[i, j]) for (i, j), v in y.items()}, lp.LE, EXCEPTIONAL_BUDGET, "exceptional")
    if budgeted:
        rewards = inst.rewards
        norm = float(np.linalg.norm(rewards)) or 1.0
        # guard band so the point stays feasible for the rounding LP's own guard
        reachable = float(sum(rewards[j] for j in {j for _, j in y}))
        rhs = inst.target / norm + REWARD_GUARD * (max(1.0, inst.target) / norm + 1.0) if inst.target > 0 else 0.0
        rhs = max(min(rhs, reachable / norm), inst.target / norm)
        model.add_row({v: rewards[j] / norm for (i, j), v in y.items()}, lp.GE, rhs, "reward")

    def subset_row(k: int, K: list[int]) -> lp.Row:
        coefs = {int(z[i, k - 1]): 1.0 for i in K}
        coefs[u] = -float(k)
        return model.make_row(coefs, lp.LE, 0.0, f"subset_k{k}_" + "_".join(map(str, K)))

    # members of the subset family that are almost always needed
    for i in range(m):
        model.rows.append(subset_row(1, [i]))
    if m > 1:
        model.rows.append(subset_row(m, list(range(m))))
    seen = {r.label for r in model.rows}

    def oracle(x: np.ndarray) -> list[lp.Row]:
        cuts = []
        for k, K in separate(x[z], x[u]):
            row = subset_row(k, K)
            if row.label not in seen:
                seen.add(row.label)
                cuts.append(row)
        return cuts

    return MakespanLp(model, oracle, y, z, u, b, table, pruned)


@dataclass
class ClassAssignment:
    classes: list[int]
    rounds: list[list[int]]
    relaxed: bool = False

    def counts_ok(self) -> bool:
        m = len(self.classes)
        return all(sum(1 for c in self.classes if c <= ell) <= ell for ell in range(1, m + 1))


def classify_machines(z: np.ndarray, b: float) -> ClassAssignment:
    """Peel machines into classes: at each step the remaining machines with
    z_i(ell) <= b get class ell, where ell is the number still unclassified."""
    z = np.asarray(z, dtype=float)
    m = z.shape[0]
    classes = [0] * m
    rounds = []
    remaining = list(range(m))
    relaxed = False
    ell = m
    while ell > 0:
        chosen = [i for i in remaining if z[i, ell - 1] <= b + 1e-9 * max(1.0, b)]
        if not chosen:
            chosen = [i for i in remaining if z[i, ell - 1] <= b * (1 + CLASS_SLACK)]
            relaxed = True
        if not chosen:
            raise EmptyClassError(f"no machine with z(ell) <= b at ell={ell}")
        for i in chosen:
            classes[i] = ell
        rounds.append(chosen)
        remaining = [i for i in remaining if i not in chosen]
        ell = len(remaining)
    return ClassAssignment(classes, rounds, relaxed)


@dataclass
class Probe:
    scale: float
    feasible: bool
    reason: str = ""
    lp: MakespanLp | None = None
    solution: lp.LpSolution | None = None
    classes: ClassAssignment | None = None
    extra: dict = field(default_factory=dict)

    def trace_row(self) -> dict:
        row = {"M": self.scale, "feasible": self.feasible, "reason": self.reason}
        if self.solution is not None:
            row["lp_cut_rounds"] = self.solution.rounds
            row["lp_cuts"] = len(self.solution.cuts)
            if self.solution.optimal:
                row["u"] = float(self.solution.x[self.lp.u])
        row.update(self.extra)
        return row


def probe_makespan(inst: Instance, scale: float, b: float, budgeted: bool = False) -> Probe:
    """Decide one scale: LP feasibility with row generation, then machine classes."""
    lpd = build_makespan_lp(inst, b, scale, budgeted)
    extra = {"pruned_pairs": lpd.pruned} if budgeted else {}
    try:
        sol = lp.solve_with_cuts(lpd.model, lpd.oracle, max_rounds=max(10, 10 * inst.m * inst.m))
    except lp.LpNumericalError as exc:
        return Probe(scale, False, f"numerical failure: {exc}", lpd, extra=extra)
    if not sol.optimal:
        return Probe(scale, False, f"LP {sol.status} within tolerance {lp.FEAS_TOL:g}", lpd, sol, extra=extra)
    try:
        classes = classify_machines(lpd.z_matrix(sol.x), b)
    except EmptyClassError as exc:
        return Probe(scale, False, str(exc), lpd, sol, extra=extra)
    return Probe(scale, True, "", lpd, sol, classes, extra=extra)


def default_bracket(inst: Instance, b: float) -> tuple[float, float]:
    """[max_j min_i E X_ij / (4b+10), sum_j min_i E X_ij]."""
    best = inst.mean_matrix().min(axis=0)
    lo = max(float(best.max(initial=0.0)) / (4 * b + 10), SCALE_FLOOR)
    hi = max(float(best.sum()), lo)
    return lo, hi


def geometric_search(probe_fn, lo: float, hi: float, eps: float, max_doublings: int = 64):
    """Smallest feasible scale up to relative width ``eps``.

    If ``hi`` is infeasible the bracket is doubled upward (recorded in the
    trace) before giving up with :class:`BracketError`.
    """
    trace = []
    best = probe_fn(hi)
    trace.append(best.trace_row() | {"stage": "upper"})
    doublings = 0
    while not best.feasible:
        if doublings >= max_doublings:
            raise BracketError(f"no feasible scale up to {hi:g}: {best.reason}")
        lo, hi = hi, 2 * hi
        doublings += 1
        best = probe_fn(hi)
        trace.append(best.trace_row() | {"stage": "extend"})
    while hi / lo > 1 + eps:
        mid = math.sqrt(lo * hi)
        p = probe_fn(mid)
        trace.append(p.trace_row() | {"stage": "bisect"})
        if p.feasible:
            hi, best = mid, p
        else:
            lo = mid
    return best, trace, doublings


def trace_monotone(trace: list[dict]) -> bool:
    """No infeasible probe above a feasible one."""
    feas = [t["M"] for t in trace if t["feasible"]]
    infeas = [t["M"] for t in trace if not t["feasible"]]
    return not feas or not infeas or max(infeas) < min(feas)


def truncated_tail(table: ScaledPairs, jobs_by_machine, classes, b: float, alphas=(1.0, 2.0)) -> list[dict]:
    """Exact Pr[sum of truncated sizes > b+1+alpha] per machine vs class^-alpha."""
    out = []
    for i, jobs in enumerate(jobs_by_machine):
        try:
            load = convolve_all(table.truncated[(i, j)] for j in jobs)
        except SupportOverflow:
            out.append({"machine": i, "skipped": "support cap"})
            continue
        for a in alphas:
            prob = 1.0 - load.cdf(b + 1 + a)
            bound = float(classes[i]) ** (-a)
            out.append({"machine": i, "alpha": a, "prob": prob, "bound": bound, "ok": prob <= bound + 1e-12})
    return out


def finish_makespan(inst: Instance, probe: Probe, b: float):
    """Round the LP point of a feasible probe; returns (assignment, checks, details)."""
    lpd, x = probe.lp, probe.solution.x
    table = lpd.table
    classes = probe.classes.classes
    y = lpd.y_matrix(x)
    m, n = inst.m, inst.n
    p = np.zeros((m, n))
    for i in range(m):
        p[i] = table.beta[i, :, classes[i] - 1]
    c = table.cost
    g = build_st_graph(y, p, c)
    sol = round_gap(g)
    placement = {inst.jobs[j].id: i for j, i in sorted(sol.machine_of.items())}
    assignment = Assignment(placement)
    loads = sol.loads(p)
    frac_loads = (p * y).sum(axis=1)
    frac_cost = float((c * y).sum())
    jobs_by = sol.jobs_by_machine(m)
    max_p = np.array([max((p[i, j] for j in jobs_by[i]), default=0.0) for i in range(m)])
    checks = [
        Check.le("lp_exceptional_cost", frac_cost, EXCEPTIONAL_BUDGET + CHECK_TOL),
        Check.le("rounded_cost", sol.cost, EXCEPTIONAL_BUDGET + CHECK_TOL),
        Check.le("rounded_cost_vs_lp", sol.cost, frac_cost + CHECK_TOL),
        Check.le("max_machine_effective_load", float(loads.max(initial=0.0)), b + 1 + CHECK_TOL),
        Check.le("load_minus_fractional_plus_pmax", float(np.max(loads - frac_loads - max_p, initial=0.0)), CHECK_TOL),
        Check.le("max_truncated_effective_size", float(p[table.allowed].max(initial=0.0)), 1.0 + 1e-12),
        Check("class_counts", float(probe.classes.counts_ok()), 1.0, probe.classes.counts_ok(),
              "at most ell machines of class <= ell"),
    ]
    details = {
        "classes": classes,
        "class_rounds": probe.classes.rounds,
        "class_test_relaxed": probe.classes.relaxed,
        "machine_effective_loads": loads.tolist(),
        "fractional_effective_loads": frac_loads.tolist(),
        "lp_exceptional_cost": frac_cost,
        "rounded_exceptional_cost": sol.cost,
        "copies_per_machine": g.t,
        "lp_interior_vars": lp.interior_count(lpd.model, x),
        "lp_rows": lpd.model.num_rows,
    }
    return assignment, checks, details, jobs_by


def solve_makespan(
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
    lo, hi = default_bracket(inst, b)
    probe, trace, doublings = geometric_search(lambda M: probe_makespan(inst, M, b), lo, hi, eps)
    assignment, checks, details, jobs_by = finish_makespan(inst, probe, b)
    M = probe.scale
    notes = []
    if doublings:
        notes.append(f"upper bracket infeasible; doubled {doublings} time(s)")
    if probe.classes.relaxed:
        notes.append(f"class test used slack b*(1+{CLASS_SLACK:g})")
    if not trace_monotone(trace):
        notes.append("feasibility was not monotone along the trace")
    notes.append(f"infeasible probes are certificates only within LP tolerance {lp.FEAS_TOL:g}")
    tails = truncated_tail(probe.lp.table, jobs_by, probe.classes.classes, b)
    details["truncated_tail"] = tails
    details["tail_checks_ok"] = all(t.get("ok", True) for t in tails)
    details["exceptional_lower_bound"] = exceptional_lower_bound(inst, M)
    evaluation = None
    if evaluate_solution:
        evaluation = evaluate(inst, assignment, "makespan", samples=samples, seed=seed, threads=threads)
        slack = evaluation.half_width
        checks.append(Check.le("expected_makespan", evaluation.value - slack, (4 * b + 10) * M,
                               "bound (4b+10)*M at the final scale; epsilon slack noted"))
    return SolveReport(
        objective="makespan",
        scale=M,
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
