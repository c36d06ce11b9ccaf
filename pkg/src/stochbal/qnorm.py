"""Expected q-norm of machine loads.

For a guess M the instance becomes a deterministic problem: processing time
p = E[X'] (sizes truncated at M), two side costs c = E[X''] and d = E[X'^q]
with budgets C = 2M and D = alpha*M^q.  A convex relaxation is solved with
away-step Frank-Wolfe (linear subproblems are LPs over the same polytope),
then rounded through a GAP whose single cost combines the two budgets and the
p^q term.  The rounded q-norm of processing times doubles as the feasibility
test for the binary search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .dist import mean, moment_q, truncate_split
from .evaluate import evaluate
from .instance import Assignment, Instance
from .makespan import DEFAULT_EPS, SCALE_FLOOR, geometric_search, trace_monotone
from .report import Check, SolveReport
from .rounding import build_st_graph, round_gap

DEFAULT_CP_EPS = 1e-3
MAX_FW_ITERS = 5000
LINE_SEARCH_STEPS = 60
VERTEX_DIGITS = 12


class CpInfeasible(RuntimeError):
    """The budgeted assignment polytope is empty."""


def budget_alpha(q: float) -> float:
    return 2.0 ** (q + 1) + 8.0


@dataclass
class QDetSchedInstance:
    q: float
    M: float
    allowed: np.ndarray  # (m, n) bool
    p: np.ndarray
    c: np.ndarray
    d: np.ndarray
    C: float
    D: float

    @property
    def alpha(self) -> float:
        return budget_alpha(self.q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.allowed.shape


def reduce_to_qdetsched(inst: Instance, M: float, q: float) -> QDetSchedInstance:
    if M <= 0:
        raise ValueError("M must be positive")
    if q < 1:
        raise ValueError("q must be >= 1")
    m, n = inst.m, inst.n
    allowed = np.zeros((m, n), dtype=bool)
    p, c, d = np.zeros((m, n)), np.zeros((m, n)), np.zeros((m, n))
    for j, job in enumerate(inst.jobs):
        for i, dist in job.dists.items():
            tr, ex = truncate_split(dist, M)
            allowed[i, j] = True
            p[i, j] = mean(tr)
            c[i, j] = mean(ex)
            d[i, j] = moment_q(tr, q)
    return QDetSchedInstance(q, M, allowed, p, c, d, 2.0 * M, budget_alpha(q) * M**q)


@dataclass
class CpSolution:
    x: np.ndarray  # (m, n)
    loads: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)
    max_violation: float = 0.0

    @property
    def relative_gap(self) -> float:
        return self.gap / self.value if self.value > 0 else 0.0


class _Polytope:
    """Assignment simplex per job plus the two normalized budget rows, with a warm LMO."""

    def __init__(self, qi: QDetSchedInstance):
        self.qi = qi
        rows_i, cols_j = np.nonzero(qi.allowed)
        order = np.lexsort((rows_i, cols_j))
        self.rows, self.cols = rows_i[order], cols_j[order]
        model = lp.LpModel()
        for i, j in zip(self.rows, self.cols):
            model.add_var(f"x_{i}_{j}", 0.0, 1.0)
        m, n = qi.shape
        for j in range(n):
            idx = np.nonzero(self.cols == j)[0]
            if idx.size == 0:
                raise CpInfeasible(f"job {j} has no allowed machine")
            model.add_row({int(k): 1.0 for k in idx}, lp.EQ, 1.0, f"assign_{j}")
        cv = qi.c[self.rows, self.cols] / qi.C
        dv = qi.d[self.rows, self.cols] / qi.D
        model.add_row(dict(enumerate(cv)), lp.LE, 1.0, "c_budget")
        model.add_row(dict(enumerate(dv)), lp.LE, 1.0, "d_budget")
        self.model = model
        self.session = lp.LpSession(model)

    def lmo(self, g: np.ndarray) -> np.ndarray:
        scale = float(np.max(np.abs(g), initial=0.0)) or 1.0
        self.session.set_costs(g / scale)
        sol = self.session.run()
        if not sol.optimal:
            raise CpInfeasible(f"budget polytope is {sol.status}")
        return np.clip(sol.x, 0.0, 1.0)

    def to_matrix(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.qi.shape)
        out[self.rows, self.cols] = v
        return out


def solve_qdetsched_cp(qi: QDetSchedInstance, eps_cp: float = DEFAULT_CP_EPS, max_iters: int = MAX_FW_ITERS) -> CpSolution:
    """Minimize sum_i load_i^q + sum p^q x over the budgeted assignment polytope."""
    poly = _Polytope(qi)
    q = qi.q
    m, _ = qi.shape
    rows = poly.rows
    pv = qi.p[poly.rows, poly.cols]
    pq = pv**q

    def loads(v):
        out = np.zeros(m)
        np.add.at(out, rows, pv * v)
        return out

    def f(v):
        return float(np.sum(loads(v) ** q) + pq @ v)

    def grad(v):
        lv = loads(v)
        return q * lv[rows] ** (q - 1) * pv + pq

    # start: LP vertex for the gradient at the uniform split
    counts = np.bincount(poly.cols, minlength=qi.shape[1])
    uniform = 1.0 / counts[poly.cols]
    x = poly.lmo(grad(uniform))
    active: dict[tuple, list] = {_key(x): [x, 1.0]}
    history = [f(x)]
    gap = math.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g = grad(x)
        s = poly.lmo(g)
        fx = history[-1]
        gap = float(g @ (x - s))
        if gap <= eps_cp * fx or gap <= 1e-14:
            converged = True
            break
        away_key = max(active, key=lambda k: (float(g @ active[k][0]), k))
        a, wa = active[away_key]
        if gap >= float(g @ (a - x)) or len(active) == 1:
            direction, gmax, away = s - x, 1.0, False
        else:
            direction, gmax, away = x - a, wa / (1.0 - wa), True
        step = _line_search(grad, x, direction, gmax)
        if away:
            for k in active:
                active[k][1] *= 1 + step
            active[away_key][1] -= step
            if active[away_key][1] <= 1e-15:
                del active[away_key]
        else:
            for k in active:
                active[k][1] *= 1 - step
            ks = _key(s)
            if ks in active:
                active[ks][1] += step
            else:
                active[ks] = [s, step]
            if step >= 1.0:
                active = {ks: [s, 1.0]}
            active = {k: v for k, v in active.items() if v[1] > 1e-15}
        total = sum(w for _, w in active.values())
        x = sum(v * (w / total) for v, w in active.values())
        history.append(f(x))
    x_mat = poly.to_matrix(x)
    viol = poly.model.max_violation(x)
    return CpSolution(x_mat, loads(x), f(x), max(gap, 0.0), it, converged, history, viol)


def _key(v: np.ndarray) -> tuple:
    return tuple(np.round(v, VERTEX_DIGITS).tolist())


def _line_search(grad, x, direction, gmax):
    def slope(t):
        return float(grad(x + t * direction) @ direction)

    if slope(gmax) <= 0:
        return gmax
    lo, hi = 0.0, gmax
    for _ in range(LINE_SEARCH_STEPS):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return lo


@dataclass
class QRounding:
    machine_of: dict[int, int]
    loads: np.ndarray
    c_cost: float
    d_cost: float
    gamma_fractional: float
    gamma_rounded: float
    power_sum: float  # sum_i L_i^q of processing times
    checks: list[Check]


def round_qdetsched(qi: QDetSchedInstance, cp: CpSolution, eps_cp: float = DEFAULT_CP_EPS) -> QRounding:
    """GAP rounding with caps at the fractional loads and cost c/C + d/D + p^q/V."""
    q = qi.q
    pq_term = qi.p**q / cp.value if cp.value > 0 else np.zeros_like(qi.p)
    gamma = qi.c / qi.C + qi.d / qi.D + pq_term
    g = build_st_graph(cp.x, qi.p, gamma)
    sol = round_gap(g)
    m = qi.shape[0]
    L = np.zeros(m)
    c_cost = d_cost = 0.0
    for j, i in sol.machine_of.items():
        L[i] += qi.p[i, j]
        c_cost += qi.c[i, j]
        d_cost += qi.d[i, j]
    power = float(np.sum(L**q))
    frac_gamma = float(np.sum(gamma * cp.x))
    slack = 1 + eps_cp
    checks = [
        Check.le("gamma_fractional", frac_gamma, 3 * slack + 1e-9),
        Check.le("c_cost", c_cost, 3 * qi.C * slack + 1e-9),
        Check.le("d_cost", d_cost, 3 * qi.D * slack + 1e-9),
        Check.le("load_power_sum", power, 2 ** (q + 1) * cp.value * slack + 1e-9),
    ]
    return QRounding(dict(sol.machine_of), L, c_cost, d_cost, frac_gamma, sol.cost, power, checks)


@dataclass
class QProbe:
    scale: float
    feasible: bool
    reason: str = ""
    qi: QDetSchedInstance | None = None
    cp: CpSolution | None = None
    rounding: QRounding | None = None

    def trace_row(self) -> dict:
        row = {"M": self.scale, "feasible": self.feasible, "reason": self.reason}
        if self.cp is not None:
            row["cp_value"] = self.cp.value
            row["cp_iterations"] = self.cp.iterations
            row["cp_relative_gap"] = self.cp.relative_gap
        if self.rounding is not None:
            row["processing_qnorm"] = self.rounding.power_sum ** (1.0 / self.qi.q)
        return row


def probe_qnorm(inst: Instance, M: float, q: float, eps_cp: float = DEFAULT_CP_EPS) -> QProbe:
    qi = reduce_to_qdetsched(inst, M, q)
    try:
        cp = solve_qdetsched_cp(qi, eps_cp)
    except CpInfeasible as exc:
        return QProbe(M, False, str(exc), qi)
    rnd = round_qdetsched(qi, cp, eps_cp)
    norm = rnd.power_sum ** (1.0 / q)
    limit = 2 ** (1 + 2 / q) * M * (1 + eps_cp) ** (1 / q)
    if norm > limit:
        return QProbe(M, False, f"processing q-norm {norm:.6g} exceeds {limit:.6g}", qi, cp, rnd)
    return QProbe(M, True, "", qi, cp, rnd)


def bell_number(k: int) -> int:
    row = [1]
    for _ in range(k):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def rosenthal_constant(q: int) -> float:
    """(E Z^q)^(1/q) for Z ~ Poisson(1); the integer moments are Bell numbers."""
    if int(q) != q or q < 1:
        raise ValueError("q must be a positive integer")
    q = int(q)
    if q == 2:
        return math.sqrt(2.0)
    return float(bell_number(q)) ** (1.0 / q)


def explicit_ratio(q: int, eps: float = 0.0) -> float:
    if int(q) != q or q < 2:
        raise ValueError("q must be an integer >= 2")
    K = rosenthal_constant(q)
    return (6 + (10 + 3 * 2.0 ** (3 - q)) ** (1.0 / q) * 2 * K) * (1 + eps)


def qnorm_bracket(inst: Instance, q: float) -> tuple[float, float]:
    best = inst.mean_matrix().min(axis=0)
    hi = float(best.sum())
    # any value below the optimum is a valid lower end
    lo = max(float(best.max(initial=0.0)) / 2 ** (2 + 2 / q), SCALE_FLOOR)
    return lo, max(hi, lo)


def solve_qnorm(
    inst: Instance,
    q: float,
    eps: float = DEFAULT_EPS,
    eps_cp: float = DEFAULT_CP_EPS,
    samples: int = 100_000,
    seed: int = 0,
    evaluate_solution: bool = True,
    threads: int | None = None,
) -> SolveReport:
    if q < 1:
        raise ValueError("q must be >= 1")
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    lo, hi = qnorm_bracket(inst, q)
    probe, trace, doublings = geometric_search(lambda M: probe_qnorm(inst, M, q, eps_cp), lo, hi, eps)
    qi, cp, rnd = probe.qi, probe.cp, probe.rounding
    M = probe.scale
    placement = {inst.jobs[j].id: i for j, i in sorted(rnd.machine_of.items())}
    assignment = Assignment(placement)
    slack = 1 + eps_cp
    alpha = budget_alpha(q)
    checks = list(rnd.checks) + [
        Check.le("cp_relative_gap", cp.relative_gap, eps_cp),
        Check.le("cp_feasibility", cp.max_violation, 1e-6),
        Check.le("exceptional_mean_sum", rnd.c_cost, 6 * M * slack + 1e-9),
        Check.le("truncated_mean_power_sum", rnd.power_sum, 2 ** (q + 2) * M**q * slack + 1e-9),
        Check.le("truncated_moment_sum", rnd.d_cost, 3 * alpha * M**q * slack + 1e-9),
    ]
    notes = []
    if doublings:
        notes.append(f"upper bracket infeasible; doubled {doublings} time(s)")
    if not cp.converged:
        notes.append(f"convex program stopped after {cp.iterations} iterations")
    if not trace_monotone(trace):
        notes.append("feasibility was not monotone along the trace")
    zero = [i for i in range(inst.m) if cp.loads[i] == 0 and np.any(cp.x[i] > 0)]
    if zero:
        notes.append(f"machines {zero} have zero fractional load but carry zero-time jobs")
    details = {
        "q": q,
        "C": qi.C,
        "D": qi.D,
        "alpha": alpha,
        "cp_value": cp.value,
        "cp_gap": cp.gap,
        "cp_iterations": cp.iterations,
        "fractional_loads": cp.loads.tolist(),
        "rounded_processing_loads": rnd.loads.tolist(),
        "gamma_fractional": rnd.gamma_fractional,
        "gamma_rounded": rnd.gamma_rounded,
    }
    integral_q = float(q).is_integer() and q >= 2
    if integral_q:
        details["explicit_ratio"] = explicit_ratio(int(q), eps)
    evaluation = None
    if evaluate_solution:
        evaluation = evaluate(inst, assignment, "qnorm", q=q, samples=samples, seed=seed, threads=threads)
        if integral_q:
            bound = explicit_ratio(int(q)) * M * slack
            checks.append(Check.le("expected_qnorm", evaluation.value - evaluation.half_width, bound,
                                   "explicit constant times the final scale"))
    return SolveReport(
        objective="qnorm",
        scale=M,
        bracket=(lo, hi),
        trace=trace,
        assignment=assignment,
        checks=checks,
        evaluation=evaluation,
        params={"q": q, "epsilon": eps, "cp_epsilon": eps_cp},
        details=details,
        notes=notes,
    )
