"""Bipartite rounding for GAP and budgeted GAP.

A fractional assignment ``y`` (machines x jobs) is spread over machine copies:
jobs on machine i are sorted by nonincreasing processing time and unit slices
of ``sum_j y_ij`` fill copies 1, 2, ...  Any matching that puts at most one job
on each copy then loads machine i with at most its fractional load plus one
processing time.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import lp

TOL = 1e-9
PERTURB_SCALE = 1e-9


class MatchingError(RuntimeError):
    """No job-perfect matching exists on the support graph (should not happen for valid input)."""


class StructureError(RuntimeError):
    """Fractional edges of the auxiliary LP solution are not one path or cycle."""


@dataclass(frozen=True)
class StEdge:
    job: int
    copy: int
    value: float
    cost: float
    p: float


@dataclass
class StGraph:
    num_machines: int
    num_jobs: int
    copy_machine: list[int]
    copy_rank: list[int]  # 1-based rank of the copy within its machine
    t: list[int]
    edges: list[StEdge]

    @property
    def num_copies(self) -> int:
        return len(self.copy_machine)

    def copies_of(self, i: int) -> list[int]:
        return [c for c, mi in enumerate(self.copy_machine) if mi == i]

    def groups(self, i: int) -> list[list[int]]:
        """Jobs touching each copy of machine i, in rank order."""
        out = {c: [] for c in self.copies_of(i)}
        for e in self.edges:
            if e.copy in out:
                out[e.copy].append(e.job)
        return [out[c] for c in sorted(out, key=lambda c: self.copy_rank[c])]

    def copy_fill(self) -> np.ndarray:
        fill = np.zeros(self.num_copies)
        for e in self.edges:
            fill[e.copy] += e.value
        return fill

    def job_fraction(self) -> np.ndarray:
        frac = np.zeros(self.num_jobs)
        for e in self.edges:
            frac[e.job] += e.value
        return frac

    def fractional_cost(self) -> float:
        return float(sum(e.value * e.cost for e in self.edges))

    def fractional_load(self, i: int) -> float:
        return float(sum(e.value * e.p for e in self.edges if self.copy_machine[e.copy] == i))

    def jobs(self) -> list[int]:
        return sorted({e.job for e in self.edges})


def build_st_graph(y: np.ndarray, p: np.ndarray, c: np.ndarray, tol: float = TOL) -> StGraph:
    """Split fractional assignment ``y`` over machine copies.

    ``y``, ``p`` and ``c`` are (machines x jobs) arrays; entries of ``y`` at or
    below ``tol`` are treated as zero.
    """
    y = np.asarray(y, dtype=float)
    m, n = y.shape
    copy_machine: list[int] = []
    copy_rank: list[int] = []
    t: list[int] = []
    edges: list[StEdge] = []
    for i in range(m):
        jobs = [j for j in range(n) if y[i, j] > tol]
        jobs.sort(key=lambda j: (-p[i, j], j))
        total = float(sum(y[i, j] for j in jobs))
        ti = math.ceil(total - 1e-7) if total > tol else 0
        t.append(ti)
        first = len(copy_machine)
        for g in range(ti):
            copy_machine.append(i)
            copy_rank.append(g + 1)
        g, room = 0, 1.0
        for j in jobs:
            rem = float(y[i, j])
            while rem > tol:
                if g == ti - 1:
                    # last copy absorbs the remainder (and rounding noise)
                    edges.append(StEdge(j, first + g, rem, float(c[i, j]), float(p[i, j])))
                    room -= rem
                    break
                take = min(rem, room)
                edges.append(StEdge(j, first + g, take, float(c[i, j]), float(p[i, j])))
                rem -= take
                room -= take
                if room <= tol:
                    g, room = g + 1, 1.0
    return StGraph(m, n, copy_machine, copy_rank, t, _merge_edges(edges))


def _merge_edges(edges: list[StEdge]) -> list[StEdge]:
    merged: dict[tuple[int, int], StEdge] = {}
    for e in edges:
        key = (e.job, e.copy)
        if key in merged:
            old = merged[key]
            merged[key] = StEdge(e.job, e.copy, old.value + e.value, e.cost, e.p)
        else:
            merged[key] = e
    return [merged[k] for k in sorted(merged, key=lambda k: (k[1], k[0]))]


@dataclass
class MatchingSolution:
    pairs: list[tuple[int, int]]  # (job, copy)
    machine_of: dict[int, int]  # job -> machine
    cost: float
    reward: float = 0.0
    double_copy: int | None = None
    lp_cost: float | None = None
    perturbed: bool = False
    notes: list[str] = field(default_factory=list)

    def jobs_by_machine(self, m: int) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(m)]
        for j, i in sorted(self.machine_of.items()):
            out[i].append(j)
        return out

    def loads(self, p: np.ndarray) -> np.ndarray:
        out = np.zeros(p.shape[0])
        for j, i in self.machine_of.items():
            out[i] += p[i, j]
        return out


# ------------------------------------------------------------- min-cost flow


class _MinCostFlow:
    """Successive shortest paths with Dijkstra on reduced costs."""

    def __init__(self, num_nodes: int):
        self.adj: list[list[list]] = [[] for _ in range(num_nodes)]

    def add_edge(self, u: int, v: int, cap: int, cost: float) -> list:
        fwd = [v, cap, cost, None]
        rev = [u, 0, -cost, fwd]
        fwd[3] = rev
        self.adj[u].append(fwd)
        self.adj[v].append(rev)
        return fwd

    def run(self, s: int, t: int, need: int) -> tuple[int, float]:
        n = len(self.adj)
        pot = [0.0] * n  # all initial costs are nonnegative
        flow, cost = 0, 0.0
        while flow < need:
            dist = [math.inf] * n
            prev: list = [None] * n
            dist[s] = 0.0
            heap = [(0.0, s)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                for e in self.adj[u]:
                    v, cap, w, _ = e
                    if cap <= 0:
                        continue
                    nd = d + max(0.0, w + pot[u] - pot[v])
                    if nd < dist[v] - 1e-15:
                        dist[v] = nd
                        prev[v] = (u, e)
                        heapq.heappush(heap, (nd, v))
            if dist[t] == math.inf:
                break
            for v in range(n):
                if dist[v] < math.inf:
                    pot[v] += dist[v]
            v = t
            while v != s:
                u, e = prev[v]
                e[1] -= 1
                e[3][1] += 1
                cost += e[2]
                v = u
            flow += 1
        return flow, cost


def min_cost_matching(num_left: int, num_right: int, edges: list[tuple[int, int, float]]) -> dict[int, int]:
    """Cheapest matching saturating every left node; returns left -> right.

    Raises :class:`MatchingError` when some left node cannot be matched.
    """
    s, t = num_left + num_right, num_left + num_right + 1
    flow = _MinCostFlow(num_left + num_right + 2)
    for u in range(num_left):
        flow.add_edge(s, u, 1, 0.0)
    for v in range(num_right):
        flow.add_edge(num_left + v, t, 1, 0.0)
    arcs = [(u, v, flow.add_edge(u, num_left + v, 1, float(c))) for u, v, c in sorted(edges)]
    got, _ = flow.run(s, t, num_left)
    if got < num_left:
        raise MatchingError(f"only {got} of {num_left} jobs could be matched")
    return {u: v for u, v, arc in arcs if arc[1] == 0}


def round_gap(g: StGraph) -> MatchingSolution:
    """Min-cost job-perfect matching on the support edges of ``g``."""
    jobs = g.jobs()
    local = {j: k for k, j in enumerate(jobs)}
    best: dict[tuple[int, int], float] = {}
    for e in g.edges:
        best[(local[e.job], e.copy)] = e.cost
    match = min_cost_matching(len(jobs), g.num_copies, [(u, v, c) for (u, v), c in best.items()])
    pairs = sorted((jobs[u], v) for u, v in match.items())
    cost = sum(best[(local[j], v)] for j, v in pairs)
    return MatchingSolution(
        pairs=pairs,
        machine_of={j: g.copy_machine[v] for j, v in pairs},
        cost=float(cost),
        lp_cost=g.fractional_cost(),
    )


# ------------------------------------------------------------ budgeted GAP


def build_aux_lp(g: StGraph, rewards, target: float) -> lp.LpModel:
    """Matching LP on the copy graph with one extra reward row."""
    rewards = np.asarray(rewards, dtype=float)
    model = lp.LpModel()
    for k, e in enumerate(g.edges):
        model.add_var(f"z_{e.job}_{e.copy}", 0.0, lp.INF, e.cost)
    by_job: dict[int, list[int]] = {}
    by_copy: dict[int, list[int]] = {}
    for k, e in enumerate(g.edges):
        by_job.setdefault(e.job, []).append(k)
        by_copy.setdefault(e.copy, []).append(k)
    for j in sorted(by_job):
        model.add_row({k: 1.0 for k in by_job[j]}, lp.LE, 1.0, f"job_{j}")
    for c in sorted(by_copy):
        model.add_row({k: 1.0 for k in by_copy[c]}, lp.LE, 1.0, f"copy_{c}")
    coef = np.array([rewards[e.job] for e in g.edges])
    norm = float(np.linalg.norm(coef)) or 1.0
    # guard band so integral rounding lands on >= target, not target - tol
    rhs = (target + 1e-9 * max(1.0, abs(target))) if target > 0 else 0.0
    reachable = float(sum(rewards[j] for j in {e.job for e in g.edges}))
    rhs = max(min(rhs, reachable), target) / norm
    model.add_row({k: v / norm for k, v in enumerate(coef)}, lp.GE, rhs, "reward")
    return model


def solve_aux_lp(g: StGraph, rewards, target: float, perturb: float = 0.0, seed: int = 0) -> lp.LpSolution:
    model = build_aux_lp(g, rewards, target)
    if perturb:
        rng = np.random.default_rng(seed)
        model.set_cost([c + perturb * r for c, r in zip(model.cost, rng.random(model.num_vars))])
    sol = lp.solve(model)
    if sol.optimal:
        # report the unperturbed objective
        sol.objective = float(sum(e.cost * v for e, v in zip(g.edges, sol.x)))
    return sol


def decompose(g: StGraph, z: np.ndarray, tol: float = 1e-7):
    """Write a vertex ``z`` of the budgeted matching LP as two adjacent matchings.

    Returns ``(M1, M2, is_cycle, lam1)`` as lists of edge indices, with
    ``z = lam1 * 1[M1] + (1 - lam1) * 1[M2]``.  For integral ``z`` both are equal.
    """
    frac = [k for k, v in enumerate(z) if tol < v < 1 - tol]
    integral = [k for k, v in enumerate(z) if v >= 1 - tol]
    if not frac:
        return integral, integral, False, 1.0
    adj: dict[tuple[str, int], list[int]] = {}
    for k in frac:
        e = g.edges[k]
        adj.setdefault(("j", e.job), []).append(k)
        adj.setdefault(("c", e.copy), []).append(k)
    if any(len(v) > 2 for v in adj.values()):
        raise StructureError("a node carries more than two fractional edges")

    def other(node, k):
        e = g.edges[k]
        return ("c", e.copy) if node == ("j", e.job) else ("j", e.job)

    ends = sorted(n for n, ks in adj.items() if len(ks) == 1)
    is_cycle = not ends
    if len(ends) not in (0, 2):
        raise StructureError("fractional edges do not form a single path or cycle")
    start = ends[0] if ends else min(adj)
    order: list[int] = []
    node, used = start, set()
    while True:
        nxt = [k for k in sorted(adj[node]) if k not in used]
        if not nxt:
            break
        k = nxt[0]
        used.add(k)
        order.append(k)
        node = other(node, k)
    if len(order) != len(frac):
        raise StructureError(f"fractional edges form more than one component ({len(order)} of {len(frac)} reached)")
    a, b = order[0::2], order[1::2]
    lam_a = float(np.mean([z[k] for k in a]))
    lam_b = float(np.mean([z[k] for k in b])) if b else 1.0 - lam_a
    consistent = (
        all(abs(z[k] - lam_a) <= 1e-6 for k in a)
        and all(abs(z[k] - lam_b) <= 1e-6 for k in b)
        and abs(lam_a + lam_b - 1.0) <= 1e-6
    )
    if not consistent:
        raise StructureError("fractional values are not a two-matching combination")
    return sorted(integral + a), sorted(integral + b), is_cycle, lam_a


def round_budgeted(
    g: StGraph,
    rewards,
    target: float,
    z: np.ndarray | None = None,
    seed: int = 0,
) -> MatchingSolution:
    """Round a basic optimum of the auxiliary LP into an (almost) matching.

    Reward is at least ``target``; cost at most LP optimum + max edge cost; at
    most one copy carries two jobs.  When ``z`` is None the auxiliary LP is
    solved here, re-solving once under a tiny random cost perturbation if the
    first optimum is not a vertex of the expected shape.
    """
    rewards = np.asarray(rewards, dtype=float)
    perturbed = False
    lp_cost = None
    if z is None:
        sol = solve_aux_lp(g, rewards, target)
        if not sol.optimal:
            raise MatchingError(f"auxiliary LP is {sol.status}")
        z, lp_cost = sol.x, sol.objective
        try:
            parts = decompose(g, z)
        except StructureError:
            sol = solve_aux_lp(g, rewards, target, perturb=PERTURB_SCALE, seed=seed)
            if not sol.optimal:
                raise MatchingError(f"perturbed auxiliary LP is {sol.status}")
            z, lp_cost, perturbed = sol.x, sol.objective, True
            parts = decompose(g, z)
    else:
        z = np.asarray(z, dtype=float)
        lp_cost = float(sum(e.cost * v for e, v in zip(g.edges, z)))
        parts = decompose(g, z)
    m1, m2, is_cycle, _ = parts

    def stats(ms):
        jobs = {g.edges[k].job for k in ms}
        return float(sum(rewards[j] for j in jobs)), float(sum(g.edges[k].cost for k in ms)), jobs

    r1, c1, jobs1 = stats(m1)
    r2, c2, jobs2 = stats(m2)
    key1 = (-r1, c1, [(g.edges[k].job, g.edges[k].copy) for k in m1])
    key2 = (-r2, c2, [(g.edges[k].job, g.edges[k].copy) for k in m2])
    if key2 < key1:
        m1, m2, r1, r2, c1, c2, jobs1, jobs2 = m2, m1, r2, r1, c2, c1, jobs2, jobs1
    notes = []
    if perturbed:
        notes.append(f"auxiliary LP re-solved under cost perturbation {PERTURB_SCALE:g}")
    double_copy = None
    if c1 <= c2 + 1e-12:
        chosen = m1
    else:
        chosen = list(m2)
        extra = sorted(jobs1 - jobs2)
        if len(extra) > 1:
            raise StructureError("higher-reward matching covers more than one extra job")
        if extra:
            k = next(k for k in m1 if g.edges[k].job == extra[0])
            used_copies = {g.edges[kk].copy for kk in m2}
            if g.edges[k].copy in used_copies:
                double_copy = g.edges[k].copy
            chosen.append(k)
        if is_cycle:
            notes.append("alternating cycle: cheaper matching covers the same jobs")
    pairs = sorted((g.edges[k].job, g.edges[k].copy) for k in chosen)
    machine_of = {j: g.copy_machine[c] for j, c in pairs}
    return MatchingSolution(
        pairs=pairs,
        machine_of=machine_of,
        cost=float(sum(g.edges[k].cost for k in chosen)),
        reward=float(sum(rewards[j] for j in machine_of)),
        double_copy=double_copy,
        lp_cost=lp_cost,
        perturbed=perturbed,
        notes=notes,
    )


def st_graph_from_edges(
    num_machines: int,
    num_jobs: int,
    edges: list[tuple[int, int, float]],
    values: dict[tuple[int, int], float] | None = None,
    p: float = 1.0,
) -> StGraph:
    """Copy graph with one copy per machine, used for hand-built budgeted fixtures."""
    values = values or {}
    st_edges = [StEdge(j, i, values.get((i, j), 0.0), cost, p) for i, j, cost in edges]
    return StGraph(
        num_machines,
        num_jobs,
        list(range(num_machines)),
        [1] * num_machines,
        [1] * num_machines,
        sorted(st_edges, key=lambda e: (e.copy, e.job)),
    )
