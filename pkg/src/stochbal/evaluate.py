"""Ground-truth objective evaluation for a fixed assignment.

Machines are independent given an assignment, so Pr[max_i L_i <= t] is the
product of the per-machine CDFs.  Exact evaluation convolves per-machine loads
and gives up (``SupportOverflow``) past a support cap; callers then fall back
to Monte Carlo.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .dist import DEFAULT_SUPPORT_CAP, DiscreteDist, SupportOverflow, convolve, convolve_all, truncate_split
from .instance import Assignment, Instance

MC_BLOCK = 4096
Z95 = 1.96
BRUTE_FORCE_CAP = 10**6


@dataclass(frozen=True)
class EvalResult:
    method: str  # "exact" | "monte-carlo" | "brute-force"
    value: float
    half_width: float = 0.0
    samples: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def machine_loads(inst: Instance, a: Assignment, cap: int = DEFAULT_SUPPORT_CAP) -> list[DiscreteDist]:
    a.validate(inst, partial=True)
    return [convolve_all((inst.dist(i, j) for j in jobs), cap) for i, jobs in enumerate(a.jobs_on(inst))]


def expected_max(loads: list[DiscreteDist]) -> float:
    """E[max_i L_i] for independent L_i via the product CDF."""
    grid = np.unique(np.concatenate([d.values for d in loads]))
    cdf = np.ones(grid.size)
    for d in loads:
        cum = np.cumsum(d.probs)
        idx = np.searchsorted(d.values, grid, side="right") - 1
        cdf *= np.where(idx >= 0, cum[np.maximum(idx, 0)], 0.0)
    pmf = np.diff(cdf, prepend=0.0)
    return float(np.dot(grid, pmf))


def expected_qnorm(loads: list[DiscreteDist], q: float, cap: int = DEFAULT_SUPPORT_CAP) -> float:
    """E[(sum_i L_i^q)^(1/q)] for independent L_i."""
    total = DiscreteDist.point(0.0)
    for d in loads:
        total = convolve(total, d.map(lambda v: v**q), cap)
    return float(np.dot(total.values ** (1.0 / q), total.probs))


def exact_expected_makespan(inst: Instance, a: Assignment, cap: int = DEFAULT_SUPPORT_CAP) -> EvalResult:
    return EvalResult("exact", expected_max(machine_loads(inst, a, cap)))


def exact_expected_qnorm(inst: Instance, a: Assignment, q: float, cap: int = DEFAULT_SUPPORT_CAP) -> EvalResult:
    return EvalResult("exact", expected_qnorm(machine_loads(inst, a, cap), q, cap))


def default_threads() -> int:
    raw = os.environ.get("STOCHBAL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def _mc_block(inst, groups, objective, q, seed, block, size):
    # one independent stream per (seed, block); blocks are fixed-size so the
    # result does not depend on how blocks are spread over threads
    rng = np.random.default_rng([seed, block])
    loads = np.zeros((inst.m, size))
    for i, jobs in enumerate(groups):
        for j in jobs:
            loads[i] += inst.dist(i, j).sample(rng, size)
    if objective == "makespan":
        vals = loads.max(axis=0)
    else:
        vals = (loads**q).sum(axis=0) ** (1.0 / q)
    return float(vals.sum()), float((vals**2).sum())


def mc_estimate(
    inst: Instance,
    a: Assignment,
    objective: str = "makespan",
    q: float | None = None,
    samples: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
) -> EvalResult:
    """Monte Carlo estimate with a 95% normal interval; reproducible for a fixed seed."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    if objective not in ("makespan", "qnorm"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "qnorm" and (q is None or q < 1):
        raise ValueError("q-norm objective needs q >= 1")
    a.validate(inst, partial=True)
    groups = a.jobs_on(inst)
    nblocks = math.ceil(samples / MC_BLOCK)
    sizes = [min(MC_BLOCK, samples - b * MC_BLOCK) for b in range(nblocks)]
    threads = threads or default_threads()
    args = [(inst, groups, objective, q, seed, b, sizes[b]) for b in range(nblocks)]
    if threads == 1 or nblocks == 1:
        parts = [_mc_block(*x) for x in args]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda x: _mc_block(*x), args))
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mu = s1 / samples
    var = max(0.0, (s2 - samples * mu * mu) / (samples - 1))
    return EvalResult("monte-carlo", mu, Z95 * math.sqrt(var / samples), samples, seed)


def evaluate(
    inst: Instance,
    a: Assignment,
    objective: str = "makespan",
    q: float | None = None,
    samples: int = 100_000,
    seed: int = 0,
    cap: int = DEFAULT_SUPPORT_CAP,
    threads: int | None = None,
) -> EvalResult:
    """Exact when the supports fit under ``cap``, Monte Carlo otherwise."""
    try:
        if objective == "makespan":
            return exact_expected_makespan(inst, a, cap)
        return exact_expected_qnorm(inst, a, q, cap)
    except SupportOverflow:
        return mc_estimate(inst, a, objective, q, samples, seed, threads)


def brute_force_optimum(
    inst: Instance,
    objective: str = "makespan",
    q: float | None = None,
    budgeted: bool = False,
    cap: int = BRUTE_FORCE_CAP,
) -> tuple[Assignment, EvalResult]:
    """Exhaustive optimum of the exact objective.

    With ``budgeted`` a job may stay unassigned as long as the assigned reward
    reaches the instance target.  Ties go to the lexicographically first
    placement vector (unassigned sorts first).
    """
    choices = [([-1] if budgeted else []) + job.machines for job in inst.jobs]
    count = math.prod(len(c) for c in choices)
    if count > cap:
        raise ValueError(f"{count} candidate assignments exceed the brute-force cap {cap}")
    rewards = inst.rewards
    target = inst.target
    cache: dict[tuple[int, tuple[int, ...]], DiscreteDist] = {}

    def load(i, jobs):
        key = (i, jobs)
        if key not in cache:
            cache[key] = convolve_all(inst.dist(i, j) for j in jobs)
        return cache[key]

    best_val, best_vec = math.inf, None
    for vec in itertools.product(*choices):
        if budgeted and float(sum(rewards[j] for j, i in enumerate(vec) if i >= 0)) < target - 1e-12:
            continue
        groups = [[] for _ in range(inst.m)]
        for j, i in enumerate(vec):
            if i >= 0:
                groups[i].append(j)
        loads = [load(i, tuple(g)) for i, g in enumerate(groups)]
        val = expected_max(loads) if objective == "makespan" else expected_qnorm(loads, q)
        if val < best_val - 1e-12:
            best_val, best_vec = val, vec
    if best_vec is None:
        raise ValueError("no assignment meets the reward target")
    return Assignment.from_vector(inst, best_vec), EvalResult("brute-force", best_val, samples=count)


def exceptional_lower_bound(inst: Instance, threshold: float) -> float:
    """L/2 when the cheapest exceptional masses above L already sum to L, else 0."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    total = 0.0
    for job in inst.jobs:
        total += min(float(np.dot(*_exc(d, threshold))) for d in job.dists.values())
    return threshold / 2 if total >= threshold else 0.0


def _exc(d: DiscreteDist, threshold: float):
    _, exc = truncate_split(d, threshold)
    return exc.values, exc.probs
