"""Reference policies for the compare command."""
from __future__ import annotations

import math

import numpy as np

from .dist import effective_size
from .evaluate import MC_BLOCK, Z95, EvalResult
from .instance import Assignment, Instance


def first_fit(theta: np.ndarray, allowed: np.ndarray, cap: float) -> list[int] | None:
    """Jobs in index order onto the lowest-index allowed machine with room, or None."""
    m, n = theta.shape
    load = np.zeros(m)
    out = []
    for j in range(n):
        for i in range(m):
            if allowed[i, j] and load[i] + theta[i, j] <= cap * (1 + 1e-9) + 1e-12:
                load[i] += theta[i, j]
                out.append(i)
                break
        else:
            return None
    return out


def surrogate_policy(inst: Instance, iters: int = 100) -> Assignment:
    """Single-value load balancing: every X_ij is replaced by beta_m(X_ij).

    Finds (by bisection) the smallest cap at which first-fit places all jobs.
    On instances of identical jobs this lands on a deterministic optimum that
    stacks as many jobs per machine as the cap allows.
    """
    m, n = inst.m, inst.n
    theta = np.zeros((m, n))
    allowed = np.zeros((m, n), dtype=bool)
    for i, j in inst.allowed_pairs():
        allowed[i, j] = True
        theta[i, j] = effective_size(inst.dist(i, j), m)
    hi = float(np.where(allowed, theta, 0.0).max(axis=0).sum()) + 1e-12
    lo = 0.0
    best = first_fit(theta, allowed, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        got = first_fit(theta, allowed, mid)
        if got is None:
            lo = mid
        else:
            hi, best = mid, got
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return Assignment.from_vector(inst, best)


def mean_list_policy(inst: Instance) -> Assignment:
    """Jobs in index order onto the machine with the smallest resulting expected load."""
    means = inst.mean_matrix()
    load = np.zeros(inst.m)
    vec = []
    for j in range(inst.n):
        i = int(np.argmin(load + means[:, j]))
        load[i] += means[i, j]
        vec.append(i)
    return Assignment.from_vector(inst, vec)


def graham_adaptive(inst: Instance, samples: int = 100_000, seed: int = 0) -> EvalResult:
    """Monte Carlo value of list scheduling that sees realized loads.

    Jobs arrive in index order and go to the allowed machine with the least
    realized load so far (lowest index on ties).
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    total = sq = 0.0
    parts = []
    for block in range(math.ceil(samples / MC_BLOCK)):
        size = min(MC_BLOCK, samples - block * MC_BLOCK)
        rng = np.random.default_rng([seed, block])
        loads = np.zeros((inst.m, size))
        cols = np.arange(size)
        for j, job in enumerate(inst.jobs):
            machines = job.machines
            draws = np.stack([inst.dist(i, j).sample(rng, size) for i in machines])
            pick = np.argmin(loads[machines], axis=0)
            loads[np.asarray(machines)[pick], cols] += draws[pick, cols]
        vals = loads.max(axis=0)
        parts.append((float(vals.sum()), float((vals**2).sum())))
    total = math.fsum(p[0] for p in parts)
    sq = math.fsum(p[1] for p in parts)
    mu = total / samples
    var = max(0.0, (sq - samples * mu * mu) / (samples - 1))
    return EvalResult("monte-carlo", mu, Z95 * math.sqrt(var / samples), samples, seed)
