"""Independent reference computations used as test oracles.

Nothing here calls into the solver code paths being checked: expectations are
computed by plain enumeration over joint outcomes or over subsets.
"""
from __future__ import annotations

import itertools
import math


def beta_direct(atoms, k):
    """log_k E[k^X] summed atom by atom; E[X] for k = 1."""
    if k == 1:
        return sum(v * p for v, p in atoms)
    return math.log(sum(p * k**v for v, p in atoms), k)


def joint_outcomes(inst, placement):
    """Yield (per-machine loads, probability) over every joint realization."""
    index = inst.job_index()
    placed = [(index[jid], i) for jid, i in sorted(placement.items())]
    supports = [inst.dist(i, j).atoms for j, i in placed]
    for combo in itertools.product(*supports):
        loads = [0.0] * inst.m
        prob = 1.0
        for (j, i), (v, p) in zip(placed, combo):
            loads[i] += v
            prob *= p
        yield loads, prob


def joint_size(inst, placement):
    index = inst.job_index()
    return math.prod(inst.dist(i, index[jid]).size for jid, i in placement.items())


def enumerate_makespan(inst, placement):
    return math.fsum(p * max(loads) for loads, p in joint_outcomes(inst, placement))


def enumerate_qnorm(inst, placement, q):
    return math.fsum(p * sum(x**q for x in loads) ** (1 / q) for loads, p in joint_outcomes(inst, placement))


def subsets_violated(z, bound, tol=0.0):
    """True iff some K with |K| = k has sum_{i in K} z[i][k-1] > bound*k + tol*k."""
    m = len(z)
    for k in range(1, m + 1):
        for K in itertools.combinations(range(m), k):
            if sum(z[i][k - 1] for i in K) > bound * k + tol * k:
                return True
    return False
