"""Problem instances, assignments and instance generators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dist import DiscreteDist, mean

BUDGETED_GAP_EPS = 1e-6


@dataclass(frozen=True)
class Job:
    id: str
    dists: Mapping[int, DiscreteDist]
    reward: float = 1.0

    def __post_init__(self):
        if not self.dists:
            raise ValueError(f"job {self.id!r} has no allowed machine")
        if self.reward < 0:
            raise ValueError(f"job {self.id!r} has negative reward")
        # canonical machine order
        object.__setattr__(self, "dists", dict(sorted(self.dists.items())))

    @property
    def machines(self) -> list[int]:
        return list(self.dists)


@dataclass(frozen=True)
class Instance:
    num_machines: int
    jobs: tuple[Job, ...]
    reward_target: float | None = None
    q: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        if self.num_machines < 1:
            raise ValueError("need at least one machine")
        ids = [j.id for j in self.jobs]
        if len(set(ids)) != len(ids):
            raise ValueError("job ids must be unique")
        for job in self.jobs:
            for i in job.dists:
                if not 0 <= i < self.num_machines:
                    raise ValueError(f"job {job.id!r}: machine index {i} out of range")
        if self.reward_target is not None and self.reward_target < 0:
            raise ValueError("reward_target must be nonnegative")
        if self.q is not None and self.q < 1:
            raise ValueError("q must be >= 1")

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def m(self) -> int:
        return self.num_machines

    @property
    def rewards(self) -> np.ndarray:
        return np.array([j.reward for j in self.jobs], dtype=float)

    @property
    def target(self) -> float:
        """Reward target; defaults to the total reward (schedule every job)."""
        if self.reward_target is None:
            return float(self.rewards.sum())
        return float(self.reward_target)

    def allowed(self, i: int, j: int) -> bool:
        return i in self.jobs[j].dists

    def allowed_pairs(self) -> list[tuple[int, int]]:
        """(machine, job-index) pairs, machine-major."""
        return [(i, j) for i in range(self.m) for j, job in enumerate(self.jobs) if i in job.dists]

    def job_index(self) -> dict[str, int]:
        return {job.id: j for j, job in enumerate(self.jobs)}

    def dist(self, i: int, j: int) -> DiscreteDist:
        return self.jobs[j].dists[i]

    def mean_matrix(self) -> np.ndarray:
        """E[X_ij], +inf on forbidden pairs."""
        out = np.full((self.m, self.n), np.inf)
        for j, job in enumerate(self.jobs):
            for i, d in job.dists.items():
                out[i, j] = mean(d)
        return out


@dataclass
class Assignment:
    placement: dict[str, int] = field(default_factory=dict)

    def validate(self, inst: Instance, partial: bool = False) -> None:
        index = inst.job_index()
        for job_id, i in self.placement.items():
            if job_id not in index:
                raise ValueError(f"unknown job {job_id!r} in assignment")
            if not inst.allowed(i, index[job_id]):
                raise ValueError(f"job {job_id!r} placed on forbidden machine {i}")
        if not partial and len(self.placement) != inst.n:
            missing = [j.id for j in inst.jobs if j.id not in self.placement]
            raise ValueError(f"unassigned jobs: {missing}")

    def jobs_on(self, inst: Instance) -> list[list[int]]:
        """Job indices per machine."""
        index = inst.job_index()
        out: list[list[int]] = [[] for _ in range(inst.m)]
        for job in inst.jobs:
            if job.id in self.placement:
                out[self.placement[job.id]].append(index[job.id])
        return out

    @classmethod
    def from_vector(cls, inst: Instance, machines) -> "Assignment":
        """Build from a per-job machine vector; negative entries mean unassigned."""
        return cls({job.id: int(i) for job, i in zip(inst.jobs, machines) if i >= 0})


# ---------------------------------------------------------------- generators


def gen_surrogate_gap(m: int) -> Instance:
    """m machines, m + sqrt(m) Bernoulli(1/sqrt(m), 1) jobs; the first sqrt(m) only fit machine 0."""
    r = math.isqrt(m)
    if m < 4 or r * r != m:
        raise ValueError(f"m must be a perfect square >= 4, got {m}")
    d = DiscreteDist.bernoulli(1.0 / r, 1.0)
    jobs = [Job(f"r{j}", {0: d}) for j in range(r)]
    jobs += [Job(f"f{j}", {i: d for i in range(m)}) for j in range(m)]
    return Instance(m, tuple(jobs))


def gen_adaptivity_gap(m: int) -> Instance:
    """Identical machines with m^2 Bernoulli(1/m, 1) jobs."""
    if m < 2:
        raise ValueError("m must be >= 2")
    d = DiscreteDist.bernoulli(1.0 / m, 1.0)
    return Instance(m, tuple(Job(f"j{j}", {i: d for i in range(m)}) for j in range(m * m)))


@dataclass(frozen=True)
class BudgetedGapFixture:
    """Bipartite budgeted-GAP instance whose matching LP has an unbounded integrality gap.

    Machine i (0-based) is adjacent to job i at cost 1 and to job i+1 at cost n.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]  # (machine, job, cost)
    rewards: tuple[float, ...]
    target: float
    eps: float

    @property
    def m(self) -> int:
        return self.n - 1

    def cheap_matching(self) -> list[tuple[int, int]]:
        return [(i, i) for i in range(self.m)]

    def costly_matching(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i in range(self.m)]


def gen_budgeted_gap(n: int, eps: float = BUDGETED_GAP_EPS) -> BudgetedGapFixture:
    if n < 3:
        raise ValueError("n must be >= 3")
    m = n - 1
    edges = []
    for i in range(m):
        edges.append((i, i, 1.0))
        edges.append((i, i + 1, float(n)))
    rewards = tuple([1.0] + [4.0] * (n - 2) + [2.0])
    return BudgetedGapFixture(n, tuple(edges), rewards, 4.0 * (n - 2) + 1.0 + eps, eps)


FAMILIES = ("bernoulli", "two-point", "uniform-grid")


def gen_random(
    m: int,
    n: int,
    seed: int,
    family: str = "bernoulli",
    forbid_prob: float = 0.2,
    rewards: bool = False,
    max_size: float = 3.0,
) -> Instance:
    """Reproducible random instance; identical arguments give identical instances."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    rng = np.random.default_rng([seed, m, n, FAMILIES.index(family)])
    jobs = []
    for j in range(n):
        allowed = rng.random(m) >= forbid_prob
        if not allowed.any():
            allowed[rng.integers(m)] = True
        dists = {}
        for i in range(m):
            draw = _random_dist(rng, family, max_size)
            if allowed[i]:
                dists[i] = draw
        reward = float(rng.integers(1, 6)) if rewards else 1.0
        jobs.append(Job(f"j{j}", dists, reward))
    target = None
    if rewards:
        total = sum(job.reward for job in jobs)
        target = float(math.ceil(0.6 * total))
    return Instance(m, tuple(jobs), reward_target=target)


def _random_dist(rng: np.random.Generator, family: str, max_size: float) -> DiscreteDist:
    if family == "bernoulli":
        size = round(float(rng.uniform(0.2, max_size)), 3)
        prob = round(float(rng.uniform(0.1, 0.9)), 3)
        return DiscreteDist.bernoulli(prob, size)
    if family == "two-point":
        lo, hi = sorted(round(float(x), 3) for x in rng.uniform(0.0, max_size, 2))
        prob = round(float(rng.uniform(0.1, 0.9)), 3)
        return DiscreteDist([lo, hi], [1.0 - prob, prob])
    k = int(rng.integers(2, 5))
    values = np.round(rng.uniform(0.0, max_size, k), 3)
    return DiscreteDist(values, np.full(k, 1.0 / k))
