"""JSON instance and assignment files.

Instance::

    {"machines": 2, "q": 2, "reward_target": 3,
     "jobs": [{"id": "a", "reward": 1, "dists": {"0": [[0, 0.5], [1, 0.5]]}}]}

Forbidden (machine, job) pairs are encoded by omitting the machine key.
Assignment::

    {"placement": {"a": 0}}
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .dist import DiscreteDist
from .instance import Assignment, Instance, Job


class FormatError(ValueError):
    """Malformed instance or assignment document."""


_INSTANCE_KEYS = {"machines", "q", "reward_target", "jobs"}
_JOB_KEYS = {"id", "reward", "dists"}


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise FormatError(f"{where}: unknown field(s) {unknown}")
    for key in sorted(required):
        if key not in obj:
            raise FormatError(f"{where}: missing required field {key!r}")


def _loads(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def instance_from_dict(doc: Any, source: str = "instance") -> Instance:
    _check_keys(doc, _INSTANCE_KEYS, {"machines", "jobs"}, source)
    machines = doc["machines"]
    if isinstance(machines, bool) or not isinstance(machines, int) or machines < 1:
        raise FormatError(f"{source}.machines: expected a positive integer, got {machines!r}")
    q = _number(doc["q"], f"{source}.q") if doc.get("q") is not None else None
    target = doc.get("reward_target")
    target = _number(target, f"{source}.reward_target") if target is not None else None
    if not isinstance(doc["jobs"], list):
        raise FormatError(f"{source}.jobs: expected a list")
    jobs = []
    for n, raw in enumerate(doc["jobs"]):
        where = f"{source}.jobs[{n}]"
        _check_keys(raw, _JOB_KEYS, {"id", "dists"}, where)
        if not isinstance(raw["id"], str):
            raise FormatError(f"{where}.id: expected a string")
        reward = _number(raw.get("reward", 1.0), f"{where}.reward")
        if not isinstance(raw["dists"], dict) or not raw["dists"]:
            raise FormatError(f"{where}.dists: expected a non-empty object")
        dists = {}
        for key, atoms in raw["dists"].items():
            dwhere = f"{where}.dists[{key!r}]"
            if not key.isdigit() or (len(key) > 1 and key[0] == "0"):
                raise FormatError(f"{dwhere}: machine index must be a 0-based decimal string")
            i = int(key)
            if i >= machines:
                raise FormatError(f"{dwhere}: machine index {i} out of range [0, {machines})")
            if not isinstance(atoms, list) or not atoms:
                raise FormatError(f"{dwhere}: expected a non-empty list of [value, prob] pairs")
            pairs = []
            for a, atom in enumerate(atoms):
                if not isinstance(atom, list) or len(atom) != 2:
                    raise FormatError(f"{dwhere}[{a}]: expected [value, prob]")
                pairs.append((_number(atom[0], f"{dwhere}[{a}][0]"), _number(atom[1], f"{dwhere}[{a}][1]")))
            try:
                dists[i] = DiscreteDist.from_atoms(pairs)
            except ValueError as exc:
                raise FormatError(f"{dwhere}: {exc}") from exc
        jobs.append(Job(raw["id"], dists, reward))
    try:
        return Instance(machines, tuple(jobs), reward_target=target, q=q)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def instance_to_dict(inst: Instance) -> dict:
    doc: dict[str, Any] = {"machines": inst.num_machines}
    if inst.q is not None:
        doc["q"] = inst.q
    if inst.reward_target is not None:
        doc["reward_target"] = inst.reward_target
    doc["jobs"] = [
        {
            "id": job.id,
            "reward": job.reward,
            "dists": {str(i): [list(a) for a in d.atoms] for i, d in job.dists.items()},
        }
        for job in inst.jobs
    ]
    return doc


def read_instance(path: str | Path) -> Instance:
    path = Path(path)
    return instance_from_dict(_loads(path.read_text(encoding="utf-8"), str(path)), str(path))


def write_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n", encoding="utf-8")


def assignment_from_dict(doc: Any, source: str = "assignment") -> Assignment:
    _check_keys(doc, {"placement"}, {"placement"}, source)
    placement = doc["placement"]
    if not isinstance(placement, dict):
        raise FormatError(f"{source}.placement: expected an object")
    out = {}
    for job_id, i in placement.items():
        if isinstance(i, bool) or not isinstance(i, int) or i < 0:
            raise FormatError(f"{source}.placement[{job_id!r}]: expected a machine index, got {i!r}")
        out[job_id] = i
    return Assignment(out)


def assignment_to_dict(a: Assignment) -> dict:
    return {"placement": dict(a.placement)}


def read_assignment(path: str | Path) -> Assignment:
    path = Path(path)
    return assignment_from_dict(_loads(path.read_text(encoding="utf-8"), str(path)), str(path))


def write_assignment(a: Assignment, path: str | Path) -> None:
    Path(path).write_text(json.dumps(assignment_to_dict(a), indent=2) + "\n", encoding="utf-8")
