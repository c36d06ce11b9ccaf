"""Command-line entry point: solve, evaluate, generate, compare.

Exit codes: 0 success, 1 input/output or validation errors, 2 when no
feasible scale is found or rounding cannot be carried out.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

from . import __version__
from .baselines import graham_adaptive, mean_list_policy, surrogate_policy
from .budgeted import solve_budgeted
from .evaluate import evaluate
from .instance import FAMILIES, Instance, gen_adaptivity_gap, gen_random, gen_surrogate_gap
from .io import FormatError, instance_to_dict, read_assignment, read_instance, write_assignment
from .lp import LpNumericalError
from .makespan import DEFAULT_B, DEFAULT_EPS, solve_makespan
from .qnorm import DEFAULT_CP_EPS, solve_qnorm
from .report import BracketError, dumps_json, solve_report_csv
from .rounding import MatchingError, StructureError

EXIT_OK, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2
COMPARE_HEADER = ["instance", "policy", "objective", "value", "ci"]
GENERATOR_TYPES = ("surrogate-gap", "adaptivity-gap", "random")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_IO):
        super().__init__(message)
        self.code = code


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", type=int, default=100_000, help="Monte Carlo samples when exact evaluation is too large")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochbal", description="Stochastic load balancing on unrelated machines.")
    parser.add_argument("--version", action="version", version=f"stochbal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute an assignment and a report")
    p.add_argument("--instance", required=True)
    p.add_argument("--objective", choices=("makespan", "budgeted", "qnorm"), default="makespan")
    p.add_argument("--q", type=float, help="norm exponent (defaults to the instance's q)")
    p.add_argument("--b", type=float, default=DEFAULT_B, help="effective-load bound per class")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPS, help="binary-search relative width")
    p.add_argument("--cp-epsilon", type=float, default=DEFAULT_CP_EPS, help="relative duality gap of the convex program")
    p.add_argument("--assignment", help="also write the assignment to this file")
    p.add_argument("--dump-lp", help="write the final LP (makespan/budgeted) in LP text format")
    _add_common(p)

    p = sub.add_parser("evaluate", help="expected objective of a given assignment")
    p.add_argument("--instance", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--objective", choices=("makespan", "qnorm"), default="makespan")
    p.add_argument("--q", type=float)
    _add_common(p)

    p = sub.add_parser("generate", help="write a generated instance")
    p.add_argument("--type", choices=GENERATOR_TYPES, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, help="number of jobs (random only)")
    p.add_argument("--family", choices=FAMILIES, default="bernoulli")
    p.add_argument("--rewards", action="store_true", help="random rewards and a reward target")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("compare", help="solver vs baseline policies, as CSV")
    p.add_argument("--instance", action="append", default=[], help="instance file (repeatable)")
    p.add_argument("--type", choices=GENERATOR_TYPES[:2], help="generate instances instead")
    p.add_argument("--m", type=int, action="append", default=[], help="machine count for --type (repeatable)")
    p.add_argument("--b", type=float, default=DEFAULT_B)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPS)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _load_instance(path: str) -> tuple[Instance, str]:
    try:
        raw = Path(path).read_bytes()
        return read_instance(path), hashlib.sha256(raw).hexdigest()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    except FormatError as exc:
        raise CliError(str(exc)) from exc


def _config(args: argparse.Namespace, **extra) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "out"}
    cfg.update(extra)
    return cfg


def _resolve_q(args, inst: Instance) -> float:
    q = args.q if args.q is not None else inst.q
    if q is None:
        raise CliError("q-norm objective needs --q or a q field in the instance")
    return float(q)


def cmd_solve(args: argparse.Namespace) -> int:
    inst, digest = _load_instance(args.instance)
    common = dict(samples=args.samples, seed=args.seed)
    try:
        if args.objective == "makespan":
            report = solve_makespan(inst, b=args.b, eps=args.epsilon, **common)
        elif args.objective == "budgeted":
            report = solve_budgeted(inst, b=args.b, eps=args.epsilon, **common)
        else:
            args.q = _resolve_q(args, inst)
            report = solve_qnorm(inst, args.q, eps=args.epsilon, eps_cp=args.cp_epsilon, **common)
    except (BracketError, MatchingError, StructureError, LpNumericalError) as exc:
        raise CliError(f"{type(exc).__name__}: {exc}", EXIT_INFEASIBLE) from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    doc = {"tool": "stochbal", "version": __version__, "config": _config(args, instance_sha256=digest)}
    doc.update(report.to_dict())
    if args.assignment:
        try:
            write_assignment(report.assignment, args.assignment)
        except OSError as exc:
            raise CliError(f"cannot write {args.assignment}: {exc}") from exc
    if args.dump_lp and report.lp_model is not None:
        _emit(report.lp_model.to_lp_text(), args.dump_lp)
    if args.format == "json":
        _emit(dumps_json(doc), args.out)
    else:
        _emit(solve_report_csv(doc), args.out)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    inst, digest = _load_instance(args.instance)
    try:
        a = read_assignment(args.assignment)
    except OSError as exc:
        raise CliError(f"cannot read {args.assignment}: {exc}") from exc
    except FormatError as exc:
        raise CliError(str(exc)) from exc
    q = _resolve_q(args, inst) if args.objective == "qnorm" else None
    try:
        a.validate(inst, partial=True)
        res = evaluate(inst, a, args.objective, q=q, samples=args.samples, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    doc = {"tool": "stochbal", "version": __version__, "config": _config(args, instance_sha256=digest),
           "evaluation": res.to_dict()}
    if args.format == "json":
        _emit(dumps_json(doc), args.out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in res.to_dict().items():
            w.writerow([k, v])
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def generate_instance(kind: str, m: int, n: int | None = None, seed: int = 0,
                      family: str = "bernoulli", rewards: bool = False) -> Instance:
    if kind == "surrogate-gap":
        return gen_surrogate_gap(m)
    if kind == "adaptivity-gap":
        return gen_adaptivity_gap(m)
    if n is None:
        raise ValueError("random instances need --n")
    return gen_random(m, n, seed, family=family, rewards=rewards)


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        inst = generate_instance(args.type, args.m, args.n, args.seed, args.family, args.rewards)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _emit(json.dumps(instance_to_dict(inst), indent=2) + "\n", args.out)
    return EXIT_OK


def compare_rows(name: str, inst: Instance, b: float, eps: float, samples: int, seed: int) -> list[list]:
    rows = []
    try:
        report = solve_makespan(inst, b=b, eps=eps, samples=samples, seed=seed)
    except BracketError as exc:
        raise CliError(f"{name}: {exc}", EXIT_INFEASIBLE) from exc
    for policy, res in (
        ("solver", report.evaluation),
        ("surrogate", evaluate(inst, surrogate_policy(inst), samples=samples, seed=seed)),
        ("mean-list", evaluate(inst, mean_list_policy(inst), samples=samples, seed=seed)),
        ("graham-adaptive", graham_adaptive(inst, samples, seed)),
    ):
        rows.append([name, policy, "makespan", repr(res.value), repr(res.half_width)])
    return rows


def cmd_compare(args: argparse.Namespace) -> int:
    targets: list[tuple[str, Instance]] = []
    for path in args.instance:
        inst, _ = _load_instance(path)
        targets.append((Path(path).stem, inst))
    if args.type:
        if not args.m:
            raise CliError("--type needs at least one --m")
        for m in args.m:
            try:
                targets.append((f"{args.type}-m{m}", generate_instance(args.type, m)))
            except ValueError as exc:
                raise CliError(str(exc)) from exc
    if not targets:
        raise CliError("nothing to compare: give --instance or --type/--m")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    for name, inst in targets:
        w.writerows(compare_rows(name, inst, args.b, args.epsilon, args.samples, args.seed))
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "evaluate": cmd_evaluate, "generate": cmd_generate, "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"stochbal: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
