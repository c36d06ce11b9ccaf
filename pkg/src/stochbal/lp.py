"""Small LP layer: a model container plus HiGHS simplex, with row generation.

Solutions are basic (vertex) solutions, which the budgeted rounding relies on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import highspy
import numpy as np

LE, EQ, GE = "<=", "=", ">="
INF = math.inf

FEAS_TOL = 1e-7
DUAL_TOL = 1e-9
PIVOT_CAP = 1_000_000


class LpNumericalError(RuntimeError):
    """The solver stopped without a verdict (pivot cap, round cap, solver error)."""


@dataclass(frozen=True)
class Row:
    coefs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    label: str = ""


class LpModel:
    """Minimization LP with bounded variables and labelled sparse rows."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self.rows: list[Row] = []

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, cost: float = 0.0) -> int:
        if not (math.isfinite(cost) and lb <= ub):
            raise ValueError(f"bad variable {name!r}")
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        return len(self.names) - 1

    def make_row(self, coefs, sense: str, rhs: float, label: str = "") -> Row:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"unknown sense {sense!r}")
        items = coefs.items() if isinstance(coefs, dict) else coefs
        seen = set()
        clean = []
        for idx, val in items:
            idx = int(idx)
            if idx in seen:
                raise ValueError(f"row {label!r}: variable {idx} appears twice")
            if not 0 <= idx < self.num_vars:
                raise ValueError(f"row {label!r}: unknown variable {idx}")
            if not math.isfinite(val):
                raise ValueError(f"row {label!r}: non-finite coefficient")
            seen.add(idx)
            if val != 0.0:
                clean.append((idx, float(val)))
        return Row(tuple(clean), sense, float(rhs), label)

    def add_row(self, coefs, sense: str, rhs: float, label: str = "") -> int:
        self.rows.append(self.make_row(coefs, sense, rhs, label))
        return len(self.rows) - 1

    def set_cost(self, costs: Sequence[float]) -> None:
        if len(costs) != self.num_vars:
            raise ValueError("cost vector length mismatch")
        self.cost = [float(c) for c in costs]

    def copy(self) -> "LpModel":
        out = LpModel()
        out.names = list(self.names)
        out.lb = list(self.lb)
        out.ub = list(self.ub)
        out.cost = list(self.cost)
        out.rows = list(self.rows)
        return out

    def activity(self, x: np.ndarray) -> np.ndarray:
        return np.array([sum(v * x[i] for i, v in r.coefs) for r in self.rows])

    def max_violation(self, x: np.ndarray) -> float:
        worst = 0.0
        for r, act in zip(self.rows, self.activity(x)):
            if r.sense in (LE, EQ):
                worst = max(worst, act - r.rhs)
            if r.sense in (GE, EQ):
                worst = max(worst, r.rhs - act)
        x = np.asarray(x)
        worst = max(worst, float(np.max(np.asarray(self.lb) - x, initial=0.0)))
        worst = max(worst, float(np.max(x - np.asarray(self.ub), initial=0.0)))
        return worst

    def to_lp_text(self) -> str:
        """CPLEX-LP style dump for debugging."""

        def term(c: float, name: str, first: bool) -> str:
            sign = "-" if c < 0 else ("" if first else "+")
            return f"{sign} {abs(c):.12g} {name}".strip()

        lines = ["Minimize", " obj: " + (" ".join(
            term(c, n, k == 0) for k, (c, n) in enumerate((c, n) for c, n in zip(self.cost, self.names) if c != 0)
        ) or "0")]
        lines.append("Subject To")
        for r_idx, r in enumerate(self.rows):
            label = r.label or f"r{r_idx}"
            body = " ".join(term(v, self.names[i], k == 0) for k, (i, v) in enumerate(r.coefs)) or "0"
            lines.append(f" {label}: {body} {r.sense} {r.rhs:.12g}")
        lines.append("Bounds")
        for n, lo, hi in zip(self.names, self.lb, self.ub):
            hi_s = "+inf" if hi == INF else f"{hi:.12g}"
            lo_s = "-inf" if lo == -INF else f"{lo:.12g}"
            lines.append(f" {lo_s} <= {n} <= {hi_s}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    basic: np.ndarray | None = None
    iterations: int = 0
    rounds: int = 0
    cuts: list[Row] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _bounds(row: Row) -> tuple[float, float]:
    if row.sense == LE:
        return -highspy.kHighsInf, row.rhs
    if row.sense == GE:
        return row.rhs, highspy.kHighsInf
    return row.rhs, row.rhs


def _hinf(v: float) -> float:
    if v == INF:
        return highspy.kHighsInf
    if v == -INF:
        return -highspy.kHighsInf
    return v


class LpSession:
    """A HiGHS instance kept alive across re-solves (warm starts after row or cost changes)."""

    def __init__(self, model: LpModel):
        self.model = model
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL)
        h.setOptionValue("dual_feasibility_tolerance", DUAL_TOL)
        h.setOptionValue("simplex_iteration_limit", PIVOT_CAP)
        n = model.num_vars
        if n:
            h.addVars(n, np.array([_hinf(v) for v in model.lb]), np.array([_hinf(v) for v in model.ub]))
            h.changeColsCost(n, np.arange(n, dtype=np.int32), np.array(model.cost, dtype=np.float64))
        self.h = h
        self._push(model.rows)

    def _push(self, rows: Iterable[Row]) -> None:
        rows = list(rows)
        if not rows:
            return
        lower, upper, starts, idx, val = [], [], [], [], []
        for r in rows:
            lo, hi = _bounds(r)
            lower.append(lo)
            upper.append(hi)
            starts.append(len(idx))
            for i, v in r.coefs:
                idx.append(i)
                val.append(v)
        self.h.addRows(
            len(rows),
            np.array(lower, dtype=np.float64),
            np.array(upper, dtype=np.float64),
            len(idx),
            np.array(starts, dtype=np.int32),
            np.array(idx, dtype=np.int32),
            np.array(val, dtype=np.float64),
        )

    def add_rows(self, rows: Iterable[Row]) -> None:
        rows = list(rows)
        self.model.rows.extend(rows)
        self._push(rows)

    def set_costs(self, costs: Sequence[float]) -> None:
        self.model.set_cost(costs)
        n = self.model.num_vars
        self.h.changeColsCost(n, np.arange(n, dtype=np.int32), np.asarray(costs, dtype=np.float64))

    def run(self) -> LpSolution:
        h = self.h
        h.run()
        status = h.getModelStatus()
        S = highspy.HighsModelStatus
        if status == S.kUnboundedOrInfeasible:
            # presolve could not tell which; ask the simplex directly
            h.setOptionValue("presolve", "off")
            h.run()
            status = h.getModelStatus()
            h.setOptionValue("presolve", "choose")
        iters = int(h.getInfo().simplex_iteration_count)
        if status == S.kOptimal:
            sol = h.getSolution()
            x = np.array(sol.col_value, dtype=np.float64)
            basis = h.getBasis()
            basic = np.array([s == highspy.HighsBasisStatus.kBasic for s in basis.col_status], dtype=bool)
            obj = float(np.dot(self.model.cost, x)) if self.model.num_vars else 0.0
            return LpSolution("optimal", x, obj, basic, iters)
        if status == S.kModelEmpty:
            return LpSolution("optimal", np.zeros(0), 0.0, np.zeros(0, dtype=bool), 0)
        if status == S.kInfeasible:
            return LpSolution("infeasible", iterations=iters)
        if status in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return LpSolution("unbounded", iterations=iters)
        raise LpNumericalError(f"LP solver stopped with status {h.modelStatusToString(status)}")


def solve(model: LpModel) -> LpSolution:
    return LpSession(model).run()


Oracle = Callable[[np.ndarray], "Row | Sequence[Row] | None"]


def solve_with_cuts(model: LpModel, oracle: Oracle, max_rounds: int = 1000) -> LpSolution:
    """Row generation: re-solve until ``oracle`` returns no violated row.

    Cuts are appended to ``model`` so re-solving it from scratch reproduces the result.
    """
    session = LpSession(model)
    added: list[Row] = []
    total_iters = 0
    for rounds in range(1, max_rounds + 1):
        sol = session.run()
        total_iters += sol.iterations
        if not sol.optimal:
            sol.rounds, sol.cuts, sol.iterations = rounds - 1, added, total_iters
            return sol
        cuts = oracle(sol.x)
        if cuts is None:
            cuts = []
        elif isinstance(cuts, Row):
            cuts = [cuts]
        if not cuts:
            sol.rounds, sol.cuts, sol.iterations = rounds - 1, added, total_iters
            return sol
        session.add_rows(cuts)
        added.extend(cuts)
    raise LpNumericalError(f"row generation did not converge in {max_rounds} rounds")


def interior_count(model: LpModel, x: np.ndarray, tol: float = 1e-9) -> int:
    """Variables strictly between their bounds."""
    lb = np.asarray(model.lb)
    ub = np.asarray(model.ub)
    return int(np.sum((x > lb + tol) & (x < ub - tol)))
