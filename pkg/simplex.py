"""Dense two-phase primal simplex for the small LPs built by the theory solver."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractViolation, SolverError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
# switch from Dantzig's rule to Bland's rule after this many degenerate pivots
BLAND_AFTER = 5000
MAX_PIVOTS = 50000


class Sense(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


@dataclass
class Row:
    coeffs: np.ndarray
    sense: Sense
    rhs: float
    label: str = ""

    def residual(self, point) -> float:
        """Amount by which `point` violates the row (0 when satisfied)."""
        lhs = float(np.dot(self.coeffs, point))
        if self.sense is Sense.LE:
            return max(0.0, lhs - self.rhs)
        if self.sense is Sense.GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


class LinProgram:
    """Variables with (possibly infinite) bounds plus linear rows.

    `expressions` keeps named affine forms (coeffs, constant) over the
    variables, e.g. the pre-activation of a neuron, for inspection and for
    building rows.
    """

    def __init__(self):
        self.names: List[str] = []
        self.lower: List[float] = []
        self.upper: List[float] = []
        self.rows: List[Row] = []
        self.expressions: Dict[str, Tuple[np.ndarray, float]] = {}

    @property
    def num_vars(self):
        return len(self.names)

    def add_variable(self, name: str, lower: float = -np.inf, upper: float = np.inf) -> int:
        if lower > upper:
            raise ContractViolation(f"variable {name} has lower bound above upper bound")
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        # grow stored forms so they stay aligned with the variable list
        for row in self.rows:
            row.coeffs = np.append(row.coeffs, 0.0)
        for key, (coeffs, const) in self.expressions.items():
            self.expressions[key] = (np.append(coeffs, 0.0), const)
        return len(self.names) - 1

    def index(self, name: str) -> int:
        return self.names.index(name)

    def unit(self, index: int) -> np.ndarray:
        vector = np.zeros(self.num_vars)
        vector[index] = 1.0
        return vector

    def set_expression(self, name: str, coeffs, const: float):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (self.num_vars,):
            raise ContractViolation(f"expression {name} does not match the variable count")
        self.expressions[name] = (coeffs.copy(), float(const))

    def expression(self, name: str) -> Tuple[np.ndarray, float]:
        return self.expressions[name]

    def add_row(self, coeffs, sense: Union[Sense, str], rhs: float, label: str = ""):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (self.num_vars,):
            raise ContractViolation(f"row {label or len(self.rows)} does not match the variable count")
        self.rows.append(Row(coeffs.copy(), Sense(sense), float(rhs), label))

    def add_affine(self, coeffs, const: float, sense: Union[Sense, str], rhs: float = 0.0, label: str = ""):
        """Add `coeffs . v + const  sense  rhs`."""
        self.add_row(coeffs, sense, rhs - const, label)

    def violation(self, point) -> float:
        point = np.asarray(point, dtype=np.float64)
        worst = 0.0
        for j, value in enumerate(point):
            worst = max(worst, self.lower[j] - value, value - self.upper[j])
        for row in self.rows:
            worst = max(worst, row.residual(point))
        return worst

    def __repr__(self):
        return f"LinProgram(vars={self.num_vars}, rows={len(self.rows)})"


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass
class LpResult:
    status: LpStatus
    point: Optional[np.ndarray] = None
    objective: Optional[float] = None
    pivots: int = 0

    @property
    def feasible(self):
        return self.status is LpStatus.OPTIMAL


# ---------------------------------------------------------------------------
# Tableau mechanics
# ---------------------------------------------------------------------------

def _pivot(T: np.ndarray, row: int, col: int):
    T[row, :] /= T[row, col]
    column = T[:, col].copy()
    column[row] = 0.0
    T -= np.outer(column, T[row, :])


def _enter(z_row: np.ndarray, allowed: np.ndarray, bland: bool) -> int:
    reduced = np.where(allowed, z_row[:-1], 0.0)
    candidates = np.flatnonzero(reduced < -PIVOT_TOL)
    if candidates.size == 0:
        return -1
    if bland:
        return int(candidates[0])
    return int(candidates[np.argmin(reduced[candidates])])


def _leave(T: np.ndarray, col: int, basis: List[int]) -> int:
    column = T[:-1, col]
    rhs = T[:-1, -1]
    best, best_key = -1, None
    for i in np.flatnonzero(column > PIVOT_TOL):
        key = (rhs[i] / column[i], basis[i])
        if best_key is None or key < best_key:
            best, best_key = int(i), key
    return best


class _Run:
    """Pivot loop state shared by both phases of one solve."""

    def __init__(self):
        self.pivots = 0
        self.degenerate = 0

    @property
    def bland(self):
        return self.degenerate >= BLAND_AFTER

    def optimize(self, T: np.ndarray, basis: List[int], allowed: np.ndarray) -> bool:
        """Maximize the objective row; returns False when unbounded."""
        while True:
            col = _enter(T[-1, :], allowed, self.bland)
            if col == -1:
                return True
            row = _leave(T, col, basis)
            if row == -1:
                return False
            if T[row, -1] <= PIVOT_TOL:
                self.degenerate += 1
            _pivot(T, row, col)
            basis[row] = col
            self.pivots += 1
            if self.pivots > MAX_PIVOTS:
                raise SolverError(f"simplex exceeded {MAX_PIVOTS} pivots")


def _standard_form(lp: LinProgram):
    """Rewrite bounded variables as non-negative columns.

    Returns the column map, per-variable offsets and the row list (A, sense, b)
    over the new columns.
    """
    columns: List[List[Tuple[int, float]]] = []
    offsets = np.zeros(lp.num_vars)
    extra_rows = []
    n = 0
    for j in range(lp.num_vars):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offsets[j] = lo
            columns.append([(n, 1.0)])
            if np.isfinite(hi):
                extra_rows.append((n, hi - lo))
            n += 1
        elif np.isfinite(hi):
            offsets[j] = hi
            columns.append([(n, -1.0)])
            n += 1
        else:
            columns.append([(n, 1.0), (n + 1, -1.0)])
            n += 2

    def lift(coeffs):
        lifted = np.zeros(n)
        for j, value in enumerate(coeffs):
            for col, sign in columns[j]:
                lifted[col] += sign * value
        return lifted

    rows = []
    for row in lp.rows:
        rows.append((lift(row.coeffs), row.sense, row.rhs - float(np.dot(row.coeffs, offsets))))
    for col, width in extra_rows:
        unit = np.zeros(n)
        unit[col] = 1.0
        rows.append((unit, Sense.LE, width))
    return columns, offsets, n, rows, lift


def solve_lp(lp: LinProgram, objective=None, maximize: bool = False) -> LpResult:
    """Feasibility (and optionally optimization) by two-phase simplex.

    Raises SolverError when the objective is unbounded or the pivot guard trips.
    """
    columns, offsets, n, rows, lift = _standard_form(lp)
    m = len(rows)

    A = np.array([r[0] for r in rows], dtype=np.float64).reshape(m, n)
    b = np.array([r[2] for r in rows], dtype=np.float64)
    senses = [r[1] for r in rows]
    for i in range(m):
        if b[i] < 0:
            A[i, :] *= -1
            b[i] *= -1
            if senses[i] is Sense.LE:
                senses[i] = Sense.GE
            elif senses[i] is Sense.GE:
                senses[i] = Sense.LE

    num_slack = sum(1 for s in senses if s is not Sense.EQ)
    num_art = sum(1 for s in senses if s is not Sense.LE)
    art_start = n + num_slack
    total = art_start + num_art

    T = np.zeros((m + 1, total + 1))
    basis: List[int] = []
    slack, art = n, art_start
    for i in range(m):
        T[i, :n] = A[i, :]
        T[i, -1] = b[i]
        if senses[i] is Sense.LE:
            T[i, slack] = 1.0
            basis.append(slack)
            slack += 1
        elif senses[i] is Sense.GE:
            T[i, slack] = -1.0
            T[i, art] = 1.0
            basis.append(art)
            slack += 1
            art += 1
        else:
            T[i, art] = 1.0
            basis.append(art)
            art += 1

    run = _Run()

    # phase 1: maximize -sum(artificials)
    T[-1, art_start:total] = 1.0
    for i, col in enumerate(basis):
        if col >= art_start:
            T[-1, :] -= T[i, :]
    if not run.optimize(T, basis, np.ones(total, dtype=bool)):
        raise SolverError("phase 1 reported an unbounded objective")
    if T[-1, -1] < -FEAS_TOL:
        logger.debug("LP infeasible (phase 1 optimum %.3g)", T[-1, -1])
        return LpResult(LpStatus.INFEASIBLE, pivots=run.pivots)

    # drive artificials out of the basis; drop rows that are redundant
    keep = []
    for i, col in enumerate(basis):
        if col >= art_start:
            candidates = np.flatnonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)
            if candidates.size == 0:
                continue
            _pivot(T, i, int(candidates[0]))
            basis[i] = int(candidates[0])
        keep.append(i)
    T = np.vstack([T[keep, :], T[-1:, :]])
    basis = [basis[i] for i in keep]
    allowed = np.zeros(total, dtype=bool)
    allowed[:art_start] = True
    T[:, art_start:total] = 0.0

    objective_value = None
    if objective is not None:
        c = lift(np.asarray(objective, dtype=np.float64))
        if not maximize:
            c = -c
        T[-1, :] = 0.0
        T[-1, :n] = -c
        for i, col in enumerate(basis):
            if col < n and c[col] != 0.0:
                T[-1, :] += c[col] * T[i, :]
        if not run.optimize(T, basis, allowed):
            raise SolverError("LP objective is unbounded")

    values = np.zeros(total)
    for i, col in enumerate(basis):
        values[col] = T[i, -1]
    point = offsets.copy()
    for j, parts in enumerate(columns):
        for col, sign in parts:
            point[j] += sign * values[col]
    # remove sub-tolerance drift outside the box
    point = np.clip(point, lp.lower, lp.upper)

    if objective is not None:
        objective_value = float(np.dot(objective, point))
    return LpResult(LpStatus.OPTIMAL, point, objective_value, run.pivots)


def optimize(lp: LinProgram, objective, maximize: bool) -> Optional[float]:
    """Optimum of `objective . v` or None when the LP is infeasible."""
    result = solve_lp(lp, objective, maximize)
    return result.objective if result.feasible else None
