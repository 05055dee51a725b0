"""The DPLL(T) theory solver: LP feasibility of partial activation patterns,
input tightening, abstraction-based output checks and implied activations.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from abstraction import AbstractionMode, NeuronBounds, interval_bounds, propagate_bounds, row_upper_bound
from network import NeuronId
from sat_core import BooleanAbstraction, Clause, Origin, Scorer, Trail
from simplex import LinProgram, Sense, optimize, solve_lp
from spec_io import Comparison, Conjunction, VerificationProblem

logger = logging.getLogger(__name__)

# a row bound below its threshold by more than this is a conflict
CHECK_TOL = 1e-9


class LpRelaxation(str, Enum):
    TRIANGLE = "triangle"
    LOOSE = "loose"


def status_of(trail: Trail, abstraction: BooleanAbstraction) -> Dict[NeuronId, bool]:
    return {abstraction.neuron_of(lit): lit > 0 for lit in trail.literals()}


# ---------------------------------------------------------------------------
# LP construction
# ---------------------------------------------------------------------------

def _sense(op: Comparison) -> Sense:
    return Sense.GE if op.closed is Comparison.GE else Sense.LE


def build_lp(problem: VerificationProblem, status: Dict[NeuronId, bool], disjunct: Conjunction,
             bounds: Optional[NeuronBounds] = None,
             relaxation: LpRelaxation = LpRelaxation.TRIANGLE,
             lower=None, upper=None, slack: bool = False) -> LinProgram:
    """LP over the inputs plus one variable per relaxed (undecided, unstable) neuron.

    Pre-activations and outputs are kept as affine expressions of those
    variables (`lp.expression("x3")`, `lp.expression("Y_0")`). Strict
    comparisons are closed. With `slack=True` a variable t in [0, 1] is
    subtracted from every disjunct row's margin.
    """
    net = problem.net
    relaxation = LpRelaxation(relaxation)
    lower = problem.lower if lower is None else np.asarray(lower, dtype=np.float64)
    upper = problem.upper if upper is None else np.asarray(upper, dtype=np.float64)

    def stable(neuron):
        if bounds is None or relaxation is LpRelaxation.LOOSE:
            return None
        lo, hi = bounds.pre(neuron)
        if hi <= 0:
            return False
        if lo >= 0:
            return True
        return None

    relaxed = [n for n in net.neurons if n not in status and stable(n) is None]

    lp = LinProgram()
    for i in range(net.input_dim):
        lp.add_variable(f"x{i + 1}", lower[i], upper[i])
    y_index = {}
    # loose: an undecided neuron's output is a free variable with no rows
    for neuron in relaxed:
        name = "y" + net.neuron_name(neuron)[1:]
        y_index[neuron] = lp.add_variable(name, 0.0 if relaxation is LpRelaxation.TRIANGLE else -np.inf)
    t_index = lp.add_variable("t", 0.0, 1.0) if slack else None

    # post-activation values of the previous layer as affine forms
    post = np.zeros((net.input_dim, lp.num_vars))
    post[:, :net.input_dim] = np.eye(net.input_dim)
    post_const = np.zeros(net.input_dim)

    for k, layer in enumerate(net.layers, start=1):
        pre = layer.weights @ post
        pre_const = layer.weights @ post_const + layer.bias
        new_post = np.zeros_like(pre)
        new_post_const = np.zeros_like(pre_const)
        for i in range(layer.size):
            if not layer.is_relu:
                new_post[i], new_post_const[i] = pre[i], pre_const[i]
                continue
            neuron = NeuronId(k, i)
            name = net.neuron_name(neuron)
            lp.set_expression(name, pre[i], pre_const[i])
            phase = status.get(neuron, stable(neuron))
            if phase is True:
                if neuron in status:
                    lp.add_affine(pre[i], pre_const[i], Sense.GE, 0.0, f"{name} active")
                new_post[i], new_post_const[i] = pre[i], pre_const[i]
            elif phase is False:
                if neuron in status:
                    lp.add_affine(pre[i], pre_const[i], Sense.LE, 0.0, f"{name} inactive")
            else:
                y = lp.unit(y_index[neuron])
                new_post[i] = y
                if relaxation is LpRelaxation.TRIANGLE:
                    lp.add_affine(y - pre[i], -pre_const[i], Sense.GE, 0.0, f"{name} y>=z")
                    if bounds is not None:
                        lo, hi = bounds.pre(neuron)
                        chord = hi / (hi - lo)
                        # y <= chord * (z - lo)
                        lp.add_affine(y - chord * pre[i], -chord * (pre_const[i] - lo), Sense.LE, 0.0,
                                      f"{name} chord")
        post, post_const = new_post, new_post_const

    for j in range(net.output_dim):
        lp.set_expression(f"Y_{j}", post[j], post_const[j])
    if not net.layers[-1].is_relu:
        offset = net.input_dim + sum(layer.size for layer in net.layers[:-1])
        for j in range(net.output_dim):
            lp.set_expression(f"x{offset + j + 1}", post[j], post_const[j])

    for n, constraint in enumerate(disjunct):
        coeffs = np.asarray(constraint.coeffs) @ post
        const = float(np.dot(constraint.coeffs, post_const))
        sense = _sense(constraint.op)
        if t_index is not None:
            # margin of at least t on the satisfied side
            coeffs = coeffs - lp.unit(t_index) if sense is Sense.GE else coeffs + lp.unit(t_index)
        lp.add_affine(coeffs, const, sense, constraint.rhs, f"property {n}")
    return lp


def tighten_input_bounds(lp: LinProgram, lower, upper, max_inputs: int = 10):
    """Shrink the box to the LP's projection on each input.

    Returns the box unchanged above `max_inputs` inputs, None if the LP is infeasible.
    """
    lower = np.array(lower, dtype=np.float64)
    upper = np.array(upper, dtype=np.float64)
    n = lower.shape[0]
    if n > max_inputs:
        return lower, upper
    for i in range(n):
        direction = lp.unit(i)
        low = optimize(lp, direction, maximize=False)
        if low is None:
            return None
        high = optimize(lp, direction, maximize=True)
        lower[i] = max(lower[i], low)
        upper[i] = min(upper[i], high)
        upper[i] = max(upper[i], lower[i])
    return lower, upper


# ---------------------------------------------------------------------------
# Deduction
# ---------------------------------------------------------------------------

@dataclass
class Infeasible:
    reason: Clause
    stage: str


@dataclass
class Feasible:
    implied: List[Tuple[int, Clause]]
    bounds: NeuronBounds
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class SatTotal:
    witness: np.ndarray


DeductionResult = Union[Infeasible, Feasible, SatTotal]


def disjunct_margin(net, bounds: NeuronBounds, disjunct: Conjunction, lower, upper, use_rows: bool) -> float:
    """min over rows of (upper bound of a.y) - b, rows in a.y >= b form; negative means infeasible."""
    if not bounds.feasible:
        return -np.inf
    margin = np.inf
    for constraint in disjunct:
        coeffs, rhs = constraint.as_geq()
        if use_rows:
            top = row_upper_bound(net, bounds, coeffs, lower, upper)
        else:
            top = bounds.row_upper(coeffs)
        margin = min(margin, top - rhs)
    return margin


@dataclass
class TheorySolver:
    """Deduction for one disjunct of the negated property over one input box."""

    problem: VerificationProblem
    disjunct: Conjunction
    abstraction: BooleanAbstraction
    mode: AbstractionMode = AbstractionMode.BOTH
    relaxation: LpRelaxation = LpRelaxation.TRIANGLE
    tighten: bool = True
    tighten_max_inputs: int = 10
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    calls: int = 0
    # box and bounds from the last feasible deduction, reused by the branching scorers
    last_lower: Optional[np.ndarray] = field(default=None, repr=False)
    last_upper: Optional[np.ndarray] = field(default=None, repr=False)
    last_bounds: Optional[NeuronBounds] = field(default=None, repr=False)

    def __post_init__(self):
        self.mode = AbstractionMode(self.mode)
        self.relaxation = LpRelaxation(self.relaxation)
        self.lower = self.problem.lower if self.lower is None else np.asarray(self.lower, dtype=np.float64)
        self.upper = self.problem.upper if self.upper is None else np.asarray(self.upper, dtype=np.float64)

    @property
    def net(self):
        return self.problem.net

    @property
    def _use_rows(self):
        return self.mode is not AbstractionMode.INTERVAL

    def _conflict(self, trail: Trail, stage: str) -> Infeasible:
        logger.debug("theory conflict (%s) under %s", stage, trail.literals())
        return Infeasible(trail.negation(), stage)

    def deduction(self, trail: Trail) -> DeductionResult:
        self.calls += 1
        status = status_of(trail, self.abstraction)

        box_bounds = propagate_bounds(self.net, status, self.lower, self.upper, self.mode)
        if not box_bounds.feasible:
            return self._conflict(trail, "bounds")

        lp = build_lp(self.problem, status, self.disjunct,
                      bounds=box_bounds if self.relaxation is LpRelaxation.TRIANGLE else None,
                      relaxation=self.relaxation, lower=self.lower, upper=self.upper)
        if not solve_lp(lp).feasible:
            return self._conflict(trail, "lp")

        if trail.is_total:
            return SatTotal(self.witness(status))

        lower, upper = self.lower, self.upper
        if self.tighten:
            tightened = tighten_input_bounds(lp, lower, upper, self.tighten_max_inputs)
            if tightened is None:
                return self._conflict(trail, "lp")
            lower, upper = tightened
            bounds = propagate_bounds(self.net, status, lower, upper, self.mode)
        else:
            bounds = box_bounds

        if disjunct_margin(self.net, bounds, self.disjunct, lower, upper, self._use_rows) < -CHECK_TOL:
            return self._conflict(trail, "bounds")

        implied = []
        negated = [-lit for lit in trail.literals()]
        for neuron in self.net.neurons:
            if neuron in status:
                continue
            lo, hi = bounds.pre(neuron)
            if lo > 0:
                lit = self.abstraction.literal(neuron, True)
            elif hi <= 0:
                lit = self.abstraction.literal(neuron, False)
            else:
                continue
            implied.append((lit, Clause(tuple(negated) + (lit,), Origin.REASON)))

        self.last_lower, self.last_upper, self.last_bounds = lower, upper, bounds
        return Feasible(implied, bounds, lower, upper)

    def witness(self, status: Dict[NeuronId, bool]) -> np.ndarray:
        """Input point for a total pattern, maximizing a common slack on the property rows."""
        lp = build_lp(self.problem, status, self.disjunct, relaxation=self.relaxation,
                      lower=self.lower, upper=self.upper, slack=True)
        result = solve_lp(lp, lp.unit(lp.index("t")), maximize=True)
        if not result.feasible:
            # slack-free LP was feasible a moment ago; fall back to it
            plain = solve_lp(build_lp(self.problem, status, self.disjunct, relaxation=self.relaxation,
                                      lower=self.lower, upper=self.upper))
            return plain.point[: self.net.input_dim]
        return result.point[: self.net.input_dim]

    # -- branching ------------------------------------------------------------
    def fsb_scorer(self, trail: Trail) -> Scorer:
        """Per variable: (max, min) over phases of the interval margin of the disjunct."""
        status = status_of(trail, self.abstraction)
        lower = self.last_lower if self.last_lower is not None else self.lower
        upper = self.last_upper if self.last_upper is not None else self.upper

        def score(var):
            neuron = self.abstraction.neuron_of(var)
            margins = []
            for phase in (True, False):
                trial = dict(status)
                trial[neuron] = phase
                bounds = interval_bounds(self.net, trial, lower, upper)
                margins.append(disjunct_margin(self.net, bounds, self.disjunct, lower, upper, False))
            return (max(margins), min(margins))

        return score

    def widest_scorer(self, trail: Trail) -> Scorer:
        """Prefer neurons whose bounds sit furthest from the breakpoint on both sides."""
        bounds = self.last_bounds
        if bounds is None:
            bounds = propagate_bounds(self.net, status_of(trail, self.abstraction),
                                      self.lower, self.upper, AbstractionMode.INTERVAL)

        def score(var):
            lo, hi = bounds.pre(self.abstraction.neuron_of(var))
            return (-min(-lo, hi),)

        return score


def deduction(problem: VerificationProblem, trail: Trail, abstraction: BooleanAbstraction,
              disjunct: Conjunction, **options) -> DeductionResult:
    """One-shot deduction with a throwaway theory solver."""
    return TheorySolver(problem, disjunct, abstraction, **options).deduction(trail)
