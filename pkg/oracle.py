"""Reference decision procedure by activation-pattern enumeration, plus the
random problem generator used by the test and ablation suites.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from errors import RefusalError, SolverError
from network import Activation, Layer, Network, NeuronId, forward_batch
from simplex import solve_lp
from solver import Verdict, VerdictKind
from spec_io import Comparison, LinearConstraint, VerificationProblem
from theory import LpRelaxation, build_lp

logger = logging.getLogger(__name__)

MAX_ORACLE_NEURONS = 20


def _witness(problem: VerificationProblem, status, disjunct) -> Optional[np.ndarray]:
    lp = build_lp(problem, status, disjunct, relaxation=LpRelaxation.LOOSE, slack=True)
    result = solve_lp(lp, lp.unit(lp.index("t")), maximize=True)
    if not result.feasible:
        return None
    return result.point[: problem.net.input_dim]


def enumerate_verify(problem: VerificationProblem) -> Verdict:
    """Exact verdict by depth-first search over activation patterns.

    Prefixes whose LP (undecided neurons left unconstrained) is infeasible are
    pruned; every full pattern gets an exact LP.
    """
    neurons = problem.net.neurons
    if len(neurons) > MAX_ORACLE_NEURONS:
        raise RefusalError(f"{len(neurons)} hidden neurons is too many to enumerate (limit {MAX_ORACLE_NEURONS})")

    boundary = False
    for disjunct in problem.negated_output:
        stack = [{}]
        while stack:
            status: Dict[NeuronId, bool] = stack.pop()
            lp = build_lp(problem, status, disjunct, relaxation=LpRelaxation.LOOSE)
            try:
                feasible = solve_lp(lp).feasible
            except SolverError as e:
                return Verdict(VerdictKind.UNKNOWN, reason=str(e))
            if not feasible:
                continue
            if len(status) == len(neurons):
                witness = _witness(problem, status, disjunct)
                if witness is not None and problem.is_counterexample(witness):
                    return Verdict(VerdictKind.SAT, witness=witness)
                boundary = True
                continue
            neuron = neurons[len(status)]
            # inactive branch is pushed last so it is explored first
            stack.append({**status, neuron: True})
            stack.append({**status, neuron: False})

    if boundary:
        return Verdict(VerdictKind.UNKNOWN, reason="feasible pattern without a strict witness")
    return Verdict(VerdictKind.UNSAT)


@dataclass(frozen=True)
class ProblemShape:
    input_dims: Tuple[int, int] = (2, 4)
    hidden_layers: Tuple[int, int] = (1, 3)
    widths: Tuple[int, int] = (2, 6)
    outputs: Tuple[int, int] = (1, 3)
    max_hidden: int = 12
    # samples used to place the property threshold
    calibration_samples: int = 256


def generate_random_problem(shape: Optional[ProblemShape] = None, seed: int = 0) -> VerificationProblem:
    """Random network over [-1, 1]^n with a random output halfspace property.

    The threshold sits near the sampled maximum of the halfspace row, shifted
    by a random fraction of the sampled range, so both verdicts occur.
    """
    shape = shape or ProblemShape()
    rng = np.random.default_rng(seed)
    input_dim = int(rng.integers(shape.input_dims[0], shape.input_dims[1] + 1))
    depth = int(rng.integers(shape.hidden_layers[0], shape.hidden_layers[1] + 1))

    widths = []
    budget = shape.max_hidden
    for _ in range(depth):
        if budget < shape.widths[0]:
            break
        width = int(rng.integers(shape.widths[0], min(shape.widths[1], budget) + 1))
        widths.append(width)
        budget -= width
    outputs = int(rng.integers(shape.outputs[0], shape.outputs[1] + 1))

    layers = []
    fan_in = input_dim
    for width in widths + [outputs]:
        activation = Activation.RELU if len(layers) < len(widths) else Activation.IDENTITY
        layers.append(Layer(rng.uniform(-1, 1, size=(width, fan_in)), rng.uniform(-1, 1, size=width), activation))
        fan_in = width
    net = Network(input_dim, layers)

    lower, upper = -np.ones(input_dim), np.ones(input_dim)
    coeffs = rng.uniform(-1, 1, size=outputs)
    samples = rng.uniform(lower, upper, size=(shape.calibration_samples, input_dim))
    values = forward_batch(net, samples) @ coeffs
    spread = float(values.max() - values.min())
    threshold = float(values.max() + rng.uniform(-0.25, 0.5) * spread)

    constraint = LinearConstraint(tuple(coeffs.tolist()), Comparison.GE, threshold)
    return VerificationProblem(net, lower, upper, ((constraint,),), name=f"random-{seed}")
