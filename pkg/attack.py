"""Falsification fast path: random sampling and projected sign-gradient ascent."""

import logging
from typing import List, Optional

import numpy as np
from pydantic import Field, PositiveInt

import config
from config import Options
from network import forward, forward_batch, gradient
from spec_io import Comparison, VerificationProblem

logger = logging.getLogger(__name__)


class AttackConfig(Options):
    samples: PositiveInt = config.ATTACK_SAMPLES
    pgd_steps: PositiveInt = config.PGD_STEPS
    pgd_restarts: PositiveInt = config.PGD_RESTARTS
    # fraction of the box width moved per step
    step_size: float = Field(default=config.PGD_STEP_SIZE, gt=0, le=1)
    seed: int = config.VERIFIER_SEED


def _violations(problem: VerificationProblem, outputs: np.ndarray) -> np.ndarray:
    """Row mask of outputs that satisfy some disjunct exactly."""
    hit = np.zeros(outputs.shape[0], dtype=bool)
    for disjunct in problem.negated_output:
        inside = np.ones(outputs.shape[0], dtype=bool)
        for constraint in disjunct:
            values = outputs @ np.asarray(constraint.coeffs)
            if constraint.op is Comparison.LE:
                inside &= values <= constraint.rhs
            elif constraint.op is Comparison.LT:
                inside &= values < constraint.rhs
            elif constraint.op is Comparison.GE:
                inside &= values >= constraint.rhs
            else:
                inside &= values > constraint.rhs
        hit |= inside
    return hit


def random_attack(problem: VerificationProblem, cfg: Optional[AttackConfig] = None) -> Optional[np.ndarray]:
    cfg = cfg or AttackConfig()
    rng = np.random.default_rng(cfg.seed)
    samples = rng.uniform(problem.lower, problem.upper, size=(cfg.samples, problem.net.input_dim))
    hits = np.flatnonzero(_violations(problem, forward_batch(problem.net, samples)))
    for index in hits:
        candidate = samples[index]
        if problem.is_counterexample(candidate):
            logger.info("random attack found a counterexample after %d samples", index + 1)
            return candidate
    return None


def violation_margin(problem: VerificationProblem, outputs) -> float:
    """max over disjuncts of min over constraints of the signed slack; > 0 inside a disjunct."""
    return max(min(c.slack(outputs) for c in disjunct) for disjunct in problem.negated_output)


def _ascent_direction(problem: VerificationProblem, outputs) -> np.ndarray:
    """Subgradient of the violation margin with respect to the outputs."""
    best_disjunct = max(problem.negated_output, key=lambda d: min(c.slack(outputs) for c in d))
    tightest = min(best_disjunct, key=lambda c: c.slack(outputs))
    coeffs = np.asarray(tightest.coeffs, dtype=np.float64)
    if tightest.op in (Comparison.GE, Comparison.GT):
        return coeffs
    return -coeffs


def pgd_attack(problem: VerificationProblem, cfg: Optional[AttackConfig] = None,
               iterates: Optional[List[np.ndarray]] = None) -> Optional[np.ndarray]:
    """Sign-gradient ascent on the violation margin, projected onto the input box.

    When `iterates` is given every visited point is appended to it.
    """
    cfg = cfg or AttackConfig()
    rng = np.random.default_rng([cfg.seed, 1])
    lower, upper = problem.lower, problem.upper
    step = cfg.step_size * (upper - lower)

    for restart in range(cfg.pgd_restarts):
        x = rng.uniform(lower, upper)
        for _ in range(cfg.pgd_steps + 1):
            if iterates is not None:
                iterates.append(x.copy())
            if problem.is_counterexample(x):
                logger.info("PGD found a counterexample on restart %d", restart)
                return x
            outputs, _ = forward(problem.net, x)
            direction = gradient(problem.net, x, _ascent_direction(problem, outputs))
            if not np.any(direction):
                break
            x = np.clip(x + step * np.sign(direction), lower, upper)
    return None


def falsify(problem: VerificationProblem, cfg: Optional[AttackConfig] = None) -> Optional[np.ndarray]:
    """Random sampling first, then PGD; returns a validated witness or None."""
    cfg = cfg or AttackConfig()
    witness = random_attack(problem, cfg)
    if witness is None:
        witness = pgd_attack(problem, cfg)
    return witness
