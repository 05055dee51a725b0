"""Verification orchestrator: attack fast path, disjunct/sub-box decomposition
and the DPLL(T) search loop with restarts.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from itertools import product
from typing import List, Optional, Tuple

import numpy as np
from pydantic import NonNegativeInt, PositiveFloat, PositiveInt

import config
from abstraction import AbstractionMode
from attack import AttackConfig, falsify
from config import Options
from errors import ContractViolation, SolverError
from sat_core import (
    CdclEngine,
    EpochProgress,
    RestartPolicy,
    boolean_abstraction,
    decide,
    phase_rng,
    should_restart,
)
from spec_io import Conjunction, VerificationProblem
from theory import Feasible, Infeasible, LpRelaxation, SatTotal, TheorySolver

logger = logging.getLogger(__name__)


class SearchMode(str, Enum):
    FULL = "full"
    NO_RESTART = "no-restart"
    NO_LEARNING = "no-learning"


class Decider(str, Enum):
    FSB = "fsb"
    WIDEST = "widest"


class SolverConfig(Options):
    seed: int = config.VERIFIER_SEED
    timeout: PositiveFloat = config.VERIFIER_TIMEOUT
    mode: SearchMode = SearchMode.FULL
    abstraction: AbstractionMode = AbstractionMode.BOTH
    lp_relaxation: LpRelaxation = LpRelaxation.TRIANGLE
    decider: Decider = Decider.FSB
    max_restarts: NonNegativeInt = config.RESTART_MAX
    restart_nodes: PositiveInt = config.RESTART_NODES
    restart_seconds: PositiveFloat = config.RESTART_SECONDS
    tighten: bool = True
    tighten_max_inputs: NonNegativeInt = config.TIGHTEN_MAX_INPUTS
    split_per_dim: PositiveInt = 1
    split_max_inputs: NonNegativeInt = config.SPLIT_MAX_INPUTS
    jobs: PositiveInt = 1
    attack: bool = True
    attack_config: Optional[AttackConfig] = None
    check_invariants: bool = config.CHECK_INVARIANTS


class VerdictKind(str, Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"
    TIMEOUT = "timeout"


@dataclass
class SearchStats:
    iterations: int = 0
    decisions: int = 0
    learned_clauses: int = 0
    restarts: int = 0
    theory_calls: int = 0
    conflicts: int = 0
    implications: int = 0
    wall_time: float = 0.0

    def merge(self, other: "SearchStats"):
        for key, value in asdict(other).items():
            if key != "wall_time":
                setattr(self, key, getattr(self, key) + value)

    def counters(self) -> dict:
        """Everything except wall time; identical for identical runs."""
        values = asdict(self)
        values.pop("wall_time")
        return values

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceEntry:
    iteration: int
    subproblem: int = 0
    bcp: List[str] = field(default_factory=list)
    deduction: str = ""
    implied: List[str] = field(default_factory=list)
    decision: Optional[str] = None
    backjump: Optional[int] = None
    learned: Optional[str] = None

    def __str__(self):
        parts = [f"#{self.iteration}"]
        if self.bcp:
            parts.append("bcp " + ",".join(self.bcp))
        parts.append(self.deduction)
        if self.implied:
            parts.append("implied " + ",".join(self.implied))
        if self.decision:
            parts.append("decide " + self.decision)
        if self.learned:
            parts.append("learn " + self.learned)
        if self.backjump is not None:
            parts.append(f"backjump {self.backjump}")
        return "  ".join(parts)


@dataclass
class LoopResult:
    kind: VerdictKind
    witness: Optional[np.ndarray] = None
    reason: str = ""
    stats: SearchStats = field(default_factory=SearchStats)
    learned: List[str] = field(default_factory=list)
    trace: List[TraceEntry] = field(default_factory=list)


@dataclass
class Verdict:
    kind: VerdictKind
    witness: Optional[np.ndarray] = None
    reason: str = ""
    stats: SearchStats = field(default_factory=SearchStats)
    learned: List[str] = field(default_factory=list)
    trace: List[TraceEntry] = field(default_factory=list)

    def __str__(self):
        return self.kind.value


def split_input(lower, upper, splits_per_dim: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Tile the box with a uniform grid of `splits_per_dim` pieces per dimension."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if splits_per_dim == 1:
        return [(lower.copy(), upper.copy())]
    edges = [np.linspace(lo, hi, splits_per_dim + 1) for lo, hi in zip(lower, upper)]
    boxes = []
    for cell in product(range(splits_per_dim), repeat=lower.shape[0]):
        boxes.append((
            np.array([edges[d][c] for d, c in enumerate(cell)]),
            np.array([edges[d][c + 1] for d, c in enumerate(cell)]),
        ))
    return boxes


def dpllt_loop(problem: VerificationProblem, disjunct: Conjunction, cfg: SolverConfig,
               lower=None, upper=None, deadline: Optional[float] = None, subproblem: int = 0) -> LoopResult:
    """BCP -> Deduction -> Decide, with conflict analysis, backjumping and restarts."""
    started = time.monotonic()
    abstraction, clauses = boolean_abstraction(problem.net)
    engine = CdclEngine(
        abstraction.num_vars,
        clauses,
        learning=cfg.mode is not SearchMode.NO_LEARNING,
        check_invariants=cfg.check_invariants,
    )
    theory = TheorySolver(
        problem,
        disjunct,
        abstraction,
        mode=cfg.abstraction,
        relaxation=cfg.lp_relaxation,
        tighten=cfg.tighten,
        tighten_max_inputs=cfg.tighten_max_inputs,
        lower=lower,
        upper=upper,
    )
    policy = RestartPolicy(
        max_restarts=0 if cfg.mode is SearchMode.NO_RESTART else cfg.max_restarts,
        node_threshold=cfg.restart_nodes,
        time_threshold=cfg.restart_seconds,
    )
    trail = engine.trail
    rng = phase_rng(cfg.seed, policy.epoch)
    stats = SearchStats()
    trace: List[TraceEntry] = []
    epoch_nodes, epoch_started = 0, time.monotonic()
    # trail position of the asserting literal placed by the last backjump
    carried = None

    def finish(kind, witness=None, reason=""):
        stats.learned_clauses = len(engine.learned)
        stats.theory_calls = theory.calls
        stats.wall_time = time.monotonic() - started
        learned = [abstraction.describe(clause) for clause in engine.learned]
        return LoopResult(kind, witness, reason, stats, learned, trace)

    while True:
        if deadline is not None and time.monotonic() > deadline:
            return finish(VerdictKind.TIMEOUT, reason="time budget exhausted")

        stats.iterations += 1
        epoch_nodes += 1
        mark = carried if carried is not None else len(trail)
        carried = None
        entry = TraceEntry(stats.iterations, subproblem)

        conflict = engine.propagate()
        entry.bcp = [abstraction.name(lit) for lit in trail.literals()[mark:]]

        if conflict is None:
            try:
                result = theory.deduction(trail)
            except SolverError as e:
                logger.warning("theory solver failed: %s", e)
                return finish(VerdictKind.UNKNOWN, reason=str(e))

            if isinstance(result, Infeasible):
                entry.deduction = f"conflict ({result.stage})"
                conflict = result.reason
            elif isinstance(result, SatTotal):
                entry.deduction = "sat"
                trace.append(entry)
                if problem.is_counterexample(result.witness):
                    return finish(VerdictKind.SAT, witness=result.witness)
                return finish(VerdictKind.UNKNOWN, reason="LP witness failed concrete validation")
            elif result.implied:
                entry.deduction = "feasible"
                for lit, reason in result.implied:
                    engine.imply(lit, reason)
                    entry.implied.append(abstraction.name(lit))
                stats.implications += len(result.implied)
            else:
                entry.deduction = "feasible"
                if cfg.decider is Decider.WIDEST:
                    scorer = theory.widest_scorer(trail)
                else:
                    scorer = theory.fsb_scorer(trail)
                lit = decide(trail.unassigned(), scorer, rng, policy.epoch)
                if lit is None:
                    raise ContractViolation("total assignment reached Decide")
                engine.decide(lit)
                stats.decisions += 1
                entry.decision = f"{abstraction.name(lit)}@{trail.dl}"

        if conflict is not None:
            stats.conflicts += 1
            outcome = engine.handle_conflict(conflict)
            if outcome.learned is not None:
                entry.learned = abstraction.describe(outcome.learned)
            if outcome.unsat:
                trace.append(entry)
                return finish(VerdictKind.UNSAT)
            entry.backjump = outcome.backjump_level
            carried = len(trail) - 1

        trace.append(entry)
        if cfg.check_invariants:
            trail.check_invariants()

        progress = EpochProgress(epoch_nodes, time.monotonic() - epoch_started)
        if should_restart(policy, progress):
            policy.epoch += 1
            stats.restarts += 1
            logger.info("restart %d after %d nodes", policy.epoch, epoch_nodes)
            engine.restart()
            rng = phase_rng(cfg.seed, policy.epoch)
            epoch_nodes, epoch_started = 0, time.monotonic()
            carried = None


def _subproblems(problem: VerificationProblem, cfg: SolverConfig):
    if problem.net.input_dim <= cfg.split_max_inputs:
        boxes = split_input(problem.lower, problem.upper, cfg.split_per_dim)
    else:
        boxes = [(problem.lower, problem.upper)]
    return [(disjunct, lower, upper) for disjunct in problem.negated_output for lower, upper in boxes]


def _run_subproblem(args) -> LoopResult:
    problem, disjunct, lower, upper, cfg, budget, index = args
    return dpllt_loop(problem, disjunct, cfg, lower, upper, time.monotonic() + budget, index)


def verify(problem: VerificationProblem, cfg: Optional[SolverConfig] = None) -> Verdict:
    """Decide the problem: sat (validated witness), unsat, unknown or timeout."""
    cfg = cfg or SolverConfig()
    started = time.monotonic()
    deadline = started + cfg.timeout

    def done(verdict: Verdict) -> Verdict:
        verdict.stats.wall_time = time.monotonic() - started
        logger.info("verdict %s in %.3fs", verdict.kind.value, verdict.stats.wall_time)
        return verdict

    if cfg.attack:
        witness = falsify(problem, cfg.attack_config or AttackConfig(seed=cfg.seed))
        if witness is not None:
            return done(Verdict(VerdictKind.SAT, witness=witness, reason="attack"))

    tasks = _subproblems(problem, cfg)
    logger.info("searching %d subproblem(s)", len(tasks))
    results: List[LoopResult] = []
    if cfg.jobs > 1 and len(tasks) > 1:
        payloads = [(problem, d, lo, hi, cfg, max(0.0, deadline - time.monotonic()), k)
                    for k, (d, lo, hi) in enumerate(tasks)]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_subproblem, payloads))
    else:
        for k, (disjunct, lower, upper) in enumerate(tasks):
            result = dpllt_loop(problem, disjunct, cfg, lower, upper, deadline, k)
            results.append(result)
            if result.kind in (VerdictKind.SAT, VerdictKind.TIMEOUT):
                break

    return done(_reduce(results))


def _reduce(results: List[LoopResult]) -> Verdict:
    """First sat in subproblem order wins; otherwise timeout/unknown beat unsat."""
    stats = SearchStats()
    learned, trace = [], []
    for result in results:
        stats.merge(result.stats)
        learned.extend(result.learned)
        trace.extend(result.trace)

    for result in results:
        if result.kind is VerdictKind.SAT:
            return Verdict(VerdictKind.SAT, result.witness, "", stats, learned, trace)
    for kind in (VerdictKind.TIMEOUT, VerdictKind.UNKNOWN):
        for result in results:
            if result.kind is kind:
                return Verdict(kind, None, result.reason, stats, learned, trace)
    return Verdict(VerdictKind.UNSAT, None, "", stats, learned, trace)


def format_stats(stats: SearchStats) -> str:
    return "\n".join(f"{key}={value}" for key, value in stats.as_dict().items()) + "\n"
