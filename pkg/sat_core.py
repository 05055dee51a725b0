"""Propositional CDCL core: Boolean abstraction, trail, watched-literal BCP,
first-UIP conflict analysis, backjumping, restarts and branching.

Literals are signed ints: +v means neuron v is active, -v inactive.
Variable ids run 1..H in NeuronId order.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from errors import ContractViolation
from network import Network, NeuronId

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Clauses and the Boolean abstraction
# ---------------------------------------------------------------------------

class Origin(str, Enum):
    INITIAL = "initial"
    LEARNED = "learned"
    # reason clauses attached to trail entries, never stored in a ClauseDB
    REASON = "reason"


def _dedupe(literals: Iterable[int]) -> Tuple[int, ...]:
    seen = []
    for lit in literals:
        if lit == 0:
            raise ContractViolation("0 is not a literal")
        if lit not in seen:
            seen.append(int(lit))
    return tuple(seen)


@dataclass(frozen=True)
class Clause:
    literals: Tuple[int, ...]
    origin: Origin = Origin.REASON
    cid: int = -1

    def __post_init__(self):
        object.__setattr__(self, "literals", _dedupe(self.literals))

    def __iter__(self):
        return iter(self.literals)

    def __len__(self):
        return len(self.literals)

    def __contains__(self, lit):
        return lit in self.literals

    @property
    def key(self) -> frozenset:
        return frozenset(self.literals)

    @property
    def is_tautology(self):
        return any(-lit in self.literals for lit in self.literals)

    def __str__(self):
        if not self.literals:
            return "()"
        return "(" + " | ".join(f"v{l}" if l > 0 else f"~v{-l}" for l in self.literals) + ")"


class BooleanAbstraction:
    """Bijection between hidden neurons and propositional variables."""

    def __init__(self, net: Network):
        self.net = net
        self.neurons: Tuple[NeuronId, ...] = net.neurons
        self._var_of = {neuron: k for k, neuron in enumerate(self.neurons, start=1)}

    @property
    def num_vars(self):
        return len(self.neurons)

    def var_of(self, neuron: NeuronId) -> int:
        return self._var_of[neuron]

    def neuron_of(self, var: int) -> NeuronId:
        return self.neurons[abs(var) - 1]

    def literal(self, neuron: NeuronId, active: bool) -> int:
        var = self.var_of(neuron)
        return var if active else -var

    def name(self, lit: int) -> str:
        """`v3` / `~v3`, numbered like the neuron (x3) it stands for."""
        label = "v" + self.net.neuron_name(self.neuron_of(lit))[1:]
        return label if lit > 0 else "~" + label

    def describe(self, clause: Clause) -> str:
        return "(" + " | ".join(self.name(lit) for lit in clause) + ")" if len(clause) else "()"


def boolean_abstraction(net: Network) -> Tuple[BooleanAbstraction, List[Clause]]:
    """One variable per hidden neuron and one tautology (v | ~v) per variable."""
    abstraction = BooleanAbstraction(net)
    clauses = [Clause((var, -var), Origin.INITIAL) for var in range(1, abstraction.num_vars + 1)]
    return abstraction, clauses


def binary_resolution(c1: Clause, c2: Clause, pivot: int) -> Clause:
    """Resolve c1 and c2 on variable `pivot`; both polarities of it are dropped."""
    pivot = abs(pivot)
    if pivot in c1 and -pivot in c2:
        pass
    elif -pivot in c1 and pivot in c2:
        pass
    else:
        raise ContractViolation(f"clauses {c1} and {c2} do not clash on v{pivot}")
    rest = [lit for lit in c1 if abs(lit) != pivot] + [lit for lit in c2 if abs(lit) != pivot]
    return Clause(tuple(rest), Origin.LEARNED)


# ---------------------------------------------------------------------------
# Trail
# ---------------------------------------------------------------------------

class Antecedent(str, Enum):
    DECISION = "decision"
    PROPAGATED = "propagated"
    THEORY = "theory"


@dataclass(frozen=True)
class TrailEntry:
    lit: int
    level: int
    kind: Antecedent
    reason: Optional[Clause] = None


class Trail:
    """Assignment stack with decision levels and antecedents (the implication graph)."""

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.entries: List[TrailEntry] = []
        self._index: List[Optional[int]] = [None] * (num_vars + 1)
        self._dl = 0
        # next entry BCP has to look at
        self.qhead = 0

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def dl(self):
        return self._dl

    def value(self, lit: int) -> Optional[bool]:
        index = self._index[abs(lit)]
        if index is None:
            return None
        return self.entries[index].lit == lit

    def is_assigned(self, var: int) -> bool:
        return self._index[abs(var)] is not None

    def entry(self, var: int) -> TrailEntry:
        index = self._index[abs(var)]
        if index is None:
            raise ContractViolation(f"v{abs(var)} is unassigned")
        return self.entries[index]

    def position(self, var: int) -> int:
        index = self._index[abs(var)]
        if index is None:
            raise ContractViolation(f"v{abs(var)} is unassigned")
        return index

    def level_of(self, var: int) -> int:
        return self.entry(var).level

    def push(self, lit: int, kind: Antecedent, reason: Optional[Clause] = None, level: Optional[int] = None):
        """Append an assignment. `level` defaults to the current decision level."""
        var = abs(lit)
        if not 1 <= var <= self.num_vars:
            raise ContractViolation(f"v{var} is not a variable of this trail")
        if self._index[var] is not None:
            raise ContractViolation(f"v{var} is already assigned")
        level = self._dl if level is None else level
        if self.entries and self.entries[-1].level > level:
            raise ContractViolation("decision levels along the trail must be non-decreasing")
        self._dl = max(self._dl, level)
        self._index[var] = len(self.entries)
        self.entries.append(TrailEntry(lit, level, kind, reason))

    def decide(self, lit: int):
        self._dl += 1
        self.push(lit, Antecedent.DECISION)

    def backtrack(self, level: int):
        """Erase every assignment above `level`."""
        if not 0 <= level < self._dl:
            raise ContractViolation(f"cannot backtrack to level {level} from level {self._dl}")
        while self.entries and self.entries[-1].level > level:
            entry = self.entries.pop()
            self._index[abs(entry.lit)] = None
        self._dl = level
        self.qhead = min(self.qhead, len(self.entries))

    def clear(self):
        if self._dl > 0:
            self.backtrack(0)

    def literals(self) -> List[int]:
        return [entry.lit for entry in self.entries]

    def decisions(self) -> List[int]:
        return [entry.lit for entry in self.entries if entry.kind is Antecedent.DECISION]

    def unassigned(self) -> List[int]:
        return [var for var in range(1, self.num_vars + 1) if self._index[var] is None]

    @property
    def is_total(self):
        return len(self.entries) == self.num_vars

    def negation(self) -> Clause:
        """The clause ruling out the current assignment."""
        return Clause(tuple(-lit for lit in self.literals()), Origin.REASON)

    def check_invariants(self):
        seen = set()
        previous_level = 0
        for position, entry in enumerate(self.entries):
            var = abs(entry.lit)
            if var in seen:
                raise ContractViolation(f"v{var} appears twice on the trail")
            seen.add(var)
            if entry.level < previous_level:
                raise ContractViolation("decision levels decrease along the trail")
            previous_level = entry.level
            if self._index[var] != position:
                raise ContractViolation(f"index of v{var} is stale")
            if entry.kind is not Antecedent.DECISION:
                if entry.reason is None or entry.lit not in entry.reason:
                    raise ContractViolation(f"{entry.lit} has no usable antecedent")
                for other in entry.reason:
                    if other == entry.lit:
                        continue
                    if self.value(other) is not False or self.position(other) > position:
                        raise ContractViolation(f"antecedent of {entry.lit} was not unit when enqueued")
        if previous_level > self._dl:
            raise ContractViolation("trail holds entries above the current decision level")


# ---------------------------------------------------------------------------
# Clause database and BCP
# ---------------------------------------------------------------------------

class ClauseDB:
    """Initial and learned clauses with two-watched-literal indexing.

    `watched=False` switches to naive repeated scanning; both give the same
    fixpoint.
    """

    def __init__(self, num_vars: int, watched: bool = True):
        self.num_vars = num_vars
        self.watched = watched
        self.clauses: List[Clause] = []
        self._by_key: Dict[frozenset, Clause] = {}
        self._watches: Dict[int, List[int]] = defaultdict(list)
        self._watch_pair: Dict[int, List[int]] = {}
        # clauses shorter than two literals, rescanned on every propagate
        self._short: List[int] = []
        # clauses added since the last propagate
        self._pending: List[int] = []

    def __len__(self):
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)

    @property
    def learned(self) -> List[Clause]:
        return [c for c in self.clauses if c.origin is Origin.LEARNED]

    def find(self, literals) -> Optional[Clause]:
        return self._by_key.get(frozenset(literals))

    def add(self, literals, origin: Origin = Origin.LEARNED, trail: Optional[Trail] = None) -> Tuple[Clause, bool]:
        """Store a clause; returns (stored clause, whether it was new)."""
        literals = _dedupe(literals)
        key = frozenset(literals)
        existing = self._by_key.get(key)
        if existing is not None:
            return existing, False

        clause = Clause(literals, origin, cid=len(self.clauses))
        if origin is not Origin.INITIAL and clause.is_tautology:
            raise ContractViolation(f"learned clause {clause} contains both polarities of a variable")
        self.clauses.append(clause)
        self._by_key[key] = clause

        if clause.is_tautology:
            return clause, True
        if len(literals) < 2:
            self._short.append(clause.cid)
            return clause, True

        pair = self._choose_watches(clause, trail)
        self._watch_pair[clause.cid] = pair
        for lit in pair:
            self._watches[lit].append(clause.cid)
        self._pending.append(clause.cid)
        return clause, True

    @staticmethod
    def _choose_watches(clause: Clause, trail: Optional[Trail]) -> List[int]:
        if trail is None:
            return list(clause.literals[:2])

        def rank(lit):
            value = trail.value(lit)
            if value is True:
                return (0, 0)
            if value is None:
                return (1, 0)
            return (2, -trail.position(lit))

        return sorted(clause.literals, key=rank)[:2]

    def _scan(self, trail: Trail, clause: Clause) -> Optional[Clause]:
        """Evaluate one clause in full; enqueue it if unit, return it if false."""
        open_literals = []
        for lit in clause:
            value = trail.value(lit)
            if value is True:
                return None
            if value is None:
                open_literals.append(lit)
        if not open_literals:
            return clause
        if len(open_literals) == 1:
            trail.push(open_literals[0], Antecedent.PROPAGATED, clause)
        return None

    def propagate(self, trail: Trail) -> Optional[Clause]:
        """Unit propagation to fixpoint; returns the conflicting clause if one becomes false."""
        pending, self._pending = self._pending, []
        for cid in self._short + pending:
            conflict = self._scan(trail, self.clauses[cid])
            if conflict is not None:
                return conflict

        if not self.watched:
            return self._propagate_naive(trail)

        while trail.qhead < len(trail):
            false_lit = -trail.entries[trail.qhead].lit
            trail.qhead += 1
            watchers = self._watches[false_lit]
            kept = []
            for position, cid in enumerate(watchers):
                clause = self.clauses[cid]
                pair = self._watch_pair[cid]
                other = pair[1] if pair[0] == false_lit else pair[0]
                if trail.value(other) is True:
                    kept.append(cid)
                    continue
                for candidate in clause:
                    if candidate not in pair and trail.value(candidate) is not False:
                        pair[pair.index(false_lit)] = candidate
                        self._watches[candidate].append(cid)
                        break
                else:
                    kept.append(cid)
                    if trail.value(other) is False:
                        kept.extend(watchers[position + 1:])
                        self._watches[false_lit] = kept
                        return clause
                    trail.push(other, Antecedent.PROPAGATED, clause)
            self._watches[false_lit] = kept
        return None

    def _propagate_naive(self, trail: Trail) -> Optional[Clause]:
        changed = True
        while changed:
            changed = False
            for clause in self.clauses:
                before = len(trail)
                conflict = self._scan(trail, clause)
                if conflict is not None:
                    return conflict
                changed = changed or len(trail) != before
        trail.qhead = len(trail)
        return None

    def open_clauses(self, trail: Trail) -> List[Clause]:
        """Clauses that are unit or false under the trail (empty at a BCP fixpoint)."""
        result = []
        for clause in self.clauses:
            values = [trail.value(lit) for lit in clause]
            if True not in values and values.count(None) <= 1:
                result.append(clause)
        return result


def bcp(trail: Trail, db: ClauseDB) -> Optional[Clause]:
    return db.propagate(trail)


# ---------------------------------------------------------------------------
# Conflict analysis
# ---------------------------------------------------------------------------

class ResolutionStep(NamedTuple):
    clause: Clause
    pivot: int
    antecedent: Clause
    resolvent: Clause


class Analysis(NamedTuple):
    learned: Clause
    backjump_level: int
    steps: List[ResolutionStep]


def _require_false(trail: Trail, clause: Clause):
    for lit in clause:
        if trail.value(lit) is not False:
            raise ContractViolation(f"conflicting clause {clause} is not false under the trail")


def analyze_conflict(trail: Trail, conflicting: Clause) -> Analysis:
    """First-UIP learning: resolve the last-assigned current-level literal until one remains."""
    if trail.dl == 0:
        raise ContractViolation("conflict at decision level 0 means unsat; nothing to analyze")
    _require_false(trail, conflicting)

    clause = Clause(conflicting.literals, Origin.LEARNED)
    steps = []
    while True:
        current = [lit for lit in clause if trail.level_of(lit) == trail.dl]
        if not current:
            raise ContractViolation(f"conflicting clause {conflicting} has no literal at level {trail.dl}")
        if len(current) == 1:
            break
        latest = max(current, key=trail.position)
        antecedent = trail.entry(latest).reason
        if antecedent is None:
            raise ContractViolation(f"v{abs(latest)} has no antecedent")
        resolvent = binary_resolution(clause, antecedent, latest)
        steps.append(ResolutionStep(clause, abs(latest), antecedent, resolvent))
        clause = resolvent

    levels = sorted({trail.level_of(lit) for lit in clause}, reverse=True)
    backjump_level = levels[1] if len(levels) > 1 else 0
    return Analysis(clause, backjump_level, steps)


def root_refutation(trail: Trail, conflicting: Clause) -> Analysis:
    """Resolution at level 0: resolve implied literals (latest first) until one literal is left."""
    if trail.dl != 0:
        raise ContractViolation("root refutation only applies at decision level 0")
    _require_false(trail, conflicting)

    clause = Clause(conflicting.literals, Origin.LEARNED)
    steps = []
    while len(clause) > 1:
        latest = max(clause, key=trail.position)
        antecedent = trail.entry(latest).reason
        if antecedent is None:
            break
        resolvent = binary_resolution(clause, antecedent, latest)
        steps.append(ResolutionStep(clause, abs(latest), antecedent, resolvent))
        clause = resolvent
    return Analysis(clause, 0, steps)


def backtrack(trail: Trail, level: int):
    trail.backtrack(level)


# ---------------------------------------------------------------------------
# Restarts and branching
# ---------------------------------------------------------------------------

@dataclass
class RestartPolicy:
    max_restarts: int = 3
    node_threshold: int = 300
    time_threshold: float = 50.0
    epoch: int = 0


class EpochProgress(NamedTuple):
    nodes: int
    elapsed: float


def should_restart(policy: RestartPolicy, progress: EpochProgress) -> bool:
    if policy.epoch >= policy.max_restarts:
        return False
    return progress.nodes > policy.node_threshold or progress.elapsed > policy.time_threshold


def phase_rng(seed: int, epoch: int = 0) -> np.random.Generator:
    """Random source for decision phases; reseeded on every restart epoch."""
    return np.random.default_rng([int(seed), int(epoch)])


# Scores are tuples compared ascending; the first component gets the restart noise.
Scorer = Callable[[int], Tuple[float, ...]]

NOISE_SCALE = 1e-3


def decide(candidates: Sequence[int], scorer: Optional[Scorer], rng: np.random.Generator, epoch: int = 0) -> Optional[int]:
    """Pick the best-scoring unassigned variable and a random phase.

    Returns the literal to push at dl+1, or None when the assignment is total.
    Ties fall back to variable order, which is (layer, index) order.
    """
    if not candidates:
        return None
    candidates = sorted(candidates)
    if scorer is None:
        keys = [(0.0, var) for var in candidates]
    else:
        keys = [tuple(scorer(var)) + (var,) for var in candidates]
    if epoch > 0:
        noise = rng.normal(0.0, NOISE_SCALE, size=len(keys))
        keys = [(key[0] + n,) + key[1:] for key, n in zip(keys, noise)]
    var = min(keys)[-1]
    active = bool(rng.random() < 0.5)
    return var if active else -var


# ---------------------------------------------------------------------------
# Engine shared by the DPLL(T) loop and the pure-SAT solver
# ---------------------------------------------------------------------------

class ConflictOutcome(NamedTuple):
    unsat: bool
    learned: Optional[Clause]
    backjump_level: Optional[int]


class CdclEngine:
    """Trail + clause database + the conflict/backjump/restart bookkeeping."""

    def __init__(self, num_vars: int, clauses: Iterable[Clause], learning: bool = True,
                 watched: bool = True, check_invariants: bool = False):
        self.trail = Trail(num_vars)
        self.db = ClauseDB(num_vars, watched=watched)
        for clause in clauses:
            self.db.add(clause.literals, Origin.INITIAL)
        self.learning = learning
        self.check = check_invariants
        # learned clauses in the order they were derived, root refutation included
        self.learned: List[Clause] = []

    def propagate(self) -> Optional[Clause]:
        conflict = bcp(self.trail, self.db)
        if self.check:
            self.trail.check_invariants()
            if conflict is None and self.db.open_clauses(self.trail):
                raise ContractViolation("BCP stopped before its fixpoint")
        return conflict

    def decide(self, lit: int):
        self.trail.decide(lit)

    def imply(self, lit: int, reason: Clause):
        """Theory-implied literal at the current level."""
        self.trail.push(lit, Antecedent.THEORY, reason)

    def _learn(self, clause: Clause) -> Clause:
        stored, is_new = self.db.add(clause.literals, Origin.LEARNED, trail=self.trail)
        if is_new:
            self.learned.append(stored)
            logger.debug("learned %s", stored)
        return stored

    def handle_conflict(self, conflict: Clause) -> ConflictOutcome:
        if self.trail.dl == 0:
            if not self.learning:
                return ConflictOutcome(True, None, None)
            refutation = root_refutation(self.trail, conflict).learned
            if len(refutation):
                refutation = self._learn(refutation)
            else:
                self.learned.append(refutation)
            return ConflictOutcome(True, refutation, None)

        if not self.learning:
            decisions = self.trail.decisions()
            blocking = Clause(tuple(-lit for lit in decisions), Origin.REASON)
            self.trail.backtrack(self.trail.dl - 1)
            self.trail.push(-decisions[-1], Antecedent.PROPAGATED, blocking)
            return ConflictOutcome(False, None, self.trail.dl)

        analysis = analyze_conflict(self.trail, conflict)
        self.trail.backtrack(analysis.backjump_level)
        stored = self._learn(analysis.learned)
        asserting = [lit for lit in stored if not self.trail.is_assigned(lit)]
        if len(asserting) != 1 or any(self.trail.value(lit) is not False for lit in stored if lit != asserting[0]):
            raise ContractViolation(f"learned clause {stored} is not asserting after backjump")
        self.trail.push(asserting[0], Antecedent.PROPAGATED, stored)
        logger.debug("backjump to level %d", analysis.backjump_level)
        return ConflictOutcome(False, stored, analysis.backjump_level)

    def restart(self):
        self.trail.clear()


def solve_cnf(num_vars: int, clauses: Iterable[Sequence[int]], seed: int = 0,
              learning: bool = True, watched: bool = True) -> Optional[Dict[int, bool]]:
    """Plain CDCL over a CNF; returns a model or None when unsatisfiable."""
    engine = CdclEngine(
        num_vars,
        [Clause(tuple(c), Origin.INITIAL) for c in clauses],
        learning=learning,
        watched=watched,
    )
    rng = phase_rng(seed)
    while True:
        conflict = engine.propagate()
        if conflict is not None:
            if engine.handle_conflict(conflict).unsat:
                return None
            continue
        lit = decide(engine.trail.unassigned(), None, rng)
        if lit is None:
            return {abs(l): l > 0 for l in engine.trail.literals()}
        engine.decide(lit)
