from itertools import product

import numpy as np
import pytest

from errors import ContractViolation
from sat_core import (
    Antecedent,
    CdclEngine,
    Clause,
    ClauseDB,
    EpochProgress,
    Origin,
    RestartPolicy,
    Trail,
    analyze_conflict,
    bcp,
    binary_resolution,
    boolean_abstraction,
    decide,
    phase_rng,
    root_refutation,
    should_restart,
    solve_cnf,
)

C1 = (-1, 2)
C2 = (-1, 3, 5)
C3 = (-2, 4)
C4 = (-3, -4)


def implication_graph_db():
    db = ClauseDB(5)
    clauses = [db.add(c, Origin.INITIAL)[0] for c in (C1, C2, C3, C4)]
    return db, clauses


def decided_trail():
    """~v5 decided at level 3, then v1 decided at level 6."""
    trail = Trail(5)
    trail.push(-5, Antecedent.DECISION, level=3)
    trail.push(1, Antecedent.DECISION, level=6)
    return trail


# ---------------------------------------------------------------------------
# Clauses and abstraction
# ---------------------------------------------------------------------------

def test_abstraction_names(example_net):
    abstraction, clauses = boolean_abstraction(example_net)
    assert abstraction.num_vars == 2
    assert abstraction.name(1) == "v3"
    assert abstraction.name(-2) == "~v4"
    assert [c.literals for c in clauses] == [(1, -1), (2, -2)]
    assert all(c.is_tautology for c in clauses)
    assert abstraction.describe(Clause((2, -1))) == "(v4 | ~v3)"


def test_clause_dedupes_literals():
    clause = Clause((1, -2, 1))
    assert clause.literals == (1, -2)
    assert str(clause) == "(v1 | ~v2)"
    with pytest.raises(ContractViolation):
        Clause((0, 1))


def test_binary_resolution():
    resolvent = binary_resolution(Clause(C4), Clause(C2), 3)
    assert resolvent.literals == (-4, -1, 5)
    assert resolvent.origin is Origin.LEARNED
    with pytest.raises(ContractViolation):
        binary_resolution(Clause(C1), Clause(C3), 1)


def random_clause(rng, num_vars, required):
    others = [v for v in range(1, num_vars + 1) if v != abs(required)]
    picked = rng.choice(others, size=int(rng.integers(0, len(others) + 1)), replace=False)
    return Clause((required,) + tuple(int(v) if rng.random() < 0.5 else -int(v) for v in picked))


def test_resolvent_is_the_pivot_eliminated_conjunction():
    rng = np.random.default_rng(17)
    for _ in range(500):
        num_vars = int(rng.integers(2, 7))
        pivot = int(rng.integers(1, num_vars + 1))
        c1, c2 = random_clause(rng, num_vars, pivot), random_clause(rng, num_vars, -pivot)
        resolvent = binary_resolution(c1, c2, pivot)
        assert pivot not in resolvent and -pivot not in resolvent

        for values in product((False, True), repeat=num_vars):
            model = dict(enumerate(values, start=1))
            either = any(
                satisfies({**model, pivot: phase}, [c1.literals, c2.literals]) for phase in (False, True)
            )
            assert satisfies(model, [resolvent.literals]) == either


# ---------------------------------------------------------------------------
# Trail
# ---------------------------------------------------------------------------

def test_trail_push_and_backtrack():
    trail = Trail(3)
    trail.push(1, Antecedent.PROPAGATED, Clause((1,)))
    trail.decide(-2)
    trail.push(3, Antecedent.PROPAGATED, Clause((2, 3)))
    assert trail.dl == 1
    assert trail.value(-2) is True and trail.value(2) is False
    assert trail.level_of(3) == 1
    trail.check_invariants()

    trail.backtrack(0)
    assert trail.literals() == [1]
    assert trail.unassigned() == [2, 3]
    assert trail.value(3) is None


@pytest.mark.parametrize("level", [-1, 1, 2])
def test_backtrack_rejects_bad_levels(level):
    trail = Trail(2)
    trail.decide(1)
    with pytest.raises(ContractViolation):
        trail.backtrack(level)


def test_push_rejects_double_assignment_and_lower_levels():
    trail = decided_trail()
    with pytest.raises(ContractViolation):
        trail.push(5, Antecedent.DECISION, level=6)
    with pytest.raises(ContractViolation):
        trail.push(2, Antecedent.DECISION, level=2)
    with pytest.raises(ContractViolation):
        trail.push(9, Antecedent.DECISION)


def test_invariant_check_catches_bad_antecedent():
    trail = Trail(2)
    trail.decide(1)
    trail.push(2, Antecedent.PROPAGATED, Clause((2, 1)))
    with pytest.raises(ContractViolation):
        trail.check_invariants()


# ---------------------------------------------------------------------------
# Clause database and BCP
# ---------------------------------------------------------------------------

def test_clause_db_dedupes():
    db = ClauseDB(3)
    first, new = db.add((1, 2))
    again, new_again = db.add((2, 1))
    assert new and not new_again
    assert again is first
    assert db.learned == [first]


def test_learned_tautology_is_rejected():
    db = ClauseDB(2)
    db.add((1, -1), Origin.INITIAL)
    with pytest.raises(ContractViolation):
        db.add((2, -2), Origin.LEARNED)


def test_implication_graph_bcp():
    db, (c1, c2, c3, c4) = implication_graph_db()
    trail = decided_trail()
    conflict = bcp(trail, db)
    assert trail.literals() == [-5, 1, 2, 3, 4]
    assert [trail.entry(v).reason for v in (2, 3, 4)] == [c1, c2, c3]
    assert conflict is c4
    trail.check_invariants()


@pytest.mark.parametrize("watched", [True, False])
def test_implication_graph_learning(watched):
    db, _ = implication_graph_db()
    db.watched = watched
    trail = decided_trail()
    conflict = bcp(trail, db)
    analysis = analyze_conflict(trail, conflict)
    assert analysis.learned.key == frozenset({-1, 5})
    assert analysis.backjump_level == 3


def test_resolution_chain():
    c1, c2, c3, c4 = (Clause(c, Origin.INITIAL) for c in (C1, C2, C3, C4))
    trail = decided_trail()
    trail.push(2, Antecedent.PROPAGATED, c1)
    trail.push(4, Antecedent.PROPAGATED, c3)
    trail.push(3, Antecedent.PROPAGATED, c2)

    analysis = analyze_conflict(trail, c4)
    chain = [(step.pivot, step.resolvent.literals) for step in analysis.steps]
    assert chain == [
        (3, (-4, -1, 5)),
        (4, (-1, 5, -2)),
        (2, (-1, 5)),
    ]
    assert [step.antecedent for step in analysis.steps] == [c2, c3, c1]
    assert analysis.learned.literals == (-1, 5)
    assert analysis.backjump_level == 3


def test_asserting_clause_after_backjump():
    db, _ = implication_graph_db()
    engine = CdclEngine(5, [], check_invariants=True)
    engine.db = db
    for entry in decided_trail():
        engine.trail.push(entry.lit, entry.kind, level=entry.level)
    outcome = engine.handle_conflict(engine.propagate())
    assert not outcome.unsat
    assert outcome.backjump_level == 3
    assert engine.trail.dl == 3
    assert engine.trail.literals() == [-5, -1]
    assert engine.trail.entry(1).reason is outcome.learned


def test_analyze_requires_a_decision_and_a_false_clause():
    trail = Trail(2)
    trail.push(1, Antecedent.PROPAGATED, Clause((1,)))
    with pytest.raises(ContractViolation):
        analyze_conflict(trail, Clause((-1,)))
    trail.decide(2)
    with pytest.raises(ContractViolation):
        analyze_conflict(trail, Clause((1, -2)))


def test_root_refutation():
    trail = Trail(2)
    reason = Clause((-2, 1))
    trail.push(2, Antecedent.PROPAGATED, Clause((2,)))
    trail.push(1, Antecedent.THEORY, reason)
    analysis = root_refutation(trail, Clause((-2, -1)))
    assert analysis.learned.literals == (-2,)


def random_cnf(rng, max_vars=12):
    num_vars = int(rng.integers(3, max_vars + 1))
    clauses = []
    for _ in range(int(rng.integers(num_vars, 5 * num_vars))):
        width = int(rng.integers(1, 4))
        variables = rng.choice(np.arange(1, num_vars + 1), size=min(width, num_vars), replace=False)
        clauses.append(tuple(int(v) if rng.random() < 0.5 else -int(v) for v in variables))
    return num_vars, clauses


def satisfies(model, clauses):
    return all(any(model[abs(l)] == (l > 0) for l in clause) for clause in clauses)


def truth_table_sat(num_vars, clauses):
    table = np.array(list(product((False, True), repeat=num_vars)))
    alive = np.ones(table.shape[0], dtype=bool)
    for clause in clauses:
        alive &= np.any([table[:, abs(l) - 1] == (l > 0) for l in clause], axis=0)
    return bool(alive.any())


def test_watched_and_naive_bcp_reach_the_same_fixpoint():
    rng = np.random.default_rng(11)
    for _ in range(500):
        num_vars, clauses = random_cnf(rng)
        decisions = rng.permutation(np.arange(1, num_vars + 1))[: int(rng.integers(1, num_vars))]
        outcomes = []
        for watched in (True, False):
            db = ClauseDB(num_vars, watched=watched)
            for clause in clauses:
                db.add(clause, Origin.INITIAL)
            trail = Trail(num_vars)
            conflict = bcp(trail, db)
            for var in decisions:
                if conflict is not None or trail.is_assigned(int(var)):
                    continue
                trail.decide(int(var))
                conflict = bcp(trail, db)
            if conflict is None:
                assert db.open_clauses(trail) == []
                trail.check_invariants()
            outcomes.append((conflict is None, set(trail.literals()) if conflict is None else None))
        assert outcomes[0] == outcomes[1]


@pytest.mark.parametrize("learning, watched", [(True, True), (True, False), (False, True)])
def test_cdcl_matches_truth_table(learning, watched):
    rng = np.random.default_rng(5)
    for trial in range(500):
        num_vars, clauses = random_cnf(rng)
        model = solve_cnf(num_vars, clauses, seed=trial, learning=learning, watched=watched)
        expected = truth_table_sat(num_vars, clauses)
        assert (model is not None) == expected
        if model is not None:
            assert satisfies(model, clauses)


# ---------------------------------------------------------------------------
# Branching and restarts
# ---------------------------------------------------------------------------

def test_decide_picks_lowest_score():
    scores = {1: (1.0, 1.0), 2: (1.0, -1.0), 3: (2.0, 0.0)}
    lit = decide([1, 2, 3], scores.__getitem__, phase_rng(0))
    assert abs(lit) == 2


def test_decide_is_deterministic_per_seed_and_epoch():
    picks = [decide([1, 2, 3], None, phase_rng(4, 2), epoch=2) for _ in range(2)]
    assert picks[0] == picks[1]
    assert decide([], None, phase_rng(0)) is None


def test_phase_follows_first_draw():
    seed = 0
    active = phase_rng(seed).random() < 0.5
    lit = decide([1], None, phase_rng(seed))
    assert (lit > 0) is active


@pytest.mark.parametrize("epoch, nodes, elapsed, expected", [
    (0, 301, 0.0, True),
    (0, 300, 0.0, False),
    (0, 1, 50.5, True),
    (3, 10000, 999.0, False),
])
def test_should_restart(epoch, nodes, elapsed, expected):
    policy = RestartPolicy(epoch=epoch)
    assert should_restart(policy, EpochProgress(nodes, elapsed)) is expected


def test_restart_keeps_level_zero_facts():
    engine = CdclEngine(3, [Clause((1,), Origin.INITIAL)])
    assert engine.propagate() is None
    engine.decide(2)
    engine.restart()
    assert engine.trail.literals() == [1]
    assert engine.trail.dl == 0
