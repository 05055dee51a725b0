import time

import numpy as np
import pytest

import theory
from abstraction import AbstractionMode
from benchmark import AblationRunner, learning_effect, summarize
from errors import ConfigError, SolverError
from oracle import enumerate_verify, generate_random_problem
from solver import Decider, SearchMode, SolverConfig, VerdictKind, dpllt_loop, format_stats, split_input, verify
from spec_io import VerificationProblem
from tests.conftest import find_seed


def worked_run_config(**overrides):
    values = dict(
        abstraction=AbstractionMode.INTERVAL,
        lp_relaxation="loose",
        attack=False,
        check_invariants=True,
    )
    values.update(overrides)
    return SolverConfig.create(**values)


def test_worked_run_with_tightening(valid_problem):
    cfg = worked_run_config(seed=find_seed(False))
    started = time.monotonic()
    verdict = verify(valid_problem, cfg)
    assert time.monotonic() - started < 5.0

    assert verdict.kind is VerdictKind.UNSAT
    assert verdict.learned == ["(v4)", "(~v4)"]
    assert verdict.stats.iterations == 4
    assert verdict.stats.decisions == 1
    assert verdict.stats.implications == 1

    first, second, third, fourth = verdict.trace
    assert first.deduction == "feasible" and first.decision == "~v4@1"
    assert second.deduction == "conflict (bounds)"
    assert second.learned == "(v4)" and second.backjump == 0
    # the theory implies x3 and the loop re-enters BCP without deciding
    assert third.bcp == ["v4"] and third.implied == ["v3"] and third.decision is None
    assert fourth.deduction == "conflict (lp)" and fourth.learned == "(~v4)"


def test_worked_run_without_tightening(valid_problem):
    cfg = worked_run_config(seed=find_seed(False, True), tighten=False)
    verdict = verify(valid_problem, cfg)

    assert verdict.kind is VerdictKind.UNSAT
    assert verdict.learned == ["(v4)", "(~v4 | ~v3)", "(~v4)"]
    assert verdict.stats.iterations == 5
    assert verdict.stats.decisions == 2
    assert [entry.decision for entry in verdict.trace] == ["~v4@1", None, "v3@1", None, None]
    assert [entry.backjump for entry in verdict.trace] == [None, 0, None, 0, None]


@pytest.mark.parametrize("mode", list(SearchMode))
@pytest.mark.parametrize("abstraction", list(AbstractionMode))
def test_valid_property_is_proven_in_every_configuration(valid_problem, mode, abstraction):
    cfg = SolverConfig.create(mode=mode, abstraction=abstraction, attack=False, check_invariants=True)
    assert verify(valid_problem, cfg).kind is VerdictKind.UNSAT


@pytest.mark.parametrize("decider", list(Decider))
def test_deciders(disjunctive_problem, decider):
    cfg = SolverConfig.create(decider=decider, attack=False, check_invariants=True)
    assert verify(disjunctive_problem, cfg).kind is VerdictKind.UNSAT


def test_attack_fast_path(invalid_problem):
    verdict = verify(invalid_problem, SolverConfig())
    assert verdict.kind is VerdictKind.SAT
    assert verdict.reason == "attack"
    assert invalid_problem.is_counterexample(verdict.witness)


def test_search_finds_a_validated_witness(invalid_problem):
    verdict = verify(invalid_problem, SolverConfig.create(attack=False, check_invariants=True))
    assert verdict.kind is VerdictKind.SAT
    assert invalid_problem.is_counterexample(verdict.witness)


def test_split_input_tiles_the_box():
    boxes = split_input([-1.0, -2.0], [1.0, 2.0], 2)
    assert len(boxes) == 4
    area = sum(np.prod(hi - lo) for lo, hi in boxes)
    assert area == pytest.approx(8.0)
    assert split_input([0.0], [1.0], 1)[0][1].tolist() == [1.0]


def test_split_subproblems(valid_problem):
    cfg = SolverConfig.create(split_per_dim=2, attack=False)
    verdict = verify(valid_problem, cfg)
    assert verdict.kind is VerdictKind.UNSAT
    assert {entry.subproblem for entry in verdict.trace} == {0, 1, 2, 3}


def test_parallel_matches_sequential(valid_problem):
    sequential = verify(valid_problem, SolverConfig.create(split_per_dim=2, attack=False))
    parallel = verify(valid_problem, SolverConfig.create(split_per_dim=2, attack=False, jobs=2))
    assert parallel.kind is sequential.kind
    assert parallel.stats.counters() == sequential.stats.counters()


def test_runs_are_deterministic():
    problem = generate_random_problem(seed=12)
    cfg = SolverConfig.create(seed=5, attack=False)
    first, second = verify(problem, cfg), verify(problem, cfg)
    assert first.kind is second.kind
    assert first.stats.counters() == second.stats.counters()
    assert first.learned == second.learned


def test_restarts_keep_the_verdict(valid_problem):
    cfg = SolverConfig.create(restart_nodes=1, attack=False, tighten=False,
                              abstraction=AbstractionMode.INTERVAL, lp_relaxation="loose")
    verdict = verify(valid_problem, cfg)
    assert verdict.kind is VerdictKind.UNSAT
    assert verdict.stats.restarts <= cfg.max_restarts


def test_loop_finds_validated_witness(invalid_problem):
    result = dpllt_loop(invalid_problem, invalid_problem.negated_output[0], SolverConfig.create(attack=False))
    assert result.kind is VerdictKind.SAT
    assert invalid_problem.is_counterexample(result.witness)
    assert result.stats.decisions <= result.stats.iterations


def test_loop_reports_learned_clauses(valid_problem):
    cfg = SolverConfig.create(restart_nodes=1, attack=False, tighten=False,
                              abstraction=AbstractionMode.INTERVAL, lp_relaxation="loose")
    result = dpllt_loop(valid_problem, valid_problem.negated_output[0], cfg)
    assert result.kind is VerdictKind.UNSAT
    assert result.stats.learned_clauses == len(result.learned) >= 1
    assert [entry.iteration for entry in result.trace] == list(range(1, result.stats.iterations + 1))


def test_loop_past_deadline_is_timeout(valid_problem):
    result = dpllt_loop(valid_problem, valid_problem.negated_output[0], SolverConfig.create(attack=False),
                        deadline=time.monotonic() - 1.0)
    assert result.kind is VerdictKind.TIMEOUT
    assert result.stats.iterations == 0


def test_timeout(valid_problem):
    verdict = verify(valid_problem, SolverConfig.create(timeout=1e-9, attack=False))
    assert verdict.kind is VerdictKind.TIMEOUT


def test_lp_failure_becomes_unknown(valid_problem, monkeypatch):
    def broken(*args, **kwargs):
        raise SolverError("simplex exceeded the pivot limit")

    monkeypatch.setattr(theory, "solve_lp", broken)
    verdict = verify(valid_problem, SolverConfig.create(attack=False))
    assert verdict.kind is VerdictKind.UNKNOWN
    assert "pivot" in verdict.reason


def test_unvalidated_witness_becomes_unknown(invalid_problem, monkeypatch):
    monkeypatch.setattr(VerificationProblem, "is_counterexample", lambda self, x: False)
    verdict = verify(invalid_problem, SolverConfig.create(attack=False))
    assert verdict.kind is VerdictKind.UNKNOWN


@pytest.mark.parametrize("values", [{"timeout": 0}, {"mode": "bogus"}, {"jobs": 0}, {"split_per_dim": 0}])
def test_config_validation(values):
    with pytest.raises(ConfigError):
        SolverConfig.create(**values)


def test_format_stats(valid_problem):
    verdict = verify(valid_problem, SolverConfig.create(attack=False))
    lines = format_stats(verdict.stats).splitlines()
    keys = [line.split("=", 1)[0] for line in lines]
    assert keys[:3] == ["iterations", "decisions", "learned_clauses"]
    assert "wall_time" in keys


def assert_agrees_with_oracle(problem, cfg):
    expected = enumerate_verify(problem)
    verdict = verify(problem, cfg)
    if expected.kind in (VerdictKind.SAT, VerdictKind.UNSAT):
        assert verdict.kind is expected.kind, problem.name
    if verdict.kind is VerdictKind.SAT:
        assert problem.is_counterexample(verdict.witness)


@pytest.mark.parametrize("mode", list(SearchMode))
def test_agrees_with_oracle_on_small_suite(mode):
    for seed in range(25):
        cfg = SolverConfig.create(seed=seed, mode=mode, attack=False, check_invariants=True)
        assert_agrees_with_oracle(generate_random_problem(seed=seed), cfg)


@pytest.mark.slow
def test_agrees_with_oracle_on_full_suite():
    started = time.monotonic()
    for seed in range(200):
        assert_agrees_with_oracle(generate_random_problem(seed=seed), SolverConfig.create(seed=seed))
    assert time.monotonic() - started < 600


@pytest.mark.slow
def test_learning_does_not_hurt():
    frame = AblationRunner(count=60, budget=10.0, modes=(SearchMode.FULL, SearchMode.NO_LEARNING)).run(verbose=False)
    assert frame['agrees'].all()
    effect = learning_effect(frame)
    assert effect['learning_solves_superset']
    if effect['instances']:
        assert effect['median_decisions_learning'] <= effect['median_decisions_no_learning']
    assert set(summarize(frame).index) == {"full", "no-learning"}


def test_split_boxes_cover_the_input_box():
    rng = np.random.default_rng(31)
    lower, upper = np.array([-1.0, -2.0, 0.5]), np.array([1.0, 2.0, 3.0])
    boxes = split_input(lower, upper, 3)
    assert len(boxes) == 27
    los = np.array([lo for lo, _ in boxes])
    his = np.array([hi for _, hi in boxes])
    for x in rng.uniform(lower, upper, size=(10_000, 3)):
        assert np.any(np.all((los <= x) & (x <= his), axis=1))
