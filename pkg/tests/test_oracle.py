import numpy as np
import pytest

from attack import AttackConfig, random_attack
from errors import RefusalError
from network import Activation, Layer, Network, activation_pattern
from oracle import MAX_ORACLE_NEURONS, ProblemShape, enumerate_verify, generate_random_problem
from solver import VerdictKind
from spec_io import Comparison, LinearConstraint, VerificationProblem
from theory import LpRelaxation, build_lp


def test_valid_property_is_unsat(valid_problem):
    assert enumerate_verify(valid_problem).kind is VerdictKind.UNSAT


def test_disjunctive_property_is_unsat(disjunctive_problem):
    assert enumerate_verify(disjunctive_problem).kind is VerdictKind.UNSAT


def test_invalid_property_is_sat(invalid_problem):
    verdict = enumerate_verify(invalid_problem)
    assert verdict.kind is VerdictKind.SAT
    assert invalid_problem.is_counterexample(verdict.witness)


def test_refuses_large_networks():
    width = MAX_ORACLE_NEURONS + 1
    net = Network(1, [
        Layer(np.ones((width, 1)), np.zeros(width)),
        Layer(np.ones((1, width)), np.zeros(1), Activation.IDENTITY),
    ])
    constraint = LinearConstraint((1.0,), Comparison.GE, 0.0)
    problem = VerificationProblem(net, np.zeros(1), np.ones(1), ((constraint,),))
    with pytest.raises(RefusalError):
        enumerate_verify(problem)


def test_generator_is_deterministic():
    a, b = generate_random_problem(seed=4), generate_random_problem(seed=4)
    assert a.name == "random-4"
    assert len(a.net.layers) == len(b.net.layers)
    for left, right in zip(a.net.layers, b.net.layers):
        np.testing.assert_array_equal(left.weights, right.weights)
    assert a.negated_output == b.negated_output


def test_generator_respects_shape():
    shape = ProblemShape()
    for seed in range(50):
        problem = generate_random_problem(shape, seed)
        assert problem.net.num_hidden <= shape.max_hidden
        assert shape.input_dims[0] <= problem.net.input_dim <= shape.input_dims[1]
        np.testing.assert_array_equal(problem.lower, -1.0)
        np.testing.assert_array_equal(problem.upper, 1.0)


def test_generator_produces_both_verdicts():
    kinds = {enumerate_verify(generate_random_problem(seed=seed)).kind for seed in range(40)}
    assert {VerdictKind.SAT, VerdictKind.UNSAT} <= kinds


def test_every_box_point_lies_in_its_pattern_polytope():
    rng = np.random.default_rng(19)
    for seed in range(5):
        problem = generate_random_problem(seed=seed)
        for x in rng.uniform(problem.lower, problem.upper, size=(2000, problem.net.input_dim)):
            status = activation_pattern(problem.net, x)
            lp = build_lp(problem, status, (), relaxation=LpRelaxation.LOOSE)
            assert lp.violation(x) <= 1e-9


@pytest.mark.slow
def test_sampling_finds_nothing_on_unsat_problems():
    checked = 0
    for seed in range(50):
        problem = generate_random_problem(seed=seed)
        if enumerate_verify(problem).kind is not VerdictKind.UNSAT:
            continue
        assert random_attack(problem, AttackConfig(samples=100_000, seed=seed)) is None
        checked += 1
    assert checked > 0


@pytest.mark.slow
def test_generator_is_balanced():
    kinds = [enumerate_verify(generate_random_problem(seed=seed)).kind for seed in range(200)]
    assert kinds.count(VerdictKind.SAT) >= 40
    assert kinds.count(VerdictKind.UNSAT) >= 40
