import os

import pandas as pd

from benchmark import AblationRunner, learning_effect, summarize
from database import DatabaseManager
from oracle import ProblemShape
from solver import SearchMode
from spec_io import load_problem

SMALL = ProblemShape(input_dims=(2, 2), hidden_layers=(1, 1), widths=(2, 4), outputs=(1, 1), max_hidden=4)


def test_run_stores_every_mode():
    db = DatabaseManager('sqlite:///:memory:')
    try:
        runner = AblationRunner(suite='tiny', count=3, budget=5.0, shape=SMALL, db=db)
        frame = runner.run(verbose=False)
        assert len(frame) == 3 * len(SearchMode)
        assert frame['agrees'].all()
        assert set(frame['mode']) == {mode.value for mode in SearchMode}
        assert len(db.get_runs('tiny')) == len(frame)
    finally:
        db.close()


def test_summary_tables():
    frame = pd.DataFrame([
        {'instance_seed': 0, 'mode': 'full', 'verdict': 'unsat', 'decisions': 12, 'wall_time': 0.1},
        {'instance_seed': 0, 'mode': 'no-learning', 'verdict': 'unsat', 'decisions': 20, 'wall_time': 0.2},
        {'instance_seed': 1, 'mode': 'full', 'verdict': 'unsat', 'decisions': 3, 'wall_time': 0.1},
        {'instance_seed': 1, 'mode': 'no-learning', 'verdict': 'timeout', 'decisions': 90, 'wall_time': 10.0},
    ])
    table = summarize(frame)
    assert table.loc['full', 'solved'] == 2
    assert table.loc['no-learning', 'solved'] == 1

    effect = learning_effect(frame)
    assert effect['instances'] == 1
    assert effect['median_decisions_learning'] == 12
    assert effect['median_decisions_no_learning'] == 20
    assert effect['learning_solves_superset']


def test_export_writes_loadable_problems(tmp_path):
    runner = AblationRunner(count=2, seed=7, shape=SMALL)
    runner.export(str(tmp_path))
    for name in ('random-7', 'random-8'):
        base = os.path.join(tmp_path, name)
        problem = load_problem(base + '.json', base + '.vnnlib')
        assert problem.net.input_dim == 2
