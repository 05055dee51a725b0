"""Ablation harness: run the random suite under each search mode and store the runs."""

import logging
import os
from typing import Iterable, Optional

import pandas as pd

from database import DatabaseManager
from errors import RefusalError
from oracle import ProblemShape, enumerate_verify, generate_random_problem
from solver import SearchMode, SolverConfig, VerdictKind, verify
from spec_io import format_vnnlib, serialize_network

logger = logging.getLogger(__name__)

# instances needing fewer decisions than this say little about learning
MIN_DECISIONS = 10


class AblationRunner:
    """Runs every search mode on a seeded suite of random problems."""

    def __init__(self, suite="random", count=50, seed=0, budget=10.0,
                 modes: Iterable[SearchMode] = tuple(SearchMode), shape: Optional[ProblemShape] = None,
                 attack=False, db: Optional[DatabaseManager] = None):
        self.suite = suite
        self.count = count
        self.seed = seed
        self.budget = budget
        self.modes = [SearchMode(mode) for mode in modes]
        self.shape = shape or ProblemShape()
        self.attack = attack
        self.db = db

    def problems(self):
        for k in range(self.count):
            yield self.seed + k, generate_random_problem(self.shape, self.seed + k)

    def export(self, directory):
        """Write each suite problem as <name>.json + <name>.vnnlib."""
        os.makedirs(directory, exist_ok=True)
        for instance_seed, problem in self.problems():
            base = os.path.join(directory, problem.name)
            with open(base + ".json", "w", encoding="utf-8") as f:
                f.write(serialize_network(problem.net))
            with open(base + ".vnnlib", "w", encoding="utf-8") as f:
                f.write(format_vnnlib(problem))
        print(f"📁 Wrote {self.count} problems to {directory}")

    def run(self, check_oracle=True, verbose=True) -> pd.DataFrame:
        """One row per (instance, mode); rows are also stored when a database is attached."""
        rows = []
        if verbose:
            print(f"🧪 Running suite '{self.suite}': {self.count} problems x {len(self.modes)} modes")
            print("-" * 80)

        for instance_seed, problem in self.problems():
            expected = None
            if check_oracle:
                try:
                    expected = enumerate_verify(problem).kind.value
                except RefusalError as e:
                    logger.warning("oracle skipped %s: %s", problem.name, e)

            for mode in self.modes:
                cfg = SolverConfig.create(seed=instance_seed, timeout=self.budget, mode=mode, attack=self.attack)
                verdict = verify(problem, cfg)
                record = {
                    'suite': self.suite,
                    'instance_seed': instance_seed,
                    'mode': mode.value,
                    'verdict': verdict.kind.value,
                    **verdict.stats.as_dict(),
                }
                if self.db is not None:
                    self.db.add_run(record)
                record['oracle'] = expected
                record['agrees'] = (
                    expected in (None, VerdictKind.UNKNOWN.value)
                    or verdict.kind.value == expected
                    or verdict.kind in (VerdictKind.TIMEOUT, VerdictKind.UNKNOWN)
                )
                rows.append(record)

            if verbose:
                outcome = ", ".join(f"{r['mode']}={r['verdict']}" for r in rows[-len(self.modes):])
                print(f"   {problem.name}: {outcome} (oracle: {expected})")

        frame = pd.DataFrame(rows)
        if verbose:
            print_summary(frame)
        return frame


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Per mode: solved count, median decisions and median wall time."""
    solved = frame['verdict'].isin(['sat', 'unsat'])
    return frame.assign(solved=solved).groupby('mode').agg(
        runs=('verdict', 'size'),
        solved=('solved', 'sum'),
        median_decisions=('decisions', 'median'),
        median_wall_time=('wall_time', 'median'),
    )


def learning_effect(frame: pd.DataFrame, min_decisions: int = MIN_DECISIONS) -> dict:
    """Compare clause learning on and off over unsat instances that needed real search."""
    full = frame[frame['mode'] == SearchMode.FULL.value].set_index('instance_seed')
    plain = frame[frame['mode'] == SearchMode.NO_LEARNING.value].set_index('instance_seed')
    common = full.index.intersection(plain.index)
    full, plain = full.loc[common], plain.loc[common]

    hard = full[(full['verdict'] == 'unsat') & (full['decisions'] >= min_decisions)].index
    solved_full = set(full[full['verdict'].isin(['sat', 'unsat'])].index)
    solved_plain = set(plain[plain['verdict'].isin(['sat', 'unsat'])].index)
    return {
        'instances': len(hard),
        'median_decisions_learning': float(full.loc[hard, 'decisions'].median()) if len(hard) else None,
        'median_decisions_no_learning': float(plain.loc[hard, 'decisions'].median()) if len(hard) else None,
        'learning_solves_superset': solved_plain <= solved_full,
    }


def print_summary(frame: pd.DataFrame):
    print(f"\n📊 Summary:")
    print("-" * 80)
    for mode, row in summarize(frame).iterrows():
        print(f"   {mode}: solved {int(row['solved'])}/{int(row['runs'])}, "
              f"median decisions {row['median_decisions']:g}, median time {row['median_wall_time']:.3f}s")
    if 'agrees' in frame:
        disagreements = frame[~frame['agrees']]
        if disagreements.empty:
            print("   ✅ Every definitive verdict matches the oracle")
        else:
            print(f"   ❌ {len(disagreements)} verdict(s) disagree with the oracle")
    modes = set(frame['mode'])
    if {SearchMode.FULL.value, SearchMode.NO_LEARNING.value} <= modes:
        effect = learning_effect(frame)
        print(f"   Learning on {effect['instances']} hard unsat instances: "
              f"median decisions {effect['median_decisions_learning']} vs {effect['median_decisions_no_learning']}")
