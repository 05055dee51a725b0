"""Database operations for stored verification runs."""

import logging
from datetime import datetime
from statistics import median

from sqlalchemy import Column, DateTime, Float, Integer, String, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from config import RESULTS_DATABASE_URL

logger = logging.getLogger(__name__)

Base = declarative_base()


class VerificationRun(Base):
    """SQLAlchemy model for one solver run on one suite instance."""

    __tablename__ = 'verification_runs'

    id = Column(Integer, primary_key=True)
    suite = Column(String(100), nullable=False, index=True)
    instance_seed = Column(Integer, nullable=False)
    mode = Column(String(50), nullable=False)  # full, no-restart, no-learning
    verdict = Column(String(20), nullable=False)  # sat, unsat, unknown, timeout
    iterations = Column(Integer, default=0)
    decisions = Column(Integer, default=0)
    learned_clauses = Column(Integer, default=0)
    restarts = Column(Integer, default=0)
    theory_calls = Column(Integer, default=0)
    wall_time = Column(Float, default=0.0)
    created_at = Column(DateTime, default=datetime.utcnow)

    def as_dict(self):
        return {
            'suite': self.suite,
            'instance_seed': self.instance_seed,
            'mode': self.mode,
            'verdict': self.verdict,
            'iterations': self.iterations,
            'decisions': self.decisions,
            'learned_clauses': self.learned_clauses,
            'restarts': self.restarts,
            'theory_calls': self.theory_calls,
            'wall_time': self.wall_time,
        }


class DatabaseManager:
    """Manages database operations."""

    def __init__(self, db_url=None):
        db_url = db_url or RESULTS_DATABASE_URL

        engine_kwargs = {'echo': False}
        if db_url.startswith('postgresql://') or db_url.startswith('postgresql+psycopg2://'):
            engine_kwargs.update({
                'pool_size': 5,
                'max_overflow': 10,
                'pool_pre_ping': True
            })

        self.engine = create_engine(db_url, **engine_kwargs)
        Base.metadata.create_all(self.engine)
        Session = sessionmaker(bind=self.engine)
        self.session = Session()

    def add_run(self, record):
        """Store one run; `record` is a dict with the VerificationRun columns."""
        try:
            run = VerificationRun(
                suite=record['suite'],
                instance_seed=record['instance_seed'],
                mode=record['mode'],
                verdict=record['verdict'],
                iterations=record.get('iterations', 0),
                decisions=record.get('decisions', 0),
                learned_clauses=record.get('learned_clauses', 0),
                restarts=record.get('restarts', 0),
                theory_calls=record.get('theory_calls', 0),
                wall_time=record.get('wall_time', 0.0),
            )
            self.session.add(run)
            self.session.commit()
            return run
        except Exception as e:
            self.session.rollback()
            logger.error("Error adding verification run: %s", e)
            return None

    def get_runs(self, suite=None, mode=None):
        """Stored runs, optionally filtered by suite and mode."""
        query = self.session.query(VerificationRun)
        if suite:
            query = query.filter(VerificationRun.suite == suite)
        if mode:
            query = query.filter(VerificationRun.mode == mode)
        return query.order_by(VerificationRun.instance_seed, VerificationRun.id).all()

    def get_suites(self):
        """Names of every suite with stored runs."""
        return [row[0] for row in self.session.query(VerificationRun.suite).distinct().order_by(VerificationRun.suite)]

    def summarize(self, suite):
        """Per-mode counts of each verdict plus median decisions and wall time."""
        summary = {}
        for run in self.get_runs(suite):
            entry = summary.setdefault(run.mode, {'runs': 0, 'verdicts': {}, 'decisions': [], 'wall_time': []})
            entry['runs'] += 1
            entry['verdicts'][run.verdict] = entry['verdicts'].get(run.verdict, 0) + 1
            entry['decisions'].append(run.decisions)
            entry['wall_time'].append(run.wall_time)
        for entry in summary.values():
            entry['median_decisions'] = median(entry.pop('decisions'))
            entry['median_wall_time'] = median(entry.pop('wall_time'))
            entry['solved'] = entry['verdicts'].get('sat', 0) + entry['verdicts'].get('unsat', 0)
        return summary

    def clear_suite(self, suite):
        """Delete every stored run of a suite; returns how many were removed."""
        try:
            count = self.session.query(VerificationRun).filter(VerificationRun.suite == suite).delete()
            self.session.commit()
            return count
        except Exception as e:
            self.session.rollback()
            logger.error("Error clearing suite %s: %s", suite, e)
            return 0

    def close(self):
        """Close the database session."""
        self.session.close()
