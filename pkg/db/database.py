"""
Run-ledger client for SQLite operations.
"""
import math
import os
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, Session
from sqlalchemy.exc import SQLAlchemyError
from typing import Iterable, Optional, List, Dict, Tuple

from app.errors import LedgerError
from db.models import Base, ExperimentRun, AgentOutcome


class RunLedger:
    """SQLite ledger of experiment runs."""

    def __init__(self, db_path: str = "runs/ledger.db"):
        """Initialize database connection."""
        self.db_path = db_path
        directory = os.path.dirname(db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.engine = create_engine(f"sqlite:///{db_path}", echo=False)
        self.SessionLocal = sessionmaker(bind=self.engine)
        self._create_tables()

    def _create_tables(self):
        """Create all tables if they don't exist."""
        try:
            Base.metadata.create_all(self.engine)
        except SQLAlchemyError as e:
            raise LedgerError(f"Cannot open run ledger {self.db_path}: {e}")

    def get_session(self) -> Session:
        """Get a database session."""
        return self.SessionLocal()

    def record_run(
        self,
        name: str,
        mode: str,
        graph_kind: str,
        n: int,
        T: int,
        effective_T: int,
        seed: int,
        output_dir: str,
        mean_objective: float,
        comparator_value: float,
        outcomes: Iterable[Tuple[int, float, Optional[float]]] = (),
    ) -> int:
        """Store a run with its per-agent (agent, final_regret, final_ratio) outcomes; returns the run id."""
        session = self.get_session()
        try:
            run = ExperimentRun(
                name=name,
                mode=mode,
                graph_kind=graph_kind,
                n=n,
                T=T,
                effective_T=effective_T,
                seed=seed,
                output_dir=output_dir,
                mean_objective=mean_objective,
                comparator_value=comparator_value,
            )
            for agent, regret, ratio in outcomes:
                if ratio is not None and math.isnan(ratio):
                    ratio = None
                run.outcomes.append(AgentOutcome(agent=agent, final_regret=regret, final_ratio=ratio))
            session.add(run)
            session.commit()
            session.refresh(run)
            return run.run_id
        except SQLAlchemyError as e:
            session.rollback()
            raise LedgerError(f"Database error recording run '{name}': {e}")
        finally:
            session.close()

    def _to_dict(self, run: ExperimentRun) -> Dict:
        return {
            "run_id": run.run_id,
            "name": run.name,
            "mode": run.mode,
            "graph_kind": run.graph_kind,
            "n": run.n,
            "T": run.T,
            "effective_T": run.effective_T,
            "seed": run.seed,
            "output_dir": run.output_dir,
            "mean_objective": run.mean_objective,
            "comparator_value": run.comparator_value,
            "created_at": run.created_at.isoformat() if run.created_at else None,
            "outcomes": [
                {"agent": o.agent, "final_regret": o.final_regret, "final_ratio": o.final_ratio}
                for o in sorted(run.outcomes, key=lambda o: o.agent)
            ],
        }

    def get_all_runs(self) -> List[Dict]:
        """Get all runs with their agent outcomes, oldest first."""
        session = self.get_session()
        try:
            runs = session.query(ExperimentRun).order_by(ExperimentRun.run_id).all()
            return [self._to_dict(run) for run in runs]
        except SQLAlchemyError as e:
            raise LedgerError(f"Database error fetching runs: {e}")
        finally:
            session.close()

    def search_runs(
        self,
        name: Optional[str] = None,
        mode: Optional[str] = None,
        graph_kind: Optional[str] = None
    ) -> List[Dict]:
        """Search runs by name substring, mode or graph kind."""
        session = self.get_session()
        try:
            query = session.query(ExperimentRun)

            if name:
                query = query.filter(ExperimentRun.name.ilike(f"%{name}%"))
            if mode:
                query = query.filter(ExperimentRun.mode == mode)
            if graph_kind:
                query = query.filter(ExperimentRun.graph_kind == graph_kind)

            runs = query.order_by(ExperimentRun.run_id).all()
            return [self._to_dict(run) for run in runs]
        except SQLAlchemyError as e:
            raise LedgerError(f"Database error searching runs: {e}")
        finally:
            session.close()
