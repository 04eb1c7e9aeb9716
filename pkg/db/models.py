"""
Database models for the experiment run ledger.
"""
from datetime import datetime
from sqlalchemy import Column, Integer, String, DateTime, Float, ForeignKey
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class ExperimentRun(Base):
    """One completed run of the simulator."""
    __tablename__ = "experiment_runs"

    run_id = Column(Integer, primary_key=True, autoincrement=True)
    name = Column(String(200), nullable=False)
    mode = Column(String(20), nullable=False)
    graph_kind = Column(String(20), nullable=False)
    n = Column(Integer, nullable=False)
    T = Column(Integer, nullable=False)
    effective_T = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    output_dir = Column(String(500), nullable=False)
    mean_objective = Column(Float, nullable=False)
    comparator_value = Column(Float, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)

    outcomes = relationship("AgentOutcome", back_populates="run", cascade="all, delete-orphan")


class AgentOutcome(Base):
    """Final regret and ratio of one agent in a run."""
    __tablename__ = "agent_outcomes"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.run_id"), nullable=False)
    agent = Column(Integer, nullable=False)
    final_regret = Column(Float, nullable=False)
    final_ratio = Column(Float, nullable=True)  # NULL when the comparator sum is 0

    run = relationship("ExperimentRun", back_populates="outcomes")
