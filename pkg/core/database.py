from sqlmodel import SQLModel, Field, Session, create_engine, select
from typing import Optional, List
from datetime import datetime
import uuid

from core.config import settings

# --- Database Models ---

class ExperimentRun(SQLModel, table=True):
    id: str = Field(default_factory=lambda: str(uuid.uuid4()), primary_key=True)
    experiment: str
    params: str  # JSON of the validated ExperimentConfig
    seed: int
    status: str = "pending"  # pending | succeeded | failed
    created_at: datetime = Field(default_factory=datetime.utcnow)
    output_dir: Optional[str] = None
    summary: Optional[str] = None  # JSON summary written by the loader


class MeasureAtom(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: str = Field(foreign_key="experimentrun.id")
    atom: str
    mass: float
    stderr: float = 0.0
    is_unresolved: bool = False

# --- Database Setup ---

engine = create_engine(settings.database_url, echo=settings.sql_echo)

def configure_engine(database_url: str):
    """Rebind the module engine (used by tests and the CLI --db flag)."""
    global engine
    engine = create_engine(database_url, echo=False)
    create_db_and_tables()
    return engine

def create_db_and_tables():
    SQLModel.metadata.create_all(engine)

# --- Run Operations ---

def record_run(run: ExperimentRun) -> ExperimentRun:
    with Session(engine) as session:
        session.add(run)
        session.commit()
        session.refresh(run)
        return run

def update_run(run_id: str, status: str, summary: Optional[str] = None, output_dir: Optional[str] = None) -> Optional[ExperimentRun]:
    with Session(engine) as session:
        run = session.get(ExperimentRun, run_id)
        if not run:
            return None
        run.status = status
        if summary is not None:
            run.summary = summary
        if output_dir is not None:
            run.output_dir = output_dir
        session.add(run)
        session.commit()
        session.refresh(run)
        return run

def get_run(run_id: str) -> Optional[ExperimentRun]:
    with Session(engine) as session:
        return session.get(ExperimentRun, run_id)

def get_all_runs() -> List[ExperimentRun]:
    with Session(engine) as session:
        return session.exec(select(ExperimentRun)).all()

# --- Measure Operations ---

def add_atoms(atoms: List[MeasureAtom]) -> int:
    with Session(engine) as session:
        for atom in atoms:
            session.add(atom)
        session.commit()
    return len(atoms)

def get_atoms_for_run(run_id: str) -> List[MeasureAtom]:
    with Session(engine) as session:
        statement = select(MeasureAtom).where(MeasureAtom.run_id == run_id)
        return session.exec(statement).all()
