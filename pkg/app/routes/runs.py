from fastapi import APIRouter, Body, HTTPException
from typing import Any, Dict
import json

from core.database import get_all_runs, get_atoms_for_run, get_run
from core.errors import NodalLabError, ParameterError
from experiments.pipeline import ExperimentPipeline
from models.experiment import ExperimentConfig, config_violations

router = APIRouter(
    prefix="/runs",
    tags=["runs"]
)

# POST /runs/ runs synchronously inside the request
MAX_HTTP_SAMPLES = 50


def _run_view(run) -> dict:
    return {
        "id": run.id,
        "experiment": run.experiment,
        "seed": run.seed,
        "status": run.status,
        "created_at": run.created_at,
        "output_dir": run.output_dir,
        "params": json.loads(run.params),
        "summary": json.loads(run.summary) if run.summary else None,
    }


@router.get("/")
async def list_runs():
    """All recorded experiment runs."""
    return [_run_view(run) for run in get_all_runs()]


@router.get("/{run_id}")
async def get_run_by_id(run_id: str):
    run = get_run(run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return _run_view(run)


@router.get("/{run_id}/measure")
async def get_run_measure(run_id: str):
    """Stored atoms of a run's empirical measure, unresolved bucket last."""
    if not get_run(run_id):
        raise HTTPException(status_code=404, detail="Run not found")
    atoms = get_atoms_for_run(run_id)
    atoms.sort(key=lambda a: (a.is_unresolved, a.id))
    return [{"atom": a.atom, "mass": a.mass, "stderr": a.stderr, "unresolved": a.is_unresolved} for a in atoms]


@router.post("/")
def create_run(payload: Dict[str, Any] = Body(...)):
    """
    Run a small experiment synchronously and return its manifest.
    Config violations come back as a 400 with one message per field.
    """
    violations = config_violations(payload)
    if violations:
        raise HTTPException(status_code=400, detail=violations)
    config = ExperimentConfig.model_validate(payload)
    if config.samples > MAX_HTTP_SAMPLES:
        raise HTTPException(status_code=400, detail=f"at most {MAX_HTTP_SAMPLES} samples per request; use the CLI")
    config = config.model_copy(update={"workers": 1})
    try:
        manifest = ExperimentPipeline(config).run()
    except ParameterError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except NodalLabError as e:
        raise HTTPException(status_code=422, detail=f"{type(e).__name__}: {e}")
    return json.loads(manifest.model_dump_json())
