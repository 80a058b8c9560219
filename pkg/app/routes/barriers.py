from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from app.services.barriers import DEFAULT_EPSILON, BarriersService
from core.errors import ConstructionError, ParameterError, StructuralError

router = APIRouter(
    prefix="/barriers",
    tags=["barriers"]
)

# synchronous construction; larger trees belong to the CLI
MAX_HTTP_TREE = 16


class RealizeRequest(BaseModel):
    tree: str
    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0.0, lt=0.5)
    seed: int = Field(default=0, ge=0)


@router.post("/realize")
def realize(request: RealizeRequest):
    """Build and verify a barrier function whose nesting graph has the requested tree as an end."""
    try:
        realization = BarriersService.realize_tree(request.tree, bound=MAX_HTTP_TREE,
                                                   epsilon=request.epsilon, seed=request.seed)
    except (ParameterError, StructuralError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except ConstructionError as e:
        raise HTTPException(status_code=422, detail={"message": str(e), "diagnostics": e.diagnostics})
    return {
        "canonical_code": realization.canonical_code,
        "attempts": realization.attempts,
        "epsilon": realization.spec.epsilon,
        "seed": realization.seed,
        "window": list(realization.window),
        "lattice_points": realization.spec.K.tolist(),
        "signs": realization.spec.signs.tolist(),
    }
