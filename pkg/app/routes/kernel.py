from fastapi import APIRouter, HTTPException, Query

from app.services.kernel import KernelService, Method, covariance_spec
from core.errors import ParameterError

router = APIRouter(
    prefix="/kernel",
    tags=["kernel"]
)

MAX_TABLE_POINTS = 2001


@router.get("/covariance")
async def covariance_table(n: int = 2, alpha: float = 1.0, r_max: float = Query(20.0, ge=0.0),
                           step: float = Query(0.25, gt=0.0), method: Method = "auto"):
    """(r, B(r)) table of the limit covariance B_{n,alpha}."""
    count = int(r_max / step) + 1
    if count > MAX_TABLE_POINTS:
        raise HTTPException(status_code=400, detail=f"at most {MAX_TABLE_POINTS} points per table")
    try:
        spec = covariance_spec(n, alpha)
        table = KernelService.covariance_table(spec, [i * step for i in range(count)], method)
    except ParameterError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {"n": n, "alpha": alpha, "rows": [{"r": r, "B": b} for r, b in table]}


@router.get("/ns-constant-1d")
async def ns_constant_1d(alpha: float = 1.0):
    try:
        return {"alpha": alpha, "beta": KernelService.ns_constant_1d(alpha)}
    except ParameterError as e:
        raise HTTPException(status_code=400, detail=str(e))
