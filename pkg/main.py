from fastapi import FastAPI
import logging

from app.routes.runs import router as runs_router
from app.routes.kernel import router as kernel_router
from app.routes.barriers import router as barriers_router
from core.config import settings
from core.database import create_db_and_tables

logging.basicConfig(level=settings.log_level)

app = FastAPI(
    title="Nodal Lab API",
    description="Browse Monte-Carlo runs on nodal sets of random band-limited functions, "
                "tabulate limit covariances and build barrier functions for prescribed nesting trees.",
    version="0.1.0"
)

# Include Routers
app.include_router(runs_router)
app.include_router(kernel_router)
app.include_router(barriers_router)

@app.on_event("startup")
def on_startup():
    create_db_and_tables()

@app.get("/")
async def root():
    return {"message": "Welcome to the Nodal Lab API. Visit /docs for documentation."}
