from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from typing import Any, Dict, List, Literal, Optional
from datetime import datetime
import math
import uuid

from models.fields import BandParams

ExperimentName = Literal[
    "covariance-check",
    "kacrice-1d",
    "measure-omega-2d",
    "measure-ends-2d",
    "genus-3d",
    "ns-constant",
    "barrier-demo",
]
GeometryName = Literal["planar", "sphere", "torus", "circle", "3-torus", "planar-box"]

DEFAULT_GEOMETRY: Dict[str, str] = {
    "covariance-check": "planar",
    "kacrice-1d": "circle",
    "measure-omega-2d": "sphere",
    "measure-ends-2d": "sphere",
    "genus-3d": "3-torus",
    "ns-constant": "sphere",
    "barrier-demo": "planar",
}

_ALLOWED_GEOMETRY: Dict[str, tuple] = {
    "covariance-check": ("planar",),
    "kacrice-1d": ("circle",),
    "measure-omega-2d": ("sphere", "torus", "planar"),
    "measure-ends-2d": ("sphere", "torus", "planar"),
    "genus-3d": ("3-torus", "planar-box"),
    "ns-constant": ("sphere", "torus", "planar", "circle"),
    "barrier-demo": ("planar",),
}


class ExperimentConfig(BaseModel):
    """One experiment run. Flat so it can come from a key=value file merged with CLI flags."""
    experiment: ExperimentName
    geometry: Optional[GeometryName] = None
    alpha: float = Field(default=1.0, ge=0.0, le=1.0)
    T: Optional[float] = Field(default=None, gt=0.0)
    ell: Optional[int] = Field(default=None, ge=1)
    eta: Optional[float] = Field(default=None, gt=0.0)
    J: int = Field(default=4096, ge=64)
    samples: int = Field(default=100, ge=1)
    resolution: float = Field(default=12.0, gt=0.0)
    allow_under_resolved: bool = False
    window: float = Field(default=20.0, gt=0.0)  # planar window side, in wavelengths
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    out: Optional[str] = None
    mode: Literal["pooled", "per_sample"] = "pooled"
    spool: bool = False
    include_sub_resolution: bool = False
    m_min: int = Field(default=2, ge=2)
    cutoff: int = Field(default=64, ge=1)
    lags: List[float] = Field(default_factory=lambda: [float(r) for r in range(9)])
    tree: str = "(()())"
    epsilon: float = Field(default=0.1, gt=0.0, lt=0.5)

    @field_validator("lags", mode="before")
    @classmethod
    def _split_lags(cls, value):
        if isinstance(value, str):
            return [float(v) for v in value.replace(",", " ").split()]
        return value

    @model_validator(mode="after")
    def _check(self):
        if self.geometry is None:
            self.geometry = DEFAULT_GEOMETRY[self.experiment]
        if self.geometry not in _ALLOWED_GEOMETRY[self.experiment]:
            raise ValueError(f"geometry {self.geometry!r} is not supported by {self.experiment}")
        if self.resolution < 10.0 and not self.allow_under_resolved:
            raise ValueError(f"resolution {self.resolution} is below 10 samples per wavelength "
                             "(set allow_under_resolved to override)")
        if self.ell is not None and self.T is not None:
            raise ValueError("give either T or ell, not both")
        if self.ell is not None and self.geometry != "sphere":
            raise ValueError("ell only applies to the sphere geometry")
        if self.experiment not in ("covariance-check", "barrier-demo") and self.geometry != "planar":
            if self.T is None and self.ell is None:
                raise ValueError("T (or ell on the sphere) is required")
        if self.eta is not None and not (self.eta < self.spectral_T):
            raise ValueError("eta must satisfy 0 < eta < T")
        if any(r < 0 for r in self.lags):
            raise ValueError("lags must be non-negative")
        return self

    @property
    def spectral_T(self) -> float:
        if self.ell is not None:
            return math.sqrt(self.ell * (self.ell + 1.0))
        return self.T if self.T is not None else 1.0

    def band(self) -> BandParams:
        return BandParams(alpha=self.alpha, T=self.spectral_T, eta=self.eta)


def config_violations(values: Dict[str, Any]) -> List[str]:
    """Field-level messages for a raw mapping; empty iff ExperimentConfig accepts it."""
    try:
        ExperimentConfig.model_validate(values)
    except ValidationError as e:
        messages = []
        for err in e.errors():
            location = ".".join(str(p) for p in err["loc"]) or "config"
            messages.append(f"{location}: {err['msg']}")
        return messages
    return []


class SampleRecord(BaseModel):
    """Per-sample raw tallies; spooled as one JSON line each when auditing."""
    index: int
    seed: int
    atoms: List[str] = Field(default_factory=list)
    unresolved: int = 0
    components: int = 0
    flagged: bool = False
    extras: Dict[str, float] = Field(default_factory=dict)


class RunManifest(BaseModel):
    run_id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    created_at: datetime = Field(default_factory=datetime.utcnow)
    config: ExperimentConfig
    sample_seeds: List[int] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)
    status: Literal["pending", "succeeded", "failed"] = "pending"
