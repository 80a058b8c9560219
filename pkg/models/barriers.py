from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal, Tuple
import math
import numpy as np

from models.arrays import IntArray
from models.fields import PlaneWaveField

BaseTag = Literal["grid2d", "boxes3d"]

# |(pi, pi)|: the grid functions are monochromatic at this frequency, so perturbations
# built from unit wavevectors are evaluated at y = BARRIER_SCALE * x
BARRIER_SCALE = math.pi * math.sqrt(2.0)


class PerturbationSpec(BaseModel):
    """Lattice points K with a prescribed sign at each one and the perturbation amplitude."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    K: IntArray
    signs: IntArray
    epsilon: float = Field(gt=0.0, lt=0.5)

    @model_validator(mode="after")
    def _check(self):
        if self.K.ndim != 2 or self.K.shape[0] == 0 or self.K.shape[1] not in (2, 3):
            raise ValueError("K must be a non-empty (n, 2) or (n, 3) array of lattice points")
        if np.unique(self.K, axis=0).shape[0] != self.K.shape[0]:
            raise ValueError("lattice points in K must be distinct")
        if self.signs.shape != (self.K.shape[0],):
            raise ValueError("one sign per lattice point is required")
        if not np.all(np.abs(self.signs) == 1):
            raise ValueError("signs must be +1 or -1")
        return self

    @property
    def dim(self) -> int:
        return int(self.K.shape[1])


class BarrierFunction(BaseModel):
    """f(x) = f0(x) + epsilon * psi(scale * x) with psi a sum of unit-frequency plane waves."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    base: BaseTag
    perturbation: PlaneWaveField
    epsilon: float = Field(ge=0.0)
    scale: float = BARRIER_SCALE

    @model_validator(mode="after")
    def _check(self):
        norms = np.linalg.norm(self.perturbation.wavevectors, axis=1)
        if not np.allclose(norms, 1.0, rtol=0.0, atol=1e-12):
            raise ValueError("perturbation wavevectors must all have norm 1")
        expected = 2 if self.base == "grid2d" else 3
        if self.perturbation.dim != expected:
            raise ValueError(f"{self.base} needs a {expected}-D perturbation")
        return self


class TreeRealization(BaseModel):
    """A verified tree construction: the signs, the function and where it was checked."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    target: str
    canonical_code: str
    spec: PerturbationSpec
    barrier: BarrierFunction
    window: Tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    cells_per_unit: int
    seed: int
    attempts: int = 1
    end_size: int
    root: Tuple[float, float]  # a point inside the root domain
    outer: Tuple[float, float]  # a point just outside its outer curve
