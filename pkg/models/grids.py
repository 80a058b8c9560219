from pydantic import BaseModel, ConfigDict, model_validator
from typing import Literal, Optional, Tuple
import numpy as np

from models.arrays import FloatArray

Geometry2D = Literal["planar-rect", "flat-torus", "sphere-lonlat"]
Geometry3D = Literal["3-torus", "planar-box"]


class ScalarGrid(BaseModel):
    """
    Field samples on a structured 2-D grid.

    values[i, j] sits at
      planar-rect:   (x, y) = (origin[1] + j*spacing[1], origin[0] + i*spacing[0])
      flat-torus:    (x, y) = (j*spacing[1], i*spacing[0]) on the unit torus, no duplicated seam
      sphere-lonlat: colatitude i*spacing[0] (rows 0 and -1 are the poles), longitude j*spacing[1]
    centers, when present, holds the field at cell centers and is used to resolve saddle cells.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    geometry: Geometry2D
    values: FloatArray
    spacing: Tuple[float, float]
    origin: Tuple[float, float] = (0.0, 0.0)
    centers: Optional[FloatArray] = None
    samples_per_wavelength: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 2 or min(self.values.shape) < 2:
            raise ValueError("values must be a 2-D array with at least 2 rows and columns")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        if self.centers is not None and self.centers.shape != self.cell_shape:
            raise ValueError(f"centers must have shape {self.cell_shape}, got {self.centers.shape}")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.values.shape)

    @property
    def wraps_rows(self) -> bool:
        return self.geometry == "flat-torus"

    @property
    def wraps_cols(self) -> bool:
        return self.geometry in ("flat-torus", "sphere-lonlat")

    @property
    def cell_shape(self) -> Tuple[int, int]:
        R, C = self.values.shape
        return (R if self.wraps_rows else R - 1, C if self.wraps_cols else C - 1)


class ScalarGrid3(BaseModel):
    """values[i, j, k] sits at origin + (i, j, k) * spacing; the 3-torus grid has no duplicated seam."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    geometry: Geometry3D
    values: FloatArray
    spacing: Tuple[float, float, float]
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    samples_per_wavelength: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("values must be a 3-D array with at least 2 samples per axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        return self

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.values.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))
