from typing import Tuple, Union
import logging
import math
import numpy as np

from app.services.ensemble import EnsembleService
from core.errors import ParameterError
from models.experiment import ExperimentConfig
from models.fields import AnyField, CircleField
from models.grids import ScalarGrid, ScalarGrid3
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

Sampled = Union[ScalarGrid, ScalarGrid3, np.ndarray]

_GRID_GEOMETRY = {
    "planar": "planar-rect",
    "torus": "flat-torus",
    "sphere": "sphere-lonlat",
    "3-torus": "3-torus",
    "planar-box": "planar-box",
}


class SampleExtractor:
    """Draws sample `index` of a run and samples it on the grid of the run's geometry."""

    def __init__(self, config: ExperimentConfig):
        self.config = config

    def seed_for(self, index: int) -> int:
        return derive_seed(self.config.seed, index)

    def field(self, index: int) -> AnyField:
        c = self.config
        seed = self.seed_for(index)
        if c.geometry == "planar":
            return EnsembleService.sample_planar(c.alpha, c.J, seed)
        if c.geometry == "planar-box":
            return EnsembleService.sample_planar(c.alpha, c.J, seed, dim=3)
        if c.geometry == "sphere":
            return EnsembleService.sample_sphere(c.band(), seed)
        if c.geometry == "torus":
            return EnsembleService.sample_torus(c.band(), seed)
        if c.geometry == "3-torus":
            return EnsembleService.sample_torus3(c.band(), seed)
        if c.geometry == "circle":
            return EnsembleService.sample_circle(c.band(), seed)
        raise ParameterError(f"no sampler for geometry {c.geometry!r}")

    def window(self, dim: int = 2) -> Tuple[float, ...]:
        # planar fields have |xi| <= 1, so one wavelength is 2 pi
        side = 2.0 * math.pi * self.config.window
        return (0.0, side) * dim

    @property
    def area(self) -> float:
        """Volume of the sampled region in the field's own units."""
        g = self.config.geometry
        if g == "sphere":
            return 4.0 * math.pi
        if g in ("torus", "3-torus"):
            return 1.0
        if g == "circle":
            return 2.0 * math.pi
        side = 2.0 * math.pi * self.config.window
        return side ** (3 if g == "planar-box" else 2)

    def sample(self, field: AnyField) -> Sampled:
        c = self.config
        if isinstance(field, CircleField):
            return EnsembleService.evaluate_circle(field, c.resolution, c.allow_under_resolved)
        geometry = _GRID_GEOMETRY[c.geometry]
        window = None
        if geometry == "planar-rect":
            window = self.window(2)
        elif geometry == "planar-box":
            window = self.window(3)
        return EnsembleService.evaluate_grid(field, geometry, c.resolution, window=window,
                                             allow_under_resolved=c.allow_under_resolved)

    def extract(self, index: int) -> Tuple[int, Sampled]:
        seed = self.seed_for(index)
        logger.debug("EXTRACT: sample %d (seed %d) on %s", index, seed, self.config.geometry)
        return seed, self.sample(self.field(index))
