from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal, Optional, Tuple, Union
import json
import numpy as np

from models.arrays import FloatArray, IntArray


class BandParams(BaseModel):
    """Spectral window [alpha*T, T], or [T - eta, T] in the monochromatic case."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(ge=0.0, le=1.0)
    T: float = Field(gt=0.0)
    eta: Optional[float] = None

    @model_validator(mode="after")
    def _check_eta(self):
        if self.eta is not None and not (0.0 < self.eta < self.T):
            raise ValueError("eta must satisfy 0 < eta < T")
        return self

    def window(self) -> Tuple[float, float]:
        # eta=None with alpha=1 selects the innermost shell only
        if self.alpha == 1.0:
            if self.eta is None:
                return self.T, self.T
            return self.T - self.eta, self.T
        return self.alpha * self.T, self.T


class _CoefficientField(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class PlaneWaveField(_CoefficientField):
    """f(x) = normalization * sum_j (a_j cos<k_j,x> + b_j sin<k_j,x>) on R^d."""
    kind: Literal["planar"] = "planar"
    alpha: float = 0.0
    wavevectors: FloatArray
    cos_amps: FloatArray
    sin_amps: FloatArray
    normalization: float

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.wavevectors.ndim != 2 or self.wavevectors.shape[1] not in (2, 3):
            raise ValueError("wavevectors must have shape (J, 2) or (J, 3)")
        J = self.wavevectors.shape[0]
        if J < 1 or self.cos_amps.shape != (J,) or self.sin_amps.shape != (J,):
            raise ValueError("wavevectors, cos_amps and sin_amps must have equal length J >= 1")
        return self

    @property
    def dim(self) -> int:
        return int(self.wavevectors.shape[1])


class SphericalField(_CoefficientField):
    """Real spherical-harmonic expansion; coeffs ordered by degree, then m = -l..l."""
    kind: Literal["sphere"] = "sphere"
    ell_min: int = Field(ge=0)
    ell_max: int = Field(ge=0)
    coeffs: FloatArray
    normalization: float = 1.0

    @model_validator(mode="after")
    def _check_count(self):
        if self.ell_min > self.ell_max:
            raise ValueError("ell_min must not exceed ell_max")
        expected = (self.ell_max + 1) ** 2 - self.ell_min ** 2
        if self.coeffs.shape != (expected,):
            raise ValueError(f"expected {expected} coefficients, got {self.coeffs.shape}")
        return self

    @property
    def t_max(self) -> float:
        return float(np.sqrt(self.ell_max * (self.ell_max + 1)))


class TorusField(_CoefficientField):
    """Trig polynomial in exp(2 pi i <m, x>) on the unit 2- or 3-torus, one m per +-m pair."""
    kind: Literal["torus"] = "torus"
    freqs: IntArray
    cos_amps: FloatArray
    sin_amps: FloatArray
    normalization: float

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.freqs.ndim != 2 or self.freqs.shape[1] not in (2, 3):
            raise ValueError("freqs must have shape (J, 2) or (J, 3)")
        J = self.freqs.shape[0]
        if J < 1 or self.cos_amps.shape != (J,) or self.sin_amps.shape != (J,):
            raise ValueError("freqs, cos_amps and sin_amps must have equal length J >= 1")
        return self

    @property
    def dim(self) -> int:
        return int(self.freqs.shape[1])

    @property
    def max_norm(self) -> float:
        return float(np.sqrt((self.freqs.astype(float) ** 2).sum(axis=1).max()))


class CircleField(_CoefficientField):
    """Trig polynomial sum_j a_j cos(jx) + b_j sin(jx) on [0, 2 pi)."""
    kind: Literal["circle"] = "circle"
    freqs: IntArray
    cos_amps: FloatArray
    sin_amps: FloatArray
    normalization: float

    @model_validator(mode="after")
    def _check_shapes(self):
        J = self.freqs.shape[0] if self.freqs.ndim == 1 else 0
        if J < 1 or self.cos_amps.shape != (J,) or self.sin_amps.shape != (J,):
            raise ValueError("freqs, cos_amps and sin_amps must be 1-D with equal length J >= 1")
        return self


AnyField = Union[PlaneWaveField, SphericalField, TorusField, CircleField]

_FIELD_TYPES = {
    "planar": PlaneWaveField,
    "sphere": SphericalField,
    "torus": TorusField,
    "circle": CircleField,
}


def field_from_json(document: str) -> AnyField:
    """Rebuild a field from the JSON written by ``field.model_dump_json()``."""
    payload = json.loads(document)
    kind = payload.get("kind")
    if kind not in _FIELD_TYPES:
        raise ValueError(f"unknown field kind: {kind!r}")
    return _FIELD_TYPES[kind].model_validate(payload)


class CovarianceSpec(BaseModel):
    """Limit covariance B_{n,alpha}: spectral measure uniform on alpha <= |xi| <= 1 in R^n."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1, le=3)
    alpha: float = Field(ge=0.0, le=1.0)

    @property
    def unit_ball_volume(self) -> float:
        return {1: 2.0, 2: float(np.pi), 3: 4.0 * float(np.pi) / 3.0}[self.n]
