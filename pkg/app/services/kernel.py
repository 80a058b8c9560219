from typing import Iterable, List, Literal, Optional, Sequence, Tuple
import logging
import math
import numpy as np
from pydantic import ValidationError
from scipy import integrate

from app.services.ensemble import EnsembleService
from core.errors import ParameterError
from models.fields import CovarianceSpec, PlaneWaveField
from models.measures import CovarianceEstimate, CovarianceReport
from utils.bessel import bessel_j as _bessel_j
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

MIN_FIELDS = 100
DEFAULT_DIRECTIONS = 8
DEFAULT_BASE_SIDE = 10
BASE_SPACING = 40.0
_GOLDEN_ANGLE = np.pi * (3.0 - math.sqrt(5.0))
_ANGULAR_NODES = 256
_QUAD_TOL = 1e-12

Method = Literal["auto", "closed", "quadrature"]


def covariance_spec(n: int, alpha: float) -> CovarianceSpec:
    try:
        return CovarianceSpec(n=n, alpha=alpha)
    except ValidationError as e:
        raise ParameterError(f"invalid covariance spec: {e.errors()[0]['msg']}") from e


def _angular_average(n: int, s: float) -> float:
    """Average of exp(i s <e, u>) over unit vectors u in R^n, for a fixed unit e."""
    if n == 1:
        return math.cos(s)
    if n == 2:
        return float(_bessel_j(0, s))
    return 1.0 if s == 0.0 else math.sin(s) / s


def _angular_average_trapezoid(n: int, s: float) -> float:
    # n = 2: periodic integrand, so the trapezoid rule converges spectrally
    if n == 1:
        return math.cos(s)
    theta = np.linspace(0.0, np.pi, _ANGULAR_NODES + 1)
    if n == 2:
        values = np.cos(s * np.cos(theta))
        return float(integrate.trapezoid(values, theta) / np.pi)
    # n = 3: u = cos(theta) turns the average into a smooth integral over [-1, 1]
    nodes, weights = np.polynomial.legendre.leggauss(_ANGULAR_NODES // 2)
    return float(weights @ np.cos(s * nodes) / 2.0)


class KernelService:
    @staticmethod
    def covariance_closed(spec: CovarianceSpec, r: float) -> Optional[float]:
        """Closed form of B_{n,alpha}(r) where one exists, else None."""
        n, a = spec.n, spec.alpha
        if r == 0.0:
            return 1.0
        if a == 1.0:
            return _angular_average(n, r)
        if n == 1:
            return (math.sin(r) - math.sin(a * r)) / (r * (1.0 - a))
        if n == 2 and a == 0.0:
            return 2.0 * float(_bessel_j(1, r)) / r
        if n == 3:
            def primitive(rho):
                return (math.sin(r * rho) - r * rho * math.cos(r * rho)) / r ** 3
            return 3.0 * (primitive(1.0) - primitive(a)) / (1.0 - a ** 3)
        return None

    @staticmethod
    def covariance_quadrature(spec: CovarianceSpec, r: float) -> float:
        n, a = spec.n, spec.alpha
        if a == 1.0:
            return _angular_average_trapezoid(n, r)
        if r == 0.0:
            return 1.0
        # radial integral of rho^(n-1) times the angular average, panels no longer than half a period
        panels = max(1, int(math.ceil((1.0 - a) * r / math.pi)))
        edges = np.linspace(a, 1.0, panels + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            value, _ = integrate.quad(lambda rho: rho ** (n - 1) * _angular_average(n, r * rho),
                                      lo, hi, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)
            total += value
        return n * total / (1.0 - a ** n)

    @staticmethod
    def covariance(spec: CovarianceSpec, r: float, method: Method = "auto") -> float:
        """B_{n,alpha}(r); closed forms where available, otherwise panelled radial quadrature."""
        if r < 0 or not math.isfinite(r):
            raise ParameterError(f"r must be a finite non-negative number, got {r}")
        if method == "quadrature":
            return KernelService.covariance_quadrature(spec, r)
        closed = KernelService.covariance_closed(spec, r)
        if closed is None:
            if method == "closed":
                raise ParameterError(f"no closed form for n={spec.n}, alpha={spec.alpha}")
            return KernelService.covariance_quadrature(spec, r)
        return closed

    @staticmethod
    def covariance_table(spec: CovarianceSpec, rs: Iterable[float], method: Method = "auto") -> List[Tuple[float, float]]:
        return [(float(r), KernelService.covariance(spec, float(r), method)) for r in rs]

    @staticmethod
    def ns_constant_1d(alpha: float) -> float:
        if not (0.0 <= alpha <= 1.0):
            raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
        return math.sqrt(1.0 + alpha + alpha * alpha) / math.sqrt(3.0)

    @staticmethod
    def bessel_j(order: int, x: float) -> float:
        try:
            return _bessel_j(order, x)
        except ValueError as e:
            raise ParameterError(str(e)) from e

    @staticmethod
    def empirical_covariance(fields: Sequence[PlaneWaveField], lags: Sequence[float],
                             directions: int = DEFAULT_DIRECTIONS, base_side: int = DEFAULT_BASE_SIDE,
                             alpha: Optional[float] = None) -> CovarianceReport:
        """
        Average f(x0) f(x0 + r e) over fields and base points x0.

        The base points form a base_side x base_side grid spaced BASE_SPACING apart. Each
        base point looks along one direction e of a fan of `directions` equally spaced unit
        vectors, taken in turn and rotated a little per base point. The stderr treats each
        field's average as one independent observation.
        """
        if directions < 8:
            raise ParameterError("at least 8 directions are required")
        if base_side < 1:
            raise ParameterError("base_side must be positive")
        warnings: List[str] = []
        if len(fields) < MIN_FIELDS:
            message = f"only {len(fields)} fields; at least {MIN_FIELDS} are needed for a reliable estimate"
            logger.warning(message)
            warnings.append(message)

        axis = BASE_SPACING * np.arange(base_side)
        bases = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        index = np.arange(len(bases))
        sector = 2.0 * np.pi / directions
        angles = sector * (index % directions) + (_GOLDEN_ANGLE * index) % sector
        units = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        lags = [float(r) for r in lags]
        rays = bases[:, None, :] + np.asarray(lags)[None, :, None] * units[:, None, :]  # (B, L, 2)
        points = np.vstack([bases, rays.reshape(-1, 2)])

        per_field = np.zeros((len(fields), len(lags)))
        for idx, field in enumerate(fields):
            values = EnsembleService.evaluate(field, points)
            center = values[:len(bases)]
            ray = values[len(bases):].reshape(len(bases), len(lags))
            per_field[idx] = (center[:, None] * ray).mean(axis=0)

        count = len(fields)
        if count == 0:
            means = np.zeros(len(lags))
            errors = np.zeros(len(lags))
        else:
            means = per_field.mean(axis=0)
            errors = per_field.std(axis=0, ddof=1) / math.sqrt(count) if count > 1 else np.zeros(len(lags))

        exact_spec = covariance_spec(2, alpha) if alpha is not None else None
        rows = [
            CovarianceEstimate(
                lag=r,
                estimate=float(m),
                stderr=float(s),
                exact=KernelService.covariance(exact_spec, r) if exact_spec is not None else None,
            )
            for r, m, s in zip(lags, means, errors)
        ]
        return CovarianceReport(rows=rows, num_fields=count, warnings=warnings)

    @staticmethod
    def empirical_covariance_ensemble(alpha: float, num_fields: int, lags: Sequence[float], J: int = 4096,
                                      seed: int = 0, directions: int = DEFAULT_DIRECTIONS) -> CovarianceReport:
        """Sample `num_fields` planar fields with derived seeds and estimate their covariance."""
        fields = [EnsembleService.sample_planar(alpha, J, derive_seed(seed, i)) for i in range(num_fields)]
        return KernelService.empirical_covariance(fields, lags, directions, alpha=alpha)
