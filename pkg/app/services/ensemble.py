from typing import Callable, Optional, Sequence, Tuple, Union
import logging
import math
import numpy as np
from pydantic import ValidationError

from core.errors import DomainError, ParameterError, ResolutionError
from models.fields import AnyField, BandParams, CircleField, PlaneWaveField, SphericalField, TorusField
from models.grids import ScalarGrid, ScalarGrid3
from utils.harmonics import synthesize_grid, synthesize_points

logger = logging.getLogger(__name__)

MIN_PLANE_WAVES = 64
DEFAULT_PLANE_WAVES = 4096
MIN_SAMPLES_PER_WAVELENGTH = 10.0
DEFAULT_SAMPLES_PER_WAVELENGTH = 12.0
_EVAL_CHUNK = 4_000_000  # points x waves per evaluation block
_REL_TOL = 1e-12


def band_params(alpha: float, T: float, eta: Optional[float] = None) -> BandParams:
    try:
        return BandParams(alpha=alpha, T=T, eta=eta)
    except ValidationError as e:
        raise ParameterError(f"invalid band parameters: {e.errors()[0]['msg']}") from e


def _in_window(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (t >= lo * (1 - _REL_TOL)) & (t <= hi * (1 + _REL_TOL))


class EnsembleService:
    # --- Sampling ---

    @staticmethod
    def sample_planar(alpha: float, J: int = DEFAULT_PLANE_WAVES, seed: int = 0, dim: int = 2) -> PlaneWaveField:
        """
        Random plane-wave approximation of the limit field on R^dim.

        Wavevectors are uniform on the annulus alpha <= |k| <= 1 (radius density
        proportional to r^(dim-1)); both quadrature amplitudes are standard Gaussian.
        """
        if not (0.0 <= alpha <= 1.0):
            raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
        if J < MIN_PLANE_WAVES:
            raise ParameterError(f"J must be at least {MIN_PLANE_WAVES}, got {J}")
        if dim not in (2, 3):
            raise ParameterError(f"dim must be 2 or 3, got {dim}")
        rng = np.random.default_rng(seed)
        if dim == 2:
            angle = rng.uniform(0.0, 2.0 * np.pi, size=J)
            directions = np.stack([np.cos(angle), np.sin(angle)], axis=1)
        else:
            raw = rng.standard_normal((J, 3))
            directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        u = rng.uniform(0.0, 1.0, size=J)
        lo = alpha ** dim
        radius = (lo + u * (1.0 - lo)) ** (1.0 / dim)
        return PlaneWaveField(
            alpha=alpha,
            wavevectors=directions * radius[:, None],
            cos_amps=rng.standard_normal(J),
            sin_amps=rng.standard_normal(J),
            normalization=math.sqrt(1.0 / J),
        )

    @staticmethod
    def sphere_degrees(params: BandParams) -> np.ndarray:
        lo, hi = params.window()
        ell_cap = int(math.floor(hi)) + 1
        ells = np.arange(1, ell_cap + 1)
        t = np.sqrt(ells * (ells + 1.0))
        if params.alpha == 1.0 and params.eta is None:
            below = ells[t <= hi * (1 + _REL_TOL)]
            return below[-1:] if below.size else below
        return ells[_in_window(t, lo, hi)]

    @staticmethod
    def sample_sphere(params: BandParams, seed: int = 0) -> SphericalField:
        ells = EnsembleService.sphere_degrees(params)
        if ells.size == 0:
            raise ParameterError(f"no spherical degree lies in the window {params.window()}")
        ell_min, ell_max = int(ells[0]), int(ells[-1])
        rng = np.random.default_rng(seed)
        count = (ell_max + 1) ** 2 - ell_min ** 2
        return SphericalField(
            ell_min=ell_min,
            ell_max=ell_max,
            coeffs=rng.standard_normal(count),
            normalization=math.sqrt(4.0 * np.pi / count),
        )

    @staticmethod
    def lattice_frequencies(params: BandParams, dim: int = 2) -> np.ndarray:
        """Integer vectors m != 0 with 2 pi |m| in the window, one representative per +-m pair."""
        lo, hi = params.window()
        r_hi = hi / (2.0 * np.pi)
        bound = int(math.floor(r_hi * (1 + _REL_TOL)))
        axis = np.arange(-bound, bound + 1)
        grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        norms = np.sqrt((grid.astype(float) ** 2).sum(axis=1))
        nonzero = norms > 0
        if params.alpha == 1.0 and params.eta is None:
            inside = norms[nonzero & (norms <= r_hi * (1 + _REL_TOL))]
            if inside.size == 0:
                return np.zeros((0, dim), dtype=np.int64)
            keep = nonzero & np.isclose(norms, inside.max(), rtol=_REL_TOL, atol=0.0)
        else:
            keep = nonzero & _in_window(norms, lo / (2.0 * np.pi), r_hi)
        grid = grid[keep]
        # first nonzero coordinate positive
        first = np.argmax(grid != 0, axis=1)
        representative = grid[np.arange(len(grid)), first] > 0
        return grid[representative]

    @staticmethod
    def sample_torus(params: BandParams, seed: int = 0, dim: int = 2) -> TorusField:
        freqs = EnsembleService.lattice_frequencies(params, dim)
        if freqs.shape[0] == 0:
            raise ParameterError(f"no lattice frequency lies in the window {params.window()}")
        rng = np.random.default_rng(seed)
        J = freqs.shape[0]
        return TorusField(
            freqs=freqs,
            cos_amps=rng.standard_normal(J),
            sin_amps=rng.standard_normal(J),
            normalization=math.sqrt(1.0 / J),
        )

    @staticmethod
    def sample_torus3(params: BandParams, seed: int = 0) -> TorusField:
        return EnsembleService.sample_torus(params, seed, dim=3)

    @staticmethod
    def sample_circle(params: BandParams, seed: int = 0) -> CircleField:
        lo, hi = params.window()
        if params.alpha == 1.0 and params.eta is None:
            freqs = np.array([int(math.floor(hi * (1 + _REL_TOL)))])
        else:
            js = np.arange(1, int(math.floor(hi * (1 + _REL_TOL))) + 1)
            freqs = js[_in_window(js.astype(float), lo, hi)]
        if freqs.size == 0 or freqs[0] < 1:
            raise ParameterError(f"no integer frequency lies in the window {params.window()}")
        rng = np.random.default_rng(seed)
        J = freqs.size
        return CircleField(
            freqs=freqs,
            cos_amps=rng.standard_normal(J),
            sin_amps=rng.standard_normal(J),
            normalization=math.sqrt(1.0 / J),
        )

    # --- Evaluation ---

    @staticmethod
    def _trig_sum(phases_of: Callable[[np.ndarray], np.ndarray], points: np.ndarray, J: int,
                  cos_amps: np.ndarray, sin_amps: np.ndarray, normalization: float) -> np.ndarray:
        out = np.empty(points.shape[0])
        step = max(1, _EVAL_CHUNK // max(J, 1))
        for start in range(0, points.shape[0], step):
            phase = phases_of(points[start:start + step])
            out[start:start + step] = np.cos(phase) @ cos_amps + np.sin(phase) @ sin_amps
        return normalization * out

    @staticmethod
    def evaluate(field: AnyField, points) -> np.ndarray:
        """
        Exact evaluation of the closed-form sum.

        Points are (x, y[, z]) for planar and torus fields, (colatitude, longitude)
        for spherical fields and scalar angles for circle fields.
        """
        pts = np.asarray(points, dtype=float)
        if not np.all(np.isfinite(pts)):
            raise DomainError("points must be finite")

        if isinstance(field, PlaneWaveField):
            pts = pts.reshape(-1, field.dim) if pts.ndim == 1 and pts.size == field.dim else pts
            if pts.ndim != 2 or pts.shape[1] != field.dim:
                raise DomainError(f"planar points must have shape (P, {field.dim})")
            k = field.wavevectors
            return EnsembleService._trig_sum(lambda p: p @ k.T, pts, k.shape[0],
                                             field.cos_amps, field.sin_amps, field.normalization)

        if isinstance(field, TorusField):
            pts = pts.reshape(-1, field.dim) if pts.ndim == 1 and pts.size == field.dim else pts
            if pts.ndim != 2 or pts.shape[1] != field.dim:
                raise DomainError(f"torus points must have shape (P, {field.dim})")
            m = field.freqs.astype(float)
            return EnsembleService._trig_sum(lambda p: 2.0 * np.pi * (p @ m.T), pts, m.shape[0],
                                             field.cos_amps, field.sin_amps, field.normalization)

        if isinstance(field, CircleField):
            x = pts.reshape(-1, 1)
            j = field.freqs.astype(float)
            return EnsembleService._trig_sum(lambda p: p * j[None, :], x, j.size,
                                             field.cos_amps, field.sin_amps, field.normalization)

        if isinstance(field, SphericalField):
            pts = pts.reshape(-1, 2) if pts.ndim == 1 and pts.size == 2 else pts
            if pts.ndim != 2 or pts.shape[1] != 2:
                raise DomainError("sphere points must have shape (P, 2) as (colatitude, longitude)")
            theta, phi = pts[:, 0], pts[:, 1]
            if np.any(theta < 0.0) or np.any(theta > np.pi):
                raise DomainError("colatitude must lie in [0, pi]")
            out = np.empty(theta.size)
            step = max(1, _EVAL_CHUNK // (field.ell_max + 1) ** 2)
            for start in range(0, theta.size, step):
                sl = slice(start, start + step)
                out[sl] = synthesize_points(field.coeffs, field.ell_min, field.ell_max, theta[sl], phi[sl])
            return field.normalization * out

        raise ParameterError(f"cannot evaluate object of type {type(field).__name__}")

    @staticmethod
    def wavelength(field: AnyField) -> float:
        """Shortest wavelength 2 pi / t_max in the field's own coordinates."""
        if isinstance(field, PlaneWaveField):
            return 2.0 * np.pi / float(np.linalg.norm(field.wavevectors, axis=1).max())
        if isinstance(field, TorusField):
            return 1.0 / field.max_norm
        if isinstance(field, SphericalField):
            return 2.0 * np.pi / field.t_max
        if isinstance(field, CircleField):
            return 2.0 * np.pi / float(field.freqs.max())
        raise ParameterError(f"no wavelength for {type(field).__name__}")

    @staticmethod
    def _check_resolution(resolution: float, allow_under_resolved: bool):
        if resolution < MIN_SAMPLES_PER_WAVELENGTH:
            message = f"{resolution} samples per wavelength is below the minimum of {MIN_SAMPLES_PER_WAVELENGTH}"
            if not allow_under_resolved:
                raise ResolutionError(message)
            logger.warning("Proceeding under-resolved: %s", message)

    @staticmethod
    def planar_grid(evaluator: Callable[[np.ndarray], np.ndarray], window: Sequence[float], spacing: float,
                    with_centers: bool = True, samples_per_wavelength: Optional[float] = None) -> ScalarGrid:
        """Sample any planar evaluator on [xmin, xmax] x [ymin, ymax] with square cells."""
        xmin, xmax, ymin, ymax = window
        if xmax <= xmin or ymax <= ymin:
            raise ParameterError(f"empty window {window}")
        nx = int(math.floor((xmax - xmin) / spacing + 1e-9)) + 1
        ny = int(math.floor((ymax - ymin) / spacing + 1e-9)) + 1
        xs = xmin + spacing * np.arange(nx)
        ys = ymin + spacing * np.arange(ny)
        X, Y = np.meshgrid(xs, ys)
        values = evaluator(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(ny, nx)
        centers = None
        if with_centers:
            Xc, Yc = np.meshgrid(xs[:-1] + spacing / 2, ys[:-1] + spacing / 2)
            centers = evaluator(np.stack([Xc.ravel(), Yc.ravel()], axis=1)).reshape(ny - 1, nx - 1)
        return ScalarGrid(geometry="planar-rect", values=values, spacing=(spacing, spacing),
                          origin=(ymin, xmin), centers=centers, samples_per_wavelength=samples_per_wavelength)

    @staticmethod
    def evaluate_grid(field: AnyField, geometry: str, resolution: float = DEFAULT_SAMPLES_PER_WAVELENGTH,
                      window: Optional[Sequence[float]] = None, allow_under_resolved: bool = False,
                      with_centers: bool = True) -> Union[ScalarGrid, ScalarGrid3]:
        """
        Sample a field on the structured grid of a geometry with `resolution` samples per wavelength.

        planar-rect / planar-box need `window` = (xmin, xmax, ymin, ymax[, zmin, zmax]).
        """
        EnsembleService._check_resolution(resolution, allow_under_resolved)
        wavelength = EnsembleService.wavelength(field)

        if geometry == "planar-rect":
            if not isinstance(field, PlaneWaveField) or field.dim != 2 or window is None:
                raise ParameterError("planar-rect needs a 2-D PlaneWaveField and a window")
            return EnsembleService.planar_grid(lambda p: EnsembleService.evaluate(field, p), window,
                                               wavelength / resolution, with_centers, resolution)

        if geometry == "flat-torus":
            if not isinstance(field, TorusField) or field.dim != 2:
                raise ParameterError("flat-torus needs a 2-D TorusField")
            n = int(math.ceil(resolution / wavelength))
            axis = np.arange(n) / n
            X, Y = np.meshgrid(axis, axis)
            values = EnsembleService.evaluate(field, np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(n, n)
            centers = None
            if with_centers:
                Xc, Yc = np.meshgrid(axis + 0.5 / n, axis + 0.5 / n)
                centers = EnsembleService.evaluate(field, np.stack([Xc.ravel(), Yc.ravel()], axis=1)).reshape(n, n)
            return ScalarGrid(geometry="flat-torus", values=values, spacing=(1.0 / n, 1.0 / n),
                              centers=centers, samples_per_wavelength=resolution)

        if geometry == "sphere-lonlat":
            if not isinstance(field, SphericalField):
                raise ParameterError("sphere-lonlat needs a SphericalField")
            rows = int(math.ceil(np.pi * resolution / wavelength))  # number of latitude steps
            theta = np.pi * np.arange(rows + 1) / rows
            phi = 2.0 * np.pi * np.arange(2 * rows) / (2 * rows)
            values = field.normalization * synthesize_grid(field.coeffs, field.ell_min, field.ell_max, theta, phi)
            values[0, :] = values[0, 0]
            values[-1, :] = values[-1, 0]
            centers = None
            if with_centers:
                dt, dp = np.pi / rows, np.pi / rows
                centers = field.normalization * synthesize_grid(field.coeffs, field.ell_min, field.ell_max,
                                                                theta[:-1] + dt / 2, phi + dp / 2)
            return ScalarGrid(geometry="sphere-lonlat", values=values, spacing=(np.pi / rows, np.pi / rows),
                              centers=centers, samples_per_wavelength=resolution)

        if geometry == "3-torus":
            if not isinstance(field, TorusField) or field.dim != 3:
                raise ParameterError("3-torus needs a 3-D TorusField")
            n = int(math.ceil(resolution / wavelength))
            axis = np.arange(n) / n
            X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
            pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
            values = EnsembleService.evaluate(field, pts).reshape(n, n, n)
            return ScalarGrid3(geometry="3-torus", values=values, spacing=(1.0 / n,) * 3,
                               samples_per_wavelength=resolution)

        if geometry == "planar-box":
            if not isinstance(field, PlaneWaveField) or field.dim != 3 or window is None or len(window) != 6:
                raise ParameterError("planar-box needs a 3-D PlaneWaveField and a 6-value window")
            h = wavelength / resolution
            axes = [lo + h * np.arange(int(math.floor((hi - lo) / h + 1e-9)) + 1)
                    for lo, hi in zip(window[0::2], window[1::2])]
            X, Y, Z = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
            values = EnsembleService.evaluate(field, pts).reshape(X.shape)
            return ScalarGrid3(geometry="planar-box", values=values, spacing=(h, h, h),
                               origin=(window[0], window[2], window[4]), samples_per_wavelength=resolution)

        raise ParameterError(f"unknown geometry {geometry!r}")

    @staticmethod
    def evaluate_circle(field: CircleField, resolution: float = DEFAULT_SAMPLES_PER_WAVELENGTH,
                        allow_under_resolved: bool = False) -> np.ndarray:
        """Values at n equally spaced angles, n = ceil(resolution * highest frequency)."""
        EnsembleService._check_resolution(resolution, allow_under_resolved)
        n = int(math.ceil(resolution * float(field.freqs.max())))
        return EnsembleService.evaluate(field, 2.0 * np.pi * np.arange(n) / n)
