from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union
import logging
import math
import numpy as np
from scipy import optimize, special

from core.errors import InsufficientDataError, ParameterError
from models.measures import AtomKind, EmpiricalMeasure, NSEstimate, TableRow, TailFit

logger = logging.getLogger(__name__)

UNRESOLVED = "unresolved"

# Connectivity masses m = 1..26 of large random spherical harmonics (alpha = 1) and of
# the full band alpha = 0, from published Monte-Carlo tables.
CONNECTIVITY_REFERENCE: Dict[float, Dict[int, float]] = {
    1.0: dict(enumerate([
        .91171, .05143, .01322, .00628, .00364, .00230, .00159, .00117, .00090, .00070,
        .00058, .00047, .00039, .00034, .00030, .00026, .00023, .00021, .00018, .00017,
        .00016, .00014, .00013, .00012, .000098, .000097,
    ], start=1)),
    0.0: dict(enumerate([
        .94473, .02820, .00889, .00437, .00261, .00173, .00128, .00093, .00072, .00056,
        .00048, .00039, .00034, .00029, .00026, .00025, .00021, .00019, .00016, .00014,
        .00013, .00011, .00011, .00009, .00008, .00008,
    ], start=1)),
}
TAIL_EXPONENT_REFERENCE: Dict[float, float] = {1.0: 2.149, 0.0: 2.057}
FISHER_EXPONENT = 187.0 / 91.0
HARNACK_REFERENCE = 0.04
PROJECTIVE_PLANE_AREA = 2.0 * math.pi  # half the unit sphere

Atom = Union[int, str, None]
Mode = Literal["pooled", "per_sample"]


def _key(atom: Atom) -> str:
    return UNRESOLVED if atom is None else str(atom)


class MeasureAccumulator:
    """
    Streaming tallies over samples; merge() is associative and commutative.

    Pooled mode keeps raw counts; per-sample mode also sums each sample's own
    normalized measure so the two aggregation rules can be read off the same pass.
    """

    def __init__(self, kind: AtomKind):
        self.kind = kind
        self.counts: Dict[str, int] = {}
        self.unresolved = 0
        self.num_samples = 0
        self.sample_mass: Dict[str, float] = {}
        self.sample_unresolved = 0.0
        self.nonempty_samples = 0

    def add(self, atoms: Iterable[Atom]) -> "MeasureAccumulator":
        local: Dict[str, int] = {}
        for atom in atoms:
            key = _key(atom)
            local[key] = local.get(key, 0) + 1
        self.num_samples += 1
        size = sum(local.values())
        if size == 0:
            return self
        self.nonempty_samples += 1
        for key, n in local.items():
            if key == UNRESOLVED:
                self.unresolved += n
                self.sample_unresolved += n / size
            else:
                self.counts[key] = self.counts.get(key, 0) + n
                self.sample_mass[key] = self.sample_mass.get(key, 0.0) + n / size
        return self

    def merge(self, other: "MeasureAccumulator") -> "MeasureAccumulator":
        for key, n in other.counts.items():
            self.counts[key] = self.counts.get(key, 0) + n
        for key, m in other.sample_mass.items():
            self.sample_mass[key] = self.sample_mass.get(key, 0.0) + m
        self.unresolved += other.unresolved
        self.sample_unresolved += other.sample_unresolved
        self.num_samples += other.num_samples
        self.nonempty_samples += other.nonempty_samples
        return self

    @property
    def total(self) -> int:
        return sum(self.counts.values()) + self.unresolved

    def result(self, mode: Mode = "pooled") -> EmpiricalMeasure:
        total = self.total
        if total == 0:
            raise ParameterError("no atoms were observed")
        if mode == "pooled":
            atoms = {k: n / total for k, n in self.counts.items()}
            unresolved = self.unresolved / total
        else:
            atoms = {k: m / self.nonempty_samples for k, m in self.sample_mass.items()}
            unresolved = self.sample_unresolved / self.nonempty_samples
        # absorb rounding so the masses sum to one
        drift = 1.0 - math.fsum(atoms.values()) - unresolved
        if atoms:
            top = max(atoms, key=atoms.get)
            atoms[top] = max(0.0, atoms[top] + drift)
        else:
            unresolved = 1.0
        return EmpiricalMeasure(
            kind=self.kind,
            atoms=dict(sorted(atoms.items(), key=lambda kv: _sort_key(kv[0]))),
            unresolved_mass=unresolved,
            total_count=total,
            counts=dict(sorted(self.counts.items(), key=lambda kv: _sort_key(kv[0]))),
            unresolved_count=self.unresolved,
            num_samples=self.num_samples,
        )


def _sort_key(atom: str):
    return (0, int(atom), "") if atom.lstrip("-").isdigit() else (1, len(atom), atom)


class StatsService:
    @staticmethod
    def accumulate(samples: Iterable[Iterable[Atom]], kind: AtomKind = "connectivity",
                   mode: Mode = "pooled") -> EmpiricalMeasure:
        """Per-sample atom lists to one measure; None or "unresolved" goes to the unresolved bucket."""
        acc = MeasureAccumulator(kind)
        for atoms in samples:
            acc.add(atoms)
        if acc.num_samples == 0:
            raise ParameterError("at least one sample is required")
        return acc.result(mode)

    @staticmethod
    def discrepancy(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
        """sup over finite atom sets F of |a(F) - b(F)|, the unresolved bucket counting as an atom."""
        keys = set(a.atoms) | set(b.atoms)
        diffs = [a.atoms.get(k, 0.0) - b.atoms.get(k, 0.0) for k in keys]
        diffs.append(a.unresolved_mass - b.unresolved_mass)
        return max(math.fsum(d for d in diffs if d > 0), -math.fsum(d for d in diffs if d < 0))

    @staticmethod
    def ns_estimate(counts: Sequence[int], area: float, T: float, n: int, alpha: Optional[float] = None) -> NSEstimate:
        """beta_hat = mean(count) (2 pi)^n / (omega_n area T^n) with a sample-variance stderr."""
        if not counts:
            raise ParameterError("at least one count is required")
        if area <= 0 or T <= 0 or n not in (1, 2, 3):
            raise ParameterError("area and T must be positive and n in {1, 2, 3}")
        omega = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}[n]
        scale = (2.0 * math.pi) ** n / (omega * area * T ** n)
        values = np.asarray(counts, dtype=float)
        mean = float(values.mean())
        spread = float(values.std(ddof=1)) / math.sqrt(values.size) if values.size > 1 else 0.0
        return NSEstimate(
            beta_hat=mean * scale,
            stderr=spread * scale,
            n=n,
            alpha=alpha,
            num_samples=int(values.size),
            mean_count=mean,
            min_count=int(values.min()),
            max_count=int(values.max()),
        )

    @staticmethod
    def harnack_ratio(beta_hat: float, t: int) -> float:
        """Expected component count of a degree-t random curve over the Harnack bound."""
        if t < 3:
            raise ParameterError("degree must be at least 3")
        expected = beta_hat * math.pi / (2.0 * math.pi) ** 2 * PROJECTIVE_PLANE_AREA * t * t
        return expected / ((t - 1) * (t - 2) / 2.0 + 1.0)

    @staticmethod
    def fit_power_law_counts(counts: Mapping[int, int], m_min: int = 2) -> TailFit:
        """Discrete MLE of P(m) = m^-a / zeta(a, m_min) over m >= m_min; stderr from Fisher information."""
        if m_min < 2:
            raise ParameterError("m_min must be at least 2")
        tail = {int(m): int(n) for m, n in counts.items() if int(m) >= m_min and n > 0}
        if len(tail) < 5:
            raise InsufficientDataError(f"need at least 5 distinct atoms >= {m_min}, got {len(tail)}")
        ms = np.fromiter(tail.keys(), dtype=float)
        ns = np.fromiter(tail.values(), dtype=float)
        N = ns.sum()
        log_sum = float(ns @ np.log(ms))

        def negative_log_likelihood(a: float) -> float:
            return a * log_sum + N * math.log(special.zeta(a, m_min))

        result = optimize.minimize_scalar(negative_log_likelihood, bounds=(1.0001, 8.0), method="bounded",
                                          options={"xatol": 1e-10})
        a = float(result.x)
        h = 1e-4
        curvature = (math.log(special.zeta(a + h, m_min)) - 2.0 * math.log(special.zeta(a, m_min))
                     + math.log(special.zeta(a - h, m_min))) / (h * h)
        stderr = 1.0 / math.sqrt(N * curvature) if curvature > 0 else float("inf")
        return TailFit(exponent=a, stderr=stderr, m_min=m_min, num_points=int(N),
                       log_likelihood=-float(result.fun))

    @staticmethod
    def fit_power_law(measure: EmpiricalMeasure, m_min: int = 2) -> TailFit:
        counts = {int(k): n for k, n in measure.counts.items() if k.lstrip("-").isdigit()}
        if not counts:
            counts = {m: int(round(p * measure.total_count)) for m, p in measure.integer_atoms().items()}
        return StatsService.fit_power_law_counts(counts, m_min)

    @staticmethod
    def table_compare(measure: EmpiricalMeasure, reference: Mapping[int, float]) -> List[TableRow]:
        return [
            TableRow(
                atom=str(m),
                measured=measure.mass(m),
                reference=float(p),
                deviation=abs(measure.mass(m) - float(p)),
                stderr=measure.stderr(m),
            )
            for m, p in sorted(reference.items())
        ]

    @staticmethod
    def mean(measure: EmpiricalMeasure) -> Tuple[float, float]:
        """Mean and stderr of the integer atoms, conditioned on being resolved."""
        atoms = measure.integer_atoms()
        resolved = math.fsum(atoms.values())
        if resolved <= 0.0:
            raise InsufficientDataError("no integer atoms to average")
        values = np.fromiter(atoms.keys(), dtype=float)
        weights = np.fromiter(atoms.values(), dtype=float) / resolved
        mean = float(weights @ values)
        variance = float(weights @ (values - mean) ** 2)
        count = max(1, measure.total_count - measure.unresolved_count)
        return mean, math.sqrt(variance / count)

    @staticmethod
    def measure_rows(measure: EmpiricalMeasure) -> List[Tuple[str, float, float]]:
        """CSV rows atom,mass,stderr with the unresolved bucket last."""
        rows = [(atom, mass, measure.stderr(atom)) for atom, mass in measure.atoms.items()]
        p = measure.unresolved_mass
        rows.append((UNRESOLVED, p, math.sqrt(p * (1.0 - p) / measure.total_count)))
        return rows

    @staticmethod
    def reference_table(alpha: float) -> Dict[int, float]:
        if alpha not in CONNECTIVITY_REFERENCE:
            raise ParameterError(f"reference connectivity tables exist for alpha in {sorted(CONNECTIVITY_REFERENCE)}")
        return CONNECTIVITY_REFERENCE[alpha]
