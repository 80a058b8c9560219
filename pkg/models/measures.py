from pydantic import BaseModel, Field, model_validator
from typing import Dict, List, Literal, Optional, Union
import math

AtomKind = Literal["connectivity", "genus", "tree", "count"]
Atom = Union[int, str]


class EmpiricalMeasure(BaseModel):
    """
    Probability mass over discrete atoms plus an explicit unresolved bucket.

    Atom keys are stored as strings ("1", "2", "(()())") so the measure serializes
    to JSON unchanged; counts keep the raw tallies the masses were normalized from.
    """
    kind: AtomKind
    atoms: Dict[str, float]
    unresolved_mass: float = 0.0
    total_count: int = Field(ge=1)
    counts: Dict[str, int] = Field(default_factory=dict)
    unresolved_count: int = 0
    num_samples: int = 1

    @model_validator(mode="after")
    def _check(self):
        if any(m < 0 for m in self.atoms.values()) or self.unresolved_mass < 0:
            raise ValueError("masses must be non-negative")
        total = math.fsum(self.atoms.values()) + self.unresolved_mass
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {total}, expected 1")
        return self

    def mass(self, atom: Atom) -> float:
        return self.atoms.get(str(atom), 0.0)

    def stderr(self, atom: Atom) -> float:
        p = self.mass(atom)
        return math.sqrt(p * (1.0 - p) / self.total_count)

    def integer_atoms(self) -> Dict[int, float]:
        return {int(k): v for k, v in self.atoms.items() if k.lstrip("-").isdigit()}


class NSEstimate(BaseModel):
    beta_hat: float = Field(ge=0.0)
    stderr: float
    n: int
    alpha: Optional[float] = None
    num_samples: int
    mean_count: float
    min_count: int
    max_count: int


class TailFit(BaseModel):
    exponent: float
    stderr: float
    m_min: int = Field(ge=2)
    num_points: int
    log_likelihood: float = 0.0


class TableRow(BaseModel):
    atom: str
    measured: float
    reference: float
    deviation: float
    stderr: float


class CovarianceEstimate(BaseModel):
    lag: float
    estimate: float
    stderr: float
    exact: Optional[float] = None


class CovarianceReport(BaseModel):
    rows: List[CovarianceEstimate]
    num_fields: int
    warnings: List[str] = Field(default_factory=list)

    def sup_deviation(self) -> float:
        return max(abs(r.estimate - r.exact) for r in self.rows if r.exact is not None)


class GenusReport(BaseModel):
    measure: Optional[EmpiricalMeasure] = None  # None when no watertight component was found
    mean_genus: Optional[float] = None
    stderr: Optional[float] = None
    num_samples: int
    flagged_samples: int = 0
    excluded_components: int = 0
    euler_per_volume: Optional[float] = None
