from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field


class ClauseResult(BaseModel):
    name: str
    passed: bool
    measured: float
    detail: str


class A1Report(BaseModel):
    kernel: str
    d: int
    grid_resolution: int
    mass: float
    sigma2: float
    symmetry_violation: float
    lipschitz_estimate: float
    lipschitz_constant: float
    min_value: float
    max_value: float
    clauses: List[ClauseResult]
    all_passed: bool

    def clause(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)


class EtaEstimate(BaseModel):
    """η̂ = max(1, Σ_{(i,j)∈G_ρ} ε_i ε_j) / n^d."""
    value: float = Field(..., gt=0)
    rho: int
    pair_count: int
    raw_sum: float
    n: int
    d: int
    clamped: bool


class ConditionReport(BaseModel):
    criterion: Literal["quantile", "mixing-rate"]
    d: int
    radii: List[int]
    shell_terms: List[float]
    partial_sums: List[float]
    monotone: bool
    decade_ratio: Optional[float] = None
    tail_bound: Optional[float] = None
    verdict: Literal["converges", "diverges", "inconclusive"]
    note: str = "numerical heuristic: a finite computation cannot decide convergence"


class RiemannDiagnostic(BaseModel):
    n: int
    d: int
    h: float
    x: Tuple[float, ...]
    y: Tuple[float, ...]
    cross: float
    mass: float
    boundary: bool


class BiasStudyRow(BaseModel):
    n: int
    h: float
    sup_error: float


class BiasStudy(BaseModel):
    rows: List[BiasStudyRow]
    slope: Optional[float] = None
    bound: Optional[float] = None
    bound_respected: Optional[bool] = None


class QueryNormality(BaseModel):
    query: Tuple[float, ...]
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    ks_pvalue: float
    ks_critical: float
    ks_passed: bool


class NormalityStudy(BaseModel):
    field_kind: str
    n: int
    d: int
    h: float
    replicates: int
    eta: Optional[float] = None
    eta_mode: str
    clt_variance: float
    queries: List[QueryNormality]
    correlation: List[List[float]]
    max_offdiag_correlation: float


class PValueSummary(BaseModel):
    threshold: float
    fraction_above: float
    count_above: int
    evaluated: int
    boundary_fraction_above: Optional[float] = None
    boundary_evaluated: int = 0
    eta_hat: float
    eta_source: str
    rho: int
    h: float
    sigma2: float
    policy: str
    replicates: int
    variance_inflation: float
    extra: Dict[str, float] = Field(default_factory=dict)


class StandardizedStat(BaseModel):
    """z = (nh)^{d/2} (g_n(x) - m(x)) / (σ η̂^{1/2}), t = z², p = P(χ²₁ > t)."""
    query: Tuple[float, ...]
    z: float
    t: float
    p: float = Field(..., ge=0.0, le=1.0)
    boundary: bool
