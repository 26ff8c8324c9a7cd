from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.config import DEFAULT_BANDWIDTH_C, DEFAULT_BANDWIDTH_GAMMA, DEFAULT_SPECTRAL_COMPONENTS
from ..core.exceptions import NumericDomainError

FieldKind = Literal["iid-gaussian", "exp-gaussian-spectral", "ma-field", "md-field"]
FIELD_KINDS: Tuple[str, ...] = ("iid-gaussian", "exp-gaussian-spectral", "ma-field", "md-field")


class StencilTap(BaseModel):
    """θ_j at offset j ∈ Z^d of a moving-average field."""
    model_config = ConfigDict(frozen=True)

    offset: Tuple[int, ...]
    weight: float


class FieldSpec(BaseModel):
    kind: FieldKind
    sd: float = Field(1.0, gt=0, description="iid-gaussian standard deviation.")
    cst: float = Field(1.0, gt=0, description="exp-gaussian-spectral C(0).")
    range_a: float = Field(1.0, gt=0, alias="range", description="exp-gaussian-spectral range a (lattice units).")
    components: int = Field(DEFAULT_SPECTRAL_COMPONENTS, ge=1, description="Number of spectral cosine components M.")
    stencil: List[StencilTap] = Field(default_factory=lambda: [StencilTap(offset=(0,), weight=1.0)])
    beta: float = Field(1.0, ge=0, description="md-field dependence strength.")
    seed: int = Field(0, ge=0, lt=2 ** 64)

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    @field_validator("stencil")
    @classmethod
    def _stencil_not_empty(cls, v):
        if not v:
            raise ValueError("ma-field stencil must contain at least one tap")
        dims = {len(t.offset) for t in v}
        if len(dims) != 1:
            raise ValueError("all stencil offsets must have the same dimension")
        return v

    def with_seed(self, seed: int) -> "FieldSpec":
        return self.model_copy(update={"seed": seed})


class BandwidthRule(BaseModel):
    """h_n: either fixed, or the power law c·n^(-γ)."""
    model_config = ConfigDict(frozen=True)

    form: Literal["fixed", "power-law"] = "power-law"
    c: float = Field(DEFAULT_BANDWIDTH_C, gt=0)
    gamma: float = Field(DEFAULT_BANDWIDTH_GAMMA, ge=0)
    value: Optional[float] = Field(None, gt=0, description="Fixed bandwidth h.")

    @model_validator(mode="after")
    def _check_form(self):
        if self.form == "fixed" and self.value is None:
            raise ValueError("fixed bandwidth rule needs a value")
        if self.form == "power-law" and not self.gamma > 0:
            raise ValueError("power-law bandwidth needs gamma > 0 so that h_n -> 0")
        return self

    def bandwidth(self, n: int) -> float:
        if self.form == "fixed":
            return float(self.value)
        return float(self.c * n ** (-self.gamma))

    def check_clt(self, d: int) -> None:
        """γ < 1/(d+1) ⇔ n·h_n^(d+1) → ∞, the hypothesis of the main theorem."""
        if self.form == "power-law" and not self.gamma < 1.0 / (d + 1):
            raise NumericDomainError(
                f"bandwidth exponent gamma={self.gamma:g} violates n*h_n^(d+1) -> inf "
                f"(needs gamma < 1/(d+1) = {1.0 / (d + 1):.6g} for d={d})"
            )

    def describe(self) -> str:
        if self.form == "fixed":
            return f"fixed h={self.value:g}"
        return f"h_n = {self.c:g} * n^(-{self.gamma:g})"


def default_bandwidth_rule() -> BandwidthRule:
    return BandwidthRule(form="power-law", c=DEFAULT_BANDWIDTH_C, gamma=DEFAULT_BANDWIDTH_GAMMA)
