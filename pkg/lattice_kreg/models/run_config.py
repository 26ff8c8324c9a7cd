"""
RunConfig: everything one CLI invocation needs.

Precedence is flags > config file > defaults. The config file is a flat
`key = value` text file read with python-dotenv; `to_text()` writes the same
format back, sorted by key.
"""
from io import StringIO
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.config import (
    CONDITION_MAX_RADIUS,
    DEFAULT_BANDWIDTH_C,
    DEFAULT_BANDWIDTH_GAMMA,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_PVALUE_THRESHOLD,
    DEFAULT_REPLICATES,
    DEFAULT_SPECTRAL_COMPONENTS,
    DEFAULT_WORKERS,
)
from ..core.exceptions import ArtifactIOError, ConfigError, LatticeKRegError
from .config_models import BandwidthRule, FieldKind, FieldSpec, StencilTap

Command = Literal["simulate-field", "estimate", "eta", "check-condition", "clt-study", "bias-study", "denoise"]
COMMANDS = ("simulate-field", "estimate", "eta", "check-condition", "clt-study", "bias-study", "denoise")

FIELD_ALIASES = {"iid": "iid-gaussian", "exp": "exp-gaussian-spectral", "ma": "ma-field", "md": "md-field"}

# 只影响运行方式、不影响产物的字段，不写入规范文本
RUNTIME_ONLY = ("threads", "log_level", "config", "out")

# 需要满足 CLT 带宽条件的子命令
CLT_COMMANDS = ("estimate", "clt-study", "denoise")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    command: Command

    # lattice
    n: int = Field(64, ge=1, description="points per axis")
    d: int = Field(2, ge=1, description="dimension")

    # kernel / bandwidth
    kernel: Literal["box", "epanechnikov-paper", "epanechnikov-normalized", "triangle"] = "epanechnikov-normalized"
    kernel_norm: Literal["euclidean", "max"] = "euclidean"
    kernel_table: Optional[str] = None
    bandwidth: Optional[float] = Field(None, gt=0, description="fixed h in [0,1] units; overrides the power law")
    bandwidth_c: float = Field(DEFAULT_BANDWIDTH_C, gt=0)
    bandwidth_gamma: float = Field(DEFAULT_BANDWIDTH_GAMMA, gt=0)

    # noise field
    # 缺省时 denoise 使用指数协方差场，其余子命令使用 iid 高斯
    field: FieldKind = "iid-gaussian"
    sd: float = Field(1.0, gt=0)
    cst: float = Field(1.0, gt=0)
    range_a: float = Field(1.0, gt=0)
    components: int = Field(DEFAULT_SPECTRAL_COMPONENTS, ge=1)
    theta: List[float] = Field(default_factory=lambda: [1.0, 0.5])
    beta: float = Field(1.0, ge=0)

    # inference
    rho: Optional[int] = Field(None, ge=1)
    replicates: int = Field(DEFAULT_REPLICATES, ge=1)
    threshold: float = Field(DEFAULT_PVALUE_THRESHOLD, gt=0, lt=1)
    paper_faithful: bool = False
    clamp_observations: bool = False
    eta_source: Literal["replicate-mean", "fit", "true-noise"] = "replicate-mean"
    eta_mode: Literal["theoretical", "estimated"] = "theoretical"
    queries: Optional[str] = None
    signal: Literal["zero", "sin", "sinusoid", "phantom"] = "sin"

    # inputs
    input: Optional[str] = None
    demo: Literal["sinusoid", "phantom"] = "sinusoid"
    image: Optional[str] = None

    # condition checker
    criterion: Literal["quantile", "mixing-rate"] = "quantile"
    alpha: str = "exp:1"
    quantile: str = "gaussian:1"
    delta: float = Field(2.0, gt=0)
    max_radius: int = Field(CONDITION_MAX_RADIUS, ge=1)

    # bias study
    n_list: List[int] = Field(default_factory=lambda: [1000, 4000, 16000, 64000])
    h_list: List[float] = Field(default_factory=list)
    bias_bound: Optional[float] = Field(None, gt=0)

    # run
    seed: int = Field(0, ge=0, lt=2 ** 64)
    out: str = DEFAULT_OUTPUT_DIR
    threads: int = Field(DEFAULT_WORKERS, ge=1)
    log_level: Optional[str] = None
    config: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def _default_field(cls, data):
        if isinstance(data, dict) and data.get("field") is None:
            data = dict(data)
            data["field"] = "exp-gaussian-spectral" if data.get("command") == "denoise" else "iid-gaussian"
        return data

    @field_validator("field", mode="before")
    @classmethod
    def _field_alias(cls, v):
        return FIELD_ALIASES.get(v, v) if isinstance(v, str) else v

    @field_validator("theta", "h_list", mode="before")
    @classmethod
    def _float_list(cls, v):
        if isinstance(v, str):
            return [float(tok) for tok in v.replace(" ", "").split(",") if tok]
        return v

    @field_validator("n_list", mode="before")
    @classmethod
    def _int_list(cls, v):
        if isinstance(v, str):
            return [int(tok) for tok in v.replace(" ", "").split(",") if tok]
        return v

    @model_validator(mode="after")
    def _check_combination(self):
        if self.command == "denoise" and self.d != 2:
            raise ValueError(f"denoise works on images, needs d = 2 (got d = {self.d})")
        if self.command in ("denoise", "clt-study") and self.replicates < 2:
            raise ValueError(f"{self.command} needs at least 2 replicates")
        # --image 的边长要到读图后才知道，在 denoise 里再校验
        if self.rho is not None and self.rho >= self.n and not self.image:
            raise ValueError(f"rho={self.rho} must be smaller than n={self.n}")
        if not self.theta:
            raise ValueError("theta needs at least one weight")
        if self.command == "bias-study" and self.h_list and len(self.h_list) < 2:
            raise ValueError("bias-study over bandwidths needs at least two h values")
        if self.command in CLT_COMMANDS:
            self.bandwidth_rule().check_clt(self.d)
        return self

    # ------------------------------------------------------------- derived

    def bandwidth_rule(self) -> BandwidthRule:
        if self.bandwidth is not None:
            return BandwidthRule(form="fixed", value=self.bandwidth)
        return BandwidthRule(form="power-law", c=self.bandwidth_c, gamma=self.bandwidth_gamma)

    def field_spec(self) -> FieldSpec:
        stencil = [StencilTap(offset=(j,) + (0,) * (self.d - 1), weight=w) for j, w in enumerate(self.theta)]
        return FieldSpec(kind=self.field, sd=self.sd, cst=self.cst, range_a=self.range_a,
                         components=self.components, stencil=stencil, beta=self.beta, seed=self.seed)

    # ------------------------------------------------------------- text form

    def to_text(self) -> str:
        lines = []
        for key in sorted(type(self).model_fields):
            if key in RUNTIME_ONLY:
                continue
            value = getattr(self, key)
            if value is None:
                continue
            lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides: Any) -> "RunConfig":
        values = _clean(dotenv_values(stream=StringIO(text)))
        values.update(overrides)
        return build_run_config(values)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(_format_value(v) for v in value)
    return str(value)


KEY_ALIASES = {"range": "range_a", "reps": "replicates"}


def _clean(values: Dict[str, Optional[str]]) -> Dict[str, str]:
    out = {}
    for key, value in values.items():
        if value is None or value == "":
            continue
        key = key.strip().replace("-", "_")
        out[KEY_ALIASES.get(key, key)] = value
    return out


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ArtifactIOError(f"config file {path} not found")
    values = _clean(dotenv_values(path))
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in config file {path}: {', '.join(unknown)}")
    return values


def build_run_config(values: Dict[str, Any]) -> RunConfig:
    """Validation errors surface as ConfigError (or the numeric error raised inside a validator)."""
    try:
        return RunConfig(**values)
    except ValidationError as e:
        for err in e.errors():
            cause = (err.get("ctx") or {}).get("error")
            if isinstance(cause, LatticeKRegError):
                raise cause from None
        first = e.errors()[0]
        location = ".".join(str(p) for p in first.get("loc", ())) or "config"
        raise ConfigError(f"{location}: {first.get('msg')}") from None
