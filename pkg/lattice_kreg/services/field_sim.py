"""
Stationary random fields on Λ_n with analytic covariance oracles.

Kinds:
- iid-gaussian           ε_i ~ N(0, sd²)
- exp-gaussian-spectral  Gaussian field with C(k) = cst·exp(-|k|/a), spectral method
- ma-field               ε_i = Σ_j θ_j ξ_{i-j}
- md-field               ε_i = ξ_i (1 + β ξ_{i-e1}²)^{1/2} / (1 + β)^{1/2}, a martingale-difference field
"""
import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import optimize

from ..core.exceptions import (
    DimensionMismatchError,
    LagOutOfRangeError,
    NumericDomainError,
    UnknownFieldKindError,
)
from ..models.config_models import FIELD_KINDS, FieldSpec
from ..utils.helpers import parallel_map
from .lattice import Lattice
from .rng import STREAM_DRIVING, STREAM_REPLICATE, STREAM_SPECTRAL, derive_seed, make_generator

logger = logging.getLogger("LatticeKReg.FieldSim")

# 频率分块，限制复数中间数组的大小
_MAX_BLOCK_ELEMENTS = 1 << 22


class Field(BaseModel):
    """Real values on Λ_n in lexicographic order, plus the spec that produced them."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lattice: Lattice
    values: np.ndarray
    spec: Optional[FieldSpec] = None

    @model_validator(mode="after")
    def _check_values(self):
        if self.values.ndim != 1 or self.values.shape[0] != self.lattice.cardinality:
            raise DimensionMismatchError(
                f"field of {self.values.size} values does not match lattice cardinality {self.lattice.cardinality}"
            )
        if not np.all(np.isfinite(self.values)):
            raise NumericDomainError("field values must be finite")
        return self

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.lattice.shape)

    @classmethod
    def from_array(cls, lat: Lattice, values, spec: Optional[FieldSpec] = None) -> "Field":
        return cls(lattice=lat, values=np.ascontiguousarray(values, dtype=float).reshape(-1), spec=spec)


# ---------------------------------------------------------------- simulation

def _spectral_frequencies(rng: np.random.Generator, d: int, a: float, m: int) -> np.ndarray:
    """Draw M frequencies from the spectral law of exp(-|h|/a) in dimension d, density ∝ (1 + a²|ω|²)^(-(d+1)/2)."""
    u = rng.random(m)
    if d == 1:
        # Cauchy with scale 1/a
        return (np.tan(math.pi * (u - 0.5)) / a)[:, None]
    if d == 2:
        radius = np.sqrt((1.0 - u) ** -2 - 1.0) / a
        theta = rng.random(m) * 2.0 * math.pi
        return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    # d == 3: F(r) = (φ - sin φ)/π with φ = 2·arctan(a r)
    target = math.pi * np.clip(u, 1e-300, None)
    phi = optimize.newton(
        lambda p: p - np.sin(p) - target,
        np.full(m, math.pi),
        fprime=lambda p: 1.0 - np.cos(p),
        tol=1e-13,
        maxiter=500,
    )
    radius = np.tan(phi / 2.0) / a
    direction = rng.standard_normal((m, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * radius[:, None]


def _simulate_spectral(spec: FieldSpec, lat: Lattice) -> np.ndarray:
    if lat.d not in (1, 2, 3):
        raise NumericDomainError(f"spectral simulation of the exponential covariance supports d in {{1,2,3}}, got {lat.d}")
    rng = make_generator(spec.seed, STREAM_SPECTRAL)
    m = spec.components
    omega = _spectral_frequencies(rng, lat.d, spec.range_a, m)
    phases = rng.random(m) * 2.0 * math.pi
    coords = np.arange(1, lat.n + 1, dtype=float)

    rows = lat.n ** (lat.d - 1)
    block = max(1, min(m, _MAX_BLOCK_ELEMENTS // max(rows, 1)))
    total = np.zeros(lat.cardinality)
    # cos(<ω,k> + φ) = Re[e^{iφ} Π_l e^{i ω_l k_l}]，最后一维用矩阵乘法归约
    for start in range(0, m, block):
        stop = min(m, start + block)
        w = omega[start:stop]
        acc = np.exp(1j * phases[start:stop])[None, :] * np.exp(1j * np.outer(coords, w[:, 0]))
        if lat.d == 1:
            total += np.real(acc.sum(axis=1))
            continue
        for axis in range(1, lat.d - 1):
            acc = (acc[:, None, :] * np.exp(1j * np.outer(coords, w[:, axis]))[None, :, :]).reshape(-1, stop - start)
        last = np.exp(1j * np.outer(coords, w[:, lat.d - 1]))
        total += np.real(acc @ last.T).reshape(-1)
    return math.sqrt(spec.cst) * math.sqrt(2.0 / m) * total


def _stencil_arrays(spec: FieldSpec, d: int):
    offsets = np.array([t.offset for t in spec.stencil], dtype=np.int64)
    weights = np.array([t.weight for t in spec.stencil], dtype=float)
    if offsets.shape[1] != d:
        raise DimensionMismatchError(f"stencil offsets have dimension {offsets.shape[1]}, lattice has {d}")
    return offsets, weights


def _simulate_ma(spec: FieldSpec, lat: Lattice) -> np.ndarray:
    offsets, weights = _stencil_arrays(spec, lat.d)
    hi = offsets.max(axis=0)
    lo = offsets.min(axis=0)
    rng = make_generator(spec.seed, STREAM_DRIVING)
    xi = rng.standard_normal(tuple(int(lat.n + hi[k] - lo[k]) for k in range(lat.d)))
    out = np.zeros(lat.shape)
    for offset, weight in zip(offsets, weights):
        # ξ_{i-j}: 扩展数组中的起点为 max_j - j
        window = tuple(slice(int(hi[k] - offset[k]), int(hi[k] - offset[k]) + lat.n) for k in range(lat.d))
        out += weight * xi[window]
    return out.reshape(-1)


def _simulate_md(spec: FieldSpec, lat: Lattice) -> np.ndarray:
    rng = make_generator(spec.seed, STREAM_DRIVING)
    xi = rng.standard_normal((lat.n + 1,) + (lat.n,) * (lat.d - 1))
    # e1 = 第一坐标方向，i - e1 在字典序下位于 i 之前
    eps = xi[1:] * np.sqrt(1.0 + spec.beta * xi[:-1] ** 2) / math.sqrt(1.0 + spec.beta)
    return eps.reshape(-1)


def simulate(spec: FieldSpec, lat: Lattice) -> Field:
    """Deterministic in (spec, lat): every draw comes from streams keyed by spec.seed."""
    if spec.kind == "iid-gaussian":
        values = make_generator(spec.seed, STREAM_DRIVING).standard_normal(lat.cardinality) * spec.sd
    elif spec.kind == "exp-gaussian-spectral":
        values = _simulate_spectral(spec, lat)
    elif spec.kind == "ma-field":
        values = _simulate_ma(spec, lat)
    elif spec.kind == "md-field":
        values = _simulate_md(spec, lat)
    else:
        raise UnknownFieldKindError(f"unknown field kind '{spec.kind}', expected one of {', '.join(FIELD_KINDS)}")
    return Field(lattice=lat, values=np.ascontiguousarray(values, dtype=float), spec=spec)


def replicate_spec(spec: FieldSpec, index: int) -> FieldSpec:
    return spec.with_seed(derive_seed(spec.seed, STREAM_REPLICATE, index))


def simulate_replicates(spec: FieldSpec, lat: Lattice, count: int, workers: int = 1, first_index: int = 0) -> List[Field]:
    specs = [replicate_spec(spec, first_index + r) for r in range(count)]
    logger.info(f"Simulating {count} {spec.kind} replicates on n={lat.n}, d={lat.d} with {workers} worker(s)")
    return parallel_map(lambda s: simulate(s, lat), specs, workers)


# -------------------------------------------------------------------- oracles

def covariance(spec: FieldSpec, lag: Sequence[int]) -> float:
    """Analytic C(k) = E(ε_0 ε_k)."""
    k = np.asarray(lag, dtype=np.int64)
    if spec.kind == "iid-gaussian":
        return spec.sd ** 2 if not np.any(k) else 0.0
    if spec.kind == "md-field":
        return 1.0 if not np.any(k) else 0.0
    if spec.kind == "exp-gaussian-spectral":
        return float(spec.cst * math.exp(-float(np.sqrt(np.sum(k.astype(float) ** 2))) / spec.range_a))
    if spec.kind == "ma-field":
        offsets, weights = _stencil_arrays(spec, k.size)
        lookup = {tuple(o): w for o, w in zip(offsets.tolist(), weights)}
        return float(sum(w * lookup.get(tuple((o + k).tolist()), 0.0) for o, w in zip(offsets, weights)))
    raise UnknownFieldKindError(f"unknown field kind '{spec.kind}'")


def stencil_diameter(spec: FieldSpec) -> int:
    offsets = np.array([t.offset for t in spec.stencil], dtype=np.int64)
    return int(np.max(offsets.max(axis=0) - offsets.min(axis=0)))


def theoretical_eta(spec: FieldSpec, truncation: int, d: Optional[int] = None) -> float:
    """
    η = Σ_k C(k) (all shipped generators are ergodic, so the conditional
    expectation on the invariant σ-algebra reduces to the plain covariance).
    """
    if truncation < 1:
        raise NumericDomainError(f"truncation must be a positive integer, got {truncation}")
    if spec.kind == "iid-gaussian":
        return spec.sd ** 2
    if spec.kind == "md-field":
        return 1.0
    if spec.kind == "ma-field":
        diameter = stencil_diameter(spec)
        if truncation < diameter:
            raise NumericDomainError(f"truncation {truncation} is smaller than the stencil diameter {diameter}")
        return float(sum(t.weight for t in spec.stencil)) ** 2
    if spec.kind == "exp-gaussian-spectral":
        if d is None:
            raise DimensionMismatchError("theoretical eta of the exponential field needs the lattice dimension d")
        axis = np.arange(-truncation, truncation + 1, dtype=float)
        r2 = np.zeros((1,) * d)
        for k in range(d):
            shape = [1] * d
            shape[k] = axis.size
            r2 = r2 + (axis ** 2).reshape(shape)
        return float(spec.cst * np.sum(np.exp(-np.sqrt(r2) / spec.range_a)))
    raise UnknownFieldKindError(f"unknown field kind '{spec.kind}'")


def empirical_covariance(f: Field, lag: Sequence[int]) -> float:
    """Mean of ε_i ε_{i+lag} over all in-lattice pairs (no centering: the fields have mean zero)."""
    lat = f.lattice
    k = [int(v) for v in lag]
    if len(k) != lat.d:
        raise DimensionMismatchError(f"lag {tuple(k)} has length {len(k)}, lattice dimension is {lat.d}")
    if max(abs(v) for v in k) >= lat.n:
        raise LagOutOfRangeError(f"lag {tuple(k)} must satisfy |lag| < n = {lat.n}")
    arr = f.as_array()
    left = tuple(slice(max(0, -v), lat.n - max(0, v)) for v in k)
    right = tuple(slice(max(0, v), lat.n - max(0, -v)) for v in k)
    return float(np.mean(arr[left] * arr[right]))
