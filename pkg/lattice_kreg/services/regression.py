"""
Fixed-design kernel regression on Λ_n.

g_n(x) = Σ_i Y_i a_i(x) / Σ_i a_i(x),  a_i(x) = K((x - i/n) / h).
"""
import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import signal

from ..core.exceptions import ConfigError, DimensionMismatchError, NumericDomainError, ZeroWeightError
from ..models.config_models import BandwidthRule
from ..models.result_models import BiasStudy, BiasStudyRow, RiemannDiagnostic
from ..utils.helpers import parallel_map, write_csv
from .lattice import Lattice

logger = logging.getLogger("LatticeKReg.Regression")

# 窗口端点的浮点容差：|x - i/n| <= h 在索引空间中判定
_WINDOW_TOL = 1e-9
GRID_METHODS = ("auto", "fft", "direct")


class KernelWeights(BaseModel):
    """Sparse a_i(x): 1-based multi-indices and their nonzero weights."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: Tuple[float, ...]
    h: float
    indices: np.ndarray
    weights: np.ndarray

    def linear_indices(self, lat: Lattice) -> np.ndarray:
        if self.indices.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(tuple((self.indices - 1).T), lat.shape)

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))


class Estimate(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lattice: Lattice
    queries: np.ndarray
    values: np.ndarray
    weight_sums: np.ndarray
    bandwidth: float
    boundary: np.ndarray

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: np.ndarray) -> "Estimate":
        return self.model_copy(update={"values": np.asarray(values, dtype=float)})

    def to_csv(self, path: Union[str, Path]) -> Path:
        d = self.queries.shape[1]
        columns = [f"x_{k + 1}" for k in range(d)] + ["value", "weight_sum", "boundary_flag"]
        rows = np.column_stack([self.queries, self.values, self.weight_sums, self.boundary.astype(int)])
        return write_csv(path, columns, rows, fmt=["%.17g"] * (d + 2) + ["%d"])


def boundary_flags(queries: np.ndarray, h: float) -> np.ndarray:
    """True when a query lies within h of ∂[0,1]^d."""
    distance = np.min(np.minimum(queries, 1.0 - queries), axis=1)
    return distance < h


def _as_queries(queries, d: int) -> np.ndarray:
    q = np.asarray(queries, dtype=float)
    if q.ndim <= 1 and d == 1:
        q = q.reshape(-1, 1)
    elif q.ndim == 1:
        q = q.reshape(1, -1)
    if q.shape[1] != d:
        raise DimensionMismatchError(f"queries of shape {q.shape} do not match dimension {d}")
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise NumericDomainError("query points must lie in [0,1]^d")
    return q


def observation_array(Y, lat: Lattice) -> np.ndarray:
    arr = np.asarray(getattr(Y, "values", Y), dtype=float)
    if arr.size != lat.cardinality:
        raise DimensionMismatchError(f"{arr.size} observations do not match lattice cardinality {lat.cardinality}")
    return arr.reshape(lat.shape)


def _check_bandwidth(h: float) -> None:
    if not h > 0 or not math.isfinite(h):
        raise NumericDomainError(f"bandwidth must be positive and finite, got {h}")


def _window(lat: Lattice, h: float, x: np.ndarray) -> Optional[List[np.ndarray]]:
    """Per-axis 1-based index ranges with |x_l - i_l/n| <= h, clipped to {1..n}."""
    ranges = []
    for xl in x:
        center = lat.n * xl
        lo = max(1, math.ceil(center - lat.n * h - _WINDOW_TOL))
        hi = min(lat.n, math.floor(center + lat.n * h + _WINDOW_TOL))
        if lo > hi:
            return None
        ranges.append(np.arange(lo, hi + 1))
    return ranges


def _window_weights(lat: Lattice, k, h: float, x: np.ndarray):
    ranges = _window(lat, h, x)
    if ranges is None:
        return None, None
    mesh = np.meshgrid(*ranges, indexing="ij")
    u = np.stack([(x[l] - mesh[l] / lat.n) / h for l in range(lat.d)], axis=-1)
    slices = tuple(slice(r[0] - 1, r[-1]) for r in ranges)
    return slices, k.evaluate_points(u)


def kernel_weights(lat: Lattice, k, h: float, x) -> KernelWeights:
    _check_bandwidth(h)
    xq = _as_queries(x, lat.d)[0]
    slices, w = _window_weights(lat, k, h, xq)
    if w is None or not np.any(w > 0):
        raise ZeroWeightError(f"all kernel weights vanish at x={tuple(xq)} with h={h:g}, n={lat.n}")
    mesh = np.meshgrid(*[np.arange(s.start + 1, s.stop + 1) for s in slices], indexing="ij")
    idx = np.stack([m.reshape(-1) for m in mesh], axis=1)
    flat = w.reshape(-1)
    keep = flat > 0
    return KernelWeights(x=tuple(float(v) for v in xq), h=h, indices=idx[keep], weights=flat[keep])


def estimate(Y, lat: Lattice, k, h: float, queries, workers: int = 1) -> Estimate:
    """g_n at arbitrary query points; a zero denominator is an error, never a silent 0."""
    _check_bandwidth(h)
    obs = observation_array(Y, lat)
    q = _as_queries(queries, lat.d)

    def _one(x):
        slices, w = _window_weights(lat, k, h, x)
        if w is None:
            return 0.0, 0.0
        total = float(np.sum(w))
        return float(np.sum(obs[slices] * w)), total

    results = parallel_map(_one, list(q), workers)
    numer = np.array([r[0] for r in results])
    denom = np.array([r[1] for r in results])
    bad = np.flatnonzero(denom <= 0.0)
    if bad.size:
        raise ZeroWeightError(
            f"zero kernel weight sum at {bad.size} query point(s), first at x={tuple(q[bad[0]])} (h={h:g}, n={lat.n})",
            query_indices=bad.tolist(),
        )
    return Estimate(lattice=lat, queries=q, values=numer / denom, weight_sums=denom, bandwidth=h,
                    boundary=boundary_flags(q, h))


def grid_stencil(lat: Lattice, k, h: float) -> np.ndarray:
    """W[o] = K(-o/(nh)) for offsets |o|∞ <= min(⌊nh⌋, n-1)."""
    w = min(int(math.floor(lat.n * h + _WINDOW_TOL)), lat.n - 1)
    offsets = np.arange(-w, w + 1)
    mesh = np.meshgrid(*([offsets] * lat.d), indexing="ij")
    u = np.stack([-m / (lat.n * h) for m in mesh], axis=-1)
    return k.evaluate_points(u)


def estimate_grid(Y, lat: Lattice, k, h: float, method: str = "auto") -> Estimate:
    """
    g_n at every design point i/n. `method` is passed to scipy.signal.correlate
    ("auto", "fft" or "direct").

    在格点上 a_j(i/n) 只依赖 i - j，所以分子分母都是与固定模板的互相关，
    越界部分按零填充，与逐点求和一致。
    """
    _check_bandwidth(h)
    if method not in GRID_METHODS:
        raise ConfigError(f"unknown correlation method '{method}', expected one of {', '.join(GRID_METHODS)}")
    obs = observation_array(Y, lat)
    stencil = grid_stencil(lat, k, h)
    numer = signal.correlate(obs, stencil, mode="same", method=method)
    denom = signal.correlate(np.ones(lat.shape), stencil, mode="same", method=method)
    numer = numer.reshape(-1)
    denom = denom.reshape(-1)
    # FFT 路径在没有权重的位置会留下 ~1e-16 的噪声
    tiny = 1e-12 * float(np.max(stencil)) if stencil.size else 0.0
    bad = np.flatnonzero(denom <= tiny)
    q = lat.design_points()
    if bad.size:
        raise ZeroWeightError(f"zero kernel weight sum at {bad.size} design point(s) (h={h:g}, n={lat.n})",
                              query_indices=bad.tolist())
    return Estimate(lattice=lat, queries=q, values=numer / denom, weight_sums=denom, bandwidth=h,
                    boundary=boundary_flags(q, h))


def _weights_or_empty(lat: Lattice, k, h: float, x) -> KernelWeights:
    try:
        return kernel_weights(lat, k, h, x)
    except ZeroWeightError:
        xq = _as_queries(x, lat.d)[0]
        return KernelWeights(x=tuple(float(v) for v in xq), h=h, indices=np.zeros((0, lat.d), dtype=np.int64),
                             weights=np.zeros(0))


def riemann_diagnostic(lat: Lattice, k, h: float, x, y) -> RiemannDiagnostic:
    """cross = (nh)^-d Σ a_i(x)a_i(y) → δ_xy σ², mass = (nh)^-d Σ a_i(x) → 1 for interior x, y."""
    _check_bandwidth(h)
    ax = _weights_or_empty(lat, k, h, x)
    ay = _weights_or_empty(lat, k, h, y)
    scale = (lat.n * h) ** (-lat.d)
    common, ix, iy = np.intersect1d(ax.linear_indices(lat), ay.linear_indices(lat), assume_unique=True,
                                    return_indices=True)
    cross = scale * float(np.sum(ax.weights[ix] * ay.weights[iy])) if common.size else 0.0
    mass = scale * ax.total
    pts = np.array([ax.x, ay.x])
    boundary = bool(np.any(boundary_flags(pts, h)))
    if boundary:
        logger.warning(f"Riemann diagnostic at x={ax.x}, y={ay.x}: within h={h:g} of the boundary, limits do not apply")
    return RiemannDiagnostic(n=lat.n, d=lat.d, h=h, x=ax.x, y=ay.x, cross=cross, mass=mass, boundary=boundary)


class SCoefficients(BaseModel):
    """s̃_i(x,y) = (λ1 v_n(x) b_i(x) + λ2 v_n(y) b_i(y)) / σ and the norms behind bounds on s_i."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    indices: np.ndarray
    values: np.ndarray
    normalized: np.ndarray
    sum_squares: float
    sup_scaled: float
    l1_scaled: float


def s_coefficients(lat: Lattice, k, h: float, x, y, lambda1: float, lambda2: float) -> SCoefficients:
    if abs(lambda1 ** 2 + lambda2 ** 2 - 1.0) > 1e-12:
        raise NumericDomainError(f"lambda1^2 + lambda2^2 must equal 1, got {lambda1 ** 2 + lambda2 ** 2:.15g}")
    ax = kernel_weights(lat, k, h, x)
    ay = kernel_weights(lat, k, h, y)
    if np.array_equal(np.asarray(ax.x), np.asarray(ay.x)):
        raise NumericDomainError("s coefficients need distinct points x != y")

    lx, ly = ax.linear_indices(lat), ay.linear_indices(lat)
    union = np.union1d(lx, ly)
    wx = np.zeros(union.size)
    wy = np.zeros(union.size)
    wx[np.searchsorted(union, lx)] = ax.weights / ax.total
    wy[np.searchsorted(union, ly)] = ay.weights / ay.total
    # v_n(x) b_i(x) = (nh)^{d/2} a_i(x) / Σ_j a_j(x)
    nh_half = (lat.n * h) ** (lat.d / 2.0)
    sigma = math.sqrt(k.clt_variance)
    values = nh_half * (lambda1 * wx + lambda2 * wy) / sigma
    sum_sq = float(np.sum(values ** 2))
    indices = np.stack([np.asarray(v) + 1 for v in np.unravel_index(union, lat.shape)], axis=1)
    return SCoefficients(
        indices=indices,
        values=values,
        normalized=values / math.sqrt(sum_sq) if sum_sq > 0 else values,
        sum_squares=sum_sq,
        sup_scaled=float(np.max(np.abs(values))) * nh_half,
        l1_scaled=float(np.sum(np.abs(values))) / nh_half,
    )


# ------------------------------------------------------------------ bias study

def _interior_grid(h: float, d: int, per_axis: int) -> np.ndarray:
    lo, hi = h, 1.0 - h
    if lo > hi:
        return np.full((1, d), 0.5)
    axis = np.linspace(lo, hi, per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _check_c1_bound(g: Callable[[np.ndarray], np.ndarray], d: int, bound: float, per_axis: int = 65) -> bool:
    """sup |g| and sup |∂g/∂x_l| <= B, by central differences on a grid."""
    step = 1e-6
    pts = _interior_grid(step, d, per_axis)
    worst = float(np.max(np.abs(g(pts))))
    for l in range(d):
        shift = np.zeros(d)
        shift[l] = step
        worst = max(worst, float(np.max(np.abs(g(pts + shift) - g(pts - shift)))) / (2 * step))
    if worst > bound * (1 + 1e-6):
        logger.warning(f"regression function exceeds its C1 bound: measured {worst:.6g} > B={bound:g}")
        return False
    return True


def _bias_rows(g, k, configs: Sequence[Tuple[int, float]], d: int, per_axis: int, workers: int) -> List[BiasStudyRow]:
    rows = []
    for n, h in configs:
        lat = Lattice(n=n, d=d)
        y = np.asarray(g(lat.design_points()), dtype=float)
        queries = _interior_grid(h, d, per_axis)
        # E g_n 精确等于 Σ g(i/n) a_i / Σ a_i（g_n 对 Y 线性）
        expected = estimate(y, lat, k, h, queries, workers=workers)
        err = float(np.max(np.abs(expected.values - np.asarray(g(queries), dtype=float))))
        logger.info(f"bias study: n={n}, h={h:.6g}, sup error={err:.6g}")
        rows.append(BiasStudyRow(n=n, h=h, sup_error=err))
    return rows


def _fit_slope(rows: List[BiasStudyRow]) -> Optional[float]:
    usable = [(r.h, r.sup_error) for r in rows if r.sup_error > 0]
    if len(usable) < 2 or len({h for h, _ in usable}) < 2:
        return None
    hs, errs = np.array(usable).T
    slope, _ = np.polyfit(np.log(hs), np.log(errs), 1)
    return float(slope)


def bias_study(g, k, rule: BandwidthRule, n_list: Sequence[int], d: int = 1, bound: Optional[float] = None,
               queries_per_axis: int = 41, workers: int = 1) -> BiasStudy:
    """sup_x |E g_n(x) - g(x)| over interior queries for each n, h_n = rule(n)."""
    configs = [(int(n), rule.bandwidth(int(n))) for n in n_list]
    rows = _bias_rows(g, k, configs, d, queries_per_axis, workers)
    respected = _check_c1_bound(g, d, bound) if bound is not None else None
    return BiasStudy(rows=rows, slope=_fit_slope(rows), bound=bound, bound_respected=respected)


def bias_study_bandwidths(g, k, n: int, h_list: Sequence[float], d: int = 1, bound: Optional[float] = None,
                          queries_per_axis: int = 41, workers: int = 1) -> BiasStudy:
    configs = [(int(n), float(h)) for h in h_list]
    rows = _bias_rows(g, k, configs, d, queries_per_axis, workers)
    respected = _check_c1_bound(g, d, bound) if bound is not None else None
    return BiasStudy(rows=rows, slope=_fit_slope(rows), bound=bound, bound_respected=respected)
