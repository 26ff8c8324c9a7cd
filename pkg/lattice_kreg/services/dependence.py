"""
Long-run variance η and numerical checks of the strong-mixing criteria.
"""
import itertools
import logging
import math
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, special

from ..core.config import CONDITION_CONVERGE_RATIO, CONDITION_MAX_RADIUS, QUADRATURE_RTOL
from ..core.exceptions import (
    ArtifactIOError,
    ConfigError,
    DimensionMismatchError,
    LagOutOfRangeError,
    NonMonotoneSequenceError,
    NumericDomainError,
)
from ..models.result_models import ConditionReport, EtaEstimate
from ..utils.helpers import parallel_map
from .field_sim import Field
from .regression import Estimate, observation_array

logger = logging.getLogger("LatticeKReg.Dependence")

AlphaLike = Union[Callable[[int], float], Sequence[float], np.ndarray]
QuantileFn = Callable[[float], float]

# α_{1,∞} 不会超过 1/4
ALPHA_CEILING = 0.25
# 低于此值的 α 对 ∫_0^α Q² 的贡献可以忽略
ALPHA_FLOOR = 1e-280


def residuals(Y, fitted: Estimate) -> Field:
    """ε̂_i = Y_i - g_n(i/n)."""
    lat = fitted.lattice
    if fitted.size != lat.cardinality:
        raise DimensionMismatchError(f"fitted estimate covers {fitted.size} points, lattice has {lat.cardinality}")
    obs = observation_array(Y, lat).reshape(-1)
    return Field(lattice=lat, values=obs - fitted.values)


def default_rho(n: int, d: int = 1) -> int:
    """ρ_n = ⌊n^{1/4}⌋ ∨ 1; ρ_n^{3d} n^{-d} → 0 for every d."""
    if n < 2:
        raise NumericDomainError(f"default rho needs n >= 2, got {n}")
    return max(1, math.isqrt(math.isqrt(n)))


def pair_count(n: int, d: int, rho: int) -> int:
    """|G_ρ| counting ordered pairs (i, j) with |i - j|∞ <= ρ, diagonal included."""
    per_axis = n + 2 * sum(n - m for m in range(1, min(rho, n - 1) + 1))
    return per_axis ** d


def _lag_sum(arr: np.ndarray, lag: Sequence[int]) -> float:
    n = arr.shape[0]
    left = tuple(slice(max(0, -v), n - max(0, v)) for v in lag)
    right = tuple(slice(max(0, v), n - max(0, -v)) for v in lag)
    return float(np.sum(arr[left] * arr[right]))


def estimate_eta(eps: Field, rho: int, workers: int = 1) -> EtaEstimate:
    """
    η̂ = max(1, Σ_{(i,j)∈G_ρ} ε_i ε_j) / n^d.

    按固定的字典序遍历滞后向量再求和，结果与 workers 无关。
    """
    lat = eps.lattice
    if rho < 1:
        raise NumericDomainError(f"rho must be a positive integer, got {rho}")
    if rho >= lat.n:
        raise LagOutOfRangeError(f"rho={rho} must be smaller than n={lat.n}")
    arr = eps.as_array()
    lags = list(itertools.product(range(-rho, rho + 1), repeat=lat.d))
    partial = parallel_map(lambda lag: _lag_sum(arr, lag), lags, workers)
    raw = float(math.fsum(partial))
    value = max(1.0, raw) / lat.cardinality
    return EtaEstimate(value=value, rho=rho, pair_count=pair_count(lat.n, lat.d, rho), raw_sum=raw,
                       n=lat.n, d=lat.d, clamped=raw < 1.0)


def estimate_eta_bruteforce(eps: Field, rho: int) -> EtaEstimate:
    """Reference double loop over Λ_n × Λ_n; small lattices only."""
    lat = eps.lattice
    idx = lat.indices()
    values = eps.values
    raw = 0.0
    pairs = 0
    for a in range(lat.cardinality):
        for b in range(lat.cardinality):
            if np.max(np.abs(idx[a] - idx[b])) <= rho:
                raw += values[a] * values[b]
                pairs += 1
    return EtaEstimate(value=max(1.0, raw) / lat.cardinality, rho=rho, pair_count=pairs, raw_sum=raw,
                       n=lat.n, d=lat.d, clamped=raw < 1.0)


# --------------------------------------------------------- α sequences and Q

def exponential_alpha(rate: float = 1.0) -> Callable[[int], float]:
    return lambda r: math.exp(-rate * r)


def power_alpha(q: float) -> Callable[[int], float]:
    return lambda r: math.inf if r == 0 else float(r) ** (-q)


def m_dependent_alpha(m: int, level: float = ALPHA_CEILING) -> Callable[[int], float]:
    """α(r) = level for r < m, 0 afterwards."""
    return lambda r: level if r < m else 0.0


def gaussian_quantile(sd: float = 1.0) -> QuantileFn:
    """Q(u) for |ε_0| with ε_0 ~ N(0, sd²): inverse of t ↦ P(|ε_0| > t)."""
    def q(u: float) -> float:
        if u <= 0.0:
            return math.inf
        # 对数尺度求分位数，u 为次正规数时 u/2 不会下溢
        return -sd * float(special.ndtri_exp(math.log(u) - math.log(2.0)))
    return q


def uniform_quantile(bound: float) -> QuantileFn:
    return lambda u: bound * (1.0 - u)


def bounded_quantile(bound: float) -> QuantileFn:
    return lambda u: bound


def load_alpha_table(path: Union[str, Path]) -> np.ndarray:
    """Two columns `r alpha`; returns α indexed by r = 0..max with missing radii rejected."""
    table = _load_two_columns(path)
    radii = table[:, 0].astype(int)
    if not np.array_equal(radii, np.arange(radii[0], radii[0] + radii.size)):
        raise ConfigError(f"alpha table {path} must list consecutive radii")
    out = np.full(radii[-1] + 1, np.nan)
    out[radii] = table[:, 1]
    if radii[0] > 0:
        out[:radii[0]] = ALPHA_CEILING
    return out


def load_quantile_table(path: Union[str, Path]) -> QuantileFn:
    """Two columns `u Q(u)`; linear interpolation."""
    table = _load_two_columns(path)
    order = np.argsort(table[:, 0])
    u, q = table[order, 0], table[order, 1]
    return lambda x: float(np.interp(x, u, q))


def _load_two_columns(path) -> np.ndarray:
    try:
        table = np.loadtxt(path, ndmin=2, comments="#")
    except OSError as e:
        raise ArtifactIOError(f"cannot read table {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"malformed table {path}: {e}") from e
    if table.shape[1] != 2:
        raise DimensionMismatchError(f"table {path} needs exactly two columns, got {table.shape[1]}")
    return table


def _alpha_values(alpha: AlphaLike, radii: np.ndarray) -> np.ndarray:
    if callable(alpha):
        values = np.array([alpha(int(r)) for r in radii], dtype=float)
    else:
        seq = np.asarray(alpha, dtype=float)
        if radii[-1] >= seq.size:
            # 序列之后视为 0 会高估收敛性，这里改为沿用最后一个值
            logger.warning(f"alpha sequence has {seq.size} entries, extending its last value to radius {radii[-1]}")
            seq = np.concatenate([seq, np.full(radii[-1] + 1 - seq.size, seq[-1])])
        values = seq[radii]
    if np.any(np.isnan(values)) or np.any(values < 0):
        raise NumericDomainError("alpha values must be nonnegative numbers")
    if np.any(np.diff(values) > 0):
        first = int(np.flatnonzero(np.diff(values) > 0)[0])
        raise NonMonotoneSequenceError(f"alpha must be nonincreasing, increases after radius {int(radii[first])}")
    return values


def _verdict(radii: np.ndarray, terms: np.ndarray):
    if np.any(np.isinf(terms)):
        return "diverges", None, None
    big_r = int(radii[-1])
    last = float(np.sum(terms[(radii > big_r // 10) & (radii <= big_r)]))
    prev = float(np.sum(terms[(radii > big_r // 100) & (radii <= big_r // 10)]))
    if last == 0.0 and prev == 0.0 and big_r >= 1:
        return "converges", 0.0, 0.0
    if big_r < 100:
        return "inconclusive", None, None
    if prev == 0.0:
        return "inconclusive", None, None
    ratio = last / prev
    if ratio < CONDITION_CONVERGE_RATIO:
        # 把每个十倍区间的贡献按等比外推
        tail = last * ratio / (1.0 - ratio)
        return "converges", ratio, tail
    if ratio >= 1.0:
        return "diverges", ratio, None
    return "inconclusive", ratio, None


def _report(criterion: str, d: int, radii: np.ndarray, terms: np.ndarray) -> ConditionReport:
    if np.any(np.isnan(terms)):
        first = int(radii[np.flatnonzero(np.isnan(terms))[0]])
        raise NumericDomainError(f"{criterion} condition: shell term at radius {first} is not a number")
    partial = np.cumsum(terms)
    verdict, ratio, tail = _verdict(radii, terms)
    monotone = bool(np.all(np.diff(partial) >= 0))
    logger.info(f"{criterion} condition (d={d}, R={int(radii[-1])}): partial sum {partial[-1]:.6g}, verdict {verdict}")
    return ConditionReport(
        criterion=criterion,
        d=d,
        radii=[int(r) for r in radii],
        shell_terms=[float(t) for t in terms],
        partial_sums=[float(s) for s in partial],
        monotone=monotone,
        decade_ratio=ratio,
        tail_bound=tail,
        verdict=verdict,
    )


def shell_count(r: int, d: int) -> int:
    """#{k ∈ Z^d : |k|∞ = r}."""
    return 1 if r == 0 else (2 * r + 1) ** d - (2 * r - 1) ** d


def _integral_q2(q: QuantileFn, upper: float) -> float:
    # α 过小时 quad 的节点会下溢到 0
    if upper < ALPHA_FLOOR:
        return 0.0
    opts = {"epsrel": QUADRATURE_RTOL, "epsabs": 1e-300, "limit": 200}
    # 端点 0 处 Q 可能发散，分两段积分
    mid = upper / 2.0
    left, _ = integrate.quad(lambda u: q(u) ** 2, 0.0, mid, **opts)
    right, _ = integrate.quad(lambda u: q(u) ** 2, mid, upper, **opts)
    return float(left + right)


def check_quantile_condition(alpha: AlphaLike, q: QuantileFn, d: int,
                             max_radius: int = CONDITION_MAX_RADIUS) -> ConditionReport:
    """
    Σ_{|k|∞ <= R} ∫_0^{α(|k|)} Q²(u) du, accumulated shell by shell.
    """
    if d < 1 or max_radius < 1:
        raise NumericDomainError("d and max_radius must be positive")
    radii = np.arange(0, max_radius + 1)
    raw = _alpha_values(alpha, radii)
    if np.any(raw > ALPHA_CEILING):
        logger.warning(f"alpha values above {ALPHA_CEILING} clipped (mixing coefficients never exceed 1/4)")
    values = np.minimum(raw, ALPHA_CEILING)
    cache = {}
    terms = np.zeros(radii.size)
    for pos, (r, a) in enumerate(zip(radii, values)):
        if a not in cache:
            cache[a] = _integral_q2(q, float(a))
        terms[pos] = shell_count(int(r), d) * cache[a]
    return _report("quantile", d, radii, terms)


def check_mixing_rate_condition(alpha: AlphaLike, delta: float, d: int,
                                max_radius: int = CONDITION_MAX_RADIUS) -> ConditionReport:
    """
    Σ_{m>=1} m^{d-1} α(m)^{δ/(2+δ)}.

    This criterion is more restrictive than the quantile condition: whenever it
    holds (with a finite 2+δ moment) the quantile condition holds too.
    """
    if not delta > 0:
        raise NumericDomainError(f"delta must be positive, got {delta}")
    if d < 1 or max_radius < 1:
        raise NumericDomainError("d and max_radius must be positive")
    radii = np.arange(1, max_radius + 1)
    values = _alpha_values(alpha, radii)
    terms = radii.astype(float) ** (d - 1) * values ** (delta / (2.0 + delta))
    return _report("mixing-rate", d, radii, terms)
