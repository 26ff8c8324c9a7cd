"""
CLT normalization, χ²(1) p-values, p-value maps and Monte Carlo checks of
asymptotic normality.
"""
import logging
import math
from pathlib import Path
from typing import Any, Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField
from scipy import special, stats

from ..core.config import DEFAULT_KS_ALPHA, DEFAULT_PVALUE_THRESHOLD
from ..core.exceptions import DimensionMismatchError, NumericDomainError
from ..models.config_models import BandwidthRule, FieldSpec
from ..models.result_models import NormalityStudy, PValueSummary, QueryNormality, StandardizedStat
from ..utils.helpers import parallel_map, write_csv
from .dependence import default_rho, estimate_eta, residuals
from .field_sim import Field, replicate_spec, simulate, theoretical_eta
from .lattice import Lattice, make_lattice
from .regression import Estimate, _as_queries, estimate, estimate_grid, observation_array

logger = logging.getLogger("LatticeKReg.Inference")

MeanPolicy = Literal["leave-one-out", "include-self"]
EtaSource = Literal["replicate-mean", "fit", "true-noise"]


class StandardizedStats(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    queries: np.ndarray
    z: np.ndarray
    t: np.ndarray
    p: np.ndarray
    boundary: np.ndarray

    def records(self) -> List[StandardizedStat]:
        return [
            StandardizedStat(query=tuple(float(v) for v in q), z=float(z), t=float(t), p=float(p), boundary=bool(b))
            for q, z, t, p, b in zip(self.queries, self.z, self.t, self.p, self.boundary)
        ]


def chi_square_pvalue(z):
    """
    p = P(χ²₁ > z²) = 2(1 - Φ(|z|)) = erfc(|z|/√2).

    erfc 来自 Cephes，远端不做 1 - Φ 的相减，尾部没有抵消误差。
    """
    arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(arr)):
        raise NumericDomainError("chi-square p-value of NaN")
    p = special.erfc(np.abs(arr) / math.sqrt(2.0))
    return float(p) if arr.ndim == 0 else p


def standardize(est: Estimate, mean_ref: Estimate, h: float, sigma2: float, eta: float, n: int, d: int,
                variance_inflation: float = 1.0) -> StandardizedStats:
    if not sigma2 > 0:
        raise NumericDomainError(f"sigma^2 must be positive, got {sigma2}")
    if not eta > 0:
        raise NumericDomainError(f"eta must be positive, got {eta}")
    if not variance_inflation > 0:
        raise NumericDomainError(f"variance inflation must be positive, got {variance_inflation}")
    if est.queries.shape != mean_ref.queries.shape or not np.array_equal(est.queries, mean_ref.queries):
        raise DimensionMismatchError("estimate and mean reference are evaluated at different query points")
    scale = (n * h) ** (d / 2.0) / math.sqrt(sigma2 * eta * variance_inflation)
    z = scale * (est.values - mean_ref.values)
    return StandardizedStats(queries=est.queries, z=z, t=z ** 2, p=chi_square_pvalue(z),
                             boundary=np.asarray(est.boundary, dtype=bool))


def mean_reference(replicate_estimates: Sequence[Estimate], policy: MeanPolicy = "leave-one-out") -> Tuple[Estimate, float]:
    """
    Pointwise mean of R replicate fits and the factor Var(g_n - mean) / Var(g_n):
    1 + 1/R when the target is held out, 1 - 1/R when it is one of the R.
    """
    if len(replicate_estimates) == 0:
        raise NumericDomainError("mean reference of an empty replicate list")
    if len(replicate_estimates) < 2:
        raise NumericDomainError("mean reference needs at least 2 replicates")
    first = replicate_estimates[0]
    for other in replicate_estimates[1:]:
        if not np.array_equal(other.queries, first.queries):
            raise DimensionMismatchError("replicate estimates do not share a query grid")
    r = len(replicate_estimates)
    mean = np.mean(np.stack([e.values for e in replicate_estimates]), axis=0)
    if policy == "leave-one-out":
        factor = 1.0 + 1.0 / r
    elif policy == "include-self":
        factor = 1.0 - 1.0 / r
    else:
        raise NumericDomainError(f"unknown mean-reference policy '{policy}'")
    return first.with_values(mean), factor


class PValueSettings(BaseModel):
    """Everything pvalue_map needs besides the data; one kernel object end to end."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kernel: Any
    h: float = PydanticField(..., gt=0)
    rho: Optional[int] = PydanticField(default=None, ge=1)
    policy: MeanPolicy = "leave-one-out"
    correct_inflation: bool = True
    threshold: float = PydanticField(default=DEFAULT_PVALUE_THRESHOLD, gt=0, lt=1)
    eta_source: EtaSource = "replicate-mean"
    workers: int = PydanticField(default=1, ge=1)

    @classmethod
    def paper_faithful(cls, kernel, h: float, **kwargs) -> "PValueSettings":
        """Include-self arithmetic means, no inflation correction."""
        return cls(kernel=kernel, h=h, policy="include-self", correct_inflation=False, **kwargs)


class PValueMap(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lattice: Lattice
    stats: StandardizedStats
    summary: PValueSummary

    def to_csv(self, path: Union[str, Path]) -> Path:
        d = self.lattice.d
        idx = self.lattice.indices()
        rows = np.column_stack([idx, self.stats.z, self.stats.p, self.stats.boundary.astype(int)])
        columns = [f"i_{k + 1}" for k in range(d)] + ["z", "p", "boundary"]
        return write_csv(path, columns, rows, fmt=["%d"] * d + ["%.17g", "%.17g", "%d"])

    def to_gray_image(self):
        """p·255 rounded half-up; white means p close to 1."""
        from .imaging import GrayImage

        if self.lattice.d != 2:
            raise DimensionMismatchError(f"p-value images need d = 2, lattice has d = {self.lattice.d}")
        levels = np.floor(self.stats.p * 255.0 + 0.5)
        return GrayImage.from_lattice_values(self.lattice, levels)


def _summary(stats_: StandardizedStats, settings: PValueSettings, eta_hat: float, rho: int, replicates: int,
             factor: float) -> PValueSummary:
    above = stats_.p > settings.threshold
    interior = ~stats_.boundary
    extra = {}
    if not np.any(interior):
        logger.warning(f"no interior design points at h={settings.h:g}; the summary covers every point")
        interior = np.ones_like(interior)
        extra["interior_empty"] = 1.0
    boundary = ~interior
    count = int(np.sum(above & interior))
    evaluated = int(np.sum(interior))
    return PValueSummary(
        threshold=settings.threshold,
        fraction_above=count / evaluated,
        count_above=count,
        evaluated=evaluated,
        boundary_fraction_above=float(np.mean(above[boundary])) if np.any(boundary) else None,
        boundary_evaluated=int(np.sum(boundary)),
        eta_hat=eta_hat,
        eta_source=settings.eta_source,
        rho=rho,
        h=settings.h,
        sigma2=float(settings.kernel.clt_variance),
        policy=settings.policy,
        replicates=replicates,
        variance_inflation=factor,
        extra=extra,
    )


def pvalue_map(noisy, replicates: Sequence, lat: Lattice, settings: PValueSettings,
               true_noise: Optional[Field] = None) -> PValueMap:
    """
    Fit the target and every replicate on the grid, compare the target with the
    replicate mean and turn the normalized squared difference into χ²(1) p-values.

    `replicates` never contains the target; under include-self the target joins
    the mean.
    """
    y = observation_array(noisy, lat)
    others = [observation_array(r, lat) for r in replicates]
    target_fit = estimate_grid(y, lat, settings.kernel, settings.h)
    fits = parallel_map(lambda obs: estimate_grid(obs, lat, settings.kernel, settings.h), others, settings.workers)
    return pvalue_map_from_fits(y, others, target_fit, fits, lat, settings, true_noise)


def pvalue_map_from_fits(y: np.ndarray, others: Sequence[np.ndarray], target_fit: Estimate, fits: Sequence[Estimate],
                         lat: Lattice, settings: PValueSettings, true_noise: Optional[Field] = None) -> PValueMap:
    k = settings.kernel
    h = settings.h
    y = observation_array(y, lat)
    others = [observation_array(r, lat) for r in others]
    pool = [y] + others if settings.policy == "include-self" else others
    if len(pool) < 2:
        raise NumericDomainError(f"p-value map needs at least 2 replicates in the mean, got {len(pool)}")
    fits = list(fits)
    if settings.policy == "include-self":
        fits = [target_fit] + fits
    mean_est, factor = mean_reference(fits, settings.policy)

    rho = settings.rho or default_rho(lat.n, lat.d)
    if settings.eta_source == "replicate-mean":
        raw_mean = np.mean(np.stack(pool), axis=0)
        eps = Field.from_array(lat, y - raw_mean)
        eta_est = estimate_eta(eps, rho, settings.workers)
        # ε_t - 平均值 的长程方差是 η 乘以同一个因子
        eta_hat = eta_est.value / factor
    elif settings.eta_source == "fit":
        eta_hat = estimate_eta(residuals(y, target_fit), rho, settings.workers).value
    else:
        if true_noise is None:
            raise NumericDomainError("eta source 'true-noise' needs the simulated noise field")
        eta_hat = estimate_eta(true_noise, rho, settings.workers).value

    inflation = factor if settings.correct_inflation else 1.0
    stats_ = standardize(target_fit, mean_est, h, k.clt_variance, eta_hat, lat.n, lat.d, variance_inflation=inflation)
    summary = _summary(stats_, settings, eta_hat, rho, len(pool), factor)
    logger.info(
        f"p-value map n={lat.n}, d={lat.d}, h={h:.4g}, rho={rho}, eta_hat={eta_hat:.4g} ({settings.eta_source}): "
        f"{summary.count_above}/{summary.evaluated} interior points with p > {settings.threshold:g}"
    )
    return PValueMap(lattice=lat, stats=stats_, summary=summary)


# ----------------------------------------------------------- Monte Carlo study

def ks_critical_value(replicates: int, alpha: float = DEFAULT_KS_ALPHA) -> float:
    """Exact one-sample Kolmogorov–Smirnov critical value D_{R,1-α}."""
    if replicates < 1 or not 0 < alpha < 1:
        raise NumericDomainError(f"need R >= 1 and 0 < alpha < 1, got R={replicates}, alpha={alpha}")
    return float(stats.kstwo.ppf(1.0 - alpha, replicates))


def _query_report(query: np.ndarray, sample: np.ndarray, critical: float) -> QueryNormality:
    ks = stats.kstest(sample, "norm")
    return QueryNormality(
        query=tuple(float(v) for v in query),
        mean=float(np.mean(sample)),
        variance=float(np.var(sample, ddof=1)),
        skewness=float(stats.skew(sample)),
        excess_kurtosis=float(stats.kurtosis(sample)),
        ks_distance=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        ks_critical=critical,
        ks_passed=bool(ks.statistic < critical),
    )


def mc_normality_study(spec: FieldSpec, g: Callable[[np.ndarray], np.ndarray], kernel, rule: BandwidthRule,
                       n: int, queries, replicates: int, d: int = 1,
                       eta_mode: Literal["theoretical", "estimated"] = "theoretical",
                       rho: Optional[int] = None, workers: int = 1,
                       ks_alpha: float = DEFAULT_KS_ALPHA) -> NormalityStudy:
    """
    Draw R independent fields, normalize g_n - E g_n at each query and compare
    the z samples with N(0, 1); E g_n comes from the noiseless g.
    """
    if kernel.d != d:
        raise DimensionMismatchError(f"kernel dimension {kernel.d} does not match d={d}")
    if replicates < 2:
        raise NumericDomainError("normality study needs at least 2 replicates")
    rule.check_clt(d)
    lat = make_lattice(n, d)
    h = rule.bandwidth(n)
    q = _as_queries(queries, d)
    if np.unique(q, axis=0).shape[0] != q.shape[0]:
        raise NumericDomainError("query points must be pairwise distinct")
    boundary = np.min(np.minimum(q, 1.0 - q), axis=1) < h
    if np.any(boundary):
        logger.warning(f"{int(np.sum(boundary))} query point(s) lie within h={h:.4g} of the boundary")

    g_values = np.asarray(g(lat.design_points()), dtype=float)
    expected = estimate(g_values, lat, kernel, h, q).values
    sigma2 = kernel.clt_variance
    scale = (n * h) ** (d / 2.0)
    rho_used = rho or default_rho(n, d)
    eta_theory = None
    if eta_mode == "theoretical":
        eta_theory = theoretical_eta(spec, n - 1, d)

    def _one(r: int) -> np.ndarray:
        noise = simulate(replicate_spec(spec, r), lat)
        fitted = estimate(g_values + noise.values, lat, kernel, h, q).values
        eta = eta_theory if eta_theory is not None else estimate_eta(noise, rho_used).value
        return scale * (fitted - expected) / math.sqrt(sigma2 * eta)

    logger.info(f"Normality study: {spec.kind}, n={n}, d={d}, h={h:.4g}, R={replicates}, eta {eta_mode}")
    z = np.stack(parallel_map(_one, list(range(replicates)), workers))
    critical = ks_critical_value(replicates, ks_alpha)
    reports = [_query_report(q[j], z[:, j], critical) for j in range(q.shape[0])]
    corr = np.atleast_2d(np.corrcoef(z.T)) if q.shape[0] > 1 else np.ones((1, 1))
    offdiag = corr[~np.eye(corr.shape[0], dtype=bool)]
    return NormalityStudy(
        field_kind=spec.kind,
        n=n,
        d=d,
        h=h,
        replicates=replicates,
        eta=eta_theory,
        eta_mode=eta_mode,
        clt_variance=float(sigma2),
        queries=reports,
        correlation=corr.tolist(),
        max_offdiag_correlation=float(np.max(np.abs(offdiag))) if offdiag.size else 0.0,
    )
