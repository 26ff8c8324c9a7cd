"""
Kernel functions on [-1,1]^d with cached moments and a checker for the kernel regularity assumption.

All Lipschitz constants are with respect to the max norm ‖·‖∞.
"""
import logging
import math
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special
from scipy.interpolate import RegularGridInterpolator

from ..core.config import A1_MASS_TOLERANCE, QUADRATURE_RTOL, SUPPORT_TOLERANCE
from ..core.exceptions import ArtifactIOError, ConfigError, DimensionMismatchError
from ..models.result_models import A1Report, ClauseResult

logger = logging.getLogger("LatticeKReg.Kernel")

KernelFamily = Literal["box", "epanechnikov-paper", "epanechnikov-normalized", "triangle", "custom-table"]
KernelNorm = Literal["euclidean", "max"]

KERNEL_FAMILIES: Tuple[str, ...] = ("box", "epanechnikov-paper", "epanechnikov-normalized", "triangle", "custom-table")
PAPER_EPANECHNIKOV_SCALE = 3.0 / 8.0

_QUAD_OPTS = {"epsrel": QUADRATURE_RTOL, "epsabs": 1e-14, "limit": 200}


def _unit_sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)


def _radial_measure(d: int, norm: str):
    """Density of |u| (in the chosen norm) for Lebesgue measure: ∫ f(|u|) du = ∫_0^1 f(r) w(r) dr."""
    if norm == "euclidean":
        area = _unit_sphere_area(d)
        return lambda r: area * r ** (d - 1)
    return lambda r: d * 2.0 ** d * r ** (d - 1)


class Kernel:
    """
    Immutable kernel K supported by [-1,1]^d.

    mass = ∫K, sigma2 = ∫K², clt_variance = sigma2 / mass² (the constant that
    enters the limit variance of g_n, which is invariant under K -> cK).
    """

    def __init__(
        self,
        family: str,
        d: int,
        norm: str = "euclidean",
        table_axes: Optional[Sequence[np.ndarray]] = None,
        table_values: Optional[np.ndarray] = None,
    ):
        if family not in KERNEL_FAMILIES:
            raise ConfigError(f"unknown kernel family '{family}', expected one of {', '.join(KERNEL_FAMILIES)}")
        if norm not in ("euclidean", "max"):
            raise ConfigError(f"unknown kernel norm '{norm}', expected euclidean or max")
        if d < 1:
            raise ConfigError(f"kernel dimension must be >= 1, got {d}")
        self.family = family
        self.d = d
        self.norm = norm
        self._scale = PAPER_EPANECHNIKOV_SCALE
        self._interp: Optional[RegularGridInterpolator] = None
        self._table_axes: Optional[List[np.ndarray]] = None
        self._table_values: Optional[np.ndarray] = None

        if family == "custom-table":
            self._init_table(table_axes, table_values)

        if family == "epanechnikov-normalized":
            # 先按 3/8 计算质量，再整体缩放到质量 1
            paper_mass = self._integrate(lambda r: PAPER_EPANECHNIKOV_SCALE * (1.0 - r * r), power=1)
            self._scale = PAPER_EPANECHNIKOV_SCALE / paper_mass

        self.mass = self._compute_moment(1)
        self.sigma2 = self._compute_moment(2)
        self.clt_variance = self.sigma2 / (self.mass * self.mass)
        self.lipschitz = self._lipschitz_constant()
        self.lower_bound, self.upper_bound = self._bounds()
        logger.debug(
            f"Kernel {self.describe()}: mass={self.mass:.10g}, sigma2={self.sigma2:.10g}, "
            f"lipschitz={self.lipschitz:.6g}, bounds=({self.lower_bound:.6g}, {self.upper_bound:.6g})"
        )

    # ------------------------------------------------------------------ setup

    def _init_table(self, axes, values):
        if axes is None or values is None:
            raise ConfigError("custom-table kernel needs node axes and values")
        axes = [np.asarray(a, dtype=float) for a in axes]
        values = np.asarray(values, dtype=float)
        if len(axes) != self.d or values.shape != tuple(len(a) for a in axes):
            raise DimensionMismatchError(
                f"table values of shape {values.shape} do not match {self.d} axes of lengths {[len(a) for a in axes]}"
            )
        for a in axes:
            if len(a) < 2 or np.any(np.diff(a) <= 0):
                raise ConfigError("table axes must be strictly increasing with at least two nodes")
            if not (np.isclose(a[0], -1.0) and np.isclose(a[-1], 1.0)):
                raise ConfigError(f"table axis must span [-1, 1], got [{a[0]}, {a[-1]}]")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigError("table kernel values must be finite and nonnegative")
        self._table_axes = axes
        self._table_values = values
        self._interp = RegularGridInterpolator(tuple(axes), values, method="linear", bounds_error=False, fill_value=0.0)

    def describe(self) -> str:
        if self.family in ("epanechnikov-paper", "epanechnikov-normalized"):
            return f"{self.family}(d={self.d}, norm={self.norm})"
        return f"{self.family}(d={self.d})"

    # ------------------------------------------------------------- evaluation

    def _as_points(self, u) -> np.ndarray:
        pts = np.asarray(u, dtype=float)
        if self.d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        if pts.ndim == 0 or pts.shape[-1] != self.d:
            raise DimensionMismatchError(f"kernel of dimension {self.d} evaluated at points of shape {np.shape(u)}")
        return pts

    def evaluate_points(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized K on an (..., d) array, no shape coercion."""
        abs_pts = np.abs(pts)
        in_cube = np.max(abs_pts, axis=-1) <= 1.0 + SUPPORT_TOLERANCE

        if self.family == "box":
            return np.where(in_cube, 0.5 ** self.d, 0.0)
        if self.family == "triangle":
            return np.prod(np.clip(1.0 - abs_pts, 0.0, None), axis=-1) * in_cube
        if self.family == "custom-table":
            clipped = np.clip(pts, -1.0, 1.0)
            flat = clipped.reshape(-1, self.d)
            vals = self._interp(flat).reshape(pts.shape[:-1])
            return np.where(in_cube, vals, 0.0)

        if self.norm == "euclidean":
            r2 = np.sum(pts * pts, axis=-1)
        else:
            r2 = np.max(abs_pts, axis=-1) ** 2
        inside = in_cube & (r2 <= 1.0 + 2.0 * SUPPORT_TOLERANCE)
        return np.where(inside, self._scale * np.clip(1.0 - r2, 0.0, None), 0.0)

    def evaluate(self, u) -> Union[float, np.ndarray]:
        values = self.evaluate_points(self._as_points(u))
        if np.ndim(values) == 0:
            return float(values)
        return values

    __call__ = evaluate

    # ---------------------------------------------------------------- moments

    def _integrate(self, radial_profile, power: int) -> float:
        weight = _radial_measure(self.d, self.norm)
        value, _ = integrate.quad(lambda r: radial_profile(r) ** power * weight(r), 0.0, 1.0, **_QUAD_OPTS)
        return float(value)

    def _compute_moment(self, power: int) -> float:
        if self.family == "box":
            one_dim, _ = integrate.quad(lambda t: 0.5 ** power, -1.0, 1.0, **_QUAD_OPTS)
            return float(one_dim ** self.d)
        if self.family == "triangle":
            one_dim, _ = integrate.quad(lambda t: (1.0 - abs(t)) ** power, -1.0, 1.0, points=[0.0], **_QUAD_OPTS)
            return float(one_dim ** self.d)
        if self.family == "custom-table":
            return self._table_moment(power)
        scale = self._scale
        return self._integrate(lambda r: scale * (1.0 - r * r), power)

    def _table_moment(self, power: int) -> float:
        # 多线性插值在每个单元内光滑，按节点拆分后积分
        def integrand(*coords):
            return float(self._interp(np.asarray(coords, dtype=float)[None, :])[0]) ** power

        opts = []
        for a in self._table_axes:
            axis_opts = {"epsrel": QUADRATURE_RTOL, "epsabs": 1e-12, "limit": 200}
            if a.size > 2:
                axis_opts["points"] = [float(v) for v in a[1:-1]]
            opts.append(axis_opts)
        value, _ = integrate.nquad(integrand, [(-1.0, 1.0)] * self.d, opts=opts)
        return float(value)

    def _lipschitz_constant(self) -> float:
        if self.family == "box":
            return 0.0
        if self.family == "triangle":
            return float(self.d)
        if self.family == "custom-table":
            slopes = []
            for axis, nodes in enumerate(self._table_axes):
                spacing = np.diff(nodes).reshape([-1 if k == axis else 1 for k in range(self.d)])
                slopes.append(float(np.max(np.abs(np.diff(self._table_values, axis=axis)) / spacing)))
            return float(sum(slopes))
        # |∇K|_1 = 2·scale·|u|_1 on the unit ball
        if self.norm == "euclidean":
            return 2.0 * self._scale * math.sqrt(self.d)
        return 2.0 * self._scale

    def _bounds(self) -> Tuple[float, float]:
        if self.family == "box":
            return 0.5 ** self.d, 0.5 ** self.d
        if self.family == "triangle":
            return 0.0, 1.0
        if self.family == "custom-table":
            return float(np.min(self._table_values)), float(np.max(self._table_values))
        return 0.0, self._scale

    def scaled(self, factor: float) -> "ScaledKernel":
        return ScaledKernel(self, factor)

    def table_symmetry_violation(self) -> float:
        if self._table_values is None:
            return 0.0
        if not all(np.allclose(a, -a[::-1]) for a in self._table_axes):
            return float("inf")
        return float(np.max(np.abs(self._table_values - np.flip(self._table_values))))


class ScaledKernel:
    """c·K; g_n does not depend on the kernel's scale."""

    def __init__(self, base: Kernel, factor: float):
        if factor <= 0:
            raise ConfigError(f"kernel scale factor must be positive, got {factor}")
        self.base = base
        self.factor = factor
        self.family = base.family
        self.d = base.d
        self.norm = base.norm
        self.mass = base.mass * factor
        self.sigma2 = base.sigma2 * factor * factor
        self.clt_variance = base.clt_variance
        self.lipschitz = base.lipschitz * factor
        self.lower_bound = base.lower_bound * factor
        self.upper_bound = base.upper_bound * factor

    def evaluate_points(self, pts):
        return self.factor * self.base.evaluate_points(pts)

    def evaluate(self, u):
        return self.factor * self.base.evaluate(u)

    __call__ = evaluate

    def describe(self) -> str:
        return f"{self.factor:g}*{self.base.describe()}"


def make_kernel(family: str, d: int, norm: str = "euclidean") -> Kernel:
    return Kernel(family, d, norm=norm)


def make_table_kernel(axes: Sequence[np.ndarray], values: np.ndarray, norm: str = "euclidean") -> Kernel:
    return Kernel("custom-table", len(axes), norm=norm, table_axes=axes, table_values=values)


def load_kernel_table(path: Union[str, Path]) -> Kernel:
    """
    读取文本格式的核函数表：
    第一行 `d norm`，之后每行 `u_1 … u_d value`；节点需构成覆盖 [-1,1]^d 的规则网格。
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().split()
        rows = np.loadtxt(path, skiprows=1, ndmin=2)
    except OSError as e:
        raise ArtifactIOError(f"cannot read kernel table {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"malformed kernel table {path}: {e}") from e
    if len(header) != 2 or not header[0].isdigit():
        raise ConfigError(f"kernel table {path} must start with a `d norm` header line")
    d, norm = int(header[0]), header[1]
    if rows.shape[1] != d + 1:
        raise DimensionMismatchError(f"kernel table rows need {d + 1} columns, got {rows.shape[1]}")

    axes = [np.unique(rows[:, k]) for k in range(d)]
    expected = int(np.prod([len(a) for a in axes]))
    if rows.shape[0] != expected:
        raise ConfigError(f"kernel table has {rows.shape[0]} rows but its nodes span a grid of {expected}")
    values = np.full([len(a) for a in axes], np.nan)
    positions = tuple(np.searchsorted(axes[k], rows[:, k]) for k in range(d))
    values[positions] = rows[:, d]
    if np.any(np.isnan(values)):
        raise ConfigError(f"kernel table {path} has duplicate or missing grid nodes")
    logger.info(f"Loaded kernel table {path}: d={d}, nodes={[len(a) for a in axes]}")
    return make_table_kernel(axes, values, norm=norm)


def evaluate(k: Kernel, u) -> Union[float, np.ndarray]:
    return k.evaluate(u)


def l2_moment(k: Kernel) -> float:
    return k.sigma2


def check_assumption_a1(k: Kernel, grid_resolution: int) -> A1Report:
    """
    Measure every clause of the kernel assumption on a regular grid over [-1,1]^d.

    Failures are reported, never hidden: the Epanechnikov kernels have infimum 0
    on the support boundary, which violates the strictly positive lower bound.
    """
    if grid_resolution < 8:
        raise ConfigError(f"grid_resolution must be >= 8, got {grid_resolution}")
    axis = np.linspace(-1.0, 1.0, grid_resolution)
    spacing = axis[1] - axis[0]
    mesh = np.stack(np.meshgrid(*([axis] * k.d), indexing="ij"), axis=-1)
    values = k.evaluate_points(mesh)

    # 网格关于原点对称，翻转所有轴即得到 K(-u)
    symmetry = float(np.max(np.abs(values - np.flip(values))))
    symmetry = max(symmetry, k.table_symmetry_violation())

    lipschitz_hat = 0.0
    for ax in range(k.d):
        lipschitz_hat = max(lipschitz_hat, float(np.max(np.abs(np.diff(values, axis=ax)))) / spacing)

    outer_axis = np.linspace(-2.0, 2.0, 2 * grid_resolution + 1)
    outer = np.stack(np.meshgrid(*([outer_axis] * k.d), indexing="ij"), axis=-1)
    outside = np.max(np.abs(outer), axis=-1) > 1.0 + 1e-9
    leak = float(np.max(k.evaluate_points(outer)[outside])) if np.any(outside) else 0.0

    min_value = float(np.min(values))
    max_value = float(np.max(values))

    clauses = [
        ClauseResult(name="unit_mass", passed=abs(k.mass - 1.0) <= A1_MASS_TOLERANCE, measured=k.mass,
                     detail=f"∫K = {k.mass:.10g} (required: 1)"),
        ClauseResult(name="square_integrable", passed=bool(np.isfinite(k.sigma2)), measured=k.sigma2,
                     detail=f"∫K² = {k.sigma2:.10g}"),
        ClauseResult(name="symmetric", passed=symmetry <= 1e-12, measured=symmetry,
                     detail=f"max |K(u) - K(-u)| = {symmetry:.3g}"),
        ClauseResult(name="nonnegative", passed=min_value >= 0.0, measured=min_value,
                     detail=f"min K on [-1,1]^d = {min_value:.6g}"),
        ClauseResult(name="support", passed=leak == 0.0, measured=leak,
                     detail=f"max K outside [-1,1]^d = {leak:.3g}"),
        ClauseResult(name="lipschitz", passed=bool(np.isfinite(lipschitz_hat)) and lipschitz_hat <= k.lipschitz * (1 + 1e-9) + 1e-12,
                     measured=lipschitz_hat,
                     detail=f"finite-difference estimate {lipschitz_hat:.6g} vs cached r = {k.lipschitz:.6g}"),
        ClauseResult(name="lower_bound", passed=min_value > 0.0, measured=min_value,
                     detail=("infimum 0 on the support boundary; c > 0 is required on all of [-1,1]^d"
                             if min_value <= 0.0 else f"c = {min_value:.6g}")),
        ClauseResult(name="upper_bound", passed=bool(np.isfinite(max_value)), measured=max_value,
                     detail=f"C = {max_value:.6g}"),
    ]
    failed = [c.name for c in clauses if not c.passed]
    if failed:
        logger.warning(f"Kernel assumption check for {k.describe()}: failed clauses {', '.join(failed)}")
    return A1Report(
        kernel=k.describe(),
        d=k.d,
        grid_resolution=grid_resolution,
        mass=k.mass,
        sigma2=k.sigma2,
        symmetry_violation=symmetry,
        lipschitz_estimate=lipschitz_hat,
        lipschitz_constant=k.lipschitz,
        min_value=min_value,
        max_value=max_value,
        clauses=clauses,
        all_passed=not failed,
    )
