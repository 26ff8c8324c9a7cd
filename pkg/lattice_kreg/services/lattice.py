"""
Index arithmetic for Λ_n = {1,…,n}^d.

多重指标从 1 开始（与公式一致），线性指标从 0 开始；线性化按字典序，
第一个坐标变化最慢，与 numpy 的 C 顺序 reshape 一致。
"""
import logging
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import MAX_LATTICE_POINTS
from ..core.exceptions import DimensionMismatchError, IndexOutOfRangeError, LatticeSizeError

logger = logging.getLogger("LatticeKReg.Lattice")

MultiIndex = Tuple[int, ...]


class Lattice(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Points per axis.")
    d: int = Field(..., ge=1, description="Dimension.")

    @property
    def cardinality(self) -> int:
        return self.n ** self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    def _check_index(self, i: Sequence[int]) -> np.ndarray:
        idx = np.asarray(i, dtype=np.int64).reshape(-1)
        if idx.size != self.d:
            raise DimensionMismatchError(f"multi-index {tuple(i)} has length {idx.size}, lattice dimension is {self.d}")
        if np.any(idx < 1) or np.any(idx > self.n):
            raise IndexOutOfRangeError(f"multi-index {tuple(int(v) for v in idx)} outside {{1,…,{self.n}}}^{self.d}")
        return idx

    def linearize(self, i: Sequence[int]) -> int:
        idx = self._check_index(i)
        return int(np.ravel_multi_index(tuple(idx - 1), self.shape))

    def delinearize(self, k: int) -> MultiIndex:
        if not 0 <= k < self.cardinality:
            raise IndexOutOfRangeError(f"linear index {k} outside [0, {self.cardinality})")
        return tuple(int(v) + 1 for v in np.unravel_index(k, self.shape))

    def design_point(self, i: Sequence[int]) -> Tuple[float, ...]:
        idx = self._check_index(i)
        return tuple(float(v) / self.n for v in idx)

    def indices(self) -> np.ndarray:
        """All multi-indices as an (n^d, d) array in lexicographic order."""
        grids = np.meshgrid(*([np.arange(1, self.n + 1)] * self.d), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def design_points(self) -> np.ndarray:
        return self.indices() / float(self.n)

    def boundary_distance(self, i: Sequence[int]) -> int:
        idx = self._check_index(i)
        return int(np.min(np.minimum(idx - 1, self.n - idx)))

    def interior_mask(self, margin: int) -> np.ndarray:
        """Boolean array of shape ``self.shape``; True where d(i, ∂Λ_n) ≥ margin."""
        axis = np.arange(1, self.n + 1)
        ok = np.minimum(axis - 1, self.n - axis) >= margin
        mask = ok
        for _ in range(self.d - 1):
            mask = np.multiply.outer(mask, ok)
        return np.asarray(mask, dtype=bool).reshape(self.shape)

    def interior_indices(self, margin: int) -> np.ndarray:
        """Λ_n^N: indices at max-norm distance ≥ margin from the boundary, lexicographic order."""
        if margin < 0:
            raise IndexOutOfRangeError(f"margin must be nonnegative, got {margin}")
        mask = self.interior_mask(margin).reshape(-1)
        return self.indices()[mask]


def make_lattice(n: int, d: int) -> Lattice:
    if n < 1 or d < 1:
        raise LatticeSizeError(f"lattice needs n >= 1 and d >= 1, got n={n}, d={d}")
    # 整数运算，不会溢出
    if n ** d > MAX_LATTICE_POINTS:
        raise LatticeSizeError(f"lattice of {n}^{d} points exceeds the limit of {MAX_LATTICE_POINTS}")
    return Lattice(n=n, d=d)


def design_point(lat: Lattice, i: Sequence[int]) -> Tuple[float, ...]:
    return lat.design_point(i)


def interior_indices(lat: Lattice, margin: int) -> np.ndarray:
    return lat.interior_indices(margin)
