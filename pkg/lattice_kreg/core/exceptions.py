"""
Error hierarchy.

每个异常带一个 exit_code（相当于服务端的 HTTP 状态码）：
2 = 参数或数值前提不满足，1 = 读写失败。
"""
from typing import Optional, Sequence


class LatticeKRegError(Exception):
    exit_code = 2
    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def error_line(self) -> str:
        return f"error: {self.code}: {self.message}"


class ConfigError(LatticeKRegError):
    code = "config"


class NumericDomainError(LatticeKRegError):
    code = "numeric"


class LatticeSizeError(LatticeKRegError):
    code = "lattice-size"


class IndexOutOfRangeError(LatticeKRegError):
    code = "index-range"


class DimensionMismatchError(LatticeKRegError):
    code = "dimension"


class ZeroWeightError(LatticeKRegError):
    """Σ a_i(x) = 0 at one or more queries; g_n is undefined there."""
    code = "zero-weight"

    def __init__(self, message: str, query_indices: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.query_indices = list(query_indices or [])


class LagOutOfRangeError(LatticeKRegError):
    code = "lag-range"


class NonMonotoneSequenceError(LatticeKRegError):
    code = "non-monotone"


class UnknownFieldKindError(LatticeKRegError):
    code = "field-kind"


class ImageFormatError(LatticeKRegError):
    code = "image-format"


class UnsupportedImageFormatError(ImageFormatError):
    code = "image-unsupported"


class MalformedImageError(ImageFormatError):
    code = "image-malformed"


class ArtifactIOError(LatticeKRegError):
    exit_code = 1
    code = "io"


class FieldFormatError(LatticeKRegError):
    code = "field-format"
