"""
Field import/export.

Binary layout (little-endian): 4-byte magic, uint32 d, uint64 n, then n^d float64
values in lexicographic order. CSV: `i_1,…,i_d,value`, small lattices only.
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core.config import CSV_MAX_POINTS, FIELD_BINARY_MAGIC
from ..core.exceptions import ConfigError, FieldFormatError
from ..models.config_models import FieldSpec
from ..utils.helpers import read_bytes, write_bytes, write_csv
from .field_sim import Field
from .lattice import make_lattice

logger = logging.getLogger("LatticeKReg.FieldIO")

HEADER_DTYPE = np.dtype([("magic", "S4"), ("d", "<u4"), ("n", "<u8")])


def field_to_bytes(f: Field) -> bytes:
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = FIELD_BINARY_MAGIC
    header["d"] = f.lattice.d
    header["n"] = f.lattice.n
    return header.tobytes() + f.values.astype("<f8").tobytes()


def field_from_bytes(payload: bytes, spec: Optional[FieldSpec] = None) -> Field:
    if len(payload) < HEADER_DTYPE.itemsize:
        raise FieldFormatError("field file shorter than its 16-byte header")
    header = np.frombuffer(payload[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(header["magic"]) != FIELD_BINARY_MAGIC:
        raise FieldFormatError(f"bad field magic {bytes(header['magic'])!r}")
    lat = make_lattice(int(header["n"]), int(header["d"]))
    body = payload[HEADER_DTYPE.itemsize:]
    if len(body) != 8 * lat.cardinality:
        raise FieldFormatError(f"field payload has {len(body)} bytes, expected {8 * lat.cardinality}")
    values = np.frombuffer(body, dtype="<f8").astype(float)
    return Field(lattice=lat, values=values, spec=spec)


def write_field_binary(path: Union[str, Path], f: Field) -> Path:
    return write_bytes(path, field_to_bytes(f))


def read_field_binary(path: Union[str, Path]) -> Field:
    return field_from_bytes(read_bytes(path))


def write_field_csv(path: Union[str, Path], f: Field) -> Path:
    if f.lattice.cardinality > CSV_MAX_POINTS:
        raise ConfigError(f"CSV export is limited to {CSV_MAX_POINTS} points, field has {f.lattice.cardinality}")
    columns = [f"i_{k + 1}" for k in range(f.lattice.d)] + ["value"]
    rows = np.column_stack([f.lattice.indices(), f.values])
    fmt = ["%d"] * f.lattice.d + ["%.17g"]
    return write_csv(path, columns, rows, fmt=fmt)


def read_field_csv(path: Union[str, Path]) -> Field:
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise FieldFormatError(f"cannot parse field CSV {path}: {e}") from e
    d = rows.shape[1] - 1
    n = int(round(rows.shape[0] ** (1.0 / d)))
    lat = make_lattice(n, d)
    if lat.cardinality != rows.shape[0]:
        raise FieldFormatError(f"{rows.shape[0]} CSV rows do not form a cubic lattice in d={d}")
    idx = rows[:, :d].astype(np.int64) - 1
    values = np.zeros(lat.shape)
    values[tuple(idx.T)] = rows[:, d]
    return Field.from_array(lat, values)
