import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar, Union

import numpy as np
import orjson

from ..core.exceptions import ArtifactIOError

logger = logging.getLogger("LatticeKReg.Utils")

T = TypeVar("T")
R = TypeVar("R")


def orjson_dumps_bytes_wrapper(data: Any) -> bytes:
    return orjson.dumps(
        data,
        option=orjson.OPT_NON_STR_KEYS | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_SORT_KEYS
        | orjson.OPT_INDENT_2 | orjson.OPT_APPEND_NEWLINE,
    )


def _to_jsonable(data: Any) -> Any:
    if hasattr(data, "model_dump"):
        return data.model_dump(mode="json")
    return data


def write_json(path: Union[str, Path], data: Any) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson_dumps_bytes_wrapper(_to_jsonable(data)))
    except OSError as e:
        raise ArtifactIOError(f"cannot write {path}: {e}") from e
    return path


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: np.ndarray, fmt: Union[str, Sequence[str]] = "%.17g") -> Path:
    """CSV with a header row; deterministic formatting."""
    path = Path(path)
    rows = np.asarray(rows)
    if rows.ndim == 1:
        rows = rows[:, None]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, rows, delimiter=",", header=",".join(columns), comments="", fmt=fmt)
    except OSError as e:
        raise ArtifactIOError(f"cannot write {path}: {e}") from e
    return path


def write_bytes(path: Union[str, Path], payload: bytes) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise ArtifactIOError(f"cannot write {path}: {e}") from e
    return path


def read_bytes(path: Union[str, Path]) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"cannot read {path}: {e}") from e


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = 1) -> List[R]:
    """
    按输入顺序返回结果；workers <= 1 时串行执行。
    随机性全部由各任务自带的种子决定，因此结果与线程数无关。
    """
    items = list(items)
    if not workers or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(fn, items))


def parse_float_list(text: str) -> List[float]:
    return [float(tok) for tok in text.replace(" ", "").split(",") if tok]


def parse_int_list(text: str) -> List[int]:
    return [int(tok) for tok in text.replace(" ", "").split(",") if tok]


def parse_points(text: str, d: int) -> np.ndarray:
    """
    查询点格式：点之间用 ';' 分隔，坐标之间用 ','；
    d = 1 时也接受 "0.3,0.7" 这种逗号分隔的点列表。
    """
    chunks = [c for c in text.replace(" ", "").split(";") if c]
    if d == 1 and len(chunks) == 1:
        return np.asarray(parse_float_list(chunks[0]), dtype=float)[:, None]
    points = [parse_float_list(c) for c in chunks]
    if any(len(p) != d for p in points):
        raise ValueError(f"every query point needs {d} coordinates: '{text}'")
    return np.asarray(points, dtype=float).reshape(-1, d)


def ensure_dir(path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(f"cannot create output directory {path}: {e}") from e
    return path
