"""
Gray-level images and the denoising experiment.

Working images are real-valued; quantization to [0,255] happens only on export.
"""
import logging
import math
from io import BytesIO
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict

from ..core.exceptions import DimensionMismatchError, MalformedImageError, NumericDomainError, UnsupportedImageFormatError
from ..models.config_models import FieldSpec
from ..utils.helpers import ensure_dir, parallel_map, read_bytes, write_bytes
from .field_sim import Field, simulate_replicates
from .inference import PValueMap, PValueSettings, pvalue_map_from_fits
from .lattice import Lattice, make_lattice
from .regression import Estimate, estimate_grid

logger = logging.getLogger("LatticeKReg.Imaging")

PGM_MAXVAL = 255
PANEL_FILES = ("original.pgm", "noisy.pgm", "restored.pgm", "pvalues.pgm")


class GrayImage(BaseModel):
    """values[row, col]; row = first lattice axis."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    width: int
    height: int
    values: np.ndarray

    @classmethod
    def from_array(cls, values) -> "GrayImage":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"gray images are 2-D, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], values=arr)

    @classmethod
    def from_lattice_values(cls, lat: Lattice, values) -> "GrayImage":
        if lat.d != 2:
            raise DimensionMismatchError(f"images bind to d = 2 lattices, got d = {lat.d}")
        return cls.from_array(np.asarray(values, dtype=float).reshape(lat.shape))

    @property
    def is_square(self) -> bool:
        return self.width == self.height

    def lattice(self) -> Lattice:
        if not self.is_square:
            raise DimensionMismatchError(f"a {self.width}x{self.height} image does not bind to a square lattice")
        return make_lattice(self.width, 2)

    def as_observations(self) -> np.ndarray:
        return self.values.reshape(-1).copy()

    def to_uint8(self) -> np.ndarray:
        """Clamp to [0,255] and round half-up."""
        return np.floor(np.clip(self.values, 0.0, float(PGM_MAXVAL)) + 0.5).astype(np.uint8)


def _next_token(payload: bytes, pos: int) -> Tuple[bytes, int]:
    while pos < len(payload):
        c = payload[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            end = payload.find(b"\n", pos)
            pos = len(payload) if end < 0 else end + 1
        else:
            break
    start = pos
    while pos < len(payload) and not payload[pos:pos + 1].isspace() and payload[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedImageError("truncated PGM header")
    return payload[start:pos], pos


def _parse_header(payload: bytes) -> Tuple[int, int, int]:
    """Returns (width, height, payload offset); only binary 8-bit P5 is accepted."""
    magic, pos = _next_token(payload, 0)
    if magic != b"P5":
        if magic in (b"P1", b"P2", b"P3", b"P4", b"P6", b"P7"):
            raise UnsupportedImageFormatError(f"unsupported PNM variant {magic.decode('ascii')}, only binary P5 is read")
        raise MalformedImageError("not a PGM file (missing P5 magic)")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(payload, pos)
        try:
            value = int(token)
        except ValueError:
            raise MalformedImageError(f"PGM {name} is not an integer: {token[:16]!r}") from None
        if value <= 0:
            raise MalformedImageError(f"PGM {name} must be positive, got {value}")
        fields.append(value)
    width, height, maxval = fields
    if maxval != PGM_MAXVAL:
        raise UnsupportedImageFormatError(f"PGM maxval {maxval} is not supported, expected {PGM_MAXVAL}")
    if pos >= len(payload) or not payload[pos:pos + 1].isspace():
        raise MalformedImageError("PGM header must end with a single whitespace byte")
    return width, height, pos + 1


def read_pgm(payload: bytes) -> GrayImage:
    width, height, offset = _parse_header(payload)
    if len(payload) - offset < width * height:
        raise MalformedImageError(f"truncated PGM payload: {len(payload) - offset} of {width * height} bytes")
    try:
        with Image.open(BytesIO(payload)) as img:
            arr = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise MalformedImageError(f"cannot decode PGM: {e}") from e
    if arr.shape != (height, width):
        raise MalformedImageError(f"decoded shape {arr.shape} does not match header {height}x{width}")
    return GrayImage.from_array(arr.astype(float))


def write_pgm(img: GrayImage) -> bytes:
    """Binary P5 with the header `P5\\n<w> <h>\\n255\\n`."""
    buffer = BytesIO()
    Image.fromarray(img.to_uint8()).save(buffer, format="PPM")
    return buffer.getvalue()


def read_pgm_file(path: Union[str, Path]) -> GrayImage:
    return read_pgm(read_bytes(path))


def write_pgm_file(path: Union[str, Path], img: GrayImage) -> Path:
    return write_bytes(path, write_pgm(img))


# ------------------------------------------------------------ synthetic images

def sinusoid(points: np.ndarray) -> np.ndarray:
    """g(x) = 127.5 (1 + sin(2πx_1) sin(2πx_2)); C¹ on [0,1]²."""
    pts = np.asarray(points, dtype=float)
    return 127.5 * (1.0 + np.sin(2.0 * math.pi * pts[:, 0]) * np.sin(2.0 * math.pi * pts[:, 1]))


def synth_sinusoid(n: int) -> GrayImage:
    if n < 2:
        raise NumericDomainError(f"synthetic images need n >= 2, got {n}")
    lat = make_lattice(n, 2)
    return GrayImage.from_lattice_values(lat, sinusoid(lat.design_points()))


def phantom(points: np.ndarray) -> np.ndarray:
    """Piecewise-constant disk and bar on a dark background; discontinuous on the shape edges."""
    pts = np.asarray(points, dtype=float)
    x1, x2 = pts[:, 0], pts[:, 1]
    out = np.full(pts.shape[0], 40.0)
    out[(x1 - 0.55) ** 2 + (x2 - 0.5) ** 2 <= 0.3 ** 2] = 200.0
    out[(x1 >= 0.15) & (x1 <= 0.35) & (x2 >= 0.2) & (x2 <= 0.8)] = 110.0
    out[(x1 - 0.6) ** 2 + (x2 - 0.62) ** 2 <= 0.08 ** 2] = 250.0
    return out


def synth_phantom(n: int) -> GrayImage:
    if n < 2:
        raise NumericDomainError(f"synthetic images need n >= 2, got {n}")
    lat = make_lattice(n, 2)
    return GrayImage.from_lattice_values(lat, phantom(lat.design_points()))


def add_noise(img: GrayImage, f: Field) -> GrayImage:
    """Y = g + ε on the working domain, never clamped."""
    if not img.is_square or f.lattice.d != 2 or f.lattice.n != img.width:
        raise DimensionMismatchError(
            f"noise on n={f.lattice.n}, d={f.lattice.d} does not match a {img.width}x{img.height} image"
        )
    return GrayImage.from_array(img.values + f.as_array())


# ------------------------------------------------------------------ experiment

class DenoiseResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    original: GrayImage
    noisy: GrayImage
    restored: GrayImage
    restorations: List[Estimate]
    pvalues: PValueMap
    seed: int
    paper_faithful: bool
    clamp_observations: bool


def denoise_experiment(original: GrayImage, noise: FieldSpec, R: int, kernel, h: float,
                       rho: Optional[int] = None, seed: Optional[int] = None, paper_faithful: bool = False,
                       clamp_observations: bool = False, eta_source: str = "replicate-mean",
                       threshold: Optional[float] = None, workers: int = 1) -> DenoiseResult:
    """
    Simulate one target and the replicate images, restore each with estimate_grid
    and build the p-value map of the target against the replicate mean.

    Leave-one-out draws R + 1 noise fields (target plus R references); the
    paper-faithful variant draws R and includes the target in the mean.
    """
    if R < 2:
        raise NumericDomainError(f"denoise needs R >= 2 replicates, got {R}")
    if kernel.d != 2:
        raise DimensionMismatchError(f"image restoration needs a d = 2 kernel, got d = {kernel.d}")
    lat = original.lattice()
    spec = noise.with_seed(seed) if seed is not None else noise
    options = {"rho": rho, "eta_source": eta_source, "workers": workers}
    if threshold is not None:
        options["threshold"] = threshold
    settings = (PValueSettings.paper_faithful(kernel, h, **options) if paper_faithful
                else PValueSettings(kernel=kernel, h=h, **options))
    total = R if paper_faithful else R + 1
    logger.info(f"Denoise experiment: n={lat.n}, {spec.kind} noise, R={R}, h={h:.4g}, "
                f"{'include-self' if paper_faithful else 'leave-one-out'} mean reference")

    fields = simulate_replicates(spec, lat, total, workers)
    base = original.as_observations()
    observations = [base + f.values for f in fields]
    if clamp_observations:
        observations = [np.clip(obs, 0.0, float(PGM_MAXVAL)) for obs in observations]
    fits = parallel_map(lambda obs: estimate_grid(obs, lat, kernel, h), observations, workers)

    pmap = pvalue_map_from_fits(observations[0], observations[1:], fits[0], fits[1:], lat, settings,
                                true_noise=fields[0])
    restored = np.mean(np.stack([e.values for e in fits]), axis=0)
    return DenoiseResult(
        original=original,
        noisy=GrayImage.from_lattice_values(lat, observations[0]),
        restored=GrayImage.from_lattice_values(lat, restored),
        restorations=fits,
        pvalues=pmap,
        seed=spec.seed,
        paper_faithful=paper_faithful,
        clamp_observations=clamp_observations,
    )


def _summary_csv(result: DenoiseResult) -> bytes:
    s = result.pvalues.summary
    boundary_fraction = "" if s.boundary_fraction_above is None else f"{s.boundary_fraction_above:.17g}"
    row = {
        "threshold": f"{s.threshold:.17g}",
        "fraction_above": f"{s.fraction_above:.17g}",
        "count_above": str(s.count_above),
        "evaluated": str(s.evaluated),
        "boundary_fraction_above": boundary_fraction,
        "eta_hat": f"{s.eta_hat:.17g}",
        "eta_source": s.eta_source,
        "rho": str(s.rho),
        "h": f"{s.h:.17g}",
        "sigma2": f"{s.sigma2:.17g}",
        "policy": s.policy,
        "replicates": str(s.replicates),
        "variance_inflation": f"{s.variance_inflation:.17g}",
        "clamp_observations": str(int(result.clamp_observations)),
        "seed": str(result.seed),
    }
    return (",".join(row) + "\n" + ",".join(row.values()) + "\n").encode("ascii")


def write_panels(result: DenoiseResult, out_dir: Union[str, Path]) -> List[Path]:
    """original / one noisy realization / restored mean / p-value image, plus CSV sidecars."""
    out = ensure_dir(out_dir)
    images = (result.original, result.noisy, result.restored, result.pvalues.to_gray_image())
    written = [write_pgm_file(out / name, img) for name, img in zip(PANEL_FILES, images)]
    written.append(write_bytes(out / "summary.csv", _summary_csv(result)))
    written.append(result.pvalues.to_csv(out / "pvalue_map.csv"))
    logger.info(f"Wrote {len(written)} artifacts to {out}")
    return written
