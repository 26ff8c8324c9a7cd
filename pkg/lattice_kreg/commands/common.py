"""
Shared pieces of the subcommands: option registration with documented
defaults, and builders from a RunConfig to service objects.
"""
import argparse
import math
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..core.exceptions import ConfigError
from ..models.run_config import RunConfig
from ..services.field_io import read_field_binary, read_field_csv
from ..services.field_sim import Field
from ..services.imaging import phantom, read_pgm_file, sinusoid
from ..services.kernel import Kernel, load_kernel_table, make_kernel
from ..services.lattice import Lattice, make_lattice
from ..utils.helpers import parse_points

Signal = Callable[[np.ndarray], np.ndarray]


def default_of(name: str):
    field = RunConfig.model_fields[name]
    if field.default_factory is not None:
        value = field.default_factory()
        return ",".join(str(v) for v in value) if isinstance(value, list) else value
    return field.default


def add_option(parser: argparse.ArgumentParser, name: str, help_text: str, type=str, flags=None, choices=None,
               dest: Optional[str] = None) -> None:
    """--name with default None (so that a config file may fill it); help shows the real default."""
    dest = dest or name.replace("-", "_")
    default = default_of(dest)
    shown = "none" if default is None or default == "" else default
    parser.add_argument(*(flags or [f"--{name}"]), dest=dest, type=type, default=None, choices=choices,
                        help=f"{help_text} (default: {shown})")


def add_switch(parser: argparse.ArgumentParser, name: str, help_text: str) -> None:
    parser.add_argument(f"--{name}", dest=name.replace("-", "_"), action="store_const", const=True, default=None,
                        help=f"{help_text} (default: off)")


def add_lattice_options(parser: argparse.ArgumentParser) -> None:
    add_option(parser, "n", "points per axis of the lattice {1..n}^d", type=int)
    add_option(parser, "d", "lattice dimension", type=int)


def add_kernel_options(parser: argparse.ArgumentParser) -> None:
    add_option(parser, "kernel", "kernel family",
               choices=["box", "epanechnikov-paper", "epanechnikov-normalized", "triangle"])
    add_option(parser, "kernel-norm", "norm of radial kernels", choices=["euclidean", "max"])
    add_option(parser, "kernel-table", "custom kernel table file (`d norm` header, then `u_1 .. u_d value` rows)")
    add_option(parser, "bandwidth", "fixed bandwidth h in [0,1]-units; replaces the power law", type=float)
    add_option(parser, "bandwidth-c", "power-law bandwidth constant c in h_n = c n^-gamma", type=float)
    add_option(parser, "bandwidth-gamma", "power-law bandwidth exponent gamma (dimensionless)", type=float)


def add_field_options(parser: argparse.ArgumentParser) -> None:
    add_option(parser, "field", "noise field kind: iid-gaussian|exp-gaussian-spectral|ma-field|md-field "
                                "(short: iid|exp|ma|md)")
    add_option(parser, "sd", "iid-gaussian standard deviation (gray levels)", type=float)
    add_option(parser, "cst", "exponential covariance C(0) (gray levels squared)", type=float)
    add_option(parser, "range", "exponential covariance range a (lattice units)", type=float, dest="range_a")
    add_option(parser, "components", "number of spectral cosine components", type=int)
    add_option(parser, "theta", "ma-field weights along the first axis, comma separated")
    add_option(parser, "beta", "md-field dependence strength", type=float)


def build_kernel(config: RunConfig) -> Kernel:
    if config.kernel_table:
        k = load_kernel_table(config.kernel_table)
        if k.d != config.d:
            raise ConfigError(f"kernel table has d = {k.d}, run uses d = {config.d}")
        return k
    return make_kernel(config.kernel, config.d, norm=config.kernel_norm)


def build_lattice(config: RunConfig) -> Lattice:
    return make_lattice(config.n, config.d)


def build_signal(config: RunConfig) -> Signal:
    if config.signal == "zero":
        return lambda pts: np.zeros(np.asarray(pts).shape[0])
    if config.signal == "sin":
        return lambda pts: np.sin(2.0 * math.pi * np.asarray(pts, dtype=float)[:, 0])
    if config.d != 2:
        raise ConfigError(f"signal '{config.signal}' is an image, needs d = 2")
    return sinusoid if config.signal == "sinusoid" else phantom


def build_queries(config: RunConfig) -> Optional[np.ndarray]:
    if config.queries is None:
        return None
    try:
        return parse_points(config.queries, config.d)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_observations(config: RunConfig, lat: Lattice) -> Optional[Field]:
    """--input: binary field (.lkrf/.bin), CSV field or 2-D PGM image."""
    if not config.input:
        return None
    path = Path(config.input)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        f = read_field_csv(path)
    elif suffix == ".pgm":
        img = read_pgm_file(path)
        f = Field.from_array(img.lattice(), img.values)
    else:
        f = read_field_binary(path)
    if f.lattice != lat:
        raise ConfigError(f"input {path} lives on n={f.lattice.n}, d={f.lattice.d}; run uses n={lat.n}, d={lat.d}")
    return f
