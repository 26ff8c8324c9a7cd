import logging
from pathlib import Path
from typing import List

import numpy as np

from ..models.run_config import RunConfig
from ..services.dependence import default_rho, estimate_eta, residuals
from ..services.field_sim import Field, simulate, stencil_diameter, theoretical_eta
from ..services.regression import estimate_grid
from ..utils.helpers import write_json
from .common import (
    add_field_options,
    add_kernel_options,
    add_lattice_options,
    add_option,
    build_kernel,
    build_lattice,
    build_signal,
    load_observations,
)

NAME = "eta"
logger = logging.getLogger("LatticeKReg.CLI.eta")


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        NAME, parents=parents, help="estimate the long-run variance eta",
        description="eta_hat = max(1, sum over |i-j| <= rho of e_i e_j) / n^d. With --eta-source fit the "
                    "e are residuals Y - g_n; otherwise the field itself is taken as the noise.",
    )
    add_lattice_options(parser)
    add_field_options(parser)
    add_kernel_options(parser)
    add_option(parser, "input", "field file: .bin, .csv or .pgm")
    add_option(parser, "rho", "lag window radius in lattice units; default floor(n^(1/4))", type=int)
    add_option(parser, "eta-source", "fit = residuals of the kernel fit, anything else = field as noise",
               choices=["replicate-mean", "fit", "true-noise"])
    add_option(parser, "signal", "regression function g added to simulated noise under --eta-source fit",
               choices=["zero", "sin", "sinusoid", "phantom"])


def handle(config: RunConfig, out: Path) -> List[Path]:
    lat = build_lattice(config)
    spec = config.field_spec()
    observed = load_observations(config, lat)
    noise = simulate(spec, lat) if observed is None else observed
    if config.eta_source == "fit":
        k = build_kernel(config)
        h = config.bandwidth_rule().bandwidth(lat.n)
        y = noise.values if observed is not None else (
            np.asarray(build_signal(config)(lat.design_points()), dtype=float) + noise.values)
        eps = residuals(y, estimate_grid(y, lat, k, h))
    else:
        eps = Field(lattice=lat, values=noise.values)
    rho = config.rho or default_rho(lat.n, lat.d)
    result = estimate_eta(eps, rho, workers=config.threads)
    payload = {"estimate": result.model_dump(), "source": config.eta_source}
    if observed is None:
        payload["theoretical_eta"] = theoretical_eta(spec, max(lat.n - 1, stencil_diameter(spec), 1), lat.d)
    logger.info(f"eta_hat={result.value:.6g} with rho={rho} over {result.pair_count} ordered pairs")
    return [write_json(out / "eta.json", payload)]
