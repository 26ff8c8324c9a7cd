import logging
from pathlib import Path
from typing import List

import numpy as np

from ..models.run_config import RunConfig
from ..services.field_sim import simulate
from ..services.imaging import GrayImage, write_pgm_file
from ..services.kernel import check_assumption_a1
from ..services.regression import estimate, estimate_grid
from ..utils.helpers import write_json
from .common import (
    add_field_options,
    add_kernel_options,
    add_lattice_options,
    add_option,
    build_kernel,
    build_lattice,
    build_queries,
    build_signal,
    load_observations,
)

NAME = "estimate"
logger = logging.getLogger("LatticeKReg.CLI.estimate")

A1_GRID_RESOLUTION = {1: 256, 2: 64, 3: 24}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        NAME, parents=parents, help="kernel regression estimate g_n from observations",
        description="Fits the kernel estimate g_n on --input (or on a simulated Y = g + noise) at --queries, or on every "
                    "design point; writes estimate.csv, kernel_a1.json and estimate.pgm for d = 2 grids.",
    )
    add_lattice_options(parser)
    add_kernel_options(parser)
    add_field_options(parser)
    add_option(parser, "input", "observation file: .bin field, .csv field or .pgm image")
    add_option(parser, "signal", "regression function g for simulated observations",
               choices=["zero", "sin", "sinusoid", "phantom"])
    add_option(parser, "queries", "query points, ';' between points and ',' between coordinates; "
                                  "default is every design point")


def handle(config: RunConfig, out: Path) -> List[Path]:
    lat = build_lattice(config)
    k = build_kernel(config)
    rule = config.bandwidth_rule()
    h = rule.bandwidth(lat.n)
    report = check_assumption_a1(k, A1_GRID_RESOLUTION.get(lat.d, 12))
    written = [write_json(out / "kernel_a1.json", report)]

    observed = load_observations(config, lat)
    if observed is None:
        g = build_signal(config)
        y = np.asarray(g(lat.design_points()), dtype=float) + simulate(config.field_spec(), lat).values
    else:
        y = observed.values
    queries = build_queries(config)
    if queries is None:
        est = estimate_grid(y, lat, k, h)
        if lat.d == 2:
            written.append(write_pgm_file(out / "estimate.pgm", GrayImage.from_lattice_values(lat, est.values)))
    else:
        est = estimate(y, lat, k, h, queries, workers=config.threads)
    written.append(est.to_csv(out / "estimate.csv"))
    logger.info(f"Estimated g_n at {est.size} point(s) with {rule.describe()} (h={h:.6g}), "
                f"{int(np.sum(est.boundary))} within h of the boundary")
    return written
