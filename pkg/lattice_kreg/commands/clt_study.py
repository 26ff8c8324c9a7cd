import logging
from pathlib import Path
from typing import List

import numpy as np

from ..models.run_config import RunConfig
from ..services.inference import mc_normality_study
from ..utils.helpers import write_json
from .common import (
    add_field_options,
    add_kernel_options,
    add_lattice_options,
    add_option,
    build_kernel,
    build_queries,
    build_signal,
)

NAME = "clt-study"
logger = logging.getLogger("LatticeKReg.CLI.clt-study")


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        NAME, parents=parents, help="Monte Carlo check of the asymptotic normality of g_n",
        description="Draws --replicates fields, normalizes g_n - E g_n at each query and reports variance, "
                    "KS distance and cross-query correlation in clt_study.json.",
    )
    add_lattice_options(parser)
    add_kernel_options(parser)
    add_field_options(parser)
    add_option(parser, "queries", "distinct interior query points; default 0.3 and 0.7 on the diagonal")
    add_option(parser, "replicates", "number of Monte Carlo replicates R", type=int, flags=["--replicates", "--reps"])
    add_option(parser, "eta-mode", "normalize with the analytic eta or a per-replicate eta_hat",
               choices=["theoretical", "estimated"])
    add_option(parser, "rho", "lag window radius for --eta-mode estimated; default floor(n^(1/4))", type=int)
    add_option(parser, "signal", "regression function g", choices=["zero", "sin", "sinusoid", "phantom"])


def handle(config: RunConfig, out: Path) -> List[Path]:
    queries = build_queries(config)
    if queries is None:
        queries = np.array([[0.3] * config.d, [0.7] * config.d])
    study = mc_normality_study(
        config.field_spec(), build_signal(config), build_kernel(config), config.bandwidth_rule(), config.n,
        queries, config.replicates, d=config.d, eta_mode=config.eta_mode, rho=config.rho, workers=config.threads,
    )
    for q in study.queries:
        logger.info(f"query {q.query}: Var(z)={q.variance:.4f}, KS={q.ks_distance:.4f} "
                    f"(critical {q.ks_critical:.4f}, {'pass' if q.ks_passed else 'FAIL'})")
    return [write_json(out / "clt_study.json", study)]
