import logging
from pathlib import Path
from typing import List

import numpy as np

from ..models.run_config import RunConfig
from ..services.regression import bias_study, bias_study_bandwidths
from ..utils.helpers import write_csv, write_json
from .common import add_kernel_options, add_option, build_kernel, build_signal

NAME = "bias-study"
logger = logging.getLogger("LatticeKReg.CLI.bias-study")


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        NAME, parents=parents, help="sup-norm bias of E g_n over interior points",
        description="Either over --n-list with the bandwidth rule, or over --h-list at fixed --n. "
                    "Writes bias_study.json (with the log-log slope) and bias_study.csv.",
    )
    add_option(parser, "n", "points per axis for --h-list studies", type=int)
    add_option(parser, "d", "dimension", type=int)
    add_kernel_options(parser)
    add_option(parser, "n-list", "comma separated lattice sizes")
    add_option(parser, "h-list", "comma separated bandwidths at fixed --n; replaces --n-list")
    add_option(parser, "bias-bound", "C1 bound B on |g| and its partial derivatives, checked numerically", type=float)
    add_option(parser, "signal", "regression function g", choices=["zero", "sin", "sinusoid", "phantom"])


def handle(config: RunConfig, out: Path) -> List[Path]:
    g = build_signal(config)
    k = build_kernel(config)
    if config.h_list:
        study = bias_study_bandwidths(g, k, config.n, config.h_list, d=config.d, bound=config.bias_bound,
                                      workers=config.threads)
    else:
        study = bias_study(g, k, config.bandwidth_rule(), config.n_list, d=config.d, bound=config.bias_bound,
                           workers=config.threads)
    rows = np.array([[r.n, r.h, r.sup_error] for r in study.rows])
    logger.info(f"bias study over {len(study.rows)} configuration(s): slope {study.slope}")
    return [
        write_json(out / "bias_study.json", study),
        write_csv(out / "bias_study.csv", ["n", "h", "sup_error"], rows, fmt=["%d", "%.17g", "%.17g"]),
    ]
