import logging
from pathlib import Path
from typing import List

import numpy as np

from ..core.exceptions import ConfigError
from ..models.run_config import RunConfig
from ..services.dependence import (
    bounded_quantile,
    check_mixing_rate_condition,
    check_quantile_condition,
    exponential_alpha,
    gaussian_quantile,
    load_alpha_table,
    load_quantile_table,
    m_dependent_alpha,
    power_alpha,
    uniform_quantile,
)
from ..utils.helpers import write_csv, write_json
from .common import add_option

NAME = "check-condition"
logger = logging.getLogger("LatticeKReg.CLI.check-condition")

ALPHA_BUILDERS = {"exp": lambda v: exponential_alpha(float(v)), "power": lambda v: power_alpha(float(v)),
                  "mdep": lambda v: m_dependent_alpha(int(v))}
QUANTILE_BUILDERS = {"gaussian": lambda v: gaussian_quantile(float(v)), "bounded": lambda v: bounded_quantile(float(v)),
                     "uniform": lambda v: uniform_quantile(float(v))}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        NAME, parents=parents, help="numerically check a mixing criterion on a given alpha sequence",
        description="quantile: sum over k of the integral of Q^2 on (0, alpha(|k|)); mixing-rate: sum over "
                    "m >= 1 of m^(d-1) alpha(m)^(delta/(2+delta)). Writes condition.json and condition.csv.",
    )
    add_option(parser, "d", "lattice dimension", type=int)
    add_option(parser, "criterion", "which criterion to check", choices=["quantile", "mixing-rate"])
    add_option(parser, "alpha", "mixing coefficients: exp:<rate>, power:<q>, mdep:<m> or a two-column `r alpha` table")
    add_option(parser, "quantile", "quantile of |e_0|: gaussian:<sd>, bounded:<M>, uniform:<M> or a `u Q(u)` table")
    add_option(parser, "delta", "moment excess delta > 0 of the mixing-rate criterion", type=float)
    add_option(parser, "max-radius", "truncation radius R in lattice units", type=int)


def _parse(text: str, builders, loader):
    kind, _, arg = text.partition(":")
    if kind in builders and arg:
        try:
            return builders[kind](arg)
        except ValueError:
            raise ConfigError(f"bad parameter in '{text}'") from None
    if Path(text).is_file():
        return loader(text)
    raise ConfigError(f"'{text}' is neither one of {', '.join(f'{k}:<v>' for k in builders)} nor a table file")


def handle(config: RunConfig, out: Path) -> List[Path]:
    alpha = _parse(config.alpha, ALPHA_BUILDERS, load_alpha_table)
    if config.criterion == "quantile":
        q = _parse(config.quantile, QUANTILE_BUILDERS, load_quantile_table)
        report = check_quantile_condition(alpha, q, config.d, config.max_radius)
    else:
        report = check_mixing_rate_condition(alpha, config.delta, config.d, config.max_radius)
    rows = np.column_stack([report.radii, report.shell_terms, report.partial_sums])
    logger.info(f"{report.criterion} criterion verdict: {report.verdict}")
    return [
        write_json(out / "condition.json", report),
        write_csv(out / "condition.csv", ["radius", "term", "partial_sum"], rows, fmt=["%d", "%.17g", "%.17g"]),
    ]
