import logging
from pathlib import Path
from typing import List

from ..core.exceptions import ConfigError, LagOutOfRangeError
from ..models.run_config import RunConfig
from ..services.imaging import denoise_experiment, read_pgm_file, synth_phantom, synth_sinusoid, write_panels
from .common import add_field_options, add_kernel_options, add_option, add_switch, build_kernel

NAME = "denoise"
logger = logging.getLogger("LatticeKReg.CLI.denoise")


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        NAME, parents=parents, help="image restoration experiment with a p-value map",
        description="Adds simulated noise to an image, restores every replicate with the kernel estimate and "
                    "writes original/noisy/restored/pvalues.pgm, summary.csv and pvalue_map.csv.",
    )
    add_option(parser, "n", "image side in pixels for --demo images", type=int)
    add_option(parser, "demo", "synthetic image", choices=["sinusoid", "phantom"])
    add_option(parser, "image", "square 8-bit binary PGM to use instead of --demo")
    add_kernel_options(parser)
    add_field_options(parser)
    add_option(parser, "replicates", "number of replicate images R in the mean reference", type=int,
               flags=["--replicates", "--reps"])
    add_option(parser, "rho", "lag window radius of eta_hat in pixels; default floor(n^(1/4))", type=int)
    add_option(parser, "threshold", "p-value threshold of the summary fraction", type=float)
    add_option(parser, "eta-source", "residuals used for eta_hat", choices=["replicate-mean", "fit", "true-noise"])
    add_switch(parser, "paper-faithful", "include the target in an uncorrected arithmetic mean of R images")
    add_switch(parser, "clamp-observations", "clip noisy pixels to [0,255] before estimation")


def handle(config: RunConfig, out: Path) -> List[Path]:
    if config.image:
        original = read_pgm_file(config.image)
        if not original.is_square:
            raise ConfigError(f"image {config.image} is {original.width}x{original.height}, needs a square image")
    else:
        original = synth_sinusoid(config.n) if config.demo == "sinusoid" else synth_phantom(config.n)
    if original.width != config.n:
        logger.info(f"Image side {original.width} overrides n={config.n}")
    n = original.width
    if config.rho is not None and config.rho >= n:
        raise LagOutOfRangeError(f"rho={config.rho} must be smaller than the image side n={n}")
    h = config.bandwidth_rule().bandwidth(n)
    result = denoise_experiment(
        original, config.field_spec(), config.replicates, build_kernel(config), h,
        rho=config.rho, seed=config.seed, paper_faithful=config.paper_faithful,
        clamp_observations=config.clamp_observations, eta_source=config.eta_source,
        threshold=config.threshold, workers=config.threads,
    )
    s = result.pvalues.summary
    logger.info(f"{s.count_above}/{s.evaluated} interior pixels with p > {s.threshold:g} "
                f"(fraction {s.fraction_above:.4f}), eta_hat={s.eta_hat:.6g}")
    return write_panels(result, out)
