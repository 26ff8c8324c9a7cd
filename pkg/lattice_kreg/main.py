import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import PIL
import pydantic
import scipy

from .commands import bias_study, check_condition, clt_study, denoise, estimate, eta, simulate_field
from .core.config import APP_VERSION, LOG_LEVEL_FROM_ENV
from .core.exceptions import LatticeKRegError
from .core.logging_utils import memory_log_handler, setup_logging
from .models.run_config import RunConfig, build_run_config, read_config_file
from .utils.helpers import ensure_dir, write_json

logger = logging.getLogger("LatticeKReg.Main")

# 子命令注册表，相当于服务端的路由注册
SUBCOMMANDS = {
    simulate_field.NAME: simulate_field,
    estimate.NAME: estimate,
    eta.NAME: eta,
    check_condition.NAME: check_condition,
    clt_study.NAME: clt_study,
    bias_study.NAME: bias_study,
    denoise.NAME: denoise,
}

MANIFEST_NAME = "manifest"


class CliArgumentParser(argparse.ArgumentParser):
    """Usage errors become one `error: usage: ...` line and exit code 2."""

    def error(self, message):
        self.exit(2, f"error: usage: {self.prog}: {message}\n")


def _global_options() -> argparse.ArgumentParser:
    parent = CliArgumentParser(add_help=False)
    group = parent.add_argument_group("run options")
    group.add_argument("--config", default=None, help="flat `key = value` config file; flags take precedence (default: none)")
    group.add_argument("--out", default=None, help="output directory (default: %s)" % RunConfig.model_fields["out"].default)
    group.add_argument("--seed", type=int, default=None, help="root seed, 0 <= seed < 2^64 (default: 0)")
    group.add_argument("--threads", type=int, default=None,
                       help="worker threads; results do not depend on it (default: %d)" % RunConfig.model_fields["threads"].default)
    group.add_argument("--log-level", dest="log_level", default=None,
                       help=f"DEBUG, INFO, WARNING or ERROR (default: {LOG_LEVEL_FROM_ENV})")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog="lattice_kreg",
        description=f"Kernel regression on lattices with dependent noise, v{APP_VERSION}",
    )
    parser.add_argument("--version", action="version", version=f"lattice_kreg {APP_VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=CliArgumentParser)
    subparsers.required = True
    parents = [_global_options()]
    for module in SUBCOMMANDS.values():
        module.register(subparsers, parents)
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < flags."""
    values: Dict[str, object] = {}
    if args.config:
        values.update(read_config_file(args.config))
    flags = {k: v for k, v in vars(args).items() if v is not None}
    values.update(flags)
    return build_run_config(values)


def package_versions() -> Dict[str, str]:
    return {
        "lattice_kreg": APP_VERSION,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "Pillow": PIL.__version__,
    }


def write_manifest(out: Path, config: RunConfig, artifacts: Sequence[Path]) -> Path:
    manifest = {
        "command": config.command,
        "config": config.to_text(),
        "seed": config.seed,
        "versions": package_versions(),
        "artifacts": sorted(Path(p).name for p in artifacts),
        "warnings": memory_log_handler.get_logs(limit=1000),
    }
    return write_json(out / MANIFEST_NAME, manifest)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level or LOG_LEVEL_FROM_ENV)
    memory_log_handler.clear()
    try:
        config = load_run_config(args)
        out = ensure_dir(config.out)
        logger.info(f"Running {config.command} into {out}")
        artifacts = SUBCOMMANDS[config.command].handle(config, out)
        write_manifest(out, config, artifacts)
    except LatticeKRegError as e:
        print(e.error_line(), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 1
    logger.info(f"{config.command} finished: {len(artifacts)} artifact(s) plus {MANIFEST_NAME}")
    return 0


def main() -> None:
    sys.exit(run())
