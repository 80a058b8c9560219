import argparse
import csv
import logging
import sys
from typing import Any, Dict, List, Optional

import dotenv

from app.services.kernel import KernelService, covariance_spec
from core import database
from core.config import settings
from core.errors import ConfigError, NodalLabError
from experiments.pipeline import ExperimentPipeline
from models.experiment import ExperimentConfig, config_violations

logger = logging.getLogger("cli")

EXPERIMENTS = [
    "covariance-check",
    "kacrice-1d",
    "measure-omega-2d",
    "measure-ends-2d",
    "genus-3d",
    "ns-constant",
    "barrier-demo",
]

# flag -> (config key, type)
_FLAGS = {
    "--geometry": ("geometry", str),
    "--alpha": ("alpha", float),
    "--T": ("T", float),
    "--ell": ("ell", int),
    "--eta": ("eta", float),
    "--J": ("J", int),
    "--samples": ("samples", int),
    "--resolution": ("resolution", float),
    "--window": ("window", float),
    "--seed": ("seed", int),
    "--workers": ("workers", int),
    "--out": ("out", str),
    "--mode": ("mode", str),
    "--m-min": ("m_min", int),
    "--cutoff": ("cutoff", int),
    "--lags": ("lags", str),
    "--tree": ("tree", str),
    "--epsilon": ("epsilon", float),
}
_SWITCHES = {
    "--allow-under-resolved": "allow_under_resolved",
    "--spool": "spool",
    "--include-sub-resolution": "include_sub_resolution",
}


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key=value file; flags override its values")
    parser.add_argument("--db", help="database URL (defaults to NODAL_DATABASE_URL)")
    parser.add_argument("--no-db", action="store_true", help="write files only, skip the run database")
    for flag, (key, kind) in _FLAGS.items():
        parser.add_argument(flag, dest=key, type=kind, default=None)
    for flag, key in _SWITCHES.items():
        parser.add_argument(flag, dest=key, action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nodal-lab", description="Monte-Carlo experiments on nodal sets of random band-limited functions")
    parser.add_argument("--log-level", default=settings.log_level)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        _add_config_flags(sub.add_parser(name, help=f"run the {name} experiment"))

    validate = sub.add_parser("validate", help="report config violations without running")
    validate.add_argument("experiment", choices=EXPERIMENTS)
    _add_config_flags(validate)

    replay = sub.add_parser("replay", help="rerun the configuration stored in a run manifest")
    replay.add_argument("--manifest", required=True)
    replay.add_argument("--out")
    replay.add_argument("--db")
    replay.add_argument("--no-db", action="store_true")

    table = sub.add_parser("covariance-table", help="print r,B(r) for the limit covariance as CSV")
    table.add_argument("--n", type=int, default=2)
    table.add_argument("--alpha", type=float, default=1.0)
    table.add_argument("--r-max", type=float, default=20.0)
    table.add_argument("--step", type=float, default=0.25)
    table.add_argument("--method", choices=["auto", "closed", "quadrature"], default="auto")
    return parser


def merge_config(experiment: str, args: argparse.Namespace) -> Dict[str, Any]:
    """File values first, then every flag that was actually given."""
    values: Dict[str, Any] = {}
    if getattr(args, "config", None):
        values.update({k: v for k, v in dotenv.dotenv_values(args.config).items() if v is not None})
    for key, _ in _FLAGS.values():
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    for key in _SWITCHES.values():
        if getattr(args, key, None):
            values[key] = True
    values["experiment"] = experiment
    return values


def load_config(experiment: str, args: argparse.Namespace) -> ExperimentConfig:
    values = merge_config(experiment, args)
    violations = config_violations(values)
    if violations:
        raise ConfigError(violations)
    return ExperimentConfig.model_validate(values)


def _print_table(n: int, alpha: float, r_max: float, step: float, method: str):
    spec = covariance_spec(n, alpha)
    count = int(r_max / step) + 1
    writer = csv.writer(sys.stdout)
    writer.writerow(["r", "B"])
    for r, value in KernelService.covariance_table(spec, [i * step for i in range(count)], method):
        writer.writerow([f"{r:.6g}", f"{value:.12g}"])


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "covariance-table":
            _print_table(args.n, args.alpha, args.r_max, args.step, args.method)
            return 0

        if args.command == "validate":
            violations = config_violations(merge_config(args.experiment, args))
            for message in violations:
                print(message)
            if violations:
                return 2
            print("config OK")
            return 0

        if args.db and not args.no_db:
            database.configure_engine(args.db)
        elif not args.no_db:
            database.create_db_and_tables()

        if args.command == "replay":
            manifest, identical = ExperimentPipeline.replay(args.manifest, output_dir=args.out, persist=not args.no_db)
            print(f"run {manifest.run_id}: {'identical' if identical else 'DIFFERENT'} to {args.manifest}")
            return 0 if identical else 1

        config = load_config(args.command, args)
        manifest = ExperimentPipeline(config, persist=not args.no_db).run()
        print(f"run {manifest.run_id} {manifest.status}")
        for path in manifest.outputs:
            print(f"  {path}")
        return 0
    except ConfigError as e:
        for message in e.violations:
            print(message, file=sys.stderr)
        return 2
    except NodalLabError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
