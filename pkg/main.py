"""
mkv command line: experiment sweeps, coupling diagnostics and rate calculators
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from analysis import rate_bound_distribution, rate_bound_path, rate_bound_weighted
from config import settings
from errors import EXIT_OK, MkvError, exit_code_for
from experiment_config import (PRESETS, apply_overrides, default_experiment, load_coupling_config,
                               load_experiment_config)
from experiment_pipeline import ExperimentPipeline

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mkv", description="Invariant-measure approximation for "
                                     "McKean-Vlasov dynamics by self-interacting diffusions")
    parser.add_argument("--log-level", default=None, help="Logging level (default from MKV_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment sweep")
    run.add_argument("--config", help="Experiment JSON; the built-in Curie-Weiss study when omitted")
    run.add_argument("--out", help="Output directory")
    run.add_argument("--seed", type=int, help="Master seed")
    run.add_argument("--threads", type=int, help="Worker threads")
    run.add_argument("--preset", choices=sorted(PRESETS), help="Scheme size preset")

    coupling = sub.add_parser("coupling", help="Run a reflection-coupling decay diagnostic")
    coupling.add_argument("--config", required=True, help="Coupling JSON")
    coupling.add_argument("--out", help="Output directory")
    coupling.add_argument("--threads", type=int, help="Worker threads")

    rates = sub.add_parser("rates", help="Evaluate the theoretical rate bounds")
    rates.add_argument("--d", type=int, required=True, help="Dimension")
    rates.add_argument("--q", type=float, required=True, help="Moment order q > 1")
    rates.add_argument("--eta", type=float, help="Interaction constant")
    rates.add_argument("--fprime0", type=float, help="f'(0) of the auxiliary function")
    rates.add_argument("--eps1", type=float, help="First weight exponent")
    rates.add_argument("--eps2", type=float, help="Second weight exponent")
    return parser


def cmd_run(args) -> int:
    cfg = load_experiment_config(args.config) if args.config else default_experiment(args.preset or "desk")
    cfg = apply_overrides(cfg, preset=args.preset, seed=args.seed, threads=args.threads, output_dir=args.out)
    pipeline = ExperimentPipeline()
    report = pipeline.run_experiment(cfg)

    print(f"{cfg.name}: {len(report.entries)} curves in {pipeline.storage.output_dir}")
    for e in report.entries:
        slope = f"{e.final_decade_fit.slope:+.3f}" if e.final_decade_fit else "n/a"
        print(f"  {e.parameter}={e.value:<6g} final W1 {e.curve[-1].mean_w1:.4f}  "
              f"final-decade slope {slope}  eps_max {e.rate_bound.epsilon_max:.3f} ({e.rate_bound.binding})")
    return EXIT_OK


def cmd_coupling(args) -> int:
    doc = load_coupling_config(args.config)
    update = {k: v for k, v in (("output_dir", args.out), ("threads", args.threads)) if v is not None}
    doc = doc.model_copy(update=update)
    pipeline = ExperimentPipeline()
    report = pipeline.run_coupling_diagnostic(doc)
    print(f"{doc.name}: E|gap| {report.mean_gap[0]:.4f} -> {report.mean_gap[-1]:.4g}, "
          f"written to {pipeline.storage.path(report.curve_file)}")
    return EXIT_OK


def cmd_rates(args) -> int:
    out = {"distribution": rate_bound_distribution(args.d, args.q).to_dict()}
    if args.eta is not None and args.fprime0 is not None:
        out["path"] = rate_bound_path(args.d, args.q, args.eta, args.fprime0).to_dict()
    if args.eps1 is not None and args.eps2 is not None:
        out["weighted"] = rate_bound_weighted(args.d, args.q, args.eps1, args.eps2).to_dict()
    print(json.dumps(out, indent=2))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "coupling": cmd_coupling, "rates": cmd_rates}


def cli(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the mkv script
    Args:
        argv: Arguments (defaults to sys.argv)
    Returns:
        Exit code: 0 success, 2 configuration error, 3 numerical error
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or settings.log_level).upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MkvError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(cli())
