"""
Entry point for the seed-space video restoration tool.
"""

import argparse
import json
import logging
import sys

from src.restoration_tool import GRIDS, SeedRestorationTool
from src.utils.acceptance import check_seed_clustering, check_stage_ordering, check_step_ablation
from src.utils.errors import RestorationError
from src.utils.pre_flight_checks import PreFlightCheckError, run_pre_flight_checks

CONFIG_FILE = "config/restoration_config.json"

EXIT_FAILURE = 1
EXIT_ASSERTION = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Zero-shot video restoration in diffusion seed space.")
    parser.add_argument("--config", default=CONFIG_FILE, help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="override experiment.rng_seed")
    parser.add_argument("--task", help="override experiment.task")
    parser.add_argument("--steps", type=int, help="override the number of reverse diffusion steps")
    parser.add_argument("--out", help="override experiment.out_dir")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug-level logging")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("gen-data", help="write synthetic clips")
    train = sub.add_parser("train-prior", help="train codec and score network on held-out clips")
    train.add_argument("--force", action="store_true", help="retrain even if checkpoints exist")
    restore = sub.add_parser("restore", help="degrade, restore and score one clip")
    restore.add_argument("--clip", type=int, default=0, help="clip index")
    score = sub.add_parser("score", help="score a restored clip against a reference")
    score.add_argument("--restored", required=True)
    score.add_argument("--reference", required=True)
    ablate = sub.add_parser("ablate", help="run an ablation grid")
    ablate.add_argument("--grid", choices=GRIDS, required=True)
    ablate.add_argument("--assert", dest="check", action="store_true", help="exit non-zero when the expected ordering fails")
    cluster = sub.add_parser("cluster", help="measure how regressed seeds cluster by clip")
    cluster.add_argument("--assert", dest="check", action="store_true", help="exit non-zero when seeds do not cluster")
    plot = sub.add_parser("plot", help="plot metric evolution of a restore run")
    plot.add_argument("--run", required=True)
    return parser


def main(argv=None) -> int:
    """
    Main function to run the seed-space video restoration tool.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="[%(levelname)s] %(message)s")

    try:
        tool = SeedRestorationTool(
            config_file=args.config,
            overrides={"experiment": {"rng_seed": args.seed, "task": args.task, "out_dir": args.out}},
        )
    except ValueError as e:
        logging.getLogger("seedvr").error("Invalid configuration: %s", e)
        return EXIT_FAILURE
    if args.steps is not None:
        tool.config["diffusion"]["schedule"]["T_rev"] = args.steps
    tool.log_message(f"Starting '{args.verb}'.")

    try:
        run_pre_flight_checks(tool.config)
        if args.verb == "gen-data":
            tool.gen_data()
        elif args.verb == "train-prior":
            tool.train_prior(force=args.force)
        elif args.verb == "restore":
            _, report, _ = tool.run_task(args.clip)
            print(report.to_json())
        elif args.verb == "score":
            print(tool.score(args.restored, args.reference).to_json())
        elif args.verb == "ablate":
            table = tool.run_ablation_grid(args.grid)
            for label, means in table.mean_by_label().items():
                tool.log_message(f"{label}: " + ", ".join(f"{k}={v:.4g}" for k, v in means.items() if v is not None))
            if args.check:
                failures = []
                if args.grid == "stages":
                    failures = check_stage_ordering(table)
                elif args.grid == "steps":
                    failures = check_step_ablation(table)
                for failure in failures:
                    tool.log_message(failure, level="ERROR")
                if failures:
                    return EXIT_ASSERTION
        elif args.verb == "cluster":
            result = tool.seed_clustering()
            print(json.dumps(result))
            if args.check:
                failures = check_seed_clustering(result["statistic"], result["control"])
                for failure in failures:
                    tool.log_message(failure, level="ERROR")
                if failures:
                    return EXIT_ASSERTION
        elif args.verb == "plot":
            for path in tool.plot(args.run):
                tool.log_message(f"Wrote {path}")
    except (RestorationError, PreFlightCheckError) as e:
        tool.log_message(str(e), level="ERROR")
        return EXIT_FAILURE
    finally:
        tool.write_events()

    tool.log_message(f"'{args.verb}' finished.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
