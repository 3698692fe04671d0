"""Command-line entry point: tree species mapping from synthetic lidar and weak labels.

Usage:
    uv run canopyseg.py pipeline --config config.yaml --out-dir out --seed 7
    uv run canopyseg.py train --round 2 --out-dir out --resume

Exit status: 0 on success, 1 when a stage fails, 2 on a usage error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from canopy_pipeline import CanopyPipeline, ManifestHashError, PipelineConfig, StageError

logger = logging.getLogger("canopyseg")

ROUND_COMMANDS = ("train", "predict", "eval")
COMMANDS = ("synth", "chm", "prep", "train", "relabel", "predict", "eval", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config.yaml", help="YAML configuration file")
    common.add_argument("--seed", type=int, default=None, help="override synth.seed and train.seed")
    common.add_argument("--out-dir", default="out", help="artifact directory")
    common.add_argument("--resume", action="store_true", help="skip stages whose recorded outputs are current")
    common.add_argument("--deterministic", action="store_true", help="single worker thread")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common])
        if name in ROUND_COMMANDS:
            cmd.add_argument("--round", type=int, choices=(1, 2), default=1, dest="round_")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config = PipelineConfig.load(args.config, seed=args.seed)
    except (OSError, ValueError, TypeError) as e:
        logger.error("stage config failed: %s", e)
        return 1

    pipeline = CanopyPipeline(config, args.out_dir, resume=args.resume, deterministic=args.deterministic)
    try:
        if args.command == "pipeline":
            pipeline.run_all()
        elif args.command in ROUND_COMMANDS:
            getattr(pipeline, args.command)(args.round_)
            if args.command == "eval":
                pipeline.eval_weak16()
        else:
            getattr(pipeline, args.command)()
    except StageError as e:
        logger.error("stage %s failed: %s", e.stage, e)
        return 1
    except ManifestHashError as e:
        logger.error("stage %s failed: %s", args.command, e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(run())
