from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from prior_engine.cli.pipeline import (
    STAGES,
    RunContext,
    run_curiosity_ablation,
    run_eval_downstream,
    run_eval_priors,
    run_pipeline,
    run_stage,
    write_split_file,
)
from prior_engine.cli.visuals import emit_visuals
from prior_engine.config import load_settings
from prior_engine.errors import PriorEngineError, StageError
from prior_engine.explorer.tasks import sample_training_task
from prior_engine.storage.splits import TEST_SHAPE
from prior_engine.utils.logs import configure_logging
from prior_engine.utils.seeding import derive_seed

log = logging.getLogger("prior_engine.pipeline")

_STAGE_COMMANDS = {
    "train-rl": "rl-pretrain",
    "collect": "collect",
    "train-perception": "perception",
    "finetune": "curiosity-finetune",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prior-engine", description="Interaction-driven actionable priors")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-shapes", help="generate the shape fleet and split assignment")
    for name, stage in _STAGE_COMMANDS.items():
        sub.add_parser(name, help=f"run the {stage} stage")
    sub.add_parser("eval-priors", help="scorer metrics and proposal coverage on held-out records")
    sub.add_parser("eval-downstream", help="downstream manipulation success on held-out shapes")

    vis = sub.add_parser("visualize", help="actionability heatmap, proposals and per-point scores")
    vis.add_argument("--object-id", help="shape to render (default: first held-out shape)")
    vis.add_argument("--out", help="output directory (default: <run_dir>/visuals)")
    vis.add_argument("--seed", type=int, default=0)

    pipe = sub.add_parser("pipeline", help="run all stages in order, resuming from markers")
    pipe.add_argument("--stages", nargs="*", choices=STAGES)
    pipe.add_argument("--force", action="store_true", help="rerun stages that already have a done marker")

    sub.add_parser("ablate-curiosity", help="with/without curiosity fine-tuning from the same checkpoints")
    return parser


def _visualize(ctx: RunContext, object_id: Optional[str], out: Optional[str], seed: int) -> dict:
    pool = ctx.split_fleet(TEST_SHAPE) or ctx.fleet
    if object_id:
        pool = [o for o in ctx.fleet if o.object_id == object_id]
        if not pool:
            raise PriorEngineError(f"unknown object id {object_id!r}")
    sample = sample_training_task(pool[:1], derive_seed(ctx.seed, 100, seed), ctx.cfg.pipeline.interaction_type,
                                  ctx.cfg)
    paths = emit_visuals(ctx.bundle(), sample.obj, sample.task, sample.start_q, sample.camera,
                         out or ctx.run_dir / "visuals", seed, cfg=ctx.cfg)
    return {k: str(v) for k, v in paths.items()}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        cfg = load_settings(args.config, args.overrides)
    except (OSError, ValueError) as exc:
        log.error("config_invalid error=%s", exc)
        return 2

    try:
        if args.command == "pipeline":
            result = run_pipeline(cfg, args.stages, args.force)
        elif args.command == "ablate-curiosity":
            result = run_curiosity_ablation(cfg)
        else:
            ctx = RunContext.create(cfg)
            if args.command == "gen-shapes":
                result = {"splits": str(write_split_file(ctx)), "counts": ctx.splits.counts()}
            elif args.command in _STAGE_COMMANDS:
                result = run_stage(ctx, _STAGE_COMMANDS[args.command])
            elif args.command == "eval-priors":
                result = run_eval_priors(ctx)
            elif args.command == "eval-downstream":
                result = run_eval_downstream(ctx)
            else:
                result = _visualize(ctx, args.object_id, args.out, args.seed)
    except StageError as exc:
        log.error("pipeline_failed stage=%s error=%s", exc.stage, exc)
        print(f"stage {exc.stage} failed: {exc}", file=sys.stderr)
        return 1
    except PriorEngineError as exc:
        log.error("command_failed command=%s error=%s", args.command, exc)
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1

    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
