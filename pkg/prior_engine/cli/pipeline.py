"""Pipeline stages with resumable on-disk markers."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from prior_engine.config import Settings, config_hash
from prior_engine.errors import DatasetError, PreconditionError, StageError
from prior_engine.evaluation.downstream import downstream_success, make_eval_tasks, random_control_success
from prior_engine.evaluation.priors import eval_priors, PRIORS_COLUMNS
from prior_engine.evaluation.report import (
    downstream_table_row,
    priors_table_row,
    write_downstream_table,
    write_eval_run,
    write_priors_table,
)
from prior_engine.evaluation.trajectories import proposal_diversity
from prior_engine.baselines.heuristics import heuristic_success
from prior_engine.explorer.trainer import ExplorerTrainer, policy_key
from prior_engine.perception.bundle import PerceptionBundle
from prior_engine.perception.curiosity import joint_curiosity_finetune
from prior_engine.perception.data import CloudCache, PerceptionSample, samples_from_pairs
from prior_engine.perception.training import finetune_all, train_bundle
from prior_engine.schemas.shape import ShapeSpec
from prior_engine.sim.shapes import ArticulatedObject, build_object, generate_fleet
from prior_engine.storage.collect import collect_dataset
from prior_engine.storage.manifests import load_manifest, load_manifest_pairs
from prior_engine.storage.records import split_slug
from prior_engine.storage.splits import TEST_CATEGORY, TEST_SHAPE, TRAIN_SHAPE, SplitAssignment, make_splits
from prior_engine.storage.tables import write_rows_csv, write_run_json
from prior_engine.utils.seeding import derive_seed

log = logging.getLogger("prior_engine.pipeline")

STAGES = ("rl-pretrain", "collect", "perception", "curiosity-finetune", "eval")


@dataclass
class RunContext:
    cfg: Settings
    run_dir: Path
    config_hash: str
    seed: int
    _fleet: Optional[List[ArticulatedObject]] = field(default=None, repr=False)
    _splits: Optional[SplitAssignment] = field(default=None, repr=False)

    @classmethod
    def create(cls, cfg: Settings) -> "RunContext":
        run_dir = Path(cfg.pipeline.run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        return cls(cfg, run_dir, config_hash(cfg), cfg.pipeline.seed)

    # -------------------------
    # Paths
    # -------------------------
    @property
    def key(self) -> str:
        joint = "revolute" if self.cfg.pipeline.category == "door" else "prismatic"
        return policy_key(self.cfg.pipeline.interaction_type, joint)

    @property
    def data_dir(self) -> Path:
        return Path(self.cfg.data_root) if self.cfg.data_root else self.run_dir / "data"

    @property
    def stage_dir(self) -> Path:
        return self.run_dir / "stages"

    def explorer_path(self, tag: str = "pretrain") -> Path:
        return self.run_dir / "explorer" / f"{self.key}-{tag}.pt"

    def bundle_path(self, tag: str = "base") -> Path:
        return self.run_dir / "perception" / f"{self.key}-{tag}.pt"

    def manifest_path(self, split: str) -> Path:
        return self.data_dir / f"manifest-{split_slug(split)}.json"

    # -------------------------
    # Shapes and splits
    # -------------------------
    @property
    def fleet(self) -> List[ArticulatedObject]:
        if self._fleet is None:
            self._fleet = load_or_generate_fleet(self)
        return self._fleet

    @property
    def splits(self) -> SplitAssignment:
        if self._splits is None:
            self._splits = make_splits(self.fleet, derive_seed(self.seed, 11), self.cfg.data.train_shape_ratio,
                                       self.cfg.data.test_category_ratio)
        return self._splits

    def split_fleet(self, tag: str) -> List[ArticulatedObject]:
        return self.splits.objects(self.fleet, tag)

    def trainer(self, tag: str = "pretrain") -> ExplorerTrainer:
        path = self.explorer_path(tag)
        if not path.exists():
            raise PreconditionError(f"explorer checkpoint missing: {path}")
        return ExplorerTrainer.load(path, self.split_fleet(TRAIN_SHAPE), self.cfg.pipeline.interaction_type,
                                    self.seed, self.cfg)

    def bundle(self) -> PerceptionBundle:
        for tag in ("final", "base"):
            if self.bundle_path(tag).exists():
                return PerceptionBundle.load(self.bundle_path(tag), self.config_hash, self.cfg.perception)
        raise PreconditionError(f"no perception bundle under {self.run_dir / 'perception'}")

    def samples(self, split: str) -> List[PerceptionSample]:
        manifest = load_manifest(self.manifest_path(split), verify=False)
        pairs = load_manifest_pairs(manifest, self.data_dir)
        return samples_from_pairs(pairs, CloudCache(self.data_dir, self.cfg.sim))


def load_or_generate_fleet(ctx: RunContext) -> List[ArticulatedObject]:
    path = ctx.run_dir / "shapes.jsonl"
    if path.exists():
        with open(path, "r", encoding="utf-8") as f:
            return [build_object(ShapeSpec.model_validate_json(line)) for line in f if line.strip()]
    fleet = generate_fleet([ctx.cfg.pipeline.category], ctx.cfg.data.shapes_per_style, derive_seed(ctx.seed, 10))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for obj in fleet:
            f.write(obj.spec.model_dump_json() + "\n")
    log.info("fleet_generated shapes=%d path=%s seed=%d", len(fleet), path, ctx.seed)
    return fleet


def write_split_file(ctx: RunContext) -> Path:
    return write_run_json(ctx.run_dir / "splits.json", {
        "config_hash": ctx.config_hash,
        "seed": ctx.seed,
        "test_categories": ctx.splits.test_categories,
        "counts": ctx.splits.counts(),
        "tags": ctx.splits.tags,
    })


# -------------------------
# Stages
# -------------------------
def stage_rl_pretrain(ctx: RunContext) -> Dict:
    trainer = ExplorerTrainer(ctx.split_fleet(TRAIN_SHAPE), ctx.cfg.pipeline.interaction_type,
                              derive_seed(ctx.seed, 20), ctx.cfg)
    summary = trainer.train()
    rows = [{"episodes": (i + 1) * ctx.cfg.explorer.log_every, "success_rate": r} for i, r in enumerate(summary.history)]
    write_rows_csv(ctx.run_dir / "metrics" / "explorer-pretrain.csv", rows, ("episodes", "success_rate"))
    trainer.save(ctx.explorer_path("pretrain"))
    return {"episodes": summary.episodes, "success_rate": summary.success_rate}


def stage_collect(ctx: RunContext) -> Dict:
    trainer = ctx.trainer("pretrain")
    targets = {
        TRAIN_SHAPE: ctx.cfg.perception.n_positive,
        TEST_SHAPE: ctx.cfg.evaluation.n_positive,
        TEST_CATEGORY: ctx.cfg.evaluation.n_positive,
    }
    out: Dict[str, Dict] = {}
    for n, (split, n_pos) in enumerate(targets.items()):
        members = ctx.split_fleet(split)
        if not members:
            out[split] = {"skipped": "no shapes"}
            continue
        trainer.fleet = members
        try:
            manifest = collect_dataset(trainer, n_pos, derive_seed(ctx.seed, 30, n), ctx.data_dir, split)
        except DatasetError as exc:
            if split == TRAIN_SHAPE:
                raise
            log.warning("collect_split_skipped split=%s error=%s", split, exc)
            out[split] = {"skipped": str(exc)}
            continue
        out[split] = manifest.counts
    return out


def stage_perception(ctx: RunContext) -> Dict:
    samples = ctx.samples(TRAIN_SHAPE)
    bundle = PerceptionBundle(ctx.key, derive_seed(ctx.seed, 40) % (2**31), ctx.config_hash, ctx.cfg.perception)
    logs = train_bundle(bundle, samples, derive_seed(ctx.seed, 41), ctx.cfg.perception)
    write_rows_csv(ctx.run_dir / "metrics" / "perception.csv", [e.row() for e in logs])
    bundle.save(ctx.bundle_path("base"))
    return {"samples": len(samples), "epochs_logged": len(logs)}


def curiosity_arm(ctx: RunContext, curiosity: bool, seed: int):
    trainer = ctx.trainer("pretrain")
    bundle = PerceptionBundle.load(ctx.bundle_path("base"), ctx.config_hash, ctx.cfg.perception)
    pool = ctx.samples(TRAIN_SHAPE)
    report = joint_curiosity_finetune(
        trainer, bundle, ctx.cfg.pipeline.curiosity_epochs, ctx.cfg.pipeline.curiosity_episodes_per_epoch,
        pool, CloudCache(ctx.data_dir, ctx.cfg.sim), seed, curiosity=curiosity,
    )
    finetune_all(bundle, pool, ctx.cfg.perception.finetune_epochs, derive_seed(seed, 1), ctx.cfg.perception)
    return trainer, bundle, report


def stage_curiosity(ctx: RunContext) -> Dict:
    trainer, bundle, report = curiosity_arm(ctx, True, derive_seed(ctx.seed, 50))
    write_rows_csv(ctx.run_dir / "metrics" / "curiosity.csv", [vars(e) for e in report.epochs])
    trainer.save(ctx.explorer_path("curiosity"))
    bundle.save(ctx.bundle_path("final"))
    return {"epochs": len(report.epochs), "new_records": len(report.records)}


def _eval_splits(ctx: RunContext) -> List[str]:
    return [s for s in (TEST_SHAPE, TEST_CATEGORY) if ctx.manifest_path(s).exists()]


def run_eval_priors(ctx: RunContext, bundle: Optional[PerceptionBundle] = None, write: bool = True) -> List[Dict]:
    bundle = bundle or ctx.bundle()
    rows = []
    results = {}
    for split in _eval_splits(ctx):
        pairs = load_manifest_pairs(load_manifest(ctx.manifest_path(split), verify=False), ctx.data_dir)
        row = eval_priors(bundle, pairs, CloudCache(ctx.data_dir, ctx.cfg.sim), derive_seed(ctx.seed, 60), ctx.cfg)
        rows.append(priors_table_row(ctx.key, split, row))
        results[split] = row.to_doc()
    if write:
        write_priors_table(ctx.run_dir / "eval" / "priors.csv", rows)
        write_eval_run(ctx.run_dir / "eval" / "priors.json", "priors", ctx.seed, ctx.config_hash, results)
    return rows


def run_eval_downstream(ctx: RunContext, bundle: Optional[PerceptionBundle] = None) -> List[Dict]:
    bundle = bundle or ctx.bundle()
    rows = []
    results = {}
    for n, split in enumerate((TEST_SHAPE, TEST_CATEGORY)):
        members = ctx.split_fleet(split)
        if not members:
            continue
        seed = derive_seed(ctx.seed, 70, n)
        tasks = make_eval_tasks(members, ctx.cfg.evaluation.n_tasks, seed, ctx.cfg.pipeline.interaction_type, ctx.cfg)
        learned = downstream_success(bundle, tasks, seed, cfg=ctx.cfg)
        control = random_control_success(bundle, tasks, seed, cfg=ctx.cfg)
        heuristic = heuristic_success(tasks, seed, ctx.cfg)
        rows.append(downstream_table_row("learned", ctx.key, split, learned))
        rows.append(downstream_table_row("random-control", ctx.key, split, control))
        rows.append({"method": "heuristic", "setting": ctx.key, "split": split, "tasks": len(tasks),
                     "success_rate": round(heuristic, 2)})
        results[split] = {"seed": seed, "learned": learned.success_rate, "random_control": control.success_rate,
                          "heuristic": heuristic,
                          "outcomes": [vars(o) for o in learned.outcomes]}
    write_downstream_table(ctx.run_dir / "eval" / "downstream.csv", rows)
    write_eval_run(ctx.run_dir / "eval" / "downstream.json", "downstream", ctx.seed, ctx.config_hash, results)
    return rows


def stage_eval(ctx: RunContext) -> Dict:
    bundle = ctx.bundle()
    return {"priors": run_eval_priors(ctx, bundle), "downstream": run_eval_downstream(ctx, bundle)}


STAGE_FUNCS: Dict[str, Callable[[RunContext], Dict]] = {
    "rl-pretrain": stage_rl_pretrain,
    "collect": stage_collect,
    "perception": stage_perception,
    "curiosity-finetune": stage_curiosity,
    "eval": stage_eval,
}


# -------------------------
# Markers and driver
# -------------------------
def marker_path(ctx: RunContext, stage: str, status: str) -> Path:
    return ctx.stage_dir / f"{stage}.{status}"


def stage_done(ctx: RunContext, stage: str) -> bool:
    """True when a marker for this stage exists; a marker from another config is refused."""
    path = marker_path(ctx, stage, "done")
    if not path.exists():
        return False
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("config_hash") != ctx.config_hash:
        raise StageError(
            f"stage {stage} in {ctx.run_dir} was completed under config {payload.get('config_hash')}, "
            f"current config is {ctx.config_hash}; use a fresh run dir",
            stage=stage,
        )
    return True


def run_stage(ctx: RunContext, stage: str) -> Dict:
    ctx.stage_dir.mkdir(parents=True, exist_ok=True)
    failed = marker_path(ctx, stage, "failed")
    log.info("stage_start stage=%s seed=%d config_hash=%s run_dir=%s", stage, ctx.seed, ctx.config_hash, ctx.run_dir)
    try:
        info = STAGE_FUNCS[stage](ctx)
    except Exception as exc:
        write_run_json(failed, {"stage": stage, "config_hash": ctx.config_hash, "seed": ctx.seed,
                                "error": f"{type(exc).__name__}: {exc}",
                                "failed_at": datetime.now(timezone.utc).isoformat()})
        log.error("stage_failed stage=%s error=%s", stage, exc)
        raise StageError(f"stage {stage} failed: {exc}", stage=stage, cause=exc) from exc
    if failed.exists():
        failed.unlink()
    write_run_json(marker_path(ctx, stage, "done"), {
        "stage": stage, "config_hash": ctx.config_hash, "seed": ctx.seed, "info": info,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    })
    log.info("stage_done stage=%s config_hash=%s", stage, ctx.config_hash)
    return info


def run_pipeline(cfg: Settings, stages: Optional[Sequence[str]] = None, force: bool = False) -> Dict[str, str]:
    """Run stages in order; completed stages (matching config hash) are skipped unless `force`."""
    ctx = RunContext.create(cfg)
    wanted = list(stages) if stages else list(STAGES)
    unknown = [s for s in wanted if s not in STAGES]
    if unknown:
        raise ValueError(f"unknown stages {unknown}; expected a subset of {STAGES}")
    write_split_file(ctx)
    status: Dict[str, str] = {}
    for stage in STAGES:
        if stage not in wanted:
            continue
        if not force and stage_done(ctx, stage):
            log.info("stage_skipped stage=%s reason=done", stage)
            status[stage] = "skipped"
            continue
        run_stage(ctx, stage)
        status[stage] = "done"
    return status


def run_curiosity_ablation(cfg: Settings) -> List[Dict]:
    """Both arms of the curiosity schedule from the same pretrained checkpoints, scored on held-out shapes."""
    ctx = RunContext.create(cfg)
    rows = []
    for arm, flag in (("with-curiosity", True), ("without-curiosity", False)):
        _, bundle, _ = curiosity_arm(ctx, flag, derive_seed(ctx.seed, 80))
        diversity = round(mean_proposal_diversity(ctx, bundle), 4)
        for row in run_eval_priors(ctx, bundle, write=False):
            rows.append({"arm": arm, **row, "diversity": diversity})
        log.info("ablation_arm arm=%s diversity=%.4f seed=%d config_hash=%s", arm, diversity, ctx.seed, ctx.config_hash)
    write_rows_csv(ctx.run_dir / "eval" / "ablation-curiosity.csv", rows,
                   ("arm", "setting", "split") + PRIORS_COLUMNS + ("diversity",))
    return rows


def mean_proposal_diversity(ctx: RunContext, bundle: PerceptionBundle, limit: int = 20, k: int = 10) -> float:
    """Mean pairwise distance among k proposals at held-out positive contacts."""
    if not ctx.manifest_path(TEST_SHAPE).exists():
        return float("nan")
    samples = [s for s in ctx.samples(TEST_SHAPE) if s.label > 0.5][:limit]
    if not samples:
        return float("nan")
    values = [
        proposal_diversity(bundle.propose(s.points, s.point_index, s.theta, k, derive_seed(ctx.seed, 90, i)))
        for i, s in enumerate(samples)
    ]
    return float(np.mean(values))
