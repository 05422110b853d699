"""Static visual artifacts: actionability heatmap, proposal polylines and per-point trajectory scores."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from prior_engine.config import Settings, settings
from prior_engine.perception.bundle import PerceptionBundle, sample_contact
from prior_engine.schemas.task import CameraView, TaskSpec
from prior_engine.sim.render import render_pointcloud
from prior_engine.sim.shapes import ArticulatedObject
from prior_engine.storage.ply import write_cloud_ply

log = logging.getLogger("prior_engine.pipeline")


def heat_colors(scores: np.ndarray) -> np.ndarray:
    """Blue (0) to red (1); the red channel rises and the blue channel falls with the score."""
    s = np.clip(np.asarray(scores, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([255.0 * s, np.zeros_like(s), 255.0 * (1.0 - s)], axis=1)
    return np.rint(rgb).astype(np.uint8)


def emit_visuals(bundle: PerceptionBundle, obj: ArticulatedObject, task: TaskSpec, start_q: float,
                 view: CameraView, out_dir: str | Path, seed: int = 0, k: Optional[int] = None,
                 cfg: Optional[Settings] = None) -> Dict[str, Path]:
    cfg = cfg or settings
    k = k or cfg.pipeline.visual_proposals
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    theta = float(task.theta)
    cloud = render_pointcloud(obj, start_q, view, cfg.sim.n_points, seed=seed, sim_cfg=cfg.sim)
    meta = {"config_hash": bundle.config_hash, "seed": str(seed), "object_id": obj.object_id,
            "theta": f"{theta:.6f}", "key": bundle.key}

    action = bundle.actionability_map(cloud.points, theta)
    heatmap = write_cloud_ply(out / f"{obj.object_id}-actionability.ply", cloud, scores=action,
                              colors=heat_colors(action), comments=meta)

    idx = sample_contact(action, "argmax", seed, mask=cloud.part_mask)
    proposals = bundle.propose(cloud.points, idx, theta, k, seed)
    ratings = bundle.score_trajectories(cloud.points, idx, theta, proposals)
    polylines = {
        **meta,
        "contact_index": idx,
        "contact": cloud.points[idx].tolist(),
        "proposals": [
            {"score": float(r), "positions": [wp.position.tolist() for wp in t.waypoints],
             "eulers": t.eulers.tolist()}
            for t, r in zip(proposals, ratings)
        ],
    }
    proposals_path = out / f"{obj.object_id}-proposals.json"
    proposals_path.write_text(json.dumps(polylines, indent=2), encoding="utf-8")

    best = proposals[int(np.argmax(ratings))]
    per_point = bundle.trajectory_score_map(cloud.points, theta, best, idx)
    score_map = write_cloud_ply(out / f"{obj.object_id}-trajectory-scores.ply", cloud, scores=per_point,
                                colors=heat_colors(per_point), comments=meta)
    log.info("visuals_written object_id=%s dir=%s proposals=%d seed=%d config_hash=%s",
             obj.object_id, out, k, seed, bundle.config_hash)
    return {"actionability": heatmap, "proposals": proposals_path, "trajectory_scores": score_map}
