"""Episode rollouts, interaction records and hindsight relabeling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, List, Optional

import numpy as np

from prior_engine.compute.trajectory import Trajectory, compose_residual
from prior_engine.config import ExplorerSettings, settings
from prior_engine.errors import PreconditionError, TaskSpecError
from prior_engine.explorer.buffer import Transition
from prior_engine.explorer.reward import reward_terms
from prior_engine.explorer.state import build_state, retarget_state
from prior_engine.explorer.td3 import PolicyFn
from prior_engine.schemas.records import InteractionRecord, StepDoc
from prior_engine.schemas.task import CameraView, TaskSpec
from prior_engine.sim.engine import EpisodeState, advance_gripper, check_success
from prior_engine.utils.hashing import sha256_inputs

if TYPE_CHECKING:
    from prior_engine.explorer.tasks import TaskSample

log = logging.getLogger("prior_engine.explorer")

CuriosityFn = Callable[[Trajectory], float]


@dataclass(eq=False)
class Rollout:
    record: InteractionRecord
    transitions: List[Transition] = field(default_factory=list)
    sample: Optional["TaskSample"] = None


def _with_id(record: InteractionRecord) -> InteractionRecord:
    digest = sha256_inputs(record.model_dump(mode="json", exclude={"record_id"}))[:16]
    return record.model_copy(update={"record_id": digest})


def make_record(env: EpisodeState, task: TaskSpec, trajectory: Trajectory, steps: List[StepDoc],
                camera: Optional[CameraView] = None, epoch: int = 0, source: str = "rl",
                config_hash: str = "", cloud_seed: int = 0) -> InteractionRecord:
    achieved = env.delta_theta
    record = InteractionRecord(
        record_id="",
        shape=env.obj.spec,
        camera=camera,
        cloud_seed=cloud_seed,
        contact=env.contact.to_doc(env.obj),
        task=task,
        start_q=env.start_q,
        trajectory=trajectory.to_doc(),
        achieved=achieved,
        success=check_success(task, achieved),
        epoch=epoch,
        steps=steps,
        grasp_failed=env.grasp_failed,
        source=source,
        config_hash=config_hash,
    )
    return _with_id(record)


def rollout(policy: PolicyFn, env: EpisodeState, task: TaskSpec, max_steps: int = 5,
            explorer_cfg: Optional[ExplorerSettings] = None, curiosity: Optional[CuriosityFn] = None,
            camera: Optional[CameraView] = None, epoch: int = 0, config_hash: str = "",
            cloud_seed: int = 0) -> Rollout:
    """Run one episode: at most `max_steps` waypoints including wp0."""
    cfg = explorer_cfg or settings.explorer
    trajectory = Trajectory((env.gripper,), task.interaction_type, env.gripper_euler[None, :])
    steps: List[StepDoc] = []
    transitions: List[Transition] = []
    state_vec = build_state(env, task)
    prev = env.delta_theta

    for i in range(max_steps - 1):
        action = np.clip(np.asarray(policy(state_vec), dtype=np.float64), -1.0, 1.0)
        delta_pos = action[:3] * cfg.max_delta_pos
        delta_euler = action[3:] * cfg.max_delta_euler
        target_euler = env.gripper_euler + delta_euler
        target = compose_residual(env.gripper, delta_pos, delta_euler, env.gripper_euler)

        report = advance_gripper(env, target, target_euler)
        trajectory = trajectory.appended(target, target_euler)
        new = env.delta_theta
        success = check_success(task, new)
        done = success or i == max_steps - 2
        score = curiosity(trajectory) if (curiosity is not None and done) else None
        terms = reward_terms(prev, new, task.theta, report.d_gc, success, score, cfg.curiosity_weight)

        next_vec = build_state(env, task)
        transitions.append(Transition(state_vec, action.astype(np.float32), terms.total, next_vec, float(done)))
        steps.append(StepDoc(delta_theta=new, d_gc=report.d_gc, grasped=env.mode == "grasped", reward=terms.total))
        state_vec, prev = next_vec, new
        if success:
            break

    record = make_record(env, task, trajectory, steps, camera, epoch, "rl", config_hash, cloud_seed)
    return Rollout(record, transitions)


def run_episode(policy: PolicyFn, env: EpisodeState, task: TaskSpec, max_steps: int = 5, **kwargs) -> InteractionRecord:
    return rollout(policy, env, task, max_steps, **kwargs).record


def relabeled_rewards(steps: List[StepDoc], theta: float) -> List[float]:
    """Rewards against a new task value; only the final step counts as success."""
    rewards = []
    prev = 0.0
    for i, step in enumerate(steps):
        terms = reward_terms(prev, step.delta_theta, theta, step.d_gc, i == len(steps) - 1)
        rewards.append(terms.total)
        prev = step.delta_theta
    return rewards


def her_relabel(record: InteractionRecord) -> InteractionRecord:
    if record.success:
        raise PreconditionError("hindsight relabeling takes failed episodes")
    if abs(record.achieved) < 1e-12:
        raise TaskSpecError("episode achieved no joint motion; nothing to relabel")
    task = record.task.with_theta(record.achieved)
    rewards = relabeled_rewards(record.steps, task.theta)
    steps = [s.model_copy(update={"reward": r}) for s, r in zip(record.steps, rewards)]
    relabeled = record.model_copy(update={
        "task": task,
        "success": check_success(task, record.achieved),
        "steps": steps,
        "relabeled": True,
    })
    return _with_id(relabeled)


def her_rollout(ro: Rollout) -> Rollout:
    record = her_relabel(ro.record)
    theta = record.task.theta
    transitions = [
        Transition(
            retarget_state(t.state, theta),
            t.action,
            step.reward,
            retarget_state(t.next_state, theta),
            1.0 if i == len(ro.transitions) - 1 else 0.0,
        )
        for i, (t, step) in enumerate(zip(ro.transitions, record.steps))
    ]
    return Rollout(record, transitions)
