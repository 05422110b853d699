"""Reward shaping, state layout, hindsight relabeling and the TD3 agent."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import torch

from conftest import box_index, face_contact, q_max

from prior_engine.baselines.heuristics import execute_heuristic, heuristic_drawer_push
from prior_engine.compute.trajectory import Trajectory
from prior_engine.config import ExplorerSettings, Settings
from prior_engine.errors import PreconditionError, TaskSpecError
from prior_engine.explorer.buffer import BufferWriter, ReplayBuffer, Transition
from prior_engine.explorer.episode import her_relabel, her_rollout, relabeled_rewards, rollout, run_episode
from prior_engine.explorer.reward import compute_reward, reward_terms
from prior_engine.explorer.state import STATE_DIM, build_state, retarget_state
from prior_engine.explorer.tasks import group_by_category, pick_shape, sample_theta, sample_training_task
from prior_engine.explorer.td3 import TD3Agent, load_agent, save_agent, td3_update
from prior_engine.explorer.trainer import ExplorerTrainer
from prior_engine.schemas.task import TaskSpec
from prior_engine.sim.engine import ContactSite, replay_trajectory, reset_episode


def _small_agent(seed: int = 0, **overrides) -> TD3Agent:
    return TD3Agent(ExplorerSettings(hidden=32, batch_size=8, **overrides), seed=seed)


def _transition(rng: np.random.Generator) -> Transition:
    return Transition(
        rng.normal(size=STATE_DIM).astype(np.float32),
        rng.uniform(-1, 1, 6).astype(np.float32),
        float(rng.normal()),
        rng.normal(size=STATE_DIM).astype(np.float32),
        0.0,
    )


@pytest.fixture(scope="module")
def push_record(drawer):
    top = q_max(drawer)
    plan = heuristic_drawer_push(drawer, TaskSpec(theta=-0.4 * top, interaction_type="push"), 0, start_q=0.5 * top)
    return execute_heuristic(plan)


class TestReward:
    """Shaped reward arithmetic."""

    def test_guidance(self):
        assert compute_reward(0.5, 0.7, 1.0, 0.0, False) == pytest.approx(60.0)

    def test_far_penalty(self):
        assert compute_reward(0.0, 0.0, 1.0, 0.2, False) == pytest.approx(-330.0)

    def test_success_bonus(self):
        assert compute_reward(1.0, 1.0, 1.0, 0.0, True, 0.0) == pytest.approx(500.0)

    def test_curiosity_term(self):
        terms = reward_terms(0.0, 0.0, 1.0, 0.0, False, 0.8)
        assert terms.curiosity == pytest.approx(-400.0)
        assert terms.total == pytest.approx(terms.success + terms.guidance + terms.distance + terms.curiosity)

    def test_curiosity_off_by_default(self):
        assert reward_terms(0.0, 0.0, 1.0, 0.0, False).curiosity == 0.0

    def test_zero_theta(self):
        with pytest.raises(TaskSpecError):
            compute_reward(0.0, 0.0, 0.0, 0.0, False)


class TestState:
    """33-dim privileged state."""

    def test_layout_at_reset(self, door):
        task = TaskSpec(theta=0.3, interaction_type="push")
        contact = face_contact(door, 0.5 * q_max(door), box_index(door, "panel"))
        env = reset_episode(door, task, contact, 3)
        vec = build_state(env, task)
        assert vec.shape == (STATE_DIM,)
        assert vec[0] == 0.0
        assert vec[1] == pytest.approx(0.3)
        assert vec[2] == pytest.approx(0.3)
        p = env.contact_point
        expected = np.linalg.norm(np.cross(p - door.joint_location, door.joint_axis))
        assert vec[29] == pytest.approx(expected, rel=1e-5)

    def test_retarget(self):
        vec = np.arange(STATE_DIM, dtype=np.float32)
        out = retarget_state(vec, 0.5)
        assert out[1] == 0.5 and out[2] == pytest.approx(0.5 - vec[0])
        assert np.array_equal(out[3:], vec[3:])
        assert vec[1] == 1.0


class TestTaskSampling:
    """Sign conventions and category-balanced shape picks."""

    def test_theta_signs(self, rng):
        for _ in range(50):
            assert sample_theta("prismatic", "pull", rng) > 0
            assert sample_theta("prismatic", "push", rng) < 0
            assert sample_theta("revolute", "pull", rng) > 0
        door_push = [sample_theta("revolute", "push", rng) for _ in range(200)]
        assert min(door_push) < 0 < max(door_push)

    def test_theta_ranges(self, rng):
        for _ in range(100):
            assert 0.1 <= abs(sample_theta("prismatic", "push", rng)) <= 0.7
            assert np.radians(10) <= abs(sample_theta("revolute", "pull", rng)) <= np.radians(70)

    def test_equal_category_probability(self, drawer_fleet):
        fleet = [o for o in drawer_fleet if o.style == "cabinet"][:1] + [o for o in drawer_fleet if o.style == "table"]
        rng = np.random.default_rng(0)
        picks = [pick_shape(fleet, rng).style for _ in range(4000)]
        share = picks.count("cabinet") / len(picks)
        assert 0.45 < share < 0.55
        assert len(group_by_category(fleet)) == 2

    def test_training_task_contact_on_part(self, drawer_fleet):
        sample = sample_training_task(drawer_fleet, 5, "push")
        assert sample.cloud.part_mask[sample.point_index]
        assert sample.task.theta < 0
        lo, hi = sample.obj.feasible_start_interval(sample.task.theta)
        assert lo <= sample.start_q <= hi


class TestEpisodes:
    """Rollouts and hindsight relabeling."""

    def test_rollout_bounded_and_replayable(self, drawer):
        top = q_max(drawer)
        task = TaskSpec(theta=-0.3 * top, interaction_type="push")
        contact = face_contact(drawer, 0.5 * top, box_index(drawer, "panel"))
        env = reset_episode(drawer, task, contact, 9)
        ro = rollout(lambda s: np.array([-0.5, 0.0, 0.0, 0.0, 0.0, 0.0]), env, task, max_steps=5)
        record = ro.record
        assert len(record.trajectory.waypoints) <= 5
        assert len(ro.transitions) == len(record.steps) <= 4
        assert record.success == (abs(task.theta - record.achieved) <= 0.15 * abs(task.theta) + 1e-12)
        again = replay_trajectory(drawer, task, ContactSite.from_doc(record.contact), record.start_q,
                                  Trajectory.from_doc(record.trajectory))
        assert again == pytest.approx(record.achieved, abs=1e-9)

    def test_run_episode_returns_the_record(self, drawer):
        top = q_max(drawer)
        task = TaskSpec(theta=-0.3 * top, interaction_type="push")
        contact = face_contact(drawer, 0.5 * top, box_index(drawer, "panel"))
        policy = lambda s: np.array([-0.5, 0.0, 0.0, 0.0, 0.0, 0.0])  # noqa: E731
        record = run_episode(policy, reset_episode(drawer, task, contact, 9), task, max_steps=5)
        same = rollout(policy, reset_episode(drawer, task, contact, 9), task, max_steps=5).record
        assert record.record_id == same.record_id
        short = run_episode(policy, reset_episode(drawer, task, contact, 9), task, max_steps=3)
        assert len(short.steps) <= 2
        assert len(short.trajectory.waypoints) <= 3

    def test_her_relabel(self, push_record):
        failed = push_record.model_copy(update={"task": push_record.task.with_theta(0.5), "success": False})
        relabeled = her_relabel(failed)
        assert relabeled.relabeled and relabeled.success
        assert relabeled.task.theta == pytest.approx(push_record.achieved)
        expected = relabeled_rewards(failed.steps, push_record.achieved)
        assert [s.reward for s in relabeled.steps] == pytest.approx(expected)
        assert expected[-1] >= 500.0 - 150.0 * relabeled.steps[-1].d_gc - 300.0
        assert relabeled.record_id != failed.record_id

    def test_her_needs_a_failure(self, push_record):
        assert push_record.success
        with pytest.raises(PreconditionError):
            her_relabel(push_record)

    def test_her_needs_motion(self, push_record):
        still = push_record.model_copy(update={"achieved": 0.0, "success": False})
        with pytest.raises(TaskSpecError):
            her_relabel(still)

    def test_her_rollout_retargets_states(self, drawer):
        top = q_max(drawer)
        task = TaskSpec(theta=-0.45 * top, interaction_type="push")
        contact = face_contact(drawer, 0.5 * top, box_index(drawer, "panel"))
        env = reset_episode(drawer, task, contact, 4)
        ro = rollout(lambda s: np.array([-0.1, 0.0, 0.0, 0.0, 0.0, 0.0]), env, task, max_steps=5)
        if ro.record.success or abs(ro.record.achieved) < 1e-9:
            pytest.skip("episode did not end in a failure with motion")
        her = her_rollout(ro)
        theta = her.record.task.theta
        assert all(t.state[1] == pytest.approx(theta) for t in her.transitions)
        assert her.transitions[-1].done == 1.0


class TestReplayBuffer:
    """FIFO ring and single-writer facade."""

    def test_empty_sample(self, rng):
        with pytest.raises(PreconditionError):
            ReplayBuffer(4).sample(2, rng)

    def test_fifo_eviction(self, rng):
        buf = ReplayBuffer(3)
        items = [_transition(rng) for _ in range(5)]
        writer = BufferWriter(buf)
        writer.submit(items)
        snap = buf.snapshot()
        assert len(buf) == 3
        assert np.allclose(snap["reward"], [t.reward for t in items[2:]])
        assert writer.episodes_written == 1

    def test_sampling_while_writers_submit(self):
        buf = ReplayBuffer(64)
        writer = BufferWriter(buf)

        def episode(k: int):
            fill = float(k)
            return [Transition(np.full(STATE_DIM, fill, np.float32), np.full(6, fill, np.float32), fill,
                               np.full(STATE_DIM, fill, np.float32), fill) for _ in range(5)]

        writer.submit(episode(0))
        sample_rng = np.random.default_rng(0)
        with ThreadPoolExecutor(max_workers=4) as pool:
            futures = [pool.submit(writer.submit, episode(k)) for k in range(1, 81)]
            for _ in range(50):
                b = buf.sample(16, sample_rng)
                assert torch.equal(b["state"][:, 0], b["next_state"][:, 0])
                assert torch.equal(b["state"][:, 0], b["reward"][:, 0])
                assert torch.equal(b["action"][:, -1], b["done"][:, 0])
            for f in futures:
                f.result()
        assert writer.episodes_written == 81
        assert len(buf) == 64


class TestTD3:
    """Agent construction, acting and updates."""

    def test_seeded_agents_agree(self, rng):
        state = rng.normal(size=STATE_DIM)
        assert np.array_equal(_small_agent(5).act(state), _small_agent(5).act(state))

    def test_actions_bounded(self, rng):
        agent = _small_agent(1, noise_init=5.0)
        for _ in range(20):
            a = agent.act(rng.normal(size=STATE_DIM) * 10, explore=True)
            assert a.shape == (6,) and np.all(np.abs(a) <= 1.0)

    def test_noise_decay(self):
        agent = _small_agent(noise_init=0.1, noise_decay=0.5, noise_decay_every=2, epoch_episodes=10)
        assert agent.exploration_noise() == pytest.approx(0.1)
        agent.episodes = 20
        assert agent.exploration_noise() == pytest.approx(0.05)
        agent.episodes = 45
        assert agent.exploration_noise() == pytest.approx(0.025)

    def test_update_requires_data(self):
        with pytest.raises(PreconditionError):
            td3_update(ReplayBuffer(16), _small_agent())

    def test_update_and_policy_delay(self, rng):
        agent = _small_agent(policy_delay=2)
        buf = ReplayBuffer(64)
        buf.extend(_transition(rng) for _ in range(32))
        first = td3_update(buf, agent)
        second = td3_update(buf, agent)
        assert first.actor_loss is None and second.actor_loss is not None
        assert np.isfinite(first.critic_loss)

    def test_checkpoint_round_trip(self, tmp_path, rng):
        agent = _small_agent(3)
        agent.episodes = 7
        path = save_agent(agent, tmp_path / "agent.pt", "abc", "push-prismatic")
        loaded, meta = load_agent(path, agent.cfg, expected_hash="abc")
        state = rng.normal(size=STATE_DIM)
        assert np.allclose(loaded.act(state), agent.act(state))
        assert loaded.episodes == 7 and meta["key"] == "push-prismatic"
        with pytest.raises(PreconditionError):
            load_agent(path, agent.cfg, expected_hash="other")


class TestTrainer:
    """Per-key trainer over a single joint family."""

    def test_mixed_joint_types_rejected(self, mixed_fleet):
        with pytest.raises(PreconditionError):
            ExplorerTrainer(mixed_fleet, "push")

    def test_collect_attaches_sample(self, drawer_fleet):
        cfg = Settings(explorer=ExplorerSettings(hidden=32, batch_size=8))
        trainer = ExplorerTrainer(drawer_fleet, "push", seed=0, cfg=cfg)
        assert trainer.key == "push-prismatic"
        ro = trainer.collect(11)
        assert ro.sample is not None
        assert ro.record.shape.object_id == ro.sample.obj.object_id
        assert ro.record.config_hash == trainer.config_hash
        assert len(ro.record.trajectory.waypoints) <= cfg.explorer.max_steps
