"""Backbone, heads, losses, negatives and bundle persistence."""

import math

import numpy as np
import pytest
import torch

from conftest import q_max

from prior_engine.baselines.heuristics import execute_heuristic, heuristic_drawer_push
from prior_engine.compute.trajectory import TRAJ_DIM, deserialize_trajectory, serialize_trajectory
from prior_engine.config import ExplorerSettings, PerceptionSettings, Settings, SimSettings
from prior_engine.errors import DatasetError, PreconditionError
from prior_engine.explorer.trainer import ExplorerTrainer
from prior_engine.perception.bundle import (
    PerceptionBundle,
    decode_proposals,
    encode_pointcloud,
    predict_actionability,
    propose_trajectories,
    sample_contact,
    score_trajectory,
)
from prior_engine.perception.curiosity import joint_curiosity_finetune, stratified_positives
from prior_engine.perception.data import CloudCache, PerceptionSample, collate, sample_from_record
from prior_engine.perception.losses import (
    actionability_target,
    kl_divergence,
    kl_weight,
    position_l1,
    rotation_6d_loss,
    scorer_bce,
)
from prior_engine.perception.negatives import (
    generate_negative,
    grasp_failure_negative,
    offset_range,
    positive_pair,
    task_offset_negative,
)
from prior_engine.perception.networks import LATENT_DIM, ProposalNet, ScorerNet
from prior_engine.perception.pointnet import PointNet2Seg
from prior_engine.perception.training import (
    balanced_batches,
    finetune_all,
    train_actionability,
    train_bundle,
    train_proposal,
    train_scorer,
    with_random_points,
)
from prior_engine.schemas.task import TaskSpec
from prior_engine.sim.engine import check_success
from prior_engine.utils.seeding import torch_generator


@pytest.fixture(scope="module")
def success_record(drawer):
    top = q_max(drawer)
    plan = heuristic_drawer_push(drawer, TaskSpec(theta=-0.4 * top, interaction_type="push"), 0, start_q=0.5 * top)
    record = execute_heuristic(plan)
    assert record.success
    return record


def _samples(n_pos: int, n_neg: int, n_points: int = 64, seed: int = 0):
    rng = np.random.default_rng(seed)
    points = rng.uniform(-0.5, 0.5, (n_points, 3)).astype(np.float32)
    out = []
    for i in range(n_pos + n_neg):
        label = 1.0 if i < n_pos else 0.0
        traj = np.zeros(TRAJ_DIM, dtype=np.float32)
        traj[:3] = points[i % n_points]
        traj[6] = -0.05 if label else 0.05
        out.append(PerceptionSample(points, i % n_points, -0.3, traj, label))
    return out


class TestPointNet:
    """Per-point backbone."""

    def test_output_shape(self):
        torch.manual_seed(0)
        net = PointNet2Seg()
        out = net(torch.rand(2, 128, 3))
        assert out.shape == (2, 128, 128)

    def test_permutation_equivariant(self):
        torch.manual_seed(0)
        net = PointNet2Seg().eval()
        pts = torch.rand(1, 200, 3)
        perm = torch.randperm(200)
        with torch.no_grad():
            base = net(pts)[0]
            shuffled = net(pts[:, perm])[0]
        assert torch.allclose(base[perm], shuffled, atol=1e-4)

    def test_too_few_points(self):
        with pytest.raises(PreconditionError):
            PointNet2Seg()(torch.rand(1, 63, 3))

    def test_wrong_shape(self):
        with pytest.raises(PreconditionError):
            PointNet2Seg()(torch.rand(1, 100, 4))

    def test_configured_minimum(self, rng):
        with pytest.raises(PreconditionError):
            PointNet2Seg(min_points=128)(torch.rand(1, 100, 3))
        with pytest.raises(PreconditionError):
            PointNet2Seg(min_points=32)
        bundle = PerceptionBundle(seed=0, cfg=PerceptionSettings(min_points=128)).eval()
        with pytest.raises(PreconditionError):
            bundle.actionability_map(rng.uniform(-0.5, 0.5, (100, 3)).astype(np.float32), -0.3)
        assert bundle.actionability_map(rng.uniform(-0.5, 0.5, (128, 3)).astype(np.float32), -0.3).shape == (128,)


class TestLosses:
    """KL schedule, scorer BCE and trajectory terms."""

    def test_kl_non_negative(self):
        torch.manual_seed(1)
        mu, logvar = torch.randn(16, LATENT_DIM), torch.randn(16, LATENT_DIM)
        assert kl_divergence(mu, logvar).item() >= 0.0
        assert kl_divergence(torch.zeros(4, 8), torch.zeros(4, 8)).item() == pytest.approx(0.0)

    def test_kl_warmup(self):
        assert kl_weight(0, 100, 1.0, 0.1) == pytest.approx(0.1)
        assert kl_weight(4, 100, 1.0, 0.1) == pytest.approx(0.5)
        assert kl_weight(9, 100, 1.0, 0.1) == pytest.approx(1.0)
        assert kl_weight(50, 100, 2.0, 0.1) == pytest.approx(2.0)
        assert kl_weight(0, 100, 1.0, 0.0) == pytest.approx(1.0)

    def test_actionability_target_mean_of_top_k(self):
        scores = torch.tensor([[0.1, 0.9, 0.5, 0.7, 0.6, 0.8, 0.2]])
        assert actionability_target(scores, 5).item() == pytest.approx(0.7)
        assert actionability_target(scores, 1).item() == pytest.approx(0.9)
        assert actionability_target(torch.ones(1, 3), 5).item() == pytest.approx(1.0)

    def test_scorer_bce_gradients(self):
        logits = torch.randn(6, dtype=torch.float64, requires_grad=True)
        labels = torch.tensor([1.0, 0.0, 1.0, 0.0, 1.0, 0.0], dtype=torch.float64)
        assert torch.autograd.gradcheck(lambda x: scorer_bce(x, labels), (logits,))

    def test_trajectory_terms_zero_on_match(self):
        traj = torch.randn(3, TRAJ_DIM) * 0.1
        assert position_l1(traj, traj).item() == 0.0
        assert rotation_6d_loss(traj, traj).item() == pytest.approx(0.0, abs=1e-7)
        other = traj.clone()
        other[:, 3] += 0.3
        assert rotation_6d_loss(other, traj).item() > 0.0


class TestProposals:
    """Decoding from the latent prior."""

    def test_decode_seeded(self):
        torch.manual_seed(0)
        net = ProposalNet().eval()
        pts = torch.rand(1, 64, 3)
        idx = torch.tensor([3])
        feats = net.cond(pts, idx, pts[0, idx], torch.tensor([-0.3]))
        a = decode_proposals(net, feats, 4, seed=7)
        b = decode_proposals(net, feats, 4, seed=7)
        c = decode_proposals(net, feats, 4, seed=8)
        assert a.shape == (4, TRAJ_DIM)
        assert torch.equal(a, b)
        assert not torch.equal(a, c)


class TestNegatives:
    """Offset ranges and negative pair construction."""

    def test_offset_range_revolute(self):
        lo, hi = offset_range(math.radians(30), "revolute")
        assert lo == pytest.approx(math.radians(3))
        assert hi == pytest.approx(math.radians(45))

    def test_offset_range_prismatic(self):
        assert offset_range(0.5, "prismatic") == pytest.approx((0.05, 0.45))
        with pytest.raises(DatasetError):
            offset_range(5.0, "prismatic")

    def test_task_offset_negative(self, success_record):
        pair = task_offset_negative(success_record, 3)
        neg = pair.record
        assert pair.label == "negative" and pair.negative_kind == "task-offset"
        assert neg.trajectory == success_record.trajectory
        assert neg.achieved == success_record.achieved
        assert not neg.success
        assert not check_success(neg.task, neg.achieved)
        lo, hi = offset_range(success_record.task.theta, "prismatic")
        assert lo - 1e-9 <= abs(neg.task.theta - success_record.task.theta) <= hi + 1e-9
        assert neg.record_id != success_record.record_id

    def test_offsets_inside_tolerance_rejected(self, success_record):
        exact = success_record.model_copy(update={"achieved": success_record.task.theta})
        cfg = PerceptionSettings(prismatic_offset_cap=1e-4, offset_floor_frac=0.0)
        with pytest.raises(DatasetError):
            task_offset_negative(exact, 0, cfg)

    def test_offset_needs_success(self, success_record):
        failed = success_record.model_copy(update={"success": False})
        with pytest.raises(PreconditionError):
            task_offset_negative(failed, 0)
        with pytest.raises(PreconditionError):
            positive_pair(failed)

    def test_grasp_failure_negative(self, success_record):
        failure = success_record.model_copy(update={"grasp_failed": True, "success": False})
        pair = grasp_failure_negative(failure)
        assert pair.negative_kind == "grasp-failure" and not pair.record.success
        with pytest.raises(PreconditionError):
            grasp_failure_negative(success_record)

    def test_push_draws_offset_only(self, success_record):
        failure = success_record.model_copy(update={"grasp_failed": True, "success": False})
        cfg = PerceptionSettings(grasp_failure_ratio=1.0)
        pair = generate_negative(success_record, 0, [failure], cfg)
        assert pair.negative_kind == "task-offset"

    def test_pull_can_draw_grasp_failure(self, success_record):
        pull = success_record.model_copy(update={"task": TaskSpec(theta=0.2, interaction_type="pull")})
        failure = pull.model_copy(update={"grasp_failed": True, "success": False})
        cfg = PerceptionSettings(grasp_failure_ratio=1.0)
        assert generate_negative(pull, 0, [failure], cfg).negative_kind == "grasp-failure"


class TestSamples:
    """Records to tensors."""

    def test_sample_from_record(self, success_record, rng):
        points = rng.uniform(-0.5, 0.5, (100, 3)).astype(np.float32)
        points[42] = success_record.contact.point
        sample = sample_from_record(success_record, points, 1.0)
        assert sample.point_index == 42
        assert sample.trajectory.shape == (TRAJ_DIM,)
        assert sample.theta == pytest.approx(success_record.task.theta)

    def test_cloud_cache_needs_a_source(self, success_record):
        with pytest.raises(DatasetError):
            CloudCache().points(success_record)

    def test_collate(self):
        batch = collate(_samples(3, 2))
        assert batch["points"].shape == (5, 64, 3)
        assert batch["traj"].shape == (5, TRAJ_DIM)
        assert torch.equal(batch["contact"][1], batch["points"][1, 1])
        assert batch["label"].tolist() == [1.0, 1.0, 1.0, 0.0, 0.0]


class TestBatching:
    """Class-balanced scorer batches and curiosity strata."""

    def test_balanced_batches(self, rng):
        labels = np.array([1.0] * 20 + [0.0] * 12)
        batches = balanced_batches(labels, 8, rng)
        assert len(batches) == 5
        for idx in batches:
            assert (labels[idx] > 0.5).sum() == 4
            assert (labels[idx] <= 0.5).sum() == 4

    def test_single_class_rejected(self, rng):
        with pytest.raises(DatasetError):
            balanced_batches(np.ones(10), 4, rng)

    def test_stratified_positives(self):
        chosen = stratified_positives(np.array([0.9, 0.8, 0.7, 0.2]), 0)
        assert len(chosen) == 2
        assert 3 in chosen

    def test_empty_stratum_returns_everything(self):
        assert stratified_positives(np.array([0.9, 0.8, 0.6]), 0).tolist() == [0, 1, 2]


class TestBundle:
    """Persistence and contact selection."""

    def test_save_load(self, tmp_path, rng):
        bundle = PerceptionBundle("push-prismatic", seed=2, config_hash="abc")
        points = rng.uniform(-0.5, 0.5, (64, 3)).astype(np.float32)
        traj = deserialize_trajectory(_samples(1, 0)[0].trajectory.astype(np.float64), "push")
        before = bundle.eval().score_trajectories(points, 5, -0.3, [traj])
        path = bundle.save(tmp_path / "bundle.pt")
        loaded = PerceptionBundle.load(path, expected_hash="abc")
        assert loaded.key == "push-prismatic"
        assert np.allclose(loaded.score_trajectories(points, 5, -0.3, [traj]), before, atol=1e-6)
        assert loaded.actionability_map(points, -0.3).shape == (64,)
        with pytest.raises(PreconditionError):
            PerceptionBundle.load(path, expected_hash="xyz")

    def test_trajectory_score_map(self, rng):
        bundle = PerceptionBundle(seed=3).eval()
        points = rng.uniform(-0.5, 0.5, (96, 3)).astype(np.float32)
        traj = deserialize_trajectory(_samples(1, 0)[0].trajectory.astype(np.float64), "push")
        scores = bundle.trajectory_score_map(points, -0.3, traj, anchor=10)
        assert scores.shape == (96,)
        assert np.all((scores >= 0.0) & (scores <= 1.0))
        at_anchor = bundle.score_trajectories(points, 10, -0.3, [traj])[0]
        assert float(scores[10]) == pytest.approx(float(at_anchor), abs=1e-5)

    def test_seeded_initialisation(self):
        before = torch.get_rng_state()
        a = PerceptionBundle(seed=5)
        b = PerceptionBundle(seed=5)
        c = PerceptionBundle(seed=6)
        assert torch.equal(torch.get_rng_state(), before)
        for p, q in zip(a.scorer.parameters(), b.scorer.parameters()):
            assert torch.equal(p, q)
        assert not all(torch.equal(p, q) for p, q in zip(a.scorer.parameters(), c.scorer.parameters()))
        assert torch.equal(torch.randn(4, generator=torch_generator(3)), torch.randn(4, generator=torch_generator(3)))

    def test_sample_contact(self):
        scores = np.array([0.1, 0.9, 0.4, 0.8])
        assert sample_contact(scores) == 1
        assert sample_contact(scores, mask=np.array([True, False, True, True])) == 3
        assert sample_contact(scores, "proportional", 5) == sample_contact(scores, "proportional", 5)
        with pytest.raises(PreconditionError):
            sample_contact(scores, mask=np.zeros(4, dtype=bool))
        with pytest.raises(ValueError):
            sample_contact(scores, "softmax")


class TestInference:
    """Head-level inference against the bundle's cloud API."""

    def test_encode_pointcloud(self, rng):
        torch.manual_seed(0)
        feats = encode_pointcloud(PointNet2Seg().eval(), rng.uniform(-0.5, 0.5, (80, 3)))
        assert feats.shape == (80, 128)

    def test_heads_match_bundle(self, rng):
        bundle = PerceptionBundle(seed=1).eval()
        points = rng.uniform(-0.5, 0.5, (64, 3)).astype(np.float32)
        pts = torch.from_numpy(points).unsqueeze(0)
        idx = torch.tensor([7])
        theta = torch.tensor([-0.3])
        vec = _samples(1, 0)[0].trajectory
        with torch.no_grad():
            a = predict_actionability(bundle.actionability, bundle.actionability.cond(pts, idx, pts[0, idx], theta))
            s = score_trajectory(bundle.scorer, bundle.scorer.cond(pts, idx, pts[0, idx], theta),
                                 torch.from_numpy(vec).unsqueeze(0))
            p_feats = bundle.proposal.cond(pts, idx, pts[0, idx], theta)
        assert a.shape == (1,) and 0.0 <= float(a) <= 1.0
        assert float(a) == pytest.approx(float(bundle.actionability_map(points, -0.3)[7]), abs=1e-5)
        traj = deserialize_trajectory(vec.astype(np.float64), "push")
        assert float(s) == pytest.approx(float(bundle.score_trajectories(points, 7, -0.3, [traj])[0]), abs=1e-5)

        proposals = propose_trajectories(bundle.proposal, p_feats, 3, seed=4, interaction_type="push")
        assert len(proposals) == 3
        assert all(t.interaction_type == "push" for t in proposals)
        via_bundle = bundle.propose(points, 7, -0.3, 3, 4)
        for a_t, b_t in zip(proposals, via_bundle):
            assert np.allclose(serialize_trajectory(a_t), serialize_trajectory(b_t), atol=1e-6)


class TestTrainingLoops:
    """Proposal and actionability epochs, and the configured training order."""

    @staticmethod
    def _cfg(**overrides) -> PerceptionSettings:
        base = dict(batch_size=8, proposals_per_point=4, top_k=2, scorer_epochs=1, proposal_epochs=1,
                    actionability_epochs=1)
        return PerceptionSettings(**{**base, **overrides})

    def test_proposal_needs_positives(self):
        with pytest.raises(DatasetError):
            train_proposal(ProposalNet(), [], 1, self._cfg())
        with pytest.raises(DatasetError):
            train_proposal(ProposalNet(), _samples(2, 1), 1, self._cfg())

    def test_proposal_logs_terms(self):
        torch.manual_seed(0)
        logs = train_proposal(ProposalNet(), _samples(6, 0), 2, self._cfg(batch_size=4), seed=0)
        assert [e.epoch for e in logs] == [0, 1]
        assert set(logs[0].terms) == {"l1", "rot6d", "kl", "beta"}
        assert all(math.isfinite(e.loss) for e in logs)

    def test_actionability_loss_bounded(self):
        bundle = PerceptionBundle(seed=0)
        logs = train_actionability(bundle.actionability, _samples(2, 2), bundle.proposal, bundle.scorer, 1,
                                   self._cfg())
        assert len(logs) == 1
        assert 0.0 <= logs[0].loss <= 1.0

    def test_training_order(self):
        staged = train_bundle(PerceptionBundle(seed=0), _samples(2, 2), seed=0, cfg=self._cfg())
        assert [e.head for e in staged] == ["scorer", "proposal", "actionability"]
        joint = train_bundle(PerceptionBundle(seed=0), _samples(2, 2), seed=0,
                             cfg=self._cfg(training_order="scorer-joint"))
        assert [e.head for e in joint] == ["scorer", "scorer", "proposal", "actionability"]

    def test_finetune_all_moves_every_head(self):
        torch.manual_seed(0)
        bundle = PerceptionBundle(seed=0)
        heads = {"scorer": bundle.scorer, "proposal": bundle.proposal, "actionability": bundle.actionability}
        before = {name: [p.detach().clone() for p in net.parameters()] for name, net in heads.items()}
        logs = finetune_all(bundle, _samples(2, 2), epochs=2, seed=0, cfg=self._cfg(finetune_epochs=2))
        assert [e.head for e in logs] == ["scorer", "proposal", "actionability"] * 2
        assert [e.epoch for e in logs] == [0, 0, 0, 1, 1, 1]
        assert set(logs[1].terms) == {"l1", "rot6d", "kl", "beta"}
        for name, net in heads.items():
            assert not net.training
            assert any(not torch.equal(p, q) for p, q in zip(net.parameters(), before[name])), name

    def test_random_points_extend_the_pool(self):
        samples = _samples(3, 1, n_points=80)
        pool = with_random_points(samples, np.random.default_rng(0))
        assert len(pool) == 8
        assert all(a is b for a, b in zip(pool[:4], samples))
        for orig, extra in zip(samples, pool[4:]):
            assert extra.points is orig.points
            assert extra.theta == orig.theta and extra.label == orig.label
            assert np.array_equal(extra.trajectory, orig.trajectory)
            assert 0 <= extra.point_index < 80
        again = with_random_points(samples, np.random.default_rng(0))
        assert [s.point_index for s in again] == [s.point_index for s in pool]


def test_curiosity_schedule_alternates(drawer_fleet):
    cfg = Settings(explorer=ExplorerSettings(hidden=32, batch_size=8), sim=SimSettings(n_points=256))
    trainer = ExplorerTrainer(drawer_fleet, "push", seed=0, cfg=cfg)
    bundle = PerceptionBundle(trainer.key, seed=0, config_hash=trainer.config_hash).eval()
    report = joint_curiosity_finetune(trainer, bundle, epochs=2, episodes_per_epoch=2,
                                      cache=CloudCache(sim_cfg=cfg.sim), seed=0)
    assert [e.phase for e in report.epochs] == ["rl", "perception"]
    assert report.epochs[0].episodes == 2
    assert len(report.records) == report.epochs[0].new_positives
    assert trainer.agent.episodes == 2
    assert trainer.curiosity_factory is None


@pytest.mark.slow
def test_scorer_overfits_tiny_set():
    torch.manual_seed(0)
    net = ScorerNet()
    samples = _samples(4, 4)
    logs = train_scorer(net, samples, epochs=60, cfg=PerceptionSettings(lr=1e-3, batch_size=8), seed=0)
    assert logs[-1].loss < 0.5 * logs[0].loss
