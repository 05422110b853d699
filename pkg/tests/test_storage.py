"""PLY clouds, JSON-lines stores, manifests, splits and tables."""

import json

import numpy as np
import pytest

from conftest import q_max

from prior_engine.baselines.heuristics import execute_heuristic, heuristic_drawer_push
from prior_engine.errors import DatasetError, PreconditionError
from prior_engine.perception.negatives import positive_pair, task_offset_negative
from prior_engine.schemas.task import TaskSpec
import prior_engine.storage.collect as collect
from prior_engine.config import ExplorerSettings, Settings
from prior_engine.explorer.episode import Rollout
from prior_engine.explorer.tasks import TaskSample
from prior_engine.explorer.trainer import ExplorerTrainer
from prior_engine.perception.data import CloudCache, samples_from_pairs
from prior_engine.sim.camera import frontal_view
from prior_engine.sim.render import render_pointcloud
from prior_engine.storage.collect import collect_dataset, noisy_policy
from prior_engine.storage.manifests import (
    build_manifest,
    check_provenance,
    load_manifest,
    load_manifest_pairs,
    manifest_hash,
    pair_counts,
    save_manifest,
)
from prior_engine.storage.ply import read_cloud_points, read_ply, write_ply
from prior_engine.storage.records import RecordStore, read_pairs, write_pairs
from prior_engine.storage.splits import SPLIT_TAGS, TEST_CATEGORY, TRAIN_SHAPE, make_splits
from prior_engine.storage.tables import read_rows_csv, write_rows_csv, write_run_json


@pytest.fixture(scope="module")
def pairs(drawer):
    top = q_max(drawer)
    plan = heuristic_drawer_push(drawer, TaskSpec(theta=-0.4 * top, interaction_type="push"), 0, start_q=0.5 * top)
    record = execute_heuristic(plan, config_hash="h1")
    return [positive_pair(record), task_offset_negative(record, 1)]


class TestPly:
    """PLY clouds with per-vertex attributes and comment metadata."""

    def test_round_trip(self, tmp_path, rng):
        points = rng.normal(size=(50, 3)).astype(np.float32)
        normals = rng.normal(size=(50, 3))
        mask = rng.random(50) > 0.5
        score = rng.random(50)
        rgb = rng.integers(0, 256, (50, 3)).astype(np.uint8)
        path = write_ply(tmp_path / "c.ply", points, {"normal": normals, "part_mask": mask, "score": score,
                                                       "rgb": rgb}, comments={"object_id": "drawer-cabinet-3"})
        cols = read_ply(path)
        assert np.array_equal(read_cloud_points(path), points)
        assert np.allclose(cols["nx"], normals[:, 0].astype(np.float32))
        assert cols["part_mask"].dtype == np.uint8
        assert np.array_equal(cols["part_mask"].astype(bool), mask)
        assert np.allclose(cols["score"], score.astype(np.float32))
        assert np.array_equal(cols["blue"], rgb[:, 2])
        assert cols["comments"] == {"object_id": "drawer-cabinet-3"}

    def test_row_mismatch(self, tmp_path):
        with pytest.raises(DatasetError):
            write_ply(tmp_path / "bad.ply", np.zeros((4, 3)), {"score": np.zeros(3)})

    def test_ascii_with_standard_types(self, tmp_path):
        path = tmp_path / "scan.ply"
        path.write_text(
            "ply\nformat ascii 1.0\ncomment source=scanner\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property short label\nproperty ushort count\n"
            "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0 -1 3\n1 0 0 2 4\n2 0 1\n",
            encoding="ascii",
        )
        cols = read_ply(path)
        assert cols["label"].tolist() == [-1, 2]
        assert cols["count"].tolist() == [3, 4]
        assert cols["comments"] == {"source": "scanner"}
        assert np.allclose(read_cloud_points(path), [[0, 0, 0], [1, 0, 0]])

    def test_wide_integers_and_text_output(self, tmp_path):
        ids = np.arange(5, dtype=np.int64)
        path = write_ply(tmp_path / "ids.ply", np.zeros((5, 3)), {"box_index": ids}, text=True)
        assert path.read_bytes().startswith(b"ply\nformat ascii")
        assert read_ply(path)["box_index"].tolist() == ids.tolist()

    def test_not_a_ply(self, tmp_path):
        path = tmp_path / "x.ply"
        path.write_bytes(b"hello")
        with pytest.raises(DatasetError):
            read_ply(path)


class TestRecordStore:
    """Per-worker shards merged in worker order."""

    def test_finalize_orders_by_worker(self, tmp_path, pairs):
        store = RecordStore(tmp_path, "pairs")
        store.append(pairs[1], worker=1)
        store.append(pairs[0], worker=0)
        path = store.finalize()
        merged = read_pairs(path)
        assert [p.label for p in merged] == ["positive", "negative"]
        assert not list(store.shard_dir.glob("*.jsonl"))

    def test_finalize_with_sort_key(self, tmp_path, pairs):
        store = RecordStore(tmp_path, "pairs")
        store.append(pairs[0], worker=1)
        store.append(pairs[1], worker=0)
        merged = read_pairs(store.finalize(sort_key=lambda p: p.label != "positive"))
        assert [p.label for p in merged] == ["positive", "negative"]

    def test_finalize_without_shards(self, tmp_path):
        with pytest.raises(DatasetError):
            RecordStore(tmp_path, "empty").finalize()

    def test_reset_clears_previous_run(self, tmp_path, pairs):
        store = RecordStore(tmp_path, "pairs")
        store.append(pairs[0])
        store.finalize()
        store.append(pairs[1])
        store.reset()
        assert not store.final_path.exists()
        assert not list(store.shard_dir.glob("*.jsonl"))

    def test_invalid_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"label": "positive"}\n', encoding="utf-8")
        with pytest.raises(DatasetError):
            read_pairs(path)


class TestManifests:
    """Digests, counts and provenance."""

    def test_build_save_load(self, tmp_path, pairs):
        path = write_pairs(tmp_path / "pairs.jsonl", pairs)
        manifest = build_manifest(tmp_path, [path], "train-cat/train-shape", "h1", 0)
        assert manifest.counts == {"negative": 1, "negative:task-offset": 1, "positive": 1}
        assert manifest.shards[0].path == "pairs.jsonl" and manifest.shards[0].count == 2
        saved = save_manifest(manifest, tmp_path / "manifest.json")
        loaded = load_manifest(saved)
        assert manifest_hash(loaded) == manifest_hash(manifest)
        assert len(load_manifest_pairs(loaded, tmp_path)) == 2

    def test_hash_ignores_timestamp(self, tmp_path, pairs):
        path = write_pairs(tmp_path / "pairs.jsonl", pairs)
        manifest = build_manifest(tmp_path, [path], "train-cat/train-shape", "h1", 0)
        later = manifest.model_copy(update={"created_at": "2031-01-01T00:00:00+00:00"})
        assert manifest_hash(later) == manifest_hash(manifest)
        assert manifest_hash(manifest.model_copy(update={"seed": 1})) != manifest_hash(manifest)

    def test_tampered_file(self, tmp_path, pairs):
        path = write_pairs(tmp_path / "pairs.jsonl", pairs)
        saved = save_manifest(build_manifest(tmp_path, [path], "train-cat/train-shape", "h1", 0),
                              tmp_path / "manifest.json")
        write_pairs(path, pairs[:1])
        with pytest.raises(DatasetError):
            load_manifest(saved)

    def test_mixed_hashes_rejected(self, pairs):
        other = pairs[0].model_copy(update={"record": pairs[0].record.model_copy(update={"config_hash": "h2"})})
        with pytest.raises(DatasetError):
            check_provenance([pairs[0], other])
        with pytest.raises(DatasetError):
            check_provenance(pairs, expected="h2")
        assert check_provenance(pairs) == "h1"

    def test_pair_counts(self, pairs):
        assert pair_counts(pairs * 2)["positive"] == 2


class TestSplits:
    """Category-level test split and per-category shape split."""

    def test_disjoint_and_complete(self, mixed_fleet):
        split = make_splits(mixed_fleet, 0)
        ids = {o.object_id for o in mixed_fleet}
        members = [set(split.members(tag)) for tag in SPLIT_TAGS]
        assert set().union(*members) == ids
        assert sum(len(m) for m in members) == len(ids)
        assert split.counts()[TRAIN_SHAPE] > 0

    def test_whole_categories_held_out(self, mixed_fleet):
        split = make_splits(mixed_fleet, 0)
        assert split.test_categories
        for obj in mixed_fleet:
            held_out = obj.category_key in split.test_categories
            assert (split.tags[obj.object_id] == TEST_CATEGORY) == held_out

    def test_deterministic(self, mixed_fleet):
        assert make_splits(mixed_fleet, 4).tags == make_splits(mixed_fleet, 4).tags

    def test_single_category(self, drawer_fleet):
        cabinets = [o for o in drawer_fleet if o.style == "cabinet"]
        with pytest.raises(PreconditionError):
            make_splits(cabinets, 0)


class TestTables:
    """CSV rows and run JSON."""

    def test_csv_round_trip(self, tmp_path):
        rows = [{"method": "heuristic", "fscore": 0.5}, {"method": "prior", "coverage": 80.0}]
        path = write_rows_csv(tmp_path / "m.csv", rows)
        back = read_rows_csv(path)
        assert list(back[0]) == ["method", "fscore", "coverage"]
        assert back[1] == {"method": "prior", "fscore": "", "coverage": "80.0"}

    def test_run_json_handles_numpy(self, tmp_path):
        path = write_run_json(tmp_path / "run.json", {"rate": np.float64(0.25), "ids": np.arange(3)})
        assert json.loads(path.read_text()) == {"ids": [0, 1, 2], "rate": 0.25}


def test_noisy_policy_clipped():
    policy = noisy_policy(lambda s: np.ones(6), noise=0.5, seed=0)
    action = policy(np.zeros(33))
    assert np.all(action <= 1.0) and np.all(action >= -1.0)
    assert np.array_equal(noisy_policy(lambda s: np.zeros(6), 0.0, 0)(np.zeros(33)), np.zeros(6))


@pytest.fixture
def trainer(drawer_fleet):
    return ExplorerTrainer(drawer_fleet, "push", cfg=Settings(explorer=ExplorerSettings(hidden=32)))


def _scripted_episodes(drawer, trainer, success: bool = True):
    top = q_max(drawer)
    task = TaskSpec(theta=-0.4 * top, interaction_type="push")
    plan = heuristic_drawer_push(drawer, task, 0, start_q=0.5 * top)
    view = frontal_view()
    record = execute_heuristic(plan, config_hash=trainer.config_hash)

    def fake(trainer, base, seed, i, epoch):
        rec = record.model_copy(update={
            "record_id": f"{record.record_id}-{i}", "camera": view, "cloud_seed": i,
            "success": success and record.success,
        })
        cloud = render_pointcloud(drawer, plan.start_q, view, n_points=256, seed=i)
        return Rollout(rec, [], TaskSample(drawer, view, cloud, 0, plan.contact, task, plan.start_q, i))

    return fake


class TestCollect:
    """Positives, matched negatives, PLY sidecars and the manifest."""

    def test_collect_dataset(self, tmp_path, drawer, trainer, monkeypatch):
        monkeypatch.setattr(collect, "_episode", _scripted_episodes(drawer, trainer))
        manifest = collect_dataset(trainer, n_pos=2, seed=0, root=tmp_path, workers=2)
        assert manifest.counts["positive"] == 2
        assert manifest.counts["negative"] == 2
        assert manifest.config_hash == trainer.config_hash
        assert len(list((tmp_path / "clouds").glob("*.ply"))) == 2

        loaded = load_manifest(tmp_path / "manifest-train-cat__train-shape.json")
        pairs = load_manifest_pairs(loaded, tmp_path)
        assert len(pairs) == 4
        assert all(p.record.cloud_ref for p in pairs)
        samples = samples_from_pairs(pairs, CloudCache(tmp_path))
        assert all(s.points.shape == (256, 3) for s in samples)
        assert sorted(s.label for s in samples) == [0.0, 0.0, 1.0, 1.0]

    def test_order_independent_of_workers(self, tmp_path, drawer, trainer, monkeypatch):
        monkeypatch.setattr(collect, "_episode", _scripted_episodes(drawer, trainer))
        ids = []
        for workers in (1, 3):
            root = tmp_path / f"w{workers}"
            collect_dataset(trainer, n_pos=3, seed=0, root=root, workers=workers)
            pairs = read_pairs(root / "pairs-train-cat__train-shape.jsonl")
            assert [p.label for p in pairs] == ["positive", "negative"] * 3
            ids.append([p.record.record_id for p in pairs])
        assert ids[0] == ids[1]

    def test_stalled_policy(self, tmp_path, drawer, trainer, monkeypatch):
        monkeypatch.setattr(collect, "_episode", _scripted_episodes(drawer, trainer, success=False))
        with pytest.raises(DatasetError):
            collect_dataset(trainer, n_pos=1, seed=0, root=tmp_path, workers=1)
