"""Dataset manifests: file digests, label/kind counts and provenance checks."""
from __future__ import annotations

import logging
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence

from prior_engine.errors import DatasetError
from prior_engine.schemas.manifest import MANIFEST_VERSION, DatasetManifest, ManifestEntry
from prior_engine.schemas.records import TrainingPair
from prior_engine.storage.records import read_pairs
from prior_engine.utils.hashing import sha256_file, sha256_inputs

log = logging.getLogger("prior_engine.datakit")


def pair_counts(pairs: Sequence[TrainingPair]) -> dict:
    counts = Counter()
    for p in pairs:
        counts[p.label] += 1
        if p.label == "negative":
            counts[f"negative:{p.negative_kind}"] += 1
    return dict(sorted(counts.items()))


def check_provenance(pairs: Sequence[TrainingPair], expected: Optional[str] = None) -> str:
    """The single config hash shared by every record; mixed hashes are rejected."""
    hashes = {p.record.config_hash for p in pairs}
    if len(hashes) > 1:
        raise DatasetError(f"records carry mixed config hashes: {sorted(hashes)}")
    found = hashes.pop() if hashes else (expected or "")
    if expected is not None and found != expected:
        raise DatasetError(f"records were generated under config {found}, expected {expected}")
    return found


def build_manifest(root: str | Path, files: Sequence[str | Path], split: str, config_hash: str,
                   seed: int) -> DatasetManifest:
    root = Path(root)
    entries: List[ManifestEntry] = []
    pairs: List[TrainingPair] = []
    for f in files:
        path = Path(f)
        chunk = read_pairs(path)
        entries.append(ManifestEntry(path=path.relative_to(root).as_posix(), count=len(chunk),
                                     sha256=sha256_file(str(path))))
        pairs.extend(chunk)
    check_provenance(pairs, config_hash)
    return DatasetManifest(
        version=MANIFEST_VERSION,
        split=split,
        config_hash=config_hash,
        seed=seed,
        shards=entries,
        counts=pair_counts(pairs),
        object_ids=sorted({p.record.object_id for p in pairs}),
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def manifest_hash(manifest: DatasetManifest) -> str:
    """Content hash; the creation timestamp does not take part."""
    return sha256_inputs(manifest.model_dump(mode="json", exclude={"created_at"}))


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    log.info("manifest_saved path=%s split=%s counts=%s config_hash=%s",
             path, manifest.split, manifest.counts, manifest.config_hash)
    return path


def load_manifest(path: str | Path, verify: bool = True) -> DatasetManifest:
    path = Path(path)
    manifest = DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))
    if manifest.version != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest version {manifest.version}")
    if verify:
        load_manifest_pairs(manifest, path.parent)
    return manifest


def load_manifest_pairs(manifest: DatasetManifest, root: str | Path) -> List[TrainingPair]:
    """All pairs of a manifest, after digest, count and provenance checks."""
    root = Path(root)
    pairs: List[TrainingPair] = []
    for entry in manifest.shards:
        path = root / entry.path
        if not path.exists():
            raise DatasetError(f"manifest file missing: {path}")
        if sha256_file(str(path)) != entry.sha256:
            raise DatasetError(f"digest mismatch for {path}")
        chunk = read_pairs(path)
        if len(chunk) != entry.count:
            raise DatasetError(f"{path} holds {len(chunk)} records, manifest says {entry.count}")
        pairs.extend(chunk)
    check_provenance(pairs, manifest.config_hash)
    if pair_counts(pairs) != manifest.counts:
        raise DatasetError(f"label counts {pair_counts(pairs)} do not match manifest {manifest.counts}")
    return pairs
