"""Category-level and shape-level dataset splits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from prior_engine.errors import PreconditionError
from prior_engine.explorer.tasks import group_by_category
from prior_engine.sim.shapes import ArticulatedObject

TRAIN_SHAPE = "train-cat/train-shape"
TEST_SHAPE = "train-cat/test-shape"
TEST_CATEGORY = "test-cat"
SPLIT_TAGS = (TRAIN_SHAPE, TEST_SHAPE, TEST_CATEGORY)


@dataclass
class SplitAssignment:
    tags: Dict[str, str]  # object_id -> split tag
    test_categories: List[str]

    def members(self, tag: str) -> List[str]:
        return sorted(oid for oid, t in self.tags.items() if t == tag)

    def objects(self, fleet: Sequence[ArticulatedObject], tag: str) -> List[ArticulatedObject]:
        return [o for o in fleet if self.tags.get(o.object_id) == tag]

    def counts(self) -> Dict[str, int]:
        return {tag: len(self.members(tag)) for tag in SPLIT_TAGS}


def _take(n: int, ratio: float, keep_rest: bool) -> int:
    k = int(math.ceil(ratio * n))
    if keep_rest and n >= 2:
        k = min(k, n - 1)
    return max(1, k) if n else 0


def make_splits(fleet: Sequence[ArticulatedObject], seed: int, train_shape_ratio: float = 0.75,
                test_category_ratio: float = 0.3) -> SplitAssignment:
    """Whole categories go to `test-cat`; the remaining categories split their shapes train/test."""
    groups = group_by_category(fleet)
    if len(groups) < 2:
        raise PreconditionError(f"category-level splits need at least 2 categories, got {list(groups)}")
    rng = np.random.default_rng(seed)
    keys = list(groups)
    n_test = 0 if test_category_ratio <= 0 else min(len(keys) - 1, max(1, int(round(test_category_ratio * len(keys)))))
    order = [keys[i] for i in rng.permutation(len(keys))]
    test_keys = sorted(order[:n_test])

    tags: Dict[str, str] = {}
    for key in keys:
        members = sorted(groups[key], key=lambda o: o.object_id)
        if key in test_keys:
            tags.update({o.object_id: TEST_CATEGORY for o in members})
            continue
        perm = rng.permutation(len(members))
        n_train = _take(len(members), train_shape_ratio, keep_rest=True)
        for rank, i in enumerate(perm):
            tags[members[i].object_id] = TRAIN_SHAPE if rank < n_train else TEST_SHAPE
    return SplitAssignment(tags, test_keys)
