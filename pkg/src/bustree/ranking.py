"""Plain-Python ranking primitives: top-k behavior lists and NDCG@k.

These mirror the vectorized machinery in scoring.py one user at a time, and
are what the small-scale paths (single-segment reports, tests, CLI output)
build on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .data import HOLDOUT, TRAINING, BusError, EngagementTable, UserClassification


@dataclass(frozen=True)
class RankedList:
    """Items in rank order with their aggregate scores."""

    entries: tuple = ()

    @property
    def items(self) -> list:
        return [item for item, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def top_k_behaviors(user_ids: Iterable[str], engagements: EngagementTable,
                    k: int, window: str = TRAINING) -> RankedList:
    """Top-k items for a user set: per-item score sums over the window,
    ranked by total descending with ties broken by ascending item id."""
    if k < 0:
        raise BusError(f"k must be non-negative, got {k}")
    totals: dict[str, float] = {}
    for uid in user_ids:
        for item, score in engagements.items_of(uid, window).items():
            totals[item] = totals.get(item, 0.0) + score
    ranked = sorted(totals.items(), key=lambda e: (-e[1], e[0]))
    return RankedList(tuple(ranked[:k]))


def ndcg_at_k(predicted: Sequence[str], actual: Mapping[str, float], k: int,
              binary: bool = False) -> float:
    """NDCG@k of a predicted item ranking against a user's actual scores.

    Gains are the actual scores (1.0 per engaged item in binary mode); the
    discount at rank i (0-based) is 1/log2(i+2). Returns 0.0 when the user
    has no positive gain at all.
    """
    if k < 0:
        raise BusError(f"k must be non-negative, got {k}")

    def gain(score: float) -> float:
        return (1.0 if score > 0 else 0.0) if binary else score

    dcg = 0.0
    for i, item in enumerate(predicted[:k]):
        rel = gain(actual.get(item, 0.0))
        if rel:
            dcg += rel / math.log2(i + 2)
    ideal = sorted((gain(s) for s in actual.values()), reverse=True)[:k]
    idcg = sum(rel / math.log2(i + 2) for i, rel in enumerate(ideal) if rel)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


@dataclass
class RewardReport:
    """Reward of one user set: behaviors from its active members, NDCG
    summed over its marginal members' holdout."""

    total: float
    behaviors: RankedList
    per_user: dict = field(default_factory=dict)

    @property
    def n_scored(self) -> int:
        return len(self.per_user)


def segment_reward(member_ids: Sequence[str], engagements: EngagementTable,
                   classification: UserClassification, k: int,
                   binary: bool = False,
                   behaviors: RankedList | None = None) -> RewardReport:
    """Aggregate NDCG reward of one segment.

    The ranked list comes from the segment's active members' training window
    unless an explicit `behaviors` list is passed (used for inherited lists).
    """
    actives = [u for u in member_ids if classification.is_active(u)]
    if behaviors is None:
        behaviors = top_k_behaviors(actives, engagements, k)
    predicted = behaviors.items
    per_user: dict[str, float] = {}
    for uid in member_ids:
        if classification.is_active(uid):
            continue
        actual = engagements.items_of(uid, HOLDOUT)
        per_user[uid] = ndcg_at_k(predicted, actual, k, binary=binary)
    return RewardReport(math.fsum(per_user.values()), behaviors, per_user)
