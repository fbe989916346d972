"""Greedy tree construction.

Levels are added one attribute type at a time. For every candidate type the
builder stages a child per (leaf, observed value), aggregates the staged
children's own behavior lists from their active members' training rows, and
scores every marginal user's holdout against the list they would be served.
A staged child is kept only when its own reward clears omega times the reward
its users already get from the parent's effective list AND it has at least mu
active members; the rejected siblings of one parent merge into a single
REGRESS child that keeps serving the parent's effective list. The type whose
post-merge level total is highest wins the level (ties go to the
lexicographically smaller name).

With omega >= 1.0 the level total can never decrease: kept children clear
their inherited reward by the gate itself, and REGRESS children keep it
unchanged. The builder asserts both the per-node and the aggregate form of
that invariant after every level.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import (BusError, EngagementTable, UserClassification, UserTable,
                   classify_users)
from .scoring import HoldoutScorer, group_topk
from .tree import REGRESS, BusTree


class BuildError(BusError):
    """Construction could not proceed or produced an inconsistent state."""


@dataclass(frozen=True)
class BuildParams:
    """Construction knobs.

    k: length of every behavior list.
    omega: reward-ratio gate; a staged child must earn at least omega times
        its inherited reward to survive. Values below 1.0 allow regressions
        in reward and void the monotonicity guarantee.
    mu: minimum active members a staged child needs to survive.
    binary_relevance: score holdout items as hit/miss instead of graded.
    """

    k: int = 100
    omega: float = 1.0
    mu: int = 250
    binary_relevance: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise BuildError(f"k must be at least 1, got {self.k}")
        if self.omega < 0:
            raise BuildError(f"omega must be non-negative, got {self.omega}")
        if self.mu < 0:
            raise BuildError(f"mu must be non-negative, got {self.mu}")


@dataclass(frozen=True)
class StagingReport:
    """One staged child considered while splitting a level."""

    parent_id: int
    attribute_value: str
    active_count: int
    marginal_count: int
    own_reward: float
    inherited_reward: float
    kept: bool


@dataclass
class LevelRecord:
    """What happened at one level: every candidate's post-merge total, the
    winner, and the per-staged-child verdicts for the winner."""

    level: int
    chosen: str
    candidate_totals: dict
    staging: list
    total_reward: float
    n_kept: int
    n_regressed: int


@dataclass
class _Evaluation:
    name: str
    total: float
    card: int
    present: np.ndarray          # leaf_pos * card + value_code, ascending
    group_of_user: np.ndarray
    own_r: np.ndarray
    own_sums: np.ndarray
    inherited_sums: np.ndarray
    active_counts: np.ndarray
    marginal_counts: np.ndarray
    keep: np.ndarray


@dataclass
class BuildResult:
    tree: BusTree
    records: list
    params: BuildParams
    classification: UserClassification
    root_reward: float
    final_reward: float


class TreeBuilder:
    """Stateful construction: one `step()` per level, or `run()` to the end."""

    def __init__(self, users: UserTable, engagements: EngagementTable,
                 classification: Optional[UserClassification] = None,
                 params: BuildParams = BuildParams(),
                 attribute_order: Optional[Sequence[str]] = None,
                 workers: int = 1):
        if engagements.users is not users:
            raise BuildError("engagement table was built against a different user table")
        self.users = users
        self.engagements = engagements
        self.classification = classification or classify_users(engagements)
        self.params = params
        self.attribute_order = list(attribute_order) if attribute_order else None
        self.workers = max(int(workers), 1)
        if self.attribute_order is not None:
            unknown = [n for n in self.attribute_order if n not in users.schema]
            if unknown:
                raise BuildError(f"attribute_order names unknown types: {unknown}")
            if len(set(self.attribute_order)) != len(self.attribute_order):
                raise BuildError("attribute_order repeats a type")

        self.scorer = HoldoutScorer(engagements, self.classification,
                                    params.k, params.binary_relevance)
        tu, ti, ts = engagements.training_rows()
        from_active = self.classification.active_mask[tu]
        self._tr_user = tu[from_active]
        self._tr_item = ti[from_active]
        self._tr_score = ts[from_active]

        self.tree = BusTree([])
        self.tree.params = asdict(params)
        self.records: list[LevelRecord] = []
        self.used: set[str] = set()
        n = users.n_users
        self.leaf_of_user = np.zeros(n, dtype=np.int64)
        self._leaf_ids = np.zeros(1, dtype=np.int64)

        root_table = group_topk(np.zeros(self._tr_user.size, np.int64),
                                self._tr_item, self._tr_score,
                                1, engagements.n_items, params.k)
        self.r_u = self.scorer.ndcg(np.zeros(n, dtype=np.int64), root_table)
        self.root_reward = math.fsum(self.r_u.tolist())
        self.tree.add_root(self.classification.n_active,
                           self.classification.n_marginal, self.root_reward)

    # -- candidate evaluation ----------------------------------------------

    def eligible(self) -> list[str]:
        """Unused types whose prerequisites all sit at shallower levels."""
        schema = self.users.schema
        out = []
        for t in schema:
            if t.name in self.used:
                continue
            if all(p in self.used for p in t.prerequisites):
                out.append(t.name)
        return sorted(out)

    def evaluate_attribute(self, name: str) -> _Evaluation:
        """Stage every (leaf, value) child for one candidate type and score it."""
        users, params = self.users, self.params
        j = users.schema.index_of(name)
        codes = users.codes[:, j].astype(np.int64)
        card = len(users.vocabularies[j])
        raw = self.leaf_of_user * card + codes
        n = users.n_users
        dense_size = self._leaf_ids.size * card
        if dense_size <= 4 * n + 16:
            counts = np.bincount(raw, minlength=dense_size)
            present = np.flatnonzero(counts).astype(np.int64)
            group_of_user = np.searchsorted(present, raw).astype(np.int64)
        else:
            present, inverse = np.unique(raw, return_inverse=True)
            group_of_user = inverse.astype(np.int64)
        n_groups = present.size

        table = group_topk(group_of_user[self._tr_user], self._tr_item,
                           self._tr_score, n_groups, self.engagements.n_items,
                           params.k)
        own_r = self.scorer.ndcg(group_of_user, table)
        own_sums = np.bincount(group_of_user, weights=own_r, minlength=n_groups)
        inherited_sums = np.bincount(group_of_user, weights=self.r_u,
                                     minlength=n_groups)
        amask = self.classification.active_mask
        active_counts = np.bincount(group_of_user[amask], minlength=n_groups)
        marginal_counts = np.bincount(group_of_user[~amask], minlength=n_groups)
        keep = (own_sums >= params.omega * inherited_sums) & (active_counts >= params.mu)
        total = math.fsum(np.where(keep, own_sums, inherited_sums).tolist())
        return _Evaluation(name, total, card, present, group_of_user, own_r,
                           own_sums, inherited_sums, active_counts,
                           marginal_counts, keep)

    # -- level application ---------------------------------------------------

    def step(self) -> Optional[LevelRecord]:
        """Evaluate candidates, apply the winning split, return its record.

        Returns None when no further level can be added.
        """
        candidates = self.eligible()
        if self.attribute_order is not None:
            level = len(self.tree.levels)
            if level >= len(self.attribute_order):
                return None
            forced = self.attribute_order[level]
            if forced not in candidates:
                raise BuildError(
                    f"attribute_order places {forced!r} at level {level + 1} but its "
                    f"prerequisites are not satisfied there")
            candidates = [forced]
        if not candidates:
            return None

        if self.workers > 1 and len(candidates) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                evals = list(pool.map(self.evaluate_attribute, candidates))
        else:
            evals = [self.evaluate_attribute(name) for name in candidates]

        best = evals[0]
        for ev in evals[1:]:
            if ev.total > best.total:  # candidates are name-ascending; first wins ties
                best = ev
        record = self._apply(best, {ev.name: ev.total for ev in evals})
        self.records.append(record)
        return record

    def _apply(self, ev: _Evaluation, candidate_totals: dict) -> LevelRecord:
        params = self.params
        level = len(self.tree.levels) + 1
        self.tree.levels.append(ev.name)
        self.used.add(ev.name)
        vocab = self.users.vocabularies[self.users.schema.index_of(ev.name)]

        leaf_pos = ev.present // ev.card
        value_code = ev.present % ev.card
        own = ev.own_sums
        inherited = ev.inherited_sums

        if params.omega >= 1.0:
            kept_drop = ev.keep & (own < inherited)
            if kept_drop.any():
                raise BuildError("kept child fell below its inherited reward "
                                 "with omega >= 1.0")
            before = math.fsum(inherited.tolist())
            if ev.total < before:
                raise BuildError("level total decreased with omega >= 1.0")

        staging: list[StagingReport] = []
        group_to_new = np.empty(ev.present.size, dtype=np.int64)
        new_leaf_ids: list[int] = []
        n_kept = n_regressed = 0
        # ev.present is ascending, so one leaf's staged children are contiguous
        uniq_pos, first = np.unique(leaf_pos, return_index=True)
        bounds = np.append(first, leaf_pos.size)
        for p, pos in enumerate(uniq_pos):
            parent_id = int(self._leaf_ids[pos])
            in_leaf = range(int(bounds[p]), int(bounds[p + 1]))
            regressed = []
            for g in in_leaf:
                g = int(g)
                value = vocab[int(value_code[g])]
                kept = bool(ev.keep[g])
                staging.append(StagingReport(
                    parent_id, value, int(ev.active_counts[g]),
                    int(ev.marginal_counts[g]), float(own[g]),
                    float(inherited[g]), kept))
                if kept:
                    node = self.tree.add_child(
                        parent_id, value, int(ev.active_counts[g]),
                        int(ev.marginal_counts[g]), float(own[g]))
                    group_to_new[g] = len(new_leaf_ids)
                    new_leaf_ids.append(node.node_id)
                    n_kept += 1
                else:
                    regressed.append(g)
            if regressed:
                node = self.tree.add_child(
                    parent_id, REGRESS,
                    int(ev.active_counts[regressed].sum()),
                    int(ev.marginal_counts[regressed].sum()),
                    math.fsum(inherited[regressed].tolist()))
                regress_pos = len(new_leaf_ids)
                new_leaf_ids.append(node.node_id)
                for g in regressed:
                    group_to_new[g] = regress_pos
                n_regressed += len(regressed)

        keep_user = ev.keep[ev.group_of_user]
        self.r_u = np.where(keep_user, ev.own_r, self.r_u)
        self.leaf_of_user = group_to_new[ev.group_of_user]
        self._leaf_ids = np.asarray(new_leaf_ids, dtype=np.int64)

        return LevelRecord(level, ev.name, candidate_totals, staging,
                           math.fsum(self.r_u.tolist()), n_kept, n_regressed)

    def run(self) -> BuildResult:
        while self.step() is not None:
            pass
        if self.attribute_order is None:
            unused = sorted(set(self.users.schema.names) - self.used)
            if unused:
                raise BuildError(
                    f"attribute types {unused} can never become eligible; "
                    f"their prerequisites are unsatisfiable")
        self.tree.validate()
        return BuildResult(self.tree, self.records, self.params,
                           self.classification, self.root_reward,
                           math.fsum(self.r_u.tolist()))


def build_tree(users: UserTable, engagements: EngagementTable,
               classification: Optional[UserClassification] = None,
               params: BuildParams = BuildParams(),
               attribute_order: Optional[Sequence[str]] = None,
               workers: int = 1) -> BuildResult:
    """Build a full tree in one call; see TreeBuilder for the mechanics."""
    builder = TreeBuilder(users, engagements, classification, params,
                          attribute_order, workers)
    return builder.run()
