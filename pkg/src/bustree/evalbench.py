"""Offline evaluation bench: baselines, serving-path eval, parameter sweeps.

All CSV artifacts are deterministic for a given dataset and parameter grid;
wall-clock measurements go to a separate timings file so the main artifact is
byte-stable across machines and runs.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .builder import BuildParams, BuildResult, build_tree
from .data import EngagementTable, UserClassification, UserTable, classify_users
from .scoring import HoldoutScorer, group_topk
from .synth import SynthConfig, SynthData, generate_synthetic
from .retrieval import serving_table
from .tree import BusTree


def one_hot_baseline(users: UserTable, engagements: EngagementTable,
                     classification: UserClassification, k: int,
                     binary: bool = False) -> tuple[float, int]:
    """Reward of the flat cross-product segmentation.

    Every distinct full attribute combination is its own segment with its own
    active top-k list; no gating, no merging. Returns (total reward over
    marginal users, number of observed combinations).
    """
    n = users.n_users
    if n == 0:
        return 0.0, 0
    key = np.zeros(n, dtype=np.int64)
    for j in range(len(users.schema)):
        key = key * len(users.vocabularies[j]) + users.codes[:, j]
    cells, group_of_user = np.unique(key, return_inverse=True)
    group_of_user = group_of_user.astype(np.int64)

    tu, ti, ts = engagements.training_rows()
    from_active = classification.active_mask[tu]
    table = group_topk(group_of_user[tu[from_active]], ti[from_active],
                       ts[from_active], cells.size, engagements.n_items, k)
    scorer = HoldoutScorer(engagements, classification, k, binary)
    rewards = scorer.ndcg(group_of_user, table)
    return math.fsum(rewards.tolist()), int(cells.size)


@dataclass
class HoldoutSummary:
    """Serving-path reward: every marginal user scored against the list their
    routed segment actually serves."""

    total: float
    mean: float
    n_scored: int
    by_segment_decade: dict = field(default_factory=dict)


def evaluate_tree(tree: BusTree, users: UserTable, engagements: EngagementTable,
                  classification: UserClassification, k: int,
                  binary: bool = False) -> HoldoutSummary:
    """Recompute the tree's reward through the serving path (route, resolve
    the effective list, score holdout NDCG), independently of the builder."""
    serving, table, leaf_of_user = serving_table(
        tree, users, engagements, classification, k)
    source_of_leaf = {nid: tree.node(nid).effective_source_id
                      for nid in np.unique(leaf_of_user)}
    group_of_user = np.searchsorted(
        serving, np.vectorize(source_of_leaf.get, otypes=[np.int64])(leaf_of_user))
    scorer = HoldoutScorer(engagements, classification, k, binary)
    rewards = scorer.ndcg(group_of_user, table)
    total = math.fsum(rewards.tolist())
    n_marginal = classification.n_marginal

    marginal_leaf = leaf_of_user[~classification.active_mask]
    decades: dict[str, list] = {}
    if marginal_leaf.size:
        leaf_ids, inverse = np.unique(marginal_leaf, return_inverse=True)
        per_leaf = np.bincount(inverse, weights=rewards[~classification.active_mask],
                               minlength=leaf_ids.size)
        sizes = np.array([tree.node(int(l)).active_count + tree.node(int(l)).marginal_count
                          for l in leaf_ids])
        members = np.bincount(inverse, minlength=leaf_ids.size)
        for i in range(leaf_ids.size):
            decades.setdefault(_decade(int(sizes[i])), [0.0, 0])
            decades[_decade(int(sizes[i]))][0] += per_leaf[i]
            decades[_decade(int(sizes[i]))][1] += int(members[i])
    by_decade = {d: (v[0] / v[1] if v[1] else 0.0)
                 for d, v in sorted(decades.items())}
    return HoldoutSummary(total, total / n_marginal if n_marginal else 0.0,
                          n_marginal, by_decade)


def _decade(size: int) -> str:
    if size <= 0:
        return "0"
    return f"1e{len(str(size)) - 1}"


def segment_size_histogram(tree: BusTree) -> dict:
    """Deepest-level segment count per power-of-ten size decade."""
    hist: dict[str, int] = {}
    for nid in tree.segment_ids():
        node = tree.node(nid)
        d = _decade(node.active_count + node.marginal_count)
        hist[d] = hist.get(d, 0) + 1
    return dict(sorted(hist.items()))


def n_valid_attributes(tree: BusTree) -> int:
    """Levels that kept at least one value child (i.e. did not fully regress)."""
    kept_levels = {n.level for n in tree.walk() if n.level > 0 and not n.is_regress}
    return len(kept_levels)


def planted_recovery(data: SynthData, tree: BusTree) -> bool:
    """Did the build surface the governing attributes as its top levels?"""
    governing = set(data.config.governing)
    return set(tree.levels[:len(governing)]) == governing


@dataclass
class SweepRow:
    mu: int
    omega: float
    k: int
    n_segments: int
    n_nodes: int
    n_valid_attributes: int
    build_reward: float
    serve_total: float
    serve_mean: float
    size_histogram: dict
    wall_clock: float


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)

    FIELDS = ("mu", "omega", "k", "n_segments", "n_nodes", "n_valid_attributes",
              "build_reward", "serve_total", "serve_mean", "size_histogram")

    def to_csv(self, path) -> None:
        """Deterministic artifact: wall-clock goes to the timings file instead."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.FIELDS)
            for row in self.rows:
                hist = ";".join(f"{d}={c}" for d, c in sorted(row.size_histogram.items()))
                writer.writerow([
                    row.mu, f"{row.omega:g}", row.k, row.n_segments, row.n_nodes,
                    row.n_valid_attributes, repr(row.build_reward),
                    repr(row.serve_total), repr(row.serve_mean), hist,
                ])

    def to_timings_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("mu", "omega", "k", "wall_clock_s"))
            for row in self.rows:
                writer.writerow([row.mu, f"{row.omega:g}", row.k,
                                 f"{row.wall_clock:.3f}"])


def sweep(data: SynthData, mus: Sequence[int], omegas: Sequence[float],
          k: int = 100, binary: bool = False, workers: int = 1) -> SweepReport:
    """Build one tree per (mu, omega) on a fixed dataset and summarize each."""
    classification = classify_users(data.engagements)
    report = SweepReport()
    for mu in mus:
        for omega in omegas:
            params = BuildParams(k=k, omega=omega, mu=mu, binary_relevance=binary)
            started = time.perf_counter()
            result = build_tree(data.users, data.engagements, classification,
                                params, workers=workers)
            summary = evaluate_tree(result.tree, data.users, data.engagements,
                                    classification, k, binary)
            elapsed = time.perf_counter() - started
            report.rows.append(SweepRow(
                mu=mu, omega=omega, k=k,
                n_segments=len(result.tree.segment_ids()),
                n_nodes=len(result.tree),
                n_valid_attributes=n_valid_attributes(result.tree),
                build_reward=result.final_reward,
                serve_total=summary.total,
                serve_mean=summary.mean,
                size_histogram=segment_size_histogram(result.tree),
                wall_clock=elapsed,
            ))
    return report
