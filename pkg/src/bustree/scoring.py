"""Vectorized scoring: per-group top-k behavior tables and holdout NDCG.

Everything here works on index-coded arrays and is deterministic: ranked
lists break score ties by ascending item code, and all accumulations happen
in a fixed sequential order regardless of backend or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import EngagementTable, UserClassification


def rank_discounts(k: int) -> np.ndarray:
    """Positional discounts 1/log2(rank+2) for ranks 0..k-1."""
    return 1.0 / np.log2(np.arange(k, dtype=np.float64) + 2.0)


@dataclass
class TopKTable:
    """Ranked top-k item lists for a family of groups, CSR layout.

    items/scores are in rank order per group; sorted_keys/sorted_disc hold the
    same rows keyed by group*n_items+item in ascending key order, which is the
    layout the NDCG scatter kernel consumes.
    """

    n_groups: int
    n_items: int
    k: int
    offsets: np.ndarray        # int64 [n_groups + 1]
    items: np.ndarray          # int32, rank order within group
    scores: np.ndarray         # float64, rank order within group
    sorted_keys: np.ndarray    # int64, ascending
    sorted_disc: np.ndarray    # float64, discount of each key's rank

    def group_items(self, g: int) -> np.ndarray:
        return self.items[self.offsets[g]:self.offsets[g + 1]]

    def group_scores(self, g: int) -> np.ndarray:
        return self.scores[self.offsets[g]:self.offsets[g + 1]]


def group_topk(group_of_row: np.ndarray, items: np.ndarray, scores: np.ndarray,
               n_groups: int, n_items: int, k: int) -> TopKTable:
    """Aggregate raw (group, item, score) rows and rank each group's items.

    Scores for repeated (group, item) pairs are summed; each group keeps its
    top-k items by (total desc, item asc).
    """
    group_of_row = np.asarray(group_of_row, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if group_of_row.size == 0:
        empty_off = np.zeros(n_groups + 1, dtype=np.int64)
        return TopKTable(n_groups, n_items, k, empty_off,
                         np.empty(0, np.int32), np.empty(0, np.float64),
                         np.empty(0, np.int64), np.empty(0, np.float64))
    key = group_of_row * n_items + items
    uniq, inverse = np.unique(key, return_inverse=True)
    sums = np.bincount(inverse, weights=np.asarray(scores, np.float64),
                       minlength=uniq.size)
    pair_group = uniq // n_items
    pair_item = (uniq % n_items).astype(np.int32)
    offsets = np.searchsorted(pair_group, np.arange(n_groups + 1, dtype=np.int64),
                              side="left").astype(np.int64)
    out_offsets, row_idx = kernels.select_topk(offsets, pair_item, sums, k)
    sel_items = pair_item[row_idx]
    sel_scores = sums[row_idx]
    sizes = np.diff(out_offsets)
    sel_group = np.repeat(np.arange(n_groups, dtype=np.int64), sizes)
    rank = np.arange(sel_items.size, dtype=np.int64) - np.repeat(out_offsets[:-1], sizes)
    disc = rank_discounts(k)[rank] if sel_items.size else np.empty(0, np.float64)
    sel_keys = sel_group * n_items + sel_items
    order = np.argsort(sel_keys, kind="stable")
    return TopKTable(n_groups, n_items, k, out_offsets, sel_items, sel_scores,
                     sel_keys[order], disc[order])


class HoldoutScorer:
    """NDCG@k of marginal users' holdout behavior against group top-k tables.

    Relevance is the user's actual holdout score (or 1.0 per engaged item in
    binary mode); the ideal ranking is the user's own holdout sorted by
    relevance, truncated to k. Users with zero ideal gain score 0.
    """

    def __init__(self, engagements: EngagementTable,
                 classification: UserClassification, k: int,
                 binary: bool = False):
        self.n_users = engagements.n_users
        self.n_items = engagements.n_items
        self.k = k
        self.binary = binary
        hu, hi, hs = engagements.holdout_rows()
        marginal = ~classification.active_mask[hu]
        self.q_user = np.ascontiguousarray(hu[marginal], dtype=np.int32)
        self.q_item = hi[marginal].astype(np.int64)
        rel = hs[marginal]
        if binary:
            rel = (rel > 0).astype(np.float64)
        self.q_rel = np.ascontiguousarray(rel, dtype=np.float64)
        self._inv_idcg = self._ideal_inverse()

    def _ideal_inverse(self) -> np.ndarray:
        idcg = np.zeros(self.n_users, dtype=np.float64)
        if self.q_user.size:
            order = np.lexsort((-self.q_rel, self.q_user))
            u_sorted = self.q_user[order]
            rel_sorted = self.q_rel[order]
            starts = np.searchsorted(u_sorted, u_sorted, side="left")
            rank = np.arange(u_sorted.size, dtype=np.int64) - starts
            within_k = rank < self.k
            disc = np.zeros(u_sorted.size, dtype=np.float64)
            disc[within_k] = rank_discounts(self.k)[rank[within_k]]
            idcg = np.bincount(u_sorted, weights=rel_sorted * disc,
                               minlength=self.n_users)
        out = np.zeros(self.n_users, dtype=np.float64)
        nonzero = idcg > 0
        out[nonzero] = 1.0 / idcg[nonzero]
        return out

    def ndcg(self, group_of_user: np.ndarray, table: TopKTable) -> np.ndarray:
        """Per-user NDCG under the top-k list of each user's group.

        Users mapped to a negative group (not under evaluation) score 0.
        """
        group_of_user = np.asarray(group_of_user, dtype=np.int64)
        q_group = group_of_user[self.q_user]
        q_keys = q_group * self.n_items + self.q_item
        dcg = kernels.dcg_scatter(
            np.ascontiguousarray(table.sorted_keys, np.int64),
            np.ascontiguousarray(table.sorted_disc, np.float64),
            np.ascontiguousarray(q_keys, np.int64),
            self.q_rel, self.q_user, self.n_users)
        return dcg * self._inv_idcg
