"""NumPy implementations of the two hot kernels.

Same contracts as the compiled extension; `kernels` picks one at import.
Both backends loop/accumulate in the same order so results are bit-identical.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def select_topk(group_offsets: np.ndarray, items: np.ndarray, scores: np.ndarray,
                k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-group top-k rows by (score desc, item asc).

    Rows for group g live in items/scores[group_offsets[g]:group_offsets[g+1]].
    Returns (out_offsets [G+1], row_indices) where row_indices[out_offsets[g]:
    out_offsets[g+1]] are the selected row positions in rank order.
    """
    group_offsets = np.asarray(group_offsets, dtype=np.int64)
    n_groups = group_offsets.size - 1
    n_rows = int(group_offsets[-1])
    if n_rows == 0 or k <= 0:
        return np.zeros(n_groups + 1, dtype=np.int64), np.empty(0, dtype=np.int64)
    sizes = np.diff(group_offsets)
    group_of_row = np.repeat(np.arange(n_groups, dtype=np.int64), sizes)
    order = np.lexsort((items, -scores, group_of_row))
    rank = np.arange(n_rows, dtype=np.int64) - np.repeat(group_offsets[:-1], sizes)
    keep = rank < k
    row_indices = order[keep]
    taken = np.minimum(sizes, k)
    out_offsets = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(taken, out=out_offsets[1:])
    return out_offsets, row_indices


def dcg_scatter(pred_keys: np.ndarray, pred_disc: np.ndarray,
                q_keys: np.ndarray, q_weights: np.ndarray,
                q_user: np.ndarray, n_users: int) -> np.ndarray:
    """Accumulate sum(weight * disc) per user over query rows whose key
    appears in the sorted `pred_keys`; rows with no match contribute zero."""
    out_len = max(int(n_users), 0)
    pred_keys = np.asarray(pred_keys, dtype=np.int64)
    q_keys = np.asarray(q_keys, dtype=np.int64)
    if q_keys.size == 0 or pred_keys.size == 0:
        return np.zeros(out_len, dtype=np.float64)
    pos = np.searchsorted(pred_keys, q_keys, side="left")
    pos_c = np.minimum(pos, pred_keys.size - 1)
    hit = pred_keys[pos_c] == q_keys
    contrib = np.where(hit, np.asarray(q_weights, np.float64) * pred_disc[pos_c], 0.0)
    return np.bincount(np.asarray(q_user, np.int64), weights=contrib, minlength=out_len)
