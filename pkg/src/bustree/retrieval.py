"""Serving-side retrieval: per-node behavior catalogs and blended top-k.

REGRESS nodes never carry their own list; each node's serving chain is the
non-REGRESS nodes on its path, nearest first, ending at the root. The default
mode serves the nearest list as-is; blend mode mixes the chain's lists with
per-position weights (explicit or geometric decay) over raw scores.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import (BusError, DataError, EngagementTable, UserClassification,
                   UserTable)
from .ranking import RankedList
from .scoring import group_topk
from .tree import BusTree

CATALOG_TAG = "bus-catalog/1"


class CatalogError(BusError):
    """Catalog construction or persistence failed."""


class StrippedTree:
    """Read-only serving view of a tree: REGRESS nodes collapsed onto the
    kept ancestor whose list they serve."""

    def __init__(self, tree: BusTree):
        tree.validate()
        self.tree = tree
        self._chains: dict[int, tuple[int, ...]] = {}
        for node in tree.walk():
            kept = [x.node_id for x in tree.path_of(node.node_id) if not x.is_regress]
            self._chains[node.node_id] = tuple(reversed(kept))

    def chain(self, node_id: int) -> tuple[int, ...]:
        """Serving nodes for a walk ending at node_id: nearest first, root last."""
        try:
            return self._chains[node_id]
        except KeyError:
            raise CatalogError(f"node {node_id} is not in the tree") from None

    def serving_node(self, node_id: int) -> int:
        return self.chain(node_id)[0]

    def serving_ids(self) -> list[int]:
        """All node ids that carry their own list (non-REGRESS), ascending."""
        return [n.node_id for n in self.tree.walk() if not n.is_regress]


def strip_regress(tree: BusTree) -> StrippedTree:
    return StrippedTree(tree)


def route_users(tree: BusTree, users: UserTable) -> np.ndarray:
    """Read-only segment id per user of the table, vectorized level by level.

    Users whose walk dead-ends stay at the deepest node they reached, which
    matches the read-only single-user walk.
    """
    n = users.n_users
    current = np.zeros(n, dtype=np.int64)
    frozen = np.zeros(n, dtype=bool)
    if n == 0:
        return current
    for depth, type_name in enumerate(tree.levels):
        j = users.schema.index_of(type_name)
        vocab = users.vocabularies[j]
        code_of = {v: c for c, v in enumerate(vocab)}
        codes = users.codes[:, j].astype(np.int64)
        order = np.argsort(current, kind="stable")
        sorted_cur = current[order]
        boundaries = np.flatnonzero(np.r_[True, np.diff(sorted_cur) > 0])
        next_ids = current.copy()
        for b in boundaries:
            node_id = int(sorted_cur[b])
            node = tree.node(node_id)
            if node.level != depth:
                continue  # this walk already dead-ended
            end = boundaries[boundaries > b]
            hi = int(end[0]) if end.size else n
            members = order[b:hi]
            regress = tree.regress_child(node_id)
            lut = np.full(len(vocab), -1 if regress is None else regress.node_id,
                          dtype=np.int64)
            for child in tree.children_of(node_id):
                code = code_of.get(child.attribute_value)
                if code is not None:
                    lut[code] = child.node_id
            routed = lut[codes[members]]
            dead = routed < 0
            next_ids[members] = np.where(dead, node_id, routed)
            frozen[members[dead]] = True
        current = np.where(frozen, current, next_ids)
    return current


@dataclass
class NodeCatalog:
    """Ranked behavior lists keyed by serving node id."""

    k: int
    lists: dict = field(default_factory=dict)

    def list_for(self, node_id: int) -> RankedList:
        try:
            return self.lists[node_id]
        except KeyError:
            raise CatalogError(f"no behavior list for node {node_id}") from None

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.lists

    def __len__(self) -> int:
        return len(self.lists)


def serving_table(tree: BusTree, users: UserTable, engagements: EngagementTable,
                  classification: UserClassification, k: int):
    """Top-k training behaviors of every non-REGRESS node's active members.

    A user's rows count toward every serving node on its walk, so each node's
    list aggregates exactly its own subtree's active users. Returns the
    ascending serving node ids, their ranked table (one group per id), and
    the routed segment id per user.
    """
    if engagements.users is not users:
        raise CatalogError("engagement table was built against a different user table")
    stripped = StrippedTree(tree)
    serving = np.asarray(stripped.serving_ids(), dtype=np.int64)
    leaf_of_user = route_users(tree, users)

    seen_leaves, leaf_dense = np.unique(leaf_of_user, return_inverse=True)
    max_chain = tree.depth + 1
    chain_matrix = np.full((seen_leaves.size, max_chain), -1, dtype=np.int64)
    for i, leaf in enumerate(seen_leaves):
        chain = stripped.chain(int(leaf))
        chain_matrix[i, :len(chain)] = chain

    tu, ti, ts = engagements.training_rows()
    from_active = classification.active_mask[tu]
    tu, ti, ts = tu[from_active], ti[from_active], ts[from_active]
    row_leaf = leaf_dense[tu]

    groups, items, scores = [], [], []
    for d in range(max_chain):
        node_of_row = chain_matrix[row_leaf, d]
        live = node_of_row >= 0
        if not live.any():
            break
        groups.append(np.searchsorted(serving, node_of_row[live]))
        items.append(ti[live])
        scores.append(ts[live])
    if groups:
        table = group_topk(np.concatenate(groups), np.concatenate(items),
                           np.concatenate(scores), serving.size,
                           engagements.n_items, k)
    else:
        table = group_topk(np.empty(0, np.int64), np.empty(0, np.int32),
                           np.empty(0, np.float64), serving.size,
                           engagements.n_items, k)
    return serving, table, leaf_of_user


def build_catalog(tree: BusTree, users: UserTable, engagements: EngagementTable,
                  classification: UserClassification, k: int) -> NodeCatalog:
    """Materialize every serving node's ranked list; see serving_table."""
    serving, table, _ = serving_table(tree, users, engagements, classification, k)
    catalog = NodeCatalog(k)
    for g, node_id in enumerate(serving):
        entries = tuple((engagements.item_ids[i], float(s))
                        for i, s in zip(table.group_items(g), table.group_scores(g)))
        catalog.lists[int(node_id)] = RankedList(entries)
    return catalog


@dataclass(frozen=True)
class BlendConfig:
    """How to combine the serving chain's lists.

    mode "nearest" serves the first chain node's list unchanged. Mode "blend"
    scores each item as the weighted sum of its raw scores across the chain,
    weighting position i by weights[i] when given, else decay**i.
    """

    mode: str = "nearest"
    weights: Optional[tuple] = None
    decay: float = 0.5

    def __post_init__(self):
        if self.mode not in ("nearest", "blend"):
            raise DataError(f"unknown blend mode {self.mode!r}")
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            if any(w < 0 for w in self.weights):
                raise DataError("blend weights must be non-negative")
        if not (0.0 < self.decay <= 1.0):
            raise DataError(f"decay must be in (0, 1], got {self.decay}")

    def weight_at(self, position: int) -> float:
        if self.weights is not None:
            return self.weights[position] if position < len(self.weights) else 0.0
        return self.decay ** position


def recommend(catalog: NodeCatalog, stripped: StrippedTree, node_id: int,
              k: Optional[int] = None, blend: BlendConfig = BlendConfig(),
              exclude: Iterable[str] = ()) -> RankedList:
    """Top-k items for a user whose walk ended at `node_id`."""
    k = catalog.k if k is None else k
    chain = stripped.chain(node_id)
    skip = set(exclude)
    if blend.mode == "nearest":
        entries = [(item, score) for item, score in catalog.list_for(chain[0])
                   if item not in skip]
        return RankedList(tuple(entries[:k]))
    combined: dict[str, float] = {}
    for pos, nid in enumerate(chain):
        w = blend.weight_at(pos)
        if w == 0.0:
            continue
        for item, score in catalog.list_for(nid):
            if item in skip:
                continue
            combined[item] = combined.get(item, 0.0) + w * score
    ranked = sorted(combined.items(), key=lambda e: (-e[1], e[0]))
    return RankedList(tuple(ranked[:k]))


def save_catalog(catalog: NodeCatalog, path) -> None:
    digest = hashlib.sha256()
    chunks = [_canonical({"format": CATALOG_TAG, "k": catalog.k,
                          "n_nodes": len(catalog.lists)})]
    for node_id in sorted(catalog.lists):
        entries = [[item, score] for item, score in catalog.lists[node_id]]
        chunks.append(_canonical({"node": node_id, "items": entries}))
    for chunk in chunks:
        digest.update(chunk)
    chunks.append(_canonical({"checksum": digest.hexdigest()}))
    Path(path).write_bytes(b"".join(chunks))


def load_catalog(path) -> NodeCatalog:
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"no catalog file at {path}")
    lines = path.read_bytes().split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    if len(lines) < 2:
        raise CatalogError(f"{path}: file is truncated")

    def parse(i: int) -> dict:
        try:
            row = json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise CatalogError(f"{path}: line {i + 1}: not valid JSON ({exc})") from None
        if not isinstance(row, dict):
            raise CatalogError(f"{path}: line {i + 1}: expected a JSON object")
        return row

    header = parse(0)
    if header.get("format") != CATALOG_TAG:
        raise CatalogError(f"{path}: unsupported format {header.get('format')!r}")
    n_nodes = header.get("n_nodes")
    if not isinstance(n_nodes, int) or len(lines) != n_nodes + 2:
        raise CatalogError(f"{path}: file is truncated or padded")
    digest = hashlib.sha256()
    for raw in lines[:-1]:
        digest.update(raw + b"\n")
    if parse(len(lines) - 1).get("checksum") != digest.hexdigest():
        raise CatalogError(f"{path}: checksum mismatch; file is corrupt")

    catalog = NodeCatalog(int(header.get("k", 0)))
    for i in range(1, n_nodes + 1):
        row = parse(i)
        entries = tuple((str(item), float(score)) for item, score in row["items"])
        catalog.lists[int(row["node"])] = RankedList(entries)
    return catalog


def _canonical(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")
