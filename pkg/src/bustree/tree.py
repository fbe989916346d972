"""Segmentation tree structure.

A tree has one attribute type per level below the root. Every node splits on
its level's type, with at most one child per attribute value plus at most one
REGRESS child that absorbs the values whose own behavior did not justify a
separate segment. REGRESS nodes serve their nearest kept ancestor's behavior
list; `effective_source_id` records that ancestor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

from .data import BusError

REGRESS = "__regress__"


class TreeError(BusError):
    """A structural invariant of the tree was violated."""


@dataclass(frozen=True)
class BusNode:
    node_id: int
    parent_id: Optional[int]
    level: int
    attribute_type: Optional[str]   # None at the root
    attribute_value: Optional[str]  # None at the root, REGRESS for merged children
    active_count: int = 0
    marginal_count: int = 0
    node_reward: float = 0.0
    effective_source_id: int = 0

    @property
    def is_root(self) -> bool:
        return self.parent_id is None

    @property
    def is_regress(self) -> bool:
        return self.attribute_value == REGRESS


class BusTree:
    """Mutable tree of BusNodes with value-indexed children."""

    def __init__(self, levels: Optional[list[str]] = None):
        self.levels: list[str] = list(levels or [])
        self.nodes: dict[int, BusNode] = {}
        self._children: dict[int, dict[str, int]] = {}
        self._next_id = 0
        # Parameters the tree was grown with (k, omega, mu, ...); None for
        # hand-assembled trees. Persisted in the tree file header.
        self.params: Optional[dict] = None

    # -- construction -----------------------------------------------------

    def add_root(self, active_count: int = 0, marginal_count: int = 0,
                 node_reward: float = 0.0) -> BusNode:
        if self.nodes:
            raise TreeError("tree already has a root")
        node = BusNode(self._take_id(), None, 0, None, None,
                       active_count, marginal_count, node_reward, 0)
        node = replace(node, effective_source_id=node.node_id)
        self._register(node)
        return node

    def add_child(self, parent_id: int, attribute_value: str,
                  active_count: int = 0, marginal_count: int = 0,
                  node_reward: float = 0.0,
                  effective_source_id: Optional[int] = None) -> BusNode:
        parent = self.node(parent_id)
        level = parent.level + 1
        if level > len(self.levels):
            raise TreeError(f"node {parent_id} is already at the deepest level")
        if attribute_value in self._children.setdefault(parent_id, {}):
            raise TreeError(
                f"node {parent_id} already has a child for value {attribute_value!r}")
        node_id = self._take_id()
        if attribute_value == REGRESS:
            source = parent.effective_source_id if effective_source_id is None \
                else effective_source_id
        else:
            source = node_id if effective_source_id is None else effective_source_id
        node = BusNode(node_id, parent_id, level, self.levels[level - 1],
                       attribute_value, active_count, marginal_count,
                       node_reward, source)
        self._register(node)
        return node

    @classmethod
    def from_nodes(cls, levels: list[str], nodes: Iterator[BusNode]) -> "BusTree":
        """Rebuild a tree from stored nodes (root first, ids preassigned)."""
        tree = cls(levels)
        for node in sorted(nodes, key=lambda n: n.node_id):
            if node.parent_id is not None and node.parent_id not in tree.nodes:
                raise TreeError(f"node {node.node_id} arrives before its parent "
                                f"{node.parent_id}")
            tree.nodes[node.node_id] = node
            tree._children.setdefault(node.node_id, {})
            if node.parent_id is not None:
                siblings = tree._children.setdefault(node.parent_id, {})
                if node.attribute_value in siblings:
                    raise TreeError(f"node {node.parent_id} has two children for "
                                    f"value {node.attribute_value!r}")
                siblings[node.attribute_value] = node.node_id
        tree._next_id = max(tree.nodes, default=-1) + 1
        tree.validate()
        return tree

    def _take_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def _register(self, node: BusNode) -> None:
        self.nodes[node.node_id] = node
        if node.parent_id is not None:
            self._children[node.parent_id][node.attribute_value] = node.node_id

    # -- access -----------------------------------------------------------

    @property
    def root(self) -> BusNode:
        return self.node(0)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def node(self, node_id: int) -> BusNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TreeError(f"no node with id {node_id}") from None

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.nodes

    def children_of(self, node_id: int) -> list[BusNode]:
        """Children ordered by ascending attribute value, REGRESS last."""
        kids = self._children.get(node_id, {})
        ordered = sorted(v for v in kids if v != REGRESS)
        if REGRESS in kids:
            ordered.append(REGRESS)
        return [self.nodes[kids[v]] for v in ordered]

    def child_for_value(self, node_id: int, value: str) -> Optional[BusNode]:
        cid = self._children.get(node_id, {}).get(value)
        return None if cid is None else self.nodes[cid]

    def regress_child(self, node_id: int) -> Optional[BusNode]:
        return self.child_for_value(node_id, REGRESS)

    def is_leaf(self, node_id: int) -> bool:
        return not self._children.get(node_id)

    def leaves(self) -> list[BusNode]:
        return [n for nid, n in sorted(self.nodes.items()) if self.is_leaf(nid)]

    def path_of(self, node_id: int) -> list[BusNode]:
        """Nodes from the root down to `node_id` inclusive."""
        path = []
        node = self.node(node_id)
        while True:
            path.append(node)
            if node.parent_id is None:
                break
            node = self.nodes[node.parent_id]
        path.reverse()
        return path

    def walk(self) -> Iterator[BusNode]:
        """All nodes in ascending id order (root first)."""
        for nid in sorted(self.nodes):
            yield self.nodes[nid]

    def segment_ids(self) -> list[int]:
        """Ids of the deepest-level nodes, ascending."""
        return [n.node_id for n in self.walk() if n.level == self.depth]

    # -- invariants -------------------------------------------------------

    def validate(self) -> None:
        if not self.nodes:
            raise TreeError("tree has no nodes")
        if 0 not in self.nodes or self.nodes[0].parent_id is not None:
            raise TreeError("node 0 must be the root")
        for node in self.walk():
            if node.is_root:
                if node.level != 0 or node.attribute_type is not None:
                    raise TreeError("root must sit at level 0 with no attribute")
                continue
            if node.parent_id not in self.nodes:
                raise TreeError(f"node {node.node_id} references missing parent "
                                f"{node.parent_id}")
            parent = self.nodes[node.parent_id]
            if node.level != parent.level + 1:
                raise TreeError(f"node {node.node_id} level is not parent level + 1")
            if node.level > len(self.levels):
                raise TreeError(f"node {node.node_id} is deeper than the level list")
            if node.attribute_type != self.levels[node.level - 1]:
                raise TreeError(f"node {node.node_id} attribute type does not match "
                                f"its level")
            if not node.attribute_value:
                raise TreeError(f"node {node.node_id} has an empty attribute value")
            if node.is_regress:
                if node.effective_source_id != parent.effective_source_id:
                    raise TreeError(f"REGRESS node {node.node_id} must serve its "
                                    f"parent's effective source")
            elif node.effective_source_id != node.node_id:
                raise TreeError(f"kept node {node.node_id} must be its own "
                                f"effective source")
        for parent_id, kids in self._children.items():
            for value, cid in kids.items():
                child = self.nodes[cid]
                if child.parent_id != parent_id or child.attribute_value != value:
                    raise TreeError("child index out of sync with node table")

    def structurally_equal(self, other: "BusTree") -> bool:
        return self.levels == other.levels and self.nodes == other.nodes
