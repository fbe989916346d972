"""Routing users into a built tree, with optional structural insert.

At every level the walk takes the child matching the user's attribute value
when it exists, otherwise the REGRESS child. When neither exists the user's
combination was never seen at build time: in mutating mode the walk grows a
REGRESS chain down to the deepest level (zero counts, serving the same
effective list as the node it hangs off), so later users with the same
combination land in the same segment; in read-only mode the walk simply stops
early, which serves the exact list the grown chain would have served.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .data import NULL, UserRecord
from .tree import REGRESS, BusTree


@dataclass(frozen=True)
class SegmentPath:
    """The walk one user took: branch taken per level and nodes touched."""

    steps: tuple            # (attribute_type, branch_value) per level walked
    node_ids: tuple         # root .. final node
    partial: bool = False   # True when the walk stopped above the deepest level

    @property
    def leaf_id(self) -> int:
        return self.node_ids[-1]

    @property
    def depth(self) -> int:
        return len(self.steps)


@dataclass
class AssignmentResult:
    """Batch outcome: segment per user and how many walks had to insert."""

    segment_of: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    n_assigned: int = 0
    n_inserted: int = 0

    @property
    def insert_rate(self) -> float:
        return self.n_inserted / self.n_assigned if self.n_assigned else 0.0


def assign_user(tree: BusTree, attributes: Mapping[str, str],
                mutate: bool = False) -> tuple[SegmentPath, bool]:
    """Walk one user down the tree; returns (path, whether nodes were added)."""
    node = tree.root
    steps: list[tuple[str, str]] = []
    node_ids = [node.node_id]
    mutated = False
    for type_name in tree.levels:
        value = attributes.get(type_name, NULL) or NULL
        child = tree.child_for_value(node.node_id, value)
        if child is None:
            child = tree.regress_child(node.node_id)
        if child is None:
            if not mutate:
                return SegmentPath(tuple(steps), tuple(node_ids), partial=True), False
            child = tree.add_child(node.node_id, REGRESS)
            mutated = True
        steps.append((type_name, child.attribute_value))
        node_ids.append(child.node_id)
        node = child
    return SegmentPath(tuple(steps), tuple(node_ids), partial=False), mutated


def assign_users(tree: BusTree, records: Iterable[UserRecord],
                 mutate: bool = False) -> AssignmentResult:
    """Route a batch of users; `n_inserted` counts users whose walk grew the tree."""
    result = AssignmentResult()
    for record in records:
        path, mutated = assign_user(tree, record.attributes, mutate=mutate)
        result.segment_of[record.user_id] = path.leaf_id
        result.paths[record.user_id] = path
        result.n_assigned += 1
        if mutated:
            result.n_inserted += 1
    return result


def effective_node_id(tree: BusTree, path: SegmentPath) -> int:
    """Id of the node whose own behavior list serves this walk's user."""
    return tree.node(path.leaf_id).effective_source_id
