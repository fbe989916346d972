"""Tree persistence: canonical JSON-lines with a trailing checksum.

Layout: a header line, one line per node in ascending id order, and a final
sha256 line over every preceding byte. The writer is canonical (sorted keys,
compact separators, \\n line endings), so saving the same tree twice yields
byte-identical files and a load/save round trip is exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .data import BusError
from .tree import BusNode, BusTree

FORMAT_TAG = "bus-tree/1"


class TreeFormatError(BusError):
    """The file is not a readable tree artifact."""


def _canonical(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def _node_row(node: BusNode) -> dict:
    return {
        "id": node.node_id,
        "parent": node.parent_id,
        "level": node.level,
        "type": node.attribute_type,
        "value": node.attribute_value,
        "active": node.active_count,
        "marginal": node.marginal_count,
        "reward": node.node_reward,
        "source": node.effective_source_id,
    }


def _row_node(row: dict, lineno: int) -> BusNode:
    try:
        return BusNode(
            node_id=row["id"], parent_id=row["parent"], level=row["level"],
            attribute_type=row["type"], attribute_value=row["value"],
            active_count=row["active"], marginal_count=row["marginal"],
            node_reward=row["reward"], effective_source_id=row["source"])
    except KeyError as exc:
        raise TreeFormatError(f"line {lineno}: node row is missing field {exc}") from None


def save_tree(tree: BusTree, path) -> None:
    tree.validate()
    digest = hashlib.sha256()
    chunks = [_canonical({"format": FORMAT_TAG, "levels": tree.levels,
                          "n_nodes": len(tree.nodes), "params": tree.params})]
    for node in tree.walk():
        chunks.append(_canonical(_node_row(node)))
    for chunk in chunks:
        digest.update(chunk)
    chunks.append(_canonical({"checksum": digest.hexdigest()}))
    Path(path).write_bytes(b"".join(chunks))


def load_tree(path) -> BusTree:
    path = Path(path)
    if not path.exists():
        raise TreeFormatError(f"no tree file at {path}")
    lines = path.read_bytes().split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    if not lines:
        raise TreeFormatError(f"{path}: empty file")

    def parse(i: int) -> dict:
        try:
            row = json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise TreeFormatError(f"{path}: line {i + 1}: not valid JSON ({exc})") from None
        if not isinstance(row, dict):
            raise TreeFormatError(f"{path}: line {i + 1}: expected a JSON object")
        return row

    header = parse(0)
    tag = header.get("format")
    if tag != FORMAT_TAG:
        raise TreeFormatError(
            f"{path}: unsupported format {tag!r} (this reader handles {FORMAT_TAG!r})")
    n_nodes = header.get("n_nodes")
    levels = header.get("levels")
    params = header.get("params")
    if not isinstance(n_nodes, int) or not isinstance(levels, list) \
            or not isinstance(params, (dict, type(None))):
        raise TreeFormatError(f"{path}: malformed header")
    if len(lines) != n_nodes + 2:
        raise TreeFormatError(
            f"{path}: expected {n_nodes + 2} lines (header, {n_nodes} nodes, "
            f"checksum) but found {len(lines)}; file is truncated or padded")

    digest = hashlib.sha256()
    for raw in lines[:-1]:
        digest.update(raw + b"\n")
    trailer = parse(len(lines) - 1)
    stored = trailer.get("checksum")
    if stored != digest.hexdigest():
        raise TreeFormatError(f"{path}: checksum mismatch; file is corrupt")

    nodes = [_row_node(parse(i), i + 1) for i in range(1, n_nodes + 1)]
    try:
        tree = BusTree.from_nodes(levels, nodes)
    except BusError as exc:
        raise TreeFormatError(f"{path}: {exc}") from None
    tree.params = params
    return tree
