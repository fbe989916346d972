import hashlib
import json
import random

import pytest

from bustree import (BuildParams, BusTree, REGRESS, TreeFormatError,
                     build_tree, load_tree, save_tree)
from bustree.treefile import FORMAT_TAG


def small_tree():
    tree = BusTree(["geo", "tier"])
    tree.add_root(10, 20, 1.5)
    us = tree.add_child(0, "us", 6, 9, 2.25)
    tree.add_child(0, REGRESS, 4, 11, 0.5)
    tree.add_child(us.node_id, "paid", 6, 3, 2.25)
    tree.add_child(us.node_id, REGRESS, 0, 6, 0.75)
    return tree


def test_round_trip_is_exact(tmp_path):
    tree = small_tree()
    path = tmp_path / "tree.json"
    save_tree(tree, path)
    loaded = load_tree(path)
    assert loaded.structurally_equal(tree)
    assert loaded.levels == tree.levels
    # a second save of the loaded tree is byte-identical
    path2 = tmp_path / "tree2.json"
    save_tree(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_floats_round_trip_exactly(tmp_path):
    tree = BusTree(["x"])
    tree.add_root(1, 2, 0.1 + 0.2)  # 0.30000000000000004
    tree.add_child(0, "v", 1, 2, 1.0 / 3.0)
    path = tmp_path / "tree.json"
    save_tree(tree, path)
    loaded = load_tree(path)
    assert loaded.node(0).node_reward == tree.node(0).node_reward
    assert loaded.node(1).node_reward == 1.0 / 3.0


def test_format_tag_is_checked(tmp_path):
    path = tmp_path / "tree.json"
    save_tree(small_tree(), path)
    lines = path.read_bytes().split(b"\n")
    header = json.loads(lines[0])
    header["format"] = "bus-tree/999"
    lines[0] = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path.write_bytes(b"\n".join(lines))
    with pytest.raises(TreeFormatError, match="unsupported format"):
        load_tree(path)


def test_checksum_detects_corruption(tmp_path):
    path = tmp_path / "tree.json"
    save_tree(small_tree(), path)
    data = path.read_bytes().replace(b'"active":6', b'"active":7', 1)
    path.write_bytes(data)
    with pytest.raises(TreeFormatError, match="checksum"):
        load_tree(path)


def test_truncation_is_detected(tmp_path):
    path = tmp_path / "tree.json"
    save_tree(small_tree(), path)
    lines = path.read_bytes().split(b"\n")
    path.write_bytes(b"\n".join(lines[:-3] + lines[-2:]))  # drop one node row
    with pytest.raises(TreeFormatError, match="truncated"):
        load_tree(path)
    path.write_bytes(b"")
    with pytest.raises(TreeFormatError, match="empty"):
        load_tree(path)


def test_orphan_nodes_are_rejected(tmp_path):
    tree = small_tree()
    path = tmp_path / "tree.json"
    save_tree(tree, path)
    lines = path.read_bytes().split(b"\n")
    row = json.loads(lines[2])
    row["parent"] = 77  # point a node at a parent that does not exist
    lines[2] = json.dumps(row, sort_keys=True, separators=(",", ":")).encode()
    body = lines[:-2]
    digest = hashlib.sha256()
    for raw in body:
        digest.update(raw + b"\n")
    trailer = json.dumps({"checksum": digest.hexdigest()},
                         sort_keys=True, separators=(",", ":")).encode()
    path.write_bytes(b"\n".join(body + [trailer, b""]))
    with pytest.raises(TreeFormatError):
        load_tree(path)


def test_missing_file_has_helpful_error(tmp_path):
    with pytest.raises(TreeFormatError, match="no tree file"):
        load_tree(tmp_path / "nope.json")


def test_header_records_shape(tmp_path):
    path = tmp_path / "tree.json"
    save_tree(small_tree(), path)
    header = json.loads(path.read_bytes().split(b"\n")[0])
    assert header["format"] == FORMAT_TAG
    assert header["levels"] == ["geo", "tier"]
    assert header["n_nodes"] == 5
    assert header["params"] is None  # hand-assembled, not built


def test_random_trees_round_trip():
    rng = random.Random(99)
    for trial in range(30):
        depth = rng.randint(1, 4)
        tree = BusTree([f"lvl{d}" for d in range(depth)])
        tree.add_root(rng.randint(0, 50), rng.randint(0, 50), rng.random() * 10)
        frontier = [0]
        for _ in range(depth):
            next_frontier = []
            for parent in frontier:
                for v in range(rng.randint(0, 3)):
                    node = tree.add_child(parent, f"v{v}", rng.randint(0, 9),
                                          rng.randint(0, 9), rng.random())
                    next_frontier.append(node.node_id)
                if rng.random() < 0.5:
                    node = tree.add_child(parent, REGRESS, rng.randint(0, 9),
                                          rng.randint(0, 9), rng.random())
                    next_frontier.append(node.node_id)
            frontier = next_frontier
        import tempfile
        with tempfile.NamedTemporaryFile(suffix=".json") as fh:
            save_tree(tree, fh.name)
            assert load_tree(fh.name).structurally_equal(tree), f"trial {trial}"


def test_built_tree_round_trip(small_synth):
    result = build_tree(small_synth.users, small_synth.engagements,
                        params=BuildParams(k=20, mu=40))
    import tempfile
    with tempfile.NamedTemporaryFile(suffix=".json") as fh:
        save_tree(result.tree, fh.name)
        loaded = load_tree(fh.name)
    assert loaded.structurally_equal(result.tree)
    # the header carries the parameters the tree was grown with
    assert loaded.params == {"k": 20, "omega": 1.0, "mu": 40,
                             "binary_relevance": False}
    assert loaded.params == result.tree.params
