import pytest

from bustree import (BuildParams, REGRESS, UserRecord, assign_user,
                     assign_users, build_tree, effective_node_id)

PARAMS = BuildParams(k=1, omega=1.0, mu=1)


@pytest.fixture(scope="module")
def hand_tree(hand_dataset):
    users, engagements = hand_dataset
    return build_tree(users, engagements, params=PARAMS).tree


def test_known_combination_walks_value_children(hand_tree):
    path, mutated = assign_user(
        hand_tree, {"country": "US", "city": "SF", "age": "20s"})
    assert not mutated and not path.partial
    assert [v for _, v in path.steps] == ["US", "SF", "20s"]
    assert hand_tree.node(path.leaf_id).attribute_value == "20s"


def test_unmatched_value_falls_into_regress(hand_tree):
    # (SF, 30s) regressed at build time: the walk lands in SF's REGRESS child
    path, mutated = assign_user(
        hand_tree, {"country": "US", "city": "SF", "age": "30s"})
    assert not mutated and not path.partial
    assert path.steps[-1] == ("age", REGRESS)
    sf = hand_tree.node(path.node_ids[2])
    assert effective_node_id(hand_tree, path) == sf.node_id


def test_missing_attribute_is_null(hand_tree):
    with_null, _ = assign_user(hand_tree, {"country": "US", "city": "SF"})
    explicit, _ = assign_user(
        hand_tree, {"country": "US", "city": "SF", "age": "NULL"})
    assert with_null.node_ids == explicit.node_ids


def test_readonly_dead_end_stops_early_at_serving_equivalent(hand_dataset):
    users, engagements = hand_dataset
    tree = build_tree(users, engagements, params=PARAMS).tree
    attrs = {"country": "CA", "city": "SF", "age": "20s"}  # unseen country
    path, mutated = assign_user(tree, attrs, mutate=False)
    n_before = len(tree)
    assert not mutated and path.partial
    assert path.leaf_id == 0 and path.depth == 0
    assert len(tree) == n_before

    # the mutating walk grows a REGRESS chain to full depth instead
    grown, mutated = assign_user(tree, attrs, mutate=True)
    assert mutated and not grown.partial
    assert grown.depth == tree.depth
    assert [v for _, v in grown.steps] == [REGRESS] * tree.depth
    # the chain serves exactly what the read-only walk served
    assert effective_node_id(tree, grown) == path.leaf_id
    new_nodes = [tree.node(nid) for nid in grown.node_ids[1:]]
    assert all(n.active_count == 0 and n.marginal_count == 0 for n in new_nodes)
    tree.validate()


def test_insert_is_idempotent(hand_tree):
    attrs = {"country": "US", "city": "Austin", "age": "20s"}
    first, mutated_first = assign_user(hand_tree, attrs, mutate=True)
    assert mutated_first
    second, mutated_second = assign_user(hand_tree, attrs, mutate=True)
    assert not mutated_second
    assert first.node_ids == second.node_ids
    hand_tree.validate()


def test_training_universe_never_inserts(hand_dataset):
    users, engagements = hand_dataset
    tree = build_tree(users, engagements, params=PARAMS).tree
    result = assign_users(tree, users.records(), mutate=True)
    assert result.n_inserted == 0
    assert result.insert_rate == 0.0
    assert result.n_assigned == users.n_users


def test_assignment_is_mece(small_synth):
    result = build_tree(small_synth.users, small_synth.engagements,
                        params=BuildParams(k=20, mu=40))
    tree = result.tree
    assignment = assign_users(tree, small_synth.users.records())
    segments = set(tree.segment_ids())
    # every user reaches exactly one deepest-level node
    assert len(assignment.segment_of) == small_synth.users.n_users
    assert all(leaf in segments for leaf in assignment.segment_of.values())
    assert not any(p.partial for p in assignment.paths.values())
    # node counts partition the universe level by level
    for node in tree.walk():
        kids = tree.children_of(node.node_id)
        if kids:
            total = sum(c.active_count + c.marginal_count for c in kids)
            assert total == node.active_count + node.marginal_count


def test_mece_survives_inserts(small_synth):
    tree = build_tree(small_synth.users, small_synth.engagements,
                      params=BuildParams(k=20, mu=40)).tree
    novel = [UserRecord(f"n{j}", {"geo": "v1", "age_band": f"weird{j % 7}",
                                  "channel": "v2", "device": f"zz{j % 3}"})
             for j in range(50)]
    assign_users(tree, novel, mutate=True)
    tree.validate()
    again = assign_users(tree, novel, mutate=True)
    assert again.n_inserted == 0  # structure is stable once grown
    leaves = {p.leaf_id for p in again.paths.values()}
    assert all(tree.node(l).level == tree.depth for l in leaves)
