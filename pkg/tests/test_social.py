import pytest

from bustree import (BusTree, ConnectionProfile, NodeCatalog, RankedList,
                     SocialError, SocialGraph, connection_segments, load_edges,
                     recommend, strip_regress, utility_rank)
from bustree.social import _round_tenths


def star_graph(center, spokes):
    return SocialGraph((center, s) for s in spokes)


def test_graph_dedupes_and_drops_self_loops():
    g = SocialGraph([("a", "b"), ("b", "a"), ("a", "a"), ("a", "c")])
    assert g.neighbors("a") == ["b", "c"]
    assert g.neighbors("b") == ["a"]
    assert g.n_edges == 2
    assert list(g.edges()) == [("a", "b"), ("a", "c")]


def test_load_edges(tmp_path):
    f = tmp_path / "edges.csv"
    f.write_text("user_a,user_b\nu1,u2\nu2,u1\nu1,u3\n")
    g = load_edges(f)
    assert g.n_edges == 2
    f.write_text("wrong,cols\nu1,u2\n")
    with pytest.raises(SocialError, match="missing required columns"):
        load_edges(f)


def test_connection_share_examples_from_rounding():
    # 62%/38% and 61%/39% both land on 0.6/0.4
    for counts in ((62, 38), (61, 39)):
        spokes = [f"s{i}" for i in range(sum(counts))]
        g = star_graph("me", spokes)
        segment_of = {"me": 1}
        segment_of.update({s: 8 for s in spokes[:counts[0]]})
        segment_of.update({s: 12 for s in spokes[counts[0]:]})
        profile = connection_segments(g, "me", segment_of, phi=0.1)
        assert profile.weighted_segments == ((8, 0.6), (12, 0.4))


def test_half_tenth_rounds_away_from_zero():
    # 1 of 4 connections = 0.25 -> 0.3, not 0.2
    assert _round_tenths(1, 4) == 0.3
    assert _round_tenths(3, 4) == 0.8   # 0.75 -> 0.8
    assert _round_tenths(1, 8) == 0.1   # 0.125 -> 0.1
    assert _round_tenths(30, 100) == 0.3


def test_phi_threshold_is_exact_at_the_boundary():
    # 3 of 30 is exactly 10%: must survive phi=0.1 despite float 0.1 * 30
    # being 3.0000000000000004
    spokes = [f"s{i}" for i in range(30)]
    g = star_graph("me", spokes)
    segment_of = {"me": 1}
    segment_of.update({s: 5 for s in spokes[:3]})
    segment_of.update({s: 9 for s in spokes[3:]})
    profile = connection_segments(g, "me", segment_of, phi=0.1)
    assert (5, 0.1) in profile.weighted_segments
    # and 2 of 30 (6.7%) must not
    segment_of.update({s: 5 for s in spokes[:2]})
    segment_of["s2"] = 9
    profile = connection_segments(g, "me", segment_of, phi=0.1)
    assert profile.weight_of(5) == 0.0


def test_neighbors_without_segments_count_toward_no_segment():
    g = star_graph("me", ["known", "unknown"])
    profile = connection_segments(g, "me", {"me": 1, "known": 4}, phi=0.1)
    assert profile.weighted_segments == ((4, 1.0),)


def test_unassigned_neighbors_still_raise_the_phi_bar():
    # 1 assigned connection out of 20 total is 5% of the connection set:
    # below phi=0.1 even though it is 100% of the assigned ones
    g = star_graph("me", [f"s{i}" for i in range(20)])
    profile = connection_segments(g, "me", {"me": 1, "s0": 4}, phi=0.1)
    assert profile.weighted_segments == ()


def test_weights_renormalize_over_retained_segments():
    # 25/3/2 split at phi=0.1: the 2-strong segment drops, and the survivors
    # split the remaining 28 as 25/28 -> 0.9 and 3/28 -> 0.1 (not 25/30 -> 0.8)
    spokes = [f"s{i}" for i in range(30)]
    g = star_graph("me", spokes)
    segment_of = {"me": 1}
    segment_of.update({s: 8 for s in spokes[:25]})
    segment_of.update({s: 12 for s in spokes[25:28]})
    segment_of.update({s: 15 for s in spokes[28:]})
    profile = connection_segments(g, "me", segment_of, phi=0.1)
    assert profile.weighted_segments == ((8, 0.9), (12, 0.1))


def test_tiny_shares_round_to_zero_and_drop():
    # with phi=0.0 nothing is filtered, but a 1/25 share rounds to 0.0 and
    # falls out of the profile; the rest rounds up to 1.0
    spokes = [f"s{i}" for i in range(25)]
    g = star_graph("me", spokes)
    segment_of = {"me": 1, **{s: 8 for s in spokes[1:]}, spokes[0]: 7}
    profile = connection_segments(g, "me", segment_of, phi=0.0)
    assert profile.weighted_segments == ((8, 1.0),)


def test_profile_key_identifies_output():
    p1 = ConnectionProfile("u1", 5, ((8, 0.6), (12, 0.4)))
    p2 = ConnectionProfile("u2", 5, ((8, 0.6), (12, 0.4)))
    p3 = ConnectionProfile("u3", 6, ((8, 0.6), (12, 0.4)))
    assert p1.key() == p2.key() == "own:5|8:0.6,12:0.4"
    assert p3.key() != p1.key()  # same connections, different own segment


def serving_fixture():
    tree = BusTree(["g"])
    tree.add_root(0, 0, 0.0)
    s_own = tree.add_child(0, "a", 0, 0, 0.0)
    s_conn = tree.add_child(0, "b", 0, 0, 0.0)
    catalog = NodeCatalog(5, {
        0: RankedList((("root", 1.0),)),
        s_own.node_id: RankedList((("x", 10.0), ("o", 4.0))),
        s_conn.node_id: RankedList((("x", 8.0), ("c", 5.0))),
    })
    return tree, catalog, s_own.node_id, s_conn.node_id


def test_utility_boosts_connection_segments():
    tree, catalog, own, conn = serving_fixture()
    stripped = strip_regress(tree)
    profile = ConnectionProfile("u", own, ((conn, 0.6),))
    ranked = utility_rank(profile, catalog, stripped, k=5)
    scores = dict(ranked.entries)
    # x: max(own 10 * 1.0, conn 8 * 1.6) = 12.8
    assert scores["x"] == pytest.approx(12.8, abs=1e-12)
    assert scores["o"] == pytest.approx(4.0, abs=1e-12)    # own list: no boost
    assert scores["c"] == pytest.approx(5.0 * 1.6, abs=1e-12)
    assert ranked.items[0] == "x"


def test_utility_sum_mode():
    tree, catalog, own, conn = serving_fixture()
    stripped = strip_regress(tree)
    profile = ConnectionProfile("u", own, ((conn, 0.5),))
    ranked = utility_rank(profile, catalog, stripped, k=5, combine="sum")
    assert dict(ranked.entries)["x"] == pytest.approx(10.0 + 8.0 * 1.5, abs=1e-12)
    with pytest.raises(SocialError):
        utility_rank(profile, catalog, stripped, combine="median")


def test_empty_graph_equals_plain_recommendation():
    tree, catalog, own, conn = serving_fixture()
    stripped = strip_regress(tree)
    g = SocialGraph()
    profile = connection_segments(g, "loner", {"loner": own}, phi=0.1)
    assert profile.weighted_segments == ()
    ranked = utility_rank(profile, catalog, stripped, k=5)
    plain = recommend(catalog, stripped, own, k=5)
    assert ranked.entries == plain.entries


def test_own_segment_in_profile_gets_no_boost():
    tree, catalog, own, conn = serving_fixture()
    stripped = strip_regress(tree)
    # all connections share the user's segment: profile lists it, but the
    # ranking must equal the plain own-list ranking
    g = star_graph("me", ["f1", "f2"])
    segment_of = {"me": own, "f1": own, "f2": own}
    profile = connection_segments(g, "me", segment_of, phi=0.1)
    assert profile.weighted_segments == ((own, 1.0),)
    ranked = utility_rank(profile, catalog, stripped, k=5)
    assert ranked.entries == recommend(catalog, stripped, own, k=5).entries


def test_unassigned_owner_is_an_error():
    g = SocialGraph()
    with pytest.raises(SocialError, match="no segment"):
        connection_segments(g, "ghost", {}, phi=0.1)
