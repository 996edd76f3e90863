import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from guardsets.asgraph import (AsGraph, AsRelParseError, UnknownAsError, cone_ranking, customer_cone,
                               format_as_rel, parse_as_rel, providers_of)
from guardsets.fixtures import TREE_EDGES


def test_parse_p2c_chain():
    g = parse_as_rel("1|2|-1\n2|3|-1\n")
    assert g.p2c_edges == {(1, 2), (2, 3)}
    assert g.p2p_edges == set()


def test_parse_comment_and_peer():
    g = parse_as_rel("# comment\n10|20|0\n")
    assert g.p2c_edges == set()
    assert g.p2p_edges == {(10, 20)}


@pytest.mark.parametrize("text, line", [("1|x|-1", 1), ("1|2|-1\n1|2\n", 2), ("1|2|-1\n3|4|5\n", 2),
                                        ("0|2|-1", 1), ("7|7|-1", 1)])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(AsRelParseError) as exc:
        parse_as_rel(text)
    assert exc.value.lineno == line


def test_duplicates_are_merged():
    g = parse_as_rel("1|2|-1\n1|2|-1\n2|1|0\n1|2|0\n")
    assert g.p2c_edges == {(1, 2)}
    assert g.p2p_edges == {(1, 2)}


def test_fig1_cones(fig1):
    assert customer_cone(fig1, 8).members == {8, 13, 14}
    assert customer_cone(fig1, 1).members == fig1.nodes
    assert customer_cone(fig1, 1).size == 14


def test_leaf_cone_is_itself():
    g = parse_as_rel("1|2|-1\n2|3|-1\n")
    c = customer_cone(g, 3)
    assert c.members == {3} and c.size == 1


def test_unknown_root():
    with pytest.raises(UnknownAsError):
        customer_cone(parse_as_rel("1|2|-1\n"), 99)
    with pytest.raises(UnknownAsError):
        providers_of(parse_as_rel("1|2|-1\n"), 99)


def test_providers(fig1):
    assert 8 in providers_of(fig1, 13)
    assert providers_of(parse_as_rel("1|2|-1\n2|3|-1\n"), 1) == []
    assert providers_of(parse_as_rel("2|3|-1\n1|3|-1\n"), 3) == [1, 2]


def test_ancestors_of_leaf(fig1):
    assert fig1.ancestors(13) == {8, 3, 1}


def test_cycle_terminates():
    g = AsGraph([(1, 2), (2, 3), (3, 1)])
    assert g.cone(2) == {1, 2, 3}


def test_ranking_is_by_size_then_asn(fig1):
    r = cone_ranking(fig1)
    assert r[0] == (1, 14)    # largest cone first, ties by ASN
    assert r[1:3] == [(3, 6), (2, 4)]
    assert r[-1] == (14, 1)


def test_round_trip(fig1):
    assert parse_as_rel(format_as_rel(fig1)) == fig1


def test_interior_footprints(fig1):
    fp = fig1.interior_footprints(3, frozenset({9, 13, 14}))
    assert fp[8] == {13, 14}
    assert fp[9] == {9}
    assert 3 not in fp        # the root itself is not interior


# -- properties ---------------------------------------------------------------

dags = st.lists(st.tuples(st.integers(1, 25), st.integers(1, 25)), max_size=60).map(
    lambda es: sorted({(min(a, b), max(a, b)) for a, b in es if a != b}))


@settings(max_examples=60, deadline=None)
@given(dags)
def test_cone_matches_networkx_descendants(edges):
    g = AsGraph(edges)
    ref = nx.DiGraph(edges)
    for a in g.nodes:
        assert g.cone(a) == {a} | nx.descendants(ref, a)
        assert a in g.cone(a)


@settings(max_examples=60, deadline=None)
@given(dags)
def test_cone_monotone(edges):
    g = AsGraph(edges)
    for a in g.nodes:
        for b in g.cone(a):
            assert g.cone(b) <= g.cone(a)


@settings(max_examples=40, deadline=None)
@given(dags, st.lists(st.tuples(st.integers(1, 25), st.integers(1, 25)), max_size=20))
def test_peer_links_do_not_change_cones(edges, peers):
    peers = [(a, b) for a, b in peers if a != b]
    nodes = {x for e in edges for x in e}
    g0 = AsGraph(edges, nodes=nodes | {x for e in peers for x in e})
    g1 = AsGraph(edges, peers)
    for a in g1.nodes:
        assert g1.cone(a) == g0.cone(a)


@settings(max_examples=40, deadline=None)
@given(dags)
def test_serialization_lossless(edges):
    g = AsGraph(edges)
    assert parse_as_rel(format_as_rel(g)).p2c_edges == g.p2c_edges


def test_fig1_edges_constant():
    # the drawn tree: 14 nodes, 13 customer links
    assert len(TREE_EDGES) == 13
