import pytest
from hypothesis import given
from hypothesis import strategies as st

from linklens.errors import ParameterError, UnsupportedModeError
from linklens.graph import (
    ComponentPartition,
    Edge,
    EdgeKind,
    Mode,
    SocialGraph,
    build_graph,
    components,
    insert_edge_incremental,
)
from linklens.ingest import assemble
from linklens.model import Account, FollowEdge, FollowSource, Layer

from conftest import A, buy, sell, tx


def acct(i):
    return Account(A(i), Layer.L2)


def graph(n, edges):
    g = SocialGraph(acct(i) for i in range(n))
    for u, v in edges:
        g.add_edge(Edge(EdgeKind.TRANSFER, u, v))
    return g


def test_single_transfer_leaves_third_node_isolated():
    ds = assemble([acct(1), acct(2), acct(3)], [tx(1, 2)])
    g = build_graph(ds)
    assert g.n_nodes == 3 and g.n_edges == 1
    iso = g.isolated()
    assert iso[g.index_of(A(3))] and not iso[g.index_of(A(1))]


def test_edge_kind_filter():
    ds = assemble([], [buy(1, 2), buy(3, 2), sell(1, 2)])
    assert build_graph(ds, include={EdgeKind.BUY_SHARE}).n_edges == 2
    assert build_graph(ds).n_edges == 3


def test_window_excluding_everything():
    ds = assemble([], [tx(1, 2, ts=100), tx(2, 3, ts=200)])
    g = build_graph(ds, window=(1000, 2000))
    assert g.n_edges == 0 and g.n_nodes == 3
    with pytest.raises(ParameterError):
        build_graph(ds, window=(5, 5))


def test_failed_transactions_are_not_edges():
    ds = assemble([], [tx(1, 2, error="reverted"), tx(2, 3)])
    assert build_graph(ds).n_edges == 1


def test_follow_edges_optional():
    follows = [FollowEdge(A(1), A(2), FollowSource.HOLDING)]
    ds = assemble([], [tx(3, 4)], follows)
    assert build_graph(ds).n_edges == 1
    assert build_graph(ds, include={EdgeKind.FOLLOW, EdgeKind.TRANSFER}).n_edges == 2
    assert build_graph(ds, include={EdgeKind.FOLLOW}, window=(0, 10**12)).n_edges == 0


def test_multi_edges_kept():
    g = graph(2, [(0, 1), (0, 1)])
    assert g.edge_count(0, 1) == 2 and g.has_edge(0, 1) and not g.has_edge(1, 0)


def test_two_plus_one():
    p = components(graph(3, [(0, 1)]))
    assert p.size_multiset() == [2, 1]


def test_triangle_weak():
    assert components(graph(3, [(0, 1), (1, 2), (2, 0)])).size_multiset() == [3]


def test_strong_two_cycle_and_single_arc():
    assert components(graph(2, [(0, 1), (1, 0)]), Mode.STRONG).size_multiset() == [2]
    assert components(graph(2, [(0, 1)]), Mode.STRONG).size_multiset() == [1, 1]


def test_isolated_exclusion_flag():
    p = components(graph(4, [(0, 1)]), include_isolated=False)
    assert p.size_multiset() == [2] and p.total_nodes == 2
    assert p.assignment[2] == -1


def test_incremental_inside_component_is_noop():
    g = graph(3, [(0, 1)])
    p = components(g)
    delta = insert_edge_incremental(p, g, acct(1), acct(0))
    assert delta.merged is None
    assert p.size_multiset() == [2, 1]


def test_incremental_bridge_two_and_one():
    g = graph(3, [(0, 1)])
    p = components(g)
    delta = insert_edge_incremental(p, g, acct(1), acct(2))
    assert delta.merged is not None
    assert p.size_multiset() == [3]
    assert delta.size_changes[delta.merged[2]] == 3


def test_incremental_new_node():
    g = graph(3, [(0, 1)])
    p = components(g)
    delta = insert_edge_incremental(p, g, acct(0), acct(9))
    assert delta.added_nodes == (3,)
    assert g.n_nodes == 4
    assert p.size_multiset() == [3, 1]


def test_incremental_strong_rejected():
    g = graph(2, [])
    p = components(g, Mode.STRONG)
    with pytest.raises(UnsupportedModeError):
        insert_edge_incremental(p, g, acct(0), acct(1))


edge_lists = st.integers(min_value=1, max_value=25).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=60),
    )
)


@given(edge_lists)
def test_incremental_matches_batch(case):
    n, edges = case
    g = graph(n, [])
    p = ComponentPartition.singletons(n)
    for u, v in edges:
        insert_edge_incremental(p, g, acct(u), acct(v))
        assert sum(p.sizes.values()) == n
    assert p.blocks() == components(graph(n, edges)).blocks()


@given(edge_lists, st.randoms(use_true_random=False))
def test_components_ignore_insertion_order(case, rnd):
    n, edges = case
    shuffled = list(edges)
    rnd.shuffle(shuffled)
    for mode in Mode:
        assert components(graph(n, edges), mode).blocks() == components(graph(n, shuffled), mode).blocks()


@given(edge_lists)
def test_strong_refines_weak(case):
    n, edges = case
    g = graph(n, edges)
    weak = components(g, Mode.WEAK).blocks()
    for block in components(g, Mode.STRONG).blocks():
        assert any(block <= w for w in weak)
    assert sum(len(b) for b in weak) == n
