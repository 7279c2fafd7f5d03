import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structfair import centrality as cen
from structfair import expansion as ex
from structfair.graph import from_edges
from structfair.synthetic import generate_three_group

from conftest import dense, hop_oracle, random_graph


def path(n):
    return from_edges(n, [(i, i + 1) for i in range(n - 1)])


def hops_for(graph, mask, h_max, within=False):
    return ex.expand(ex.build_debiased_adjacency(graph, mask), h_max, graph, within=within)


def as_dense(m):
    return m.toarray().astype(bool)


def test_line_zero_marks_only_the_minimum():
    cv = cen.normalize_minmax(cen.closeness(from_edges(4, [(0, 1), (1, 2), (2, 3), (1, 3)])))
    mask = ex.mark_marginal(cv, ex.MarginConfig(line=0.0))
    assert mask.tolist() == [True, False, False, False]


def test_line_one_marks_everything():
    cv = cen.normalize_minmax(cen.closeness(path(6)))
    assert ex.mark_marginal(cv, ex.MarginConfig(line=1.0)).all()


def test_p5_median_line():
    # closeness 0.4, 0.571, 0.667, 0.571, 0.4: median is 0.571
    cv = cen.closeness(path(5))
    line = float(np.median(cv.scores))
    mask = ex.mark_marginal(cv, ex.MarginConfig(line=line, threshold_space=ex.RAW))
    assert mask.tolist() == [True, True, False, True, True]


def test_mark_marginal_checks_kind_and_space():
    cv = cen.closeness(path(4))
    with pytest.raises(ValueError, match="kind"):
        ex.mark_marginal(cv, ex.MarginConfig(centrality_kind=cen.EIGENVECTOR, threshold_space=ex.RAW))
    with pytest.raises(ValueError, match="normalized"):
        ex.mark_marginal(cv, ex.MarginConfig())


@pytest.mark.parametrize("line", [-0.1, 1.5])
def test_margin_config_rejects_line_outside_unit_interval(line):
    with pytest.raises(ValueError):
        ex.MarginConfig(line=line)


def test_triangle_with_one_marginal_node():
    g = from_edges(3, [(0, 1), (1, 2), (0, 2)])
    d = ex.build_debiased_adjacency(g, np.array([True, False, False]))
    assert d.num_edges == 2
    assert as_dense(d.matrix).tolist() == [[False, True, True], [True, False, False], [True, False, False]]


@pytest.mark.parametrize("fill, edges", [(False, 0), (True, None)])
def test_constant_masks(rng, fill, edges):
    g = random_graph(rng, 20, 0.2)
    d = ex.build_debiased_adjacency(g, np.full(20, fill))
    expected = g.num_edges if edges is None else edges
    assert d.num_edges == expected


def test_all_false_mask_leaves_only_self_beyond_hop1(rng):
    g = random_graph(rng, 15, 0.3)
    hops = hops_for(g, np.zeros(15, bool), 3)
    for h in (2, 3):
        assert np.array_equal(as_dense(hops.sets[h - 1]), np.eye(15, dtype=bool))


def test_p4_all_true_hop2():
    hops = hops_for(path(4), np.ones(4, bool), 2)
    assert hops.members(2, 0).tolist() == [0, 2]
    assert hops.members(1, 0).tolist() == [0, 1]


def test_hop1_uses_the_original_graph(rng):
    g = random_graph(rng, 20, 0.2)
    hops = hops_for(g, np.zeros(20, bool), 1)
    assert np.array_equal(as_dense(hops.sets[0]), dense(g).astype(bool) | np.eye(20, dtype=bool))


@given(st.integers(2, 40), st.floats(0.02, 0.3), st.floats(0.0, 1.0), st.integers(1, 4), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_matches_dense_boolean_power(n, p, frac, h_max, seed):
    r = np.random.default_rng(seed)
    g = random_graph(r, n, p)
    mask = r.random(n) < frac
    hops = hops_for(g, mask, h_max)
    a = dense(g)
    for h in range(1, h_max + 1):
        assert np.array_equal(as_dense(hops.sets[h - 1]), hop_oracle(a, mask, h))


@given(st.integers(2, 30), st.floats(0.05, 0.3), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_within_is_union_of_exact_hops(n, p, seed):
    r = np.random.default_rng(seed)
    g = random_graph(r, n, p)
    mask = r.random(n) < 0.5
    exact = hops_for(g, mask, 4)
    within = hops_for(g, mask, 4, within=True)
    for h in range(2, 5):
        union = np.zeros((n, n), dtype=bool)
        for k in range(2, h + 1):
            union |= as_dense(exact.sets[k - 1])
        assert np.array_equal(as_dense(within.sets[h - 1]), union)


@given(st.integers(2, 30), st.floats(0.05, 0.3), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_growing_the_mask_only_adds_pairs(n, p, seed):
    r = np.random.default_rng(seed)
    g = random_graph(r, n, p)
    small = r.random(n) < 0.3
    big = small | (r.random(n) < 0.3)
    a, b = hops_for(g, small, 3), hops_for(g, big, 3)
    for h in range(3):
        sa, sb = as_dense(a.sets[h]), as_dense(b.sets[h])
        assert not np.any(sa & ~sb)


@given(st.integers(2, 30), st.floats(0.05, 0.4), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_sets_contain_self_sorted_unique(n, p, seed):
    r = np.random.default_rng(seed)
    g = random_graph(r, n, p)
    hops = hops_for(g, r.random(n) < 0.5, 3)
    for h in range(1, 4):
        for i in range(n):
            m = hops.members(h, i)
            assert i in m
            assert np.all(np.diff(m) > 0)


def test_debiased_edge_count_equality_iff_all_edges_touch_mask(rng):
    g = random_graph(rng, 25, 0.2)
    mask = rng.random(25) < 0.5
    d = ex.build_debiased_adjacency(g, mask)
    e = g.edges()
    all_touch = np.all(mask[e[:, 0]] | mask[e[:, 1]])
    assert (d.num_edges == g.num_edges) == all_touch


def test_expand_rejects_zero_hops():
    g = path(3)
    with pytest.raises(ValueError):
        hops_for(g, np.ones(3, bool), 0)


def test_truncate():
    hops = hops_for(path(5), np.ones(5, bool), 3)
    t = hops.truncated(2)
    assert t.h_max == 2 and len(t.sets) == 2
    with pytest.raises(ValueError):
        hops.truncated(4)


def test_report_hop1_equals_original_closeness(rng):
    g = random_graph(rng, 30, 0.1)
    cv = cen.closeness(g)
    hops = hops_for(g, rng.random(30) < 0.5, 2)
    groups = np.arange(30)
    rows = ex.expansion_report(g, cv, hops, groups=groups)
    assert np.allclose([rows[0].group_means[i] for i in range(30)], cv.scores, atol=1e-15)
    assert rows[0].num_edges == g.num_edges


@pytest.mark.parametrize("n", [4, 7])
def test_report_complete_graph_gap_zero(n):
    g = from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    cv = cen.closeness(g)
    hops = hops_for(g, np.ones(n, bool), 3)
    assert all(r.gap == 0 for r in ex.expansion_report(g, cv, hops))


def test_report_three_group_gap_shrinks_monotonically():
    gg = generate_three_group()
    cv = cen.closeness(gg.graph)
    mask = ex.mark_marginal(cen.normalize_minmax(cv), ex.MarginConfig())
    hops = hops_for(gg.graph, mask, 3)
    gaps = [r.gap for r in ex.expansion_report(gg.graph, cv, hops, groups=gg.group)]
    assert gaps[0] > gaps[1] > gaps[2]
