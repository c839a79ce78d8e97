from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opaque_emu import SyntheticProtocolSpec, generate_synthetic
from opaque_emu.cluster import (ClusterSet, DistanceMatrix, build_response_distance_matrix, cluster_transactions,
                                clusters_from_labels, inject_noise, vat_order)
from opaque_emu.model import Cluster, Transaction, TransactionLibrary

SEARCH = {1, 13, 275, 490, 2273}


def partition(cs: ClusterSet):
    return sorted(sorted(c.member_indices) for c in cs.clusters)


def test_single_transaction():
    lib = TransactionLibrary((Transaction(4, b"q", b"r"),))
    m = build_response_distance_matrix(lib)
    assert m.values.tolist() == [[0.0]]
    assert partition(cluster_transactions(m)) == [[4]]


def test_worked_example_matrix_separates_ops(example_lib):
    m = build_response_distance_matrix(example_lib)
    pos = {idx: p for p, idx in enumerate(m.indices)}
    within = [m.values[pos[a], pos[b]] for a in SEARCH for b in SEARCH if a != b]
    across = [m.values[pos[a], pos[b]] for a in SEARCH for b in (24, 2487, 3106)]
    assert max(within) < min(across)


def test_duplicate_rows_equal():
    t = [Transaction(0, b"", b"abc"), Transaction(1, b"", b"abc"), Transaction(2, b"", b"xbz")]
    v = build_response_distance_matrix(TransactionLibrary(tuple(t))).values
    assert v[0, 1] == 0 and np.array_equal(v[0], v[1][[1, 0, 2]])


def test_all_zero_matrix_is_one_cluster():
    m = DistanceMatrix(tuple(range(5)), np.zeros((5, 5)))
    assert len(cluster_transactions(m)) == 1


def _blocks(sizes, intra=0.05, inter=0.9):
    n = sum(sizes)
    v = np.full((n, n), inter)
    start = 0
    for s in sizes:
        v[start:start + s, start:start + s] = intra
        start += s
    np.fill_diagonal(v, 0)
    return DistanceMatrix(tuple(range(n)), v)


def _single_linkage_partitions(values, t):
    """Brute force: the unique partition whose groups are the connected components at threshold t."""
    n = len(values)
    best = None
    for labels in product(range(n), repeat=n):
        ok = True
        for i in range(n):
            for j in range(n):
                if values[i][j] <= t and labels[i] != labels[j]:
                    ok = False
        if not ok:
            continue
        # components must be connected through <= t edges
        groups = {}
        for i, l in enumerate(labels):
            groups.setdefault(l, []).append(i)
        connected = True
        for g in groups.values():
            seen = {g[0]}
            frontier = [g[0]]
            while frontier:
                a = frontier.pop()
                for b in g:
                    if b not in seen and values[a][b] <= t:
                        seen.add(b)
                        frontier.append(b)
            connected &= len(seen) == len(g)
        if connected:
            part = sorted(sorted(g) for g in groups.values())
            assert best is None or best == part
            best = part
    return best


def test_block_matrix_two_clusters_is_the_only_valid_partition():
    m = _blocks([3, 3])
    got = partition(cluster_transactions(m, 0.3))
    assert got == [[0, 1, 2], [3, 4, 5]]
    assert _single_linkage_partitions(m.values.tolist(), 0.3) == got


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.data())
def test_cut_equals_single_linkage_components(n, data):
    vals = data.draw(st.lists(st.sampled_from([0.1, 0.2, 0.4, 0.6, 0.9]), min_size=n * n, max_size=n * n))
    v = np.array(vals).reshape(n, n)
    v = np.triu(v, 1)
    v = v + v.T
    t = data.draw(st.sampled_from([0.15, 0.3, 0.5]))
    got = partition(cluster_transactions(DistanceMatrix(tuple(range(n)), v), t))
    assert got == _single_linkage_partitions(v.tolist(), t)


def test_vat_order_is_a_permutation():
    m = _blocks([2, 3, 1])
    order, edges = vat_order(m.values)
    assert sorted(order.tolist()) == list(range(6)) and edges[0] == 0


def test_matrix_validation():
    with pytest.raises(ValueError):
        DistanceMatrix((0, 1), np.array([[0, 0.1], [0.2, 0]]))
    with pytest.raises(ValueError):
        DistanceMatrix((0, 1), np.array([[0, 2.0], [2.0, 0]]))


def _labelled_sets(n=100, k=4):
    return ClusterSet(tuple(Cluster(c, frozenset(range(c, n, k))) for c in range(k)))


def test_noise_zero_is_identity():
    cs = _labelled_sets()
    assert inject_noise(cs, 0, seed=1) == cs


def test_noise_moves_exact_count_and_keeps_partition():
    cs = _labelled_sets()
    noisy = inject_noise(cs, 0.2, seed=3)
    before, after = cs.assignment, noisy.assignment
    assert sorted(after) == sorted(before)
    assert sum(before[i] != after[i] for i in before) == 20
    assert inject_noise(cs, 0.2, seed=3) == noisy


def test_noise_validation():
    with pytest.raises(ValueError):
        inject_noise(_labelled_sets(), 1.5, 0)
    with pytest.raises(ValueError):
        inject_noise(ClusterSet((Cluster(0, frozenset({1, 2})),)), 0.1, 0)


def test_clusters_overlap_rejected():
    with pytest.raises(ValueError):
        ClusterSet((Cluster(0, frozenset({1})), Cluster(1, frozenset({1, 2}))))


def test_clean_separation_on_synthetic(small_lib):
    got = partition(cluster_transactions(build_response_distance_matrix(small_lib)))
    assert got == partition(clusters_from_labels(small_lib))


def test_clean_separation_on_binary_synthetic():
    lib = generate_synthetic(SyntheticProtocolSpec(count=120, seed=4, variant="binary"))
    got = partition(cluster_transactions(build_response_distance_matrix(lib)))
    assert got == partition(clusters_from_labels(lib))


def test_csv_dump(tmp_path, example_lib):
    m = build_response_distance_matrix(example_lib)
    m.to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert len(lines) == 9 and lines[0].split(",")[1] == "1"
