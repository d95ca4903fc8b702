import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadgraph.clustering import NOISE, Clustering, connected_components, dbscan
from cadgraph.errors import EpsilonExceedsCutoff
from cadgraph.spatial_index import SparseDistanceMap

from oracles import bfs_components, random_sparse_map


def test_chain_is_one_cluster_and_isolated_node_its_own():
    d = SparseDistanceMap(0.05, {(0, 1): 0.0, (1, 2): 0.01, (3, 4): 0.011})
    c = dbscan(5, d, epsilon=0.01)
    assert c.labels == {0: 0, 1: 0, 2: 0, 3: 1, 4: 2}
    assert c.n_clusters == 3 and c.noise() == []


def test_min_samples_creates_noise_and_borders():
    # 0-1-2 chain: with min_samples=3 only node 1 is core; 0 and 2 are borders
    d = SparseDistanceMap(0.05, {(0, 1): 0.0, (1, 2): 0.0, (3, 4): 0.0})
    c = dbscan(6, d, epsilon=0.01, min_samples=3)
    assert c.labels == {0: 0, 1: 0, 2: 0, 3: NOISE, 4: NOISE, 5: NOISE}
    assert c.noise() == [3, 4, 5]


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=120), st.integers(min_value=0, max_value=10**6))
def test_dbscan_equals_breadth_first_components(n, seed):
    rng = random.Random(seed)
    entries = random_sparse_map(rng, n, density=rng.choice([0.01, 0.03, 0.1]))
    d = SparseDistanceMap(0.05, entries)
    pairs = [p for p, v in entries.items() if v <= 0.01]
    assert dbscan(n, d, 0.01).partition() == bfs_components(n, pairs)
    assert connected_components(pairs, n).partition() == bfs_components(n, pairs)


def test_cluster_ids_follow_smallest_member():
    c = connected_components([(4, 5), (0, 3)], 6)
    assert c.labels == {0: 0, 1: 1, 2: 2, 3: 0, 4: 3, 5: 3}


def test_epsilon_above_cutoff_rejected():
    with pytest.raises(EpsilonExceedsCutoff):
        dbscan(2, SparseDistanceMap(0.01, {}), epsilon=0.02)


def test_round_trip():
    c = dbscan(3, SparseDistanceMap(0.05, {(0, 2): 0.0}), 0.01)
    assert Clustering.from_dict(c.to_dict()) == c
