"""How the adjacency threshold decides whether two pipe pieces connect.

Both adversarial cases hold one pipe run cut by a 1.2 cm gap, with a valve on
one side and a gauge on the other. After voxel snapping the gap measures
either one pitch or two, so at epsilon = 1 cm one case bridges and the other
does not. Sweeping epsilon shows where each case changes its mind.

    python gallery/epsilon_sweep.py
"""

from cadgraph import dbscan, group_small_meshes, synth
from cadgraph.functional import extract_functional_relations
from cadgraph.pipeline import singleton_noise
from cadgraph.scene_graph import build_scene_graph
from cadgraph.spatial_index import adjacency_pairs, build_grid, pairwise_min_distances

CUTOFF = 0.05


def functional_edges(case, epsilon):
    groups = group_small_meshes(case.scene)
    dmap = pairwise_min_distances(groups, build_grid(groups, cell_size=CUTOFF), CUTOFF)
    clustering = singleton_noise(dbscan(len(groups), dmap, epsilon))
    graph = build_scene_graph(groups, clustering, adjacency_pairs(dmap, epsilon), case.gt_labels)
    return clustering.n_clusters, sorted(extract_functional_relations(graph).edges)


def main() -> None:
    cases = {name: synth.generate(spec) for name, spec in synth.adversarial_suite().items()}
    print(f"{'epsilon':>8}  " + "  ".join(f"{name:>24}" for name in cases))
    for epsilon in (0.005, 0.01, 0.015, 0.02, 0.03):
        cells = []
        for case in cases.values():
            n, edges = functional_edges(case, epsilon)
            cells.append(f"{n} clusters, edges {edges}")
        print(f"{epsilon:>8.3f}  " + "  ".join(f"{c:>24}" for c in cells))


if __name__ == "__main__":
    main()
