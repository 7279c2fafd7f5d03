"""Toy graphs: the central/middle/marginal family and a two-clique fixture."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, LabeledDataset, from_edges, split_train_test, write_edge_list, write_labels

CENTRAL, MIDDLE, MARGINAL = "central", "middle", "marginal"
GROUPS = (CENTRAL, MIDDLE, MARGINAL)


@dataclass(frozen=True)
class GroupedGraph:
    graph: Graph
    group: np.ndarray  # per-node group name


def generate_three_group(
    core_size: int = 4, middle_per_core: int = 2, chain_len: int = 1, seed: int = 0
) -> GroupedGraph:
    """Clique core, star of middle nodes, chains of marginal nodes.

    Every core node gets ``middle_per_core`` middle neighbours and every
    middle node starts a path of ``chain_len`` marginal nodes. ``seed``
    only shuffles node ids.
    """
    if core_size < 3:
        raise ValueError("core_size must be at least 3")
    if middle_per_core < 1:
        raise ValueError("middle_per_core must be at least 1")
    if chain_len < 1:
        raise ValueError("chain_len must be at least 1")

    edges, group = [], []

    def new(tag):
        group.append(tag)
        return len(group) - 1

    core = [new(CENTRAL) for _ in range(core_size)]
    edges += [(a, b) for i, a in enumerate(core) for b in core[i + 1:]]
    for c in core:
        for _ in range(middle_per_core):
            prev = new(MIDDLE)
            edges.append((c, prev))
            for _ in range(chain_len):
                nxt = new(MARGINAL)
                edges.append((prev, nxt))
                prev = nxt

    n = len(group)
    perm = np.random.default_rng(seed).permutation(n)
    graph = from_edges(n, perm[np.array(edges)])
    tags = np.empty(n, dtype=object)
    tags[perm] = group
    return GroupedGraph(graph, tags.astype(str))


def generate_separable_fixture(seed: int = 0, clique_size: int = 10) -> LabeledDataset:
    """Two cliques joined by a single bridge; label = clique, 80/20 split."""
    a = np.arange(clique_size)
    b = a + clique_size
    edges = [(i, j) for blk in (a, b) for x, i in enumerate(blk) for j in blk[x + 1:]]
    edges.append((clique_size - 1, clique_size))
    n = 2 * clique_size
    labels = np.repeat([0, 1], clique_size)
    ds = LabeledDataset(
        graph=from_edges(n, edges),
        labels=labels,
        num_classes=2,
        train_mask=np.ones(n, dtype=bool),
        test_mask=np.zeros(n, dtype=bool),
        name="separable",
    )
    return split_train_test(ds, 0.8, seed)


def write_grouped(gg: GroupedGraph, directory) -> None:
    """Write edges.tsv, labels.tsv (group index as class) and groups.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_edge_list(gg.graph, directory / "edges.tsv")
    write_labels(np.array([GROUPS.index(t) for t in gg.group]), directory / "labels.tsv")
    with open(directory / "groups.csv", "w", encoding="utf-8") as fh:
        fh.write("node_id,group\n")
        for i, t in enumerate(gg.group):
            fh.write(f"{i},{t}\n")


def write_dataset(ds: LabeledDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_edge_list(ds.graph, directory / "edges.tsv")
    write_labels(ds.labels, directory / "labels.tsv")
