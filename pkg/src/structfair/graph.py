"""Undirected graph storage, dataset loading, BFS and train/test splitting."""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

#: Distance sentinel for nodes a BFS never reaches.
UNREACHABLE = np.iinfo(np.int64).max


class GraphFormatError(ValueError):
    """Raised when an edge-list or label file cannot be parsed."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph in CSR form.

    Neighbor lists are sorted, duplicate-free and never contain the node
    itself. Use :func:`from_edges` rather than the constructor.
    """

    num_nodes: int
    csr_offsets: np.ndarray
    csr_neighbors: np.ndarray

    def __post_init__(self):
        self.csr_offsets.setflags(write=False)
        self.csr_neighbors.setflags(write=False)

    @property
    def num_edges(self) -> int:
        return len(self.csr_neighbors) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.csr_neighbors[self.csr_offsets[i]:self.csr_offsets[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with ``u < v``, sorted."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = src < self.csr_neighbors
        return np.stack([src[keep], self.csr_neighbors[keep]], axis=1)

    def adjacency(self, dtype=np.float64) -> sp.csr_matrix:
        data = np.ones(len(self.csr_neighbors), dtype=dtype)
        return sp.csr_matrix(
            (data, self.csr_neighbors.copy(), self.csr_offsets.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.csr_offsets, other.csr_offsets)
            and np.array_equal(self.csr_neighbors, other.csr_neighbors)
        )

    __hash__ = None


def from_edges(num_nodes: int, edges) -> Graph:
    """Build a graph from any iterable of ``(u, v)`` pairs.

    Pairs are symmetrized and deduplicated; self-loops are dropped.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if num_nodes < 0:
        raise ValueError("num_nodes must be non-negative")
    if len(edges) and (edges.min() < 0 or edges.max() >= num_nodes):
        raise ValueError("edge endpoint out of range")
    edges = edges[edges[:, 0] != edges[:, 1]]
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    # unique over the packed key sorts by (src, dst) as well
    key = np.unique(src * num_nodes + dst) if len(src) else np.empty(0, np.int64)
    src, dst = np.divmod(key, num_nodes) if num_nodes else (key, key)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=offsets[1:])
    return Graph(num_nodes, offsets, dst.astype(np.int64))


def from_scipy(adj: sp.spmatrix) -> Graph:
    """Graph from the nonzero pattern of a square sparse matrix."""
    coo = sp.coo_matrix(adj)
    return from_edges(adj.shape[0], np.stack([coo.row, coo.col], axis=1))


def induced_permutation(graph: Graph, perm: np.ndarray) -> Graph:
    """Relabel nodes so that old node ``i`` becomes ``perm[i]``."""
    perm = np.asarray(perm)
    return from_edges(graph.num_nodes, perm[graph.edges()])


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    graph: Graph
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    test_mask: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        n = self.graph.num_nodes
        if len(self.labels) != n:
            raise ValueError("labels must cover every node")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("class id out of range")
        if np.any(self.train_mask & self.test_mask):
            raise ValueError("train and test masks overlap")
        if not np.all(self.train_mask | self.test_mask):
            raise ValueError("train and test masks must cover every node")


def _data_lines(path: Path):
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _parse_pair(path, lineno: int, line: str) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise GraphFormatError(f"{path}:{lineno}: expected two integers, got {line!r}")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        raise GraphFormatError(f"{path}:{lineno}: not an integer pair: {line!r}") from None
    if a < 0 or b < 0:
        raise GraphFormatError(f"{path}:{lineno}: negative id in {line!r}")
    return a, b


def load_edge_list(path) -> Graph:
    """Read a whitespace-separated ``src dst`` edge list.

    Lines starting with ``#`` are comments. The node count is the largest
    id plus one.
    """
    pairs = [_parse_pair(path, n, line) for n, line in _data_lines(path)]
    if not pairs:
        raise GraphFormatError(f"{path}: no edges")
    edges = np.array(pairs, dtype=np.int64)
    return from_edges(int(edges.max()) + 1, edges)


def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in graph.edges():
            fh.write(f"{u}\t{v}\n")


def load_labels(path, graph: Graph, name: str = "dataset") -> LabeledDataset:
    """Read ``node_id class_id`` lines; every node needs exactly one label.

    The returned dataset puts every node in the training mask; call
    :func:`split_train_test` to carve out a test set.
    """
    n = graph.num_nodes
    labels = np.full(n, -1, dtype=np.int64)
    for lineno, line in _data_lines(path):
        node, cls = _parse_pair(path, lineno, line)
        if node >= n:
            raise GraphFormatError(f"{path}:{lineno}: node {node} not in graph with {n} nodes")
        if labels[node] != -1:
            raise GraphFormatError(f"{path}:{lineno}: node {node} labeled twice")
        labels[node] = cls
    missing = np.flatnonzero(labels < 0)
    if len(missing):
        raise GraphFormatError(f"{path}: no label for node {missing[0]} ({len(missing)} missing)")
    return LabeledDataset(
        graph=graph,
        labels=labels,
        num_classes=int(labels.max()) + 1,
        train_mask=np.ones(n, dtype=bool),
        test_mask=np.zeros(n, dtype=bool),
        name=name,
    )


def write_labels(labels: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, c in enumerate(labels):
            fh.write(f"{i}\t{int(c)}\n")


def load_planetoid(directory, name: str) -> LabeledDataset:
    """Load the graph and labels of a Planetoid split (``ind.<name>.*``).

    Only ``graph``, ``ally``, ``ty`` and ``test.index`` are read; feature
    matrices are ignored. Test indices missing from the file (CiteSeer has
    isolated ones) get class 0, matching the usual loaders.
    """
    directory = Path(directory)

    def _load(suffix):
        with open(directory / f"ind.{name}.{suffix}", "rb") as fh:
            return pickle.load(fh, encoding="latin1")

    ally = np.asarray(_load("ally"))
    ty = np.asarray(_load("ty"))
    adjacency_dict = _load("graph")
    test_index = np.loadtxt(directory / f"ind.{name}.test.index", dtype=np.int64)

    # row r of ty labels node test_index[r]
    n = max(len(ally), int(test_index.max()) + 1, len(adjacency_dict))
    labels = np.zeros(n, dtype=np.int64)
    labels[: len(ally)] = ally.argmax(axis=1)
    labels[test_index] = ty.argmax(axis=1)

    edges = [(u, v) for u, nbrs in adjacency_dict.items() for v in nbrs if v < n]
    graph = from_edges(n, edges)
    return LabeledDataset(
        graph=graph,
        labels=labels,
        num_classes=int(labels.max()) + 1,
        train_mask=np.ones(n, dtype=bool),
        test_mask=np.zeros(n, dtype=bool),
        name=name,
    )


def load_dataset(path, name: str | None = None) -> LabeledDataset:
    """Load a dataset directory.

    Accepts either ``edges.tsv`` + ``labels.tsv`` or a Planetoid
    ``ind.<name>.*`` file set.
    """
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    edges_file, labels_file = path / "edges.tsv", path / "labels.tsv"
    if edges_file.exists():
        if not labels_file.exists():
            raise FileNotFoundError(f"labels not found: {labels_file}")
        graph = load_edge_list(edges_file)
        # isolated nodes only show up in the label file
        top = max(_parse_pair(labels_file, n, line)[0] for n, line in _data_lines(labels_file))
        if top >= graph.num_nodes:
            graph = from_edges(top + 1, graph.edges())
        return load_labels(labels_file, graph, name=name or path.name)
    graphs = sorted(path.glob("ind.*.graph"))
    if graphs:
        stem = name or graphs[0].name.split(".")[1]
        return load_planetoid(path, stem)
    raise FileNotFoundError(f"no edges.tsv or ind.*.graph files in {path}")


def split_train_test(dataset: LabeledDataset, ratio: float, seed: int) -> LabeledDataset:
    """Uniform random split: the first ``floor(ratio * N)`` permuted nodes train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = dataset.graph.num_nodes
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(ratio * n))
    train = np.zeros(n, dtype=bool)
    train[order[:n_train]] = True
    return LabeledDataset(
        graph=dataset.graph,
        labels=dataset.labels,
        num_classes=dataset.num_classes,
        train_mask=train,
        test_mask=~train,
        name=dataset.name,
    )


def _check_source(graph: Graph, source: int) -> None:
    if not 0 <= source < graph.num_nodes:
        raise IndexError(f"source {source} out of range for {graph.num_nodes} nodes")


def bfs_distances(graph: Graph, source: int) -> np.ndarray:
    """Hop distances from ``source``; unreachable nodes hold :data:`UNREACHABLE`."""
    _check_source(graph, source)
    dist = np.full(graph.num_nodes, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    offsets, nbrs = graph.csr_offsets, graph.csr_neighbors
    level = 0
    while len(frontier):
        level += 1
        starts, stops = offsets[frontier], offsets[frontier + 1]
        lengths = stops - starts
        # gather every neighbor of the frontier in one shot
        idx = np.repeat(starts - np.cumsum(lengths) + lengths, lengths) + np.arange(lengths.sum())
        cand = np.unique(nbrs[idx])
        frontier = cand[dist[cand] == UNREACHABLE]
        dist[frontier] = level
    return dist


def bfs_levels(graph: Graph, sources, adjacency: sp.csr_matrix | None = None):
    """Level-synchronous BFS from a batch of sources.

    Yields ``(level, reached)`` for level 1, 2, ... where ``reached`` is an
    ``(N, len(sources))`` boolean array of nodes first reached at that level.
    Each level is one sparse-times-dense product over the whole batch.
    """
    sources = np.asarray(sources, dtype=np.int64)
    for s in sources:
        _check_source(graph, int(s))
    n, b = graph.num_nodes, len(sources)
    adj = adjacency if adjacency is not None else graph.adjacency(dtype=np.float32)
    cols = np.arange(b)
    visited = np.zeros((n, b), dtype=bool)
    visited[sources, cols] = True
    frontier = np.zeros((n, b), dtype=np.float32)
    frontier[sources, cols] = 1.0
    level = 0
    while True:
        level += 1
        reached = (adj @ frontier) > 0
        reached &= ~visited
        if not reached.any():
            return
        visited |= reached
        yield level, reached
        frontier = reached.astype(np.float32)


def multi_source_bfs(graph: Graph, sources) -> np.ndarray:
    """Distances from each of ``sources`` (rows) to every node (columns).

    Rows are identical to :func:`bfs_distances` for the same source.
    """
    sources = np.asarray(sources, dtype=np.int64)
    dist = np.full((graph.num_nodes, len(sources)), UNREACHABLE, dtype=np.int64)
    dist[sources, np.arange(len(sources))] = 0
    for level, reached in bfs_levels(graph, sources):
        dist[reached] = level
    return dist.T.copy()
