"""Marginal-node detection, debiased adjacency and hop neighbourhoods.

The debiased adjacency keeps only edges that touch at least one marginal
node. Hop-``h`` neighbour sets (``h >= 2``) are the nonzero pattern of its
``h``-th boolean power, i.e. endpoints of walks of length exactly ``h``.
Hop 1 always comes from the original graph. Every set contains the node
itself so attention over it is never empty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import centrality as cen
from .centrality import CentralityVector
from .graph import Graph, from_scipy

NORMALIZED = "normalized"
RAW = "raw"


@dataclass(frozen=True)
class MarginConfig:
    line: float = 0.5
    centrality_kind: str = cen.CLOSENESS
    threshold_space: str = NORMALIZED

    def __post_init__(self):
        if self.threshold_space not in (NORMALIZED, RAW):
            raise ValueError(f"unknown threshold space {self.threshold_space!r}")
        if self.threshold_space == NORMALIZED and not 0.0 <= self.line <= 1.0:
            raise ValueError("normalized margin line must lie in [0, 1]")


@dataclass(frozen=True)
class DebiasedAdjacency:
    matrix: sp.csr_matrix
    marginal_mask: np.ndarray

    @property
    def num_edges(self) -> int:
        return self.matrix.nnz // 2


@dataclass(frozen=True)
class HopNeighborhoods:
    """Neighbour sets per hop, stored as boolean CSR matrices.

    ``sets[h - 1][i]`` is the sorted member list of node ``i`` at hop ``h``.
    """

    h_max: int
    sets: tuple

    def members(self, h: int, i: int) -> np.ndarray:
        m = self.sets[h - 1]
        return m.indices[m.indptr[i]:m.indptr[i + 1]]

    def offsets(self, h: int) -> np.ndarray:
        return self.sets[h - 1].indptr

    def indices(self, h: int) -> np.ndarray:
        return self.sets[h - 1].indices

    def sizes(self, h: int) -> np.ndarray:
        return np.diff(self.sets[h - 1].indptr)

    def truncated(self, h_max: int) -> "HopNeighborhoods":
        if not 1 <= h_max <= self.h_max:
            raise ValueError(f"cannot truncate {self.h_max} hops to {h_max}")
        return HopNeighborhoods(h_max, self.sets[:h_max])


def mark_marginal(cv: CentralityVector, cfg: MarginConfig) -> np.ndarray:
    """Flag nodes whose score is at or below the margin line."""
    if cv.kind != cfg.centrality_kind:
        raise ValueError(f"centrality kind {cv.kind!r} does not match config {cfg.centrality_kind!r}")
    if (cfg.threshold_space == NORMALIZED) != cv.normalized:
        raise ValueError(
            f"threshold space {cfg.threshold_space!r} needs "
            f"{'normalized' if cfg.threshold_space == NORMALIZED else 'raw'} scores"
        )
    return cv.scores <= cfg.line


def build_debiased_adjacency(graph: Graph, mask: np.ndarray) -> DebiasedAdjacency:
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != graph.num_nodes:
        raise ValueError("mask length must equal the node count")
    src = np.repeat(np.arange(graph.num_nodes), graph.degrees())
    dst = graph.csr_neighbors
    keep = mask[src] | mask[dst]
    n = graph.num_nodes
    mat = sp.csr_matrix(
        (np.ones(int(keep.sum()), dtype=bool), (src[keep], dst[keep])), shape=(n, n)
    )
    mat.sort_indices()
    return DebiasedAdjacency(mat, mask.copy())


def _binarize(m: sp.csr_matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.data = np.ones_like(m.data)
    return m


def _with_self(m: sp.csr_matrix) -> sp.csr_matrix:
    n = m.shape[0]
    out = _binarize(m + sp.identity(n, dtype=np.float32, format="csr")).astype(bool)
    out.sort_indices()
    return out


def expand(
    dadj: DebiasedAdjacency, h_max: int, graph: Graph, within: bool = False
) -> HopNeighborhoods:
    """Build hop neighbour sets up to ``h_max``.

    With ``within=True`` hop ``h`` holds the union of walk endpoints of
    every length ``2..h`` instead of exactly ``h``.
    """
    if h_max < 1:
        raise ValueError("h_max must be at least 1")
    base = graph.adjacency(dtype=np.float32)
    sets = [_with_self(base)]
    step = dadj.matrix.astype(np.float32)
    power = step
    reach = None
    for _ in range(2, h_max + 1):
        # entries never exceed N before binarizing, so float32 counts are exact
        power = _binarize(power @ step)
        if within:
            reach = power if reach is None else _binarize(reach + power)
            sets.append(_with_self(reach))
        else:
            sets.append(_with_self(power))
    return HopNeighborhoods(h_max, tuple(sets))


@dataclass(frozen=True)
class ExpansionRow:
    hop: int
    group_means: dict
    gap: float
    num_edges: int


def expanded_graph(hops: HopNeighborhoods, h: int) -> Graph:
    """Graph whose edges are every (i, j) with j in some hop-g set, g <= h."""
    acc = hops.sets[0].astype(np.float32)
    for g in range(2, h + 1):
        acc = acc + hops.sets[g - 1].astype(np.float32)
    return from_scipy(acc)


def expansion_report(
    graph: Graph,
    cv: CentralityVector,
    hops: HopNeighborhoods,
    groups: np.ndarray | None = None,
    num_bins: int = 10,
) -> list[ExpansionRow]:
    """Closeness of the expanded graphs for h = 1..h_max.

    Nodes are grouped by ``groups`` when given, otherwise by equal-width
    bins of the original scores ``cv``. ``gap`` is the spread between the
    largest and smallest group mean.
    """
    if groups is None:
        s = cv.scores
        lo, hi = s.min(), s.max()
        if hi == lo:
            groups = np.zeros(len(s), dtype=np.int64)
        else:
            edges = np.linspace(lo, hi, num_bins + 1)
            groups = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, num_bins - 1)
    groups = np.asarray(groups)
    labels = sorted(set(groups.tolist()))
    rows = []
    for h in range(1, hops.h_max + 1):
        g = expanded_graph(hops, h)
        scores = cen.closeness(g).scores
        means = {lab: float(scores[groups == lab].mean()) for lab in labels}
        vals = list(means.values())
        rows.append(ExpansionRow(h, means, max(vals) - min(vals), g.num_edges))
    return rows
