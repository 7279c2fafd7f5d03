"""Hop-aware attentive GNN, GAT/GCN baselines, training and checkpoints.

All models take a trainable random embedding table as node input instead of
dataset features. A layer of the hop-aware model runs one attention
aggregation per hop neighbourhood and fuses the per-hop outputs (element-wise
mean or max) or chains them hop after hop (``seq``). A linear head maps the
last layer to class logits.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .expansion import HopNeighborhoods
from .graph import Graph
from .nn import (
    AdamState,
    NumericError,
    Parameter,
    adam_step,
    cross_entropy,
    elu,
    elu_grad,
    leaky_relu,
    leaky_relu_grad,
    softmax_rows,
    xavier_init,
)

SFAIRGNN, GAT, GCN = "sfairgnn", "gat", "gcn"
MODEL_KINDS = (SFAIRGNN, GAT, GCN)
SEQ, AVG, MAX = "seq", "avg", "max"
FUSIONS = (SEQ, AVG, MAX)


@dataclass(frozen=True)
class ModelConfig:
    kind: str = SFAIRGNN
    num_layers: int = 2
    embed_dim: int = 64
    hidden: int = 64
    h_max: int = 3
    fusion: str = MAX
    slope: float = 0.2
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {self.fusion!r}")
        if self.num_layers < 1 or self.h_max < 1:
            raise ValueError("num_layers and h_max must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def hops_used(self) -> int:
        return self.h_max if self.kind == SFAIRGNN else 1


@dataclass(frozen=True)
class HopIndex:
    """CSR pattern of one hop: row ``i`` lists the members of ``N_i``."""

    indptr: np.ndarray
    col: np.ndarray
    row: np.ndarray

    @classmethod
    def from_csr(cls, m: sp.csr_matrix) -> "HopIndex":
        m = sp.csr_matrix(m)
        m.sort_indices()
        indptr = m.indptr.astype(np.int64)
        sizes = np.diff(indptr)
        if np.any(sizes == 0):
            raise ValueError("every node needs a non-empty neighbourhood")
        row = np.repeat(np.arange(m.shape[0]), sizes)
        return cls(indptr, m.indices.astype(np.int64), row)

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        n = self.num_nodes
        return sp.csr_matrix((data, self.col, self.indptr), shape=(n, n))

    def permuted(self, perm: np.ndarray) -> "HopIndex":
        m = self.matrix(np.ones(len(self.col)))
        p = sp.csr_matrix((np.ones(len(perm)), (perm, np.arange(len(perm)))), shape=m.shape)
        return HopIndex.from_csr(p @ m @ p.T)


def gcn_normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with degrees counted after adding self-loops."""
    a = graph.adjacency() + sp.identity(graph.num_nodes, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    inv = 1.0 / np.sqrt(d)
    return sp.csr_matrix(sp.diags(inv) @ a @ sp.diags(inv))


def build_structure(config: ModelConfig, graph: Graph, hops: HopNeighborhoods | None = None):
    """Propagation structure a model of ``config.kind`` consumes."""
    if config.kind == GCN:
        return gcn_normalized_adjacency(graph)
    if hops is None or hops.h_max < config.hops_used:
        raise ValueError(f"{config.kind} needs hop neighbourhoods up to {config.hops_used}")
    return tuple(HopIndex.from_csr(hops.sets[h]) for h in range(config.hops_used))


def _edge_dot(a: np.ndarray, b: np.ndarray, row: np.ndarray, col: np.ndarray, chunk=1 << 17):
    out = np.empty(len(row))
    for s in range(0, len(row), chunk):
        e = s + chunk
        out[s:e] = np.einsum("ij,ij->i", a[row[s:e]], b[col[s:e]])
    return out


def attention_coefficients(z: np.ndarray, att: np.ndarray, hop: HopIndex, slope: float = 0.2):
    """Softmax over each neighbourhood of ``f(a . [z_i || z_j])``.

    ``z`` is the already-transformed embedding ``X W^T``. Returns
    ``(alpha, pre)`` with one entry per (i, j) pair in CSR order, ``pre``
    being the logits before the leaky ReLU.
    """
    d = z.shape[1]
    pre = (z @ att[:d])[hop.row] + (z @ att[d:])[hop.col]
    logit = leaky_relu(pre, slope)
    starts = hop.indptr[:-1]
    top = np.maximum.reduceat(logit, starts)
    ex = np.exp(logit - top[hop.row])
    alpha = ex / np.add.reduceat(ex, starts)[hop.row]
    return alpha, pre


def hop_aggregate(x, weight, att, hop: HopIndex, slope=0.2, activate=True):
    """One hop: ``act(sum_j alpha_ij W x_j)`` over ``N_i``. Returns (out, cache)."""
    z = x @ weight.T
    alpha, pre = attention_coefficients(z, att, hop, slope)
    s = hop.matrix(alpha)
    h = s @ z
    out = elu(h) if activate else h
    return out, (x, z, pre, alpha, s, h, activate)


def hop_aggregate_backward(dout, weight, att, hop: HopIndex, cache, slope=0.2):
    """Returns ``(dx, dweight, datt)``."""
    x, z, pre, alpha, s, h, activate = cache
    n, d = z.shape
    dh = dout * elu_grad(h) if activate else dout
    dz = s.T @ dh
    dalpha = _edge_dot(dh, z, hop.row, hop.col)
    starts = hop.indptr[:-1]
    # softmax backward within each neighbourhood
    dlogit = alpha * (dalpha - np.add.reduceat(alpha * dalpha, starts)[hop.row])
    dpre = dlogit * leaky_relu_grad(pre, slope)
    ds_self = np.add.reduceat(dpre, starts)
    ds_nbr = np.bincount(hop.col, weights=dpre, minlength=n)
    datt = np.concatenate([z.T @ ds_self, z.T @ ds_nbr])
    dz += np.outer(ds_self, att[:d]) + np.outer(ds_nbr, att[d:])
    return dz @ weight, dz.T @ x, datt


def fuse(hop_outputs, kind: str):
    """Element-wise mean or max of equally shaped per-hop embeddings."""
    shapes = {o.shape for o in hop_outputs}
    if len(shapes) != 1:
        raise ValueError(f"hop embeddings differ in shape: {sorted(shapes)}")
    stack = np.stack(hop_outputs)
    if kind == AVG:
        return stack.mean(axis=0)
    if kind == MAX:
        return stack.max(axis=0)
    raise ValueError(f"fuse handles avg and max, not {kind!r}")


class GNN:
    """Node classifier over a trainable embedding table.

    ``kind`` selects the propagation: ``sfairgnn`` (per-hop attention plus
    fusion), ``gat`` (attention over the 1-hop neighbourhood) or ``gcn``
    (fixed symmetric-normalized weights).
    """

    def __init__(self, config: ModelConfig, num_nodes: int, num_classes: int, seed: int = 0):
        self.config = config
        self.num_nodes = num_nodes
        self.num_classes = num_classes
        self.seed = seed
        rng = np.random.default_rng(seed)
        params = [Parameter("x0", rng.standard_normal((num_nodes, config.embed_dim)))]
        for k in range(1, config.num_layers + 1):
            fan_in = config.embed_dim if k == 1 else config.hidden
            if config.kind == GCN:
                params.append(Parameter(f"layer{k}.weight", xavier_init(config.hidden, fan_in, rng)))
                continue
            for h in range(1, config.hops_used + 1):
                d_in = config.hidden if (config.fusion == SEQ and h > 1) else fan_in
                params.append(Parameter(f"layer{k}.hop{h}.weight", xavier_init(config.hidden, d_in, rng)))
                params.append(Parameter(f"layer{k}.hop{h}.att", xavier_init(2 * config.hidden, 1, rng).ravel()))
        params.append(Parameter("head.weight", xavier_init(num_classes, config.hidden, rng)))
        params.append(Parameter("head.bias", np.zeros(num_classes)))
        self.params = params
        self.p = {q.name: q for q in params}

    # -- forward / backward -------------------------------------------------

    def forward(self, structure, train: bool = False, rng: np.random.Generator | None = None):
        cfg = self.config
        x = self.p["x0"].value
        caches = []
        for k in range(1, cfg.num_layers + 1):
            activate = k < cfg.num_layers
            keep = None
            if train and cfg.dropout > 0.0:
                keep = (rng.random(x.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
                x = x * keep
            if cfg.kind == GCN:
                x, cache = self._gcn_forward(k, x, structure, activate)
            else:
                x, cache = self._attn_forward(k, x, structure, activate)
            caches.append((keep, cache))
        logits = x @ self.p["head.weight"].value.T + self.p["head.bias"].value
        return logits, (caches, x)

    def _gcn_forward(self, k, x, adj, activate):
        z = x @ self.p[f"layer{k}.weight"].value.T
        h = adj @ z
        return (elu(h) if activate else h), (x, h, activate)

    def _attn_forward(self, k, x, hops, activate):
        cfg = self.config
        if cfg.fusion == SEQ or cfg.hops_used == 1:
            y, steps = x, []
            for h in range(1, cfg.hops_used + 1):
                y, c = hop_aggregate(y, self._w(k, h), self._a(k, h), hops[h - 1], cfg.slope, activate)
                steps.append(c)
            return y, ("seq", steps)
        outs, steps = [], []
        for h in range(1, cfg.hops_used + 1):
            o, c = hop_aggregate(x, self._w(k, h), self._a(k, h), hops[h - 1], cfg.slope, activate)
            outs.append(o)
            steps.append(c)
        fused = fuse(outs, cfg.fusion)
        winner = np.argmax(np.stack(outs), axis=0) if cfg.fusion == MAX else None
        return fused, (cfg.fusion, steps, winner)

    def _w(self, k, h):
        return self.p[f"layer{k}.hop{h}.weight"].value

    def _a(self, k, h):
        return self.p[f"layer{k}.hop{h}.att"].value

    def backward(self, structure, cache, dlogits) -> None:
        """Overwrite every parameter's ``grad`` with d(loss)/d(param)."""
        cfg = self.config
        for q in self.params:
            q.zero_grad()
        caches, x_last = cache
        self.p["head.weight"].grad += dlogits.T @ x_last
        self.p["head.bias"].grad += dlogits.sum(axis=0)
        dx = dlogits @ self.p["head.weight"].value
        for k in range(cfg.num_layers, 0, -1):
            keep, c = caches[k - 1]
            if cfg.kind == GCN:
                dx = self._gcn_backward(k, dx, structure, c)
            else:
                dx = self._attn_backward(k, dx, structure, c)
            if keep is not None:
                dx = dx * keep
        self.p["x0"].grad += dx

    def _gcn_backward(self, k, dout, adj, cache):
        x, h, activate = cache
        dh = dout * elu_grad(h) if activate else dout
        dz = adj.T @ dh
        w = self.p[f"layer{k}.weight"]
        w.grad += dz.T @ x
        return dz @ w.value

    def _attn_backward(self, k, dout, hops, cache):
        cfg = self.config
        mode = cache[0]
        if mode == "seq":
            dy = dout
            for h in range(cfg.hops_used, 0, -1):
                dy, dw, da = hop_aggregate_backward(
                    dy, self._w(k, h), self._a(k, h), hops[h - 1], cache[1][h - 1], cfg.slope
                )
                self.p[f"layer{k}.hop{h}.weight"].grad += dw
                self.p[f"layer{k}.hop{h}.att"].grad += da
            return dy
        _, steps, winner = cache
        dx = None
        for h in range(1, cfg.hops_used + 1):
            if mode == AVG:
                dh = dout / cfg.hops_used
            else:
                dh = np.where(winner == h - 1, dout, 0.0)
            dxh, dw, da = hop_aggregate_backward(dh, self._w(k, h), self._a(k, h), hops[h - 1], steps[h - 1], cfg.slope)
            self.p[f"layer{k}.hop{h}.weight"].grad += dw
            self.p[f"layer{k}.hop{h}.att"].grad += da
            dx = dxh if dx is None else dx + dxh
        return dx

    # -- convenience --------------------------------------------------------

    def loss_and_grad(self, structure, labels, mask, train=False, rng=None) -> float:
        logits, cache = self.forward(structure, train=train, rng=rng)
        loss, dlogits = cross_entropy(logits, labels, mask)
        self.backward(structure, cache, dlogits)
        return loss

    def loss(self, structure, labels, mask) -> float:
        logits, _ = self.forward(structure)
        return cross_entropy(logits, labels, mask)[0]

    def predict(self, structure):
        """Class probabilities (rows sum to 1) and argmax labels."""
        logits, _ = self.forward(structure)
        probs = softmax_rows(logits)
        return probs, probs.argmax(axis=1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.005
    weight_decay: float = 0.0
    seed: int = 0


def train(model: GNN, structure, labels, train_mask, config: TrainConfig) -> list[float]:
    """Full-batch Adam on the masked cross-entropy; returns per-epoch loss.

    Entry ``e`` is the training loss evaluated before update ``e``.
    """
    state = AdamState()
    rng = np.random.default_rng([config.seed, 1])
    losses = []
    for epoch in range(config.epochs):
        loss = model.loss_and_grad(structure, labels, train_mask, train=True, rng=rng)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}: {loss}")
        losses.append(loss)
        adam_step(model.params, state, config.lr, config.weight_decay)
    for q in model.params:
        if not np.all(np.isfinite(q.value)):
            raise NumericError(f"parameter {q.name} became non-finite")
    return losses


# -- checkpoints --------------------------------------------------------------

_MAGIC = "structfair-checkpoint 1"


def save_checkpoint(model: GNN, path, extra: dict | None = None) -> None:
    """Text header (key = value lines, then one ``param`` line per array)
    followed by the arrays as row-major little-endian float64.

    ::

        structfair-checkpoint 1
        kind = sfairgnn
        ...
        param x0 2708 64
        ...
        end
        <raw bytes>
    """
    header = [_MAGIC]
    meta = {f"model.{k}": v for k, v in dataclasses.asdict(model.config).items()}
    meta.update({"num_nodes": model.num_nodes, "num_classes": model.num_classes, "seed": model.seed})
    meta.update(extra or {})
    header += [f"{k} = {v}" for k, v in meta.items()]
    for q in model.params:
        rows, cols = q.value.reshape(len(q.value), -1).shape
        header.append(f"param {q.name} {rows} {cols} {'vector' if q.value.ndim == 1 else 'matrix'}")
    header.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("utf-8"))
        for q in model.params:
            fh.write(np.ascontiguousarray(q.value, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def read_checkpoint_header(path) -> tuple[dict, list, int]:
    with open(path, "rb") as fh:
        blob = fh.read()
    lines, pos = [], 0
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"{path}: truncated header")
        line = blob[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0] != _MAGIC:
        raise CheckpointError(f"{path}: not a structfair checkpoint")
    meta, table = {}, []
    for line in lines[1:]:
        if line.startswith("param "):
            _, name, rows, cols, shape = line.split()
            table.append((name, int(rows), int(cols), shape))
        else:
            key, _, value = line.partition(" = ")
            meta[key] = value
    return meta, table, pos


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return {"True": True, "False": False}.get(text, text)


def load_checkpoint(path) -> tuple[GNN, dict]:
    meta, table, pos = read_checkpoint_header(path)
    cfg = ModelConfig(**{k[len("model."):]: _parse_value(v) for k, v in meta.items() if k.startswith("model.")})
    model = GNN(cfg, int(meta["num_nodes"]), int(meta["num_classes"]), int(meta["seed"]))
    with open(path, "rb") as fh:
        fh.seek(pos)
        for name, rows, cols, shape in table:
            q = model.p.get(name)
            count = rows * cols
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            if q is None or data.size != count or q.value.size != count:
                raise CheckpointError(f"{path}: parameter {name} does not match the model")
            q.value = data.astype(np.float64).reshape(q.value.shape)
            q.grad = np.zeros_like(q.value)
    return model, meta
