"""End-to-end runs: load, centrality, expansion, train, audit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import centrality as cen
from . import expansion as ex
from . import fairness
from .config import RunConfig
from .graph import LabeledDataset, load_dataset, split_train_test
from .models import GCN, GNN, ModelConfig, TrainConfig, build_structure, train


@dataclass
class Prepared:
    dataset: LabeledDataset
    scores: cen.CentralityVector
    normalized: cen.CentralityVector
    marginal: np.ndarray | None
    hops: ex.HopNeighborhoods | None
    model_config: ModelConfig
    structure: object


_CENTRALITY_CACHE: dict = {}


def centrality_for(dataset: LabeledDataset, kind: str) -> cen.CentralityVector:
    """Centrality of ``dataset.graph``, computed once per process and graph."""
    g = dataset.graph
    key = (kind, g.num_nodes, g.csr_offsets.tobytes(), g.csr_neighbors.tobytes())
    if key not in _CENTRALITY_CACHE:
        _CENTRALITY_CACHE[key] = cen.compute(g, kind)
    return _CENTRALITY_CACHE[key]


def model_config(config: RunConfig) -> ModelConfig:
    return ModelConfig(
        kind=config.model,
        num_layers=config.layers,
        embed_dim=config.embed_dim,
        hidden=config.hidden,
        h_max=config.hops if config.model == "sfairgnn" else 1,
        fusion=config.fusion,
        dropout=config.dropout,
    )


def load_split(config: RunConfig, dataset: LabeledDataset | None = None) -> LabeledDataset:
    ds = dataset if dataset is not None else load_dataset(config.dataset, config.dataset_name or None)
    return split_train_test(ds, config.split, config.seed)


def prepare(config: RunConfig, dataset: LabeledDataset | None = None) -> Prepared:
    ds = load_split(config, dataset)
    raw = centrality_for(ds, config.centrality)
    norm = cen.normalize_minmax(raw)
    mcfg = model_config(config)
    marginal = hops = None
    if mcfg.kind != GCN:
        margin = ex.MarginConfig(config.line, config.centrality, config.threshold_space)
        cv = norm if config.threshold_space == ex.NORMALIZED else raw
        marginal = ex.mark_marginal(cv, margin)
        dadj = ex.build_debiased_adjacency(ds.graph, marginal)
        hops = ex.expand(dadj, mcfg.hops_used, ds.graph, within=config.within_hops)
    structure = build_structure(mcfg, ds.graph, hops)
    return Prepared(ds, raw, norm, marginal, hops, mcfg, structure)


def train_model(prep: Prepared, config: RunConfig) -> tuple[GNN, list[float]]:
    ds = prep.dataset
    model = GNN(prep.model_config, ds.graph.num_nodes, ds.num_classes, seed=config.seed)
    tcfg = TrainConfig(epochs=config.epochs, lr=config.lr, weight_decay=config.weight_decay, seed=config.seed)
    losses = train(model, prep.structure, ds.labels, ds.train_mask, tcfg)
    return model, losses


def report_config(config: RunConfig, prep: Prepared) -> dict:
    out = config.as_dict()
    out["dataset_name"] = config.dataset_name or prep.dataset.name
    out["num_nodes"] = prep.dataset.graph.num_nodes
    out["audit_scores"] = "raw"
    if prep.marginal is not None:
        out["num_marginal"] = int(prep.marginal.sum())
    if config.model != "sfairgnn":
        out["hops"] = 1
    if config.model == "sfairgnn" and config.fusion == "seq":
        out["seq_reading"] = "hop h aggregates the hop h-1 output with hop h parameters"
    return out


def audit(model: GNN, prep: Prepared, config: RunConfig, baseline=None) -> fairness.FairnessReport:
    ds = prep.dataset
    probs, _ = model.predict(prep.structure)
    return fairness.build_report(
        ds.labels,
        ds.test_mask,
        prep.scores.scores,
        probs,
        config=report_config(config, prep),
        num_bins=config.bins,
        min_count=config.min_count,
        baseline=baseline,
    )


def run(config: RunConfig, dataset: LabeledDataset | None = None):
    """Train and audit once. Returns ``(report, losses, model)``."""
    prep = prepare(config, dataset)
    model, losses = train_model(prep, config)
    return audit(model, prep, config), losses, model
