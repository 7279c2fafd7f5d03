"""Structure-fairness metrics: per-centrality-bin accuracy spread and PCC.

Both metrics are reported on a x100 scale. ``std`` is the population
standard deviation of per-bin mean test accuracy; ``pcc`` is the Pearson
correlation between a node's centrality and the probability the model puts
on its true class.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric has no value for these inputs (e.g. a constant variable)."""


@dataclass(frozen=True)
class BinTable:
    edges: np.ndarray
    counts: np.ndarray
    correct: np.ndarray
    min_count: int

    @property
    def retained(self) -> np.ndarray:
        return self.counts >= max(self.min_count, 1)

    @property
    def accuracy(self) -> np.ndarray:
        """Per-bin mean accuracy; NaN for empty bins."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.correct / np.maximum(self.counts, 1), np.nan)

    def rows(self) -> list[dict]:
        acc = self.accuracy
        return [
            {
                "bin": k,
                "lo": float(self.edges[k]),
                "hi": float(self.edges[k + 1]),
                "center": float((self.edges[k] + self.edges[k + 1]) / 2),
                "count": int(self.counts[k]),
                "accuracy": None if math.isnan(acc[k]) else float(acc[k]),
                "retained": bool(self.retained[k]),
            }
            for k in range(len(self.counts))
        ]


def bin_edges(values: np.ndarray, num_bins: int) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([lo, hi])
    return np.linspace(lo, hi, num_bins + 1)


def assign_bins(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin index per value: left-closed, right-open, last bin closed."""
    nb = len(edges) - 1
    return np.clip(np.searchsorted(edges, values, side="right") - 1, 0, nb - 1)


def bin_by_centrality(
    scores: np.ndarray,
    test_mask: np.ndarray,
    num_bins: int = 10,
    min_count: int = 5,
    correct: np.ndarray | None = None,
) -> BinTable:
    """Equal-width bins over the test nodes' score range.

    Constant scores collapse to a single bin. ``correct`` (per node 0/1)
    fills the per-bin accuracy; without it the table only has counts.
    """
    if num_bins < 2:
        raise ValueError("num_bins must be at least 2")
    test_mask = np.asarray(test_mask, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)[test_mask]
    if s.size == 0:
        raise ValueError("no test nodes to bin")
    edges = bin_edges(s, num_bins)
    idx = assign_bins(s, edges)
    nb = len(edges) - 1
    counts = np.bincount(idx, minlength=nb)
    if correct is None:
        hits = np.zeros(nb)
    else:
        hits = np.bincount(idx, weights=np.asarray(correct, dtype=np.float64)[test_mask], minlength=nb)
    if not np.any(counts >= max(min_count, 1)):
        raise UndefinedMetricError(f"every bin holds fewer than {min_count} test nodes")
    return BinTable(edges, counts, hits, min_count)


def std_metric(table: BinTable) -> float:
    """Population std of retained per-bin accuracies, x100."""
    acc = table.accuracy[table.retained]
    if len(acc) < 2:
        raise UndefinedMetricError(f"std needs at least two retained bins, got {len(acc)}")
    return float(np.std(acc) * 100.0)


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise UndefinedMetricError("pearson needs at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise UndefinedMetricError("pearson is undefined for a constant variable")
    r = (dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def pcc_metric(scores: np.ndarray, true_prob: np.ndarray, test_mask: np.ndarray) -> float:
    """Signed Pearson correlation of centrality vs true-class probability, x100."""
    m = np.asarray(test_mask, dtype=bool)
    return pearson(np.asarray(scores)[m], np.asarray(true_prob)[m]) * 100.0


def improvement(baseline: float, ours: float) -> float:
    """Relative reduction in percent, ``(baseline - ours) / baseline * 100``."""
    if baseline == 0:
        raise UndefinedMetricError("improvement over a zero baseline")
    return (baseline - ours) / baseline * 100.0


@dataclass
class FairnessReport:
    accuracy_pct: float
    std_metric: float | None
    pcc_metric: float | None
    pcc_binary: float | None
    bins: list
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    improvement: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FairnessReport":
        return cls(**json.loads(text))

    CSV_FIELDS = (
        "dataset", "model", "fusion", "hop", "line", "seed",
        "acc", "std", "pcc", "pcc_binary", "std_impr", "pcc_impr",
    )

    def csv_row(self) -> dict:
        c = self.config
        imp = self.improvement or {}
        return {
            "dataset": c.get("dataset_name", ""),
            "model": c.get("model", ""),
            "fusion": c.get("fusion", ""),
            "hop": c.get("hops", ""),
            "line": c.get("line", ""),
            "seed": c.get("seed", ""),
            "acc": _fmt(self.accuracy_pct),
            "std": _fmt(self.std_metric),
            "pcc": _fmt(self.pcc_metric),
            "pcc_binary": _fmt(self.pcc_binary),
            "std_impr": _fmt(imp.get("std")),
            "pcc_impr": _fmt(imp.get("pcc")),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(self.csv_row())
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def build_report(
    labels: np.ndarray,
    test_mask: np.ndarray,
    scores: np.ndarray,
    probs: np.ndarray,
    config: dict | None = None,
    num_bins: int = 10,
    min_count: int = 5,
    baseline: FairnessReport | None = None,
) -> FairnessReport:
    """Accuracy, STD, PCC (continuous and 0/1 correctness) and the bin table.

    Undefined metrics are stored as ``None`` with a note saying why. With a
    ``baseline`` report the relative improvement of each fairness metric is
    attached (PCC compared by magnitude).
    """
    test_mask = np.asarray(test_mask, dtype=bool)
    n = len(labels)
    if len(test_mask) != n or len(scores) != n or len(probs) != n:
        raise ValueError("labels, mask, scores and predictions must cover the same nodes")
    if not test_mask.any():
        raise ValueError("empty test mask")
    pred = probs.argmax(axis=1)
    correct = (pred == labels).astype(np.float64)
    true_prob = probs[np.arange(n), labels]
    notes = []

    def guarded(name, fn, *args):
        try:
            return fn(*args)
        except UndefinedMetricError as err:
            notes.append(f"{name} undefined: {err}")
            return None

    table = bin_by_centrality(scores, test_mask, num_bins, min_count, correct=correct)
    std = guarded("std", std_metric, table)
    pcc = guarded("pcc", pcc_metric, scores, true_prob, test_mask)
    pcc_bin = guarded("pcc_binary", pcc_metric, scores, correct, test_mask)

    report = FairnessReport(
        accuracy_pct=float(correct[test_mask].mean() * 100.0),
        std_metric=std,
        pcc_metric=pcc,
        pcc_binary=pcc_bin,
        bins=table.rows(),
        config=dict(config or {}),
        notes=notes,
    )
    if baseline is not None:
        report.improvement = compare(baseline, report)
    return report


def compare(baseline: FairnessReport, ours: FairnessReport) -> dict:
    out = {}
    pairs = {
        "std": (baseline.std_metric, ours.std_metric),
        "pcc": (_abs(baseline.pcc_metric), _abs(ours.pcc_metric)),
    }
    for key, (b, o) in pairs.items():
        try:
            out[key] = None if b is None or o is None else improvement(b, o)
        except UndefinedMetricError:
            out[key] = None
    return out


def _abs(v):
    return None if v is None else abs(v)
