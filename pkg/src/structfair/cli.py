"""Command-line entry point: ``structfair {train,audit,sweep,expand,synth}``.

Every output file starts with the resolved run configuration as ``# key =
value`` comment lines, so a CSV on its own says how it was produced.

Exit codes: 0 ok, 2 usage or input error, 3 state mismatch (checkpoint vs
dataset), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import expansion as ex
from . import fairness, pipeline, synthetic
from .centrality import ConvergenceError
from .config import RunConfig, from_lines, resolve
from .graph import load_dataset
from .models import CheckpointError, load_checkpoint, read_checkpoint_header, save_checkpoint
from .nn import NumericError

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_NUMERIC = 0, 2, 3, 4

CHECKPOINT = "checkpoint.sfc"
SWEEP_METRICS = ("acc", "std", "pcc", "abs_pcc", "pcc_binary")
GRID_DEFAULTS = {
    "hops": [1, 2, 3, 4, 5],
    "line": [round(0.1 * k, 1) for k in range(1, 10)],
    "fusion": ["seq", "avg", "max"],
}


class UsageError(Exception):
    pass


class StateMismatch(Exception):
    pass


# -- output helpers -----------------------------------------------------------


def csv_text(config: RunConfig, header, rows) -> str:
    buf = io.StringIO()
    buf.write(config.comment_block())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _g(v) -> str:
    return "" if v is None else f"{v:.17g}"


def _out(config: RunConfig) -> Path:
    return Path(config.out)


# -- commands -----------------------------------------------------------------


def cmd_train(config: RunConfig) -> int:
    prep = pipeline.prepare(config)
    model, losses = pipeline.train_model(prep, config)
    out = _out(config)
    out.mkdir(parents=True, exist_ok=True)
    stored = dict(line.split(" = ", 1) for line in config.lines())
    save_checkpoint(model, out / CHECKPOINT, extra={f"run.{k}": v for k, v in stored.items()})
    write_text(out / "loss.csv", csv_text(config, ["epoch", "loss"], [[e, _g(v)] for e, v in enumerate(losses)]))
    write_text(out / "config.txt", "\n".join(config.lines()) + "\n")
    print(f"trained {config.model} for {len(losses)} epochs: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    print(f"checkpoint: {out / CHECKPOINT}")
    return EXIT_OK


def checkpoint_config(meta: dict) -> dict:
    """The run configuration stored in a checkpoint header."""
    lines = [f"{k[4:]} = {v}" for k, v in meta.items() if k.startswith("run.")]
    stored = from_lines(lines)
    keys = {line.split(" = ")[0] for line in lines}
    return {k: v for k, v in stored.as_dict().items() if k in keys}


def cmd_audit(config: RunConfig, checkpoint, baseline=None) -> int:
    model, _ = load_checkpoint(checkpoint)
    prep = pipeline.prepare(config)
    ds = prep.dataset
    if model.num_nodes != ds.graph.num_nodes or model.num_classes != ds.num_classes:
        raise StateMismatch(
            f"checkpoint has {model.num_nodes} nodes / {model.num_classes} classes, "
            f"dataset has {ds.graph.num_nodes} / {ds.num_classes}"
        )
    if model.config != prep.model_config:
        raise StateMismatch(f"checkpoint model {model.config} does not match run config {prep.model_config}")
    base = None
    if baseline is not None:
        base = fairness.FairnessReport.from_json(Path(baseline).read_text(encoding="utf-8"))
    report = pipeline.audit(model, prep, config, baseline=base)
    out = _out(config)
    write_text(out / "report.json", report.to_json() + "\n")
    row = report.csv_row()
    write_text(out / "report.csv", csv_text(config, report.CSV_FIELDS, [[row[k] for k in report.CSV_FIELDS]]))
    bins = [
        [b["bin"], _g(b["lo"]), _g(b["hi"]), _g(b["center"]), _g(b["accuracy"]), b["count"], int(b["retained"])]
        for b in report.bins
    ]
    header = ["bin", "lo", "hi", "center", "accuracy", "count", "retained"]
    write_text(out / "bins.csv", csv_text(config, header, bins))
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    print(f"acc {report.accuracy_pct:.2f}  std {_short(report.std_metric)}  pcc {_short(report.pcc_metric)}")
    return EXIT_OK


def _short(v) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def parse_grid(axis: str, values: str | None) -> list:
    if values is None:
        return list(GRID_DEFAULTS[axis])
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise UsageError(f"empty grid for {axis}")
    if axis == "hops":
        return [int(v) for v in items]
    if axis == "line":
        return [float(v) for v in items]
    return [v.lower() for v in items]


def sweep_rows(config: RunConfig, axis: str, grid: list, seeds: list[int], dataset=None):
    """Train and audit every (grid point, seed). Returns long rows and per-point means.

    A failing point is recorded as an ``error`` row and the sweep moves on.
    """
    rows, means = [], {}
    for point in grid:
        collected = {m: [] for m in SWEEP_METRICS}
        for seed in seeds:
            run_cfg = config.replace(**{axis: point, "seed": seed})
            try:
                report, _, _ = pipeline.run(run_cfg, dataset)
            except (ValueError, NumericError, ConvergenceError) as err:
                rows.append([axis, point, seed, "error", str(err)])
                continue
            pcc = report.pcc_metric
            vals = {
                "acc": report.accuracy_pct,
                "std": report.std_metric,
                "pcc": pcc,
                "abs_pcc": None if pcc is None else abs(pcc),
                "pcc_binary": report.pcc_binary,
            }
            for m in SWEEP_METRICS:
                rows.append([axis, point, seed, m, _g(vals[m])])
                if vals[m] is not None:
                    collected[m].append(vals[m])
        means[point] = {m: (float(np.mean(v)) if v else None) for m, v in collected.items()}
        for m in SWEEP_METRICS:
            rows.append([axis, point, "mean", m, _g(means[point][m])])
    return rows, means


def trend_flags(axis: str, means: dict) -> list[list]:
    """Report-only trend checks against the expected sensitivity curves."""
    flags = []
    if axis == "hops":
        pts = sorted(p for p in means if p < 4)
        for m in ("abs_pcc", "std"):
            vals = [means[p][m] for p in pts]
            if len(pts) >= 2 and None not in vals:
                flags.append([f"{m}_decreases_below_h4", int(vals[-1] < vals[0]), _series(pts, vals)])
    elif axis == "line":
        pts = sorted(means)
        vals = [means[p]["std"] for p in pts]
        if len(pts) >= 3 and None not in vals:
            k = int(np.argmin(vals))
            flags.append(["std_u_shape", int(0 < k < len(pts) - 1), _series(pts, vals)])
    else:
        for m in ("abs_pcc", "std"):
            ok = {p: means[p][m] for p in means if means[p][m] is not None}
            if ok:
                flags.append([f"best_fusion_{m}", min(ok, key=ok.get), _series(list(ok), list(ok.values()))])
    return flags


def _series(points, values) -> str:
    return " ".join(f"{p}:{v:.4f}" for p, v in zip(points, values))


def cmd_sweep(config: RunConfig, axis: str, values: str | None, seeds: int) -> int:
    grid = parse_grid(axis, values)
    if seeds < 1:
        raise UsageError("--seeds must be at least 1")
    seed_list = [config.seed + k for k in range(seeds)]
    ds = load_dataset(config.dataset, config.dataset_name or None)
    rows, means = sweep_rows(config, axis, grid, seed_list, ds)
    out = _out(config)
    header = ["grid", "point", "seed", "metric", "value"]
    write_text(out / f"sweep_{axis}.csv", csv_text(config, header, rows))
    flags = trend_flags(axis, means)
    write_text(out / f"sweep_{axis}_flags.csv", csv_text(config, ["flag", "value", "series"], flags))
    errors = sum(1 for r in rows if r[3] == "error")
    print(f"sweep over {axis}: {len(grid)} points x {seeds} seeds, {errors} failed")
    for f in flags:
        print(f"flag {f[0]} = {f[1]}")
    return EXIT_OK


def read_groups(directory: Path, num_nodes: int):
    path = directory / "groups.csv"
    if not path.is_file():
        return None
    groups = np.empty(num_nodes, dtype=object)
    with open(path, encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            groups[int(rec["node_id"])] = rec["group"]
    return groups.astype(str)


def cmd_expand(config: RunConfig) -> int:
    if config.hops < 1:
        raise UsageError(f"--hops must be at least 1, got {config.hops}")
    prep = pipeline.prepare(config.replace(model="sfairgnn"))
    ds, hops = prep.dataset, prep.hops
    sizes = []
    for h in range(1, hops.h_max + 1):
        values, counts = np.unique(hops.sizes(h), return_counts=True)
        sizes += [[h, int(v), int(c)] for v, c in zip(values, counts)]
    out = _out(config)
    write_text(out / "expand_sizes.csv", csv_text(config, ["hop", "set_size", "count"], sizes))
    groups = read_groups(Path(config.dataset), ds.graph.num_nodes) if Path(config.dataset).is_dir() else None
    report = ex.expansion_report(ds.graph, prep.scores, hops, groups=groups, num_bins=config.bins)
    rows = []
    for r in report:
        rows += [[r.hop, g, _g(m), _g(r.gap), r.num_edges] for g, m in r.group_means.items()]
    header = ["hop", "group", "mean_closeness", "gap", "num_edges"]
    write_text(out / "expand_gap.csv", csv_text(config, header, rows))
    for r in report:
        print(f"h={r.hop}: gap {r.gap:.4f}, {r.num_edges} edges")
    return EXIT_OK


def cmd_synth(config: RunConfig, kind: str, core: int, middle: int, chain: int) -> int:
    out = _out(config)
    if kind == "three-group":
        gg = synthetic.generate_three_group(core, middle, chain, seed=config.seed)
        synthetic.write_grouped(gg, out)
        n = gg.graph.num_nodes
    else:
        ds = synthetic.generate_separable_fixture(seed=config.seed)
        synthetic.write_dataset(ds, out)
        n = ds.graph.num_nodes
    print(f"wrote {kind} graph with {n} nodes to {out}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

# flag -> (type, help); destinations match RunConfig field names
_RUN_FLAGS = {
    "dataset": (str, "dataset directory (edges.tsv + labels.tsv, or planetoid ind.* files)"),
    "dataset-name": (str, "planetoid prefix or display name"),
    "model": (str, "sfairgnn, gat or gcn"),
    "centrality": (str, "closeness or eigenvector"),
    "threshold-space": (str, "normalized or raw"),
    "line": (float, "margin line"),
    "hops": (int, "maximum hop h"),
    "fusion": (str, "seq, avg or max"),
    "layers": (int, "number of aggregation layers"),
    "embed-dim": (int, "width of the trainable input features"),
    "hidden": (int, "hidden width"),
    "dropout": (float, "dropout on each layer input"),
    "epochs": (int, "training epochs"),
    "lr": (float, "Adam learning rate"),
    "weight-decay": (float, "L2 penalty"),
    "seed": (int, "split and initialization seed"),
    "split": (float, "train fraction"),
    "bins": (int, "centrality bins for the audit"),
    "min-count": (int, "minimum test nodes for a bin to count"),
    "out": (str, "output directory"),
}


def _run_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value config file")
    for flag, (typ, text) in _RUN_FLAGS.items():
        p.add_argument(f"--{flag}", type=typ, help=text)
    p.add_argument("--within-hops", action="store_const", const=True, help="hop h set includes all shorter walks")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="structfair", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _run_parent()
    sub.add_parser("train", parents=[parent], help="train a model and write a checkpoint")
    p = sub.add_parser("audit", parents=[parent], help="fairness report for a checkpoint")
    p.add_argument("--checkpoint", help=f"checkpoint file (from train: <out>/{CHECKPOINT})")
    p.add_argument("--baseline", help="baseline report.json; adds improvement columns")
    p = sub.add_parser("sweep", parents=[parent], help="train+audit over one grid axis")
    p.add_argument("--grid", choices=sorted(GRID_DEFAULTS), required=True)
    p.add_argument("--values", help="comma-separated grid points (default: the standard grid)")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    sub.add_parser("expand", parents=[parent], help="per-hop set sizes and closeness gap table")
    p = sub.add_parser("synth", parents=[parent], help="write a synthetic dataset to --out")
    p.add_argument("--kind", choices=["three-group", "separable"], default="three-group")
    p.add_argument("--core-size", type=int, default=4)
    p.add_argument("--middle", type=int, default=2)
    p.add_argument("--chain", type=int, default=1)
    return parser


def _cli_values(args) -> dict:
    names = [f.replace("-", "_") for f in _RUN_FLAGS] + ["within_hops"]
    return {k: getattr(args, k) for k in names}


def run_command(args, environ=None) -> int:
    base = None
    if args.command == "audit":
        if not args.checkpoint:
            raise UsageError("audit needs --checkpoint")
        if not Path(args.checkpoint).is_file():
            raise UsageError(f"checkpoint not found: {args.checkpoint}")
        base = checkpoint_config(read_checkpoint_header(args.checkpoint)[0])
        base.pop("out", None)
    config = resolve(args.config, _cli_values(args), environ, base=base)
    if args.command in ("train", "audit", "sweep", "expand") and not config.dataset:
        raise UsageError("--dataset is required")
    if args.command == "train":
        return cmd_train(config)
    if args.command == "audit":
        return cmd_audit(config, args.checkpoint, args.baseline)
    if args.command == "sweep":
        return cmd_sweep(config, args.grid, args.values, args.seeds)
    if args.command == "expand":
        return cmd_expand(config)
    return cmd_synth(config, args.kind, args.core_size, args.middle, args.chain)


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run_command(args, environ)
    except (CheckpointError, StateMismatch) as err:
        code, msg = EXIT_MISMATCH, str(err)
    except (NumericError, ConvergenceError, FloatingPointError) as err:
        code, msg = EXIT_NUMERIC, str(err)
    except (UsageError, OSError, ValueError, KeyError) as err:
        code, msg = EXIT_USAGE, str(err).strip("'\"")
    print(f"structfair: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
