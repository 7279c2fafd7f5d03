import json

import pytest

from structfair import cli
from structfair.models import load_checkpoint

FAST = ["--epochs", "40", "--embed-dim", "8", "--hidden", "8"]


def run(*argv, env=None):
    return cli.main([str(a) for a in argv], environ=env or {})


@pytest.fixture
def sep(tmp_path):
    d = tmp_path / "sep"
    assert run("synth", "--kind", "separable", "--out", d) == 0
    return d


@pytest.fixture
def trained(tmp_path, sep):
    out = tmp_path / "run"
    assert run("train", "--dataset", sep, "--out", out, "--split", "0.5", *FAST) == 0
    return out


def body(path):
    """CSV content without the config comment lines."""
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def test_train_writes_checkpoint_and_loss_curve(trained):
    assert (trained / cli.CHECKPOINT).is_file()
    rows = body(trained / "loss.csv")
    assert rows[0] == "epoch,loss" and len(rows) == 41
    text = (trained / "loss.csv").read_text()
    assert "# epochs = 40\n" in text and "# seed = 0\n" in text


def test_train_default_epochs_reduce_loss(tmp_path, sep):
    # the curve is the dropout training loss, so it is noisy over a few epochs
    out = tmp_path / "full"
    assert run("train", "--dataset", sep, "--out", out) == 0
    losses = [float(r.split(",")[1]) for r in body(out / "loss.csv")[1:]]
    assert len(losses) == 200
    assert losses[-1] < losses[0]


def test_train_gcn_forces_one_hop(tmp_path, sep):
    out = tmp_path / "gcn"
    assert run("train", "--dataset", sep, "--out", out, "--model", "gcn", "--hops", "4", *FAST) == 0
    model, _ = load_checkpoint(out / cli.CHECKPOINT)
    assert model.config.h_max == 1 and model.config.kind == "gcn"


def test_missing_labels_exit_2(tmp_path, sep, capsys):
    d = tmp_path / "nolabels"
    d.mkdir()
    (d / "edges.tsv").write_text((sep / "edges.tsv").read_text())
    assert run("train", "--dataset", d, "--out", tmp_path / "x") == 2
    assert "labels not found" in capsys.readouterr().err


def test_audit_outputs(trained, sep):
    assert run("audit", "--checkpoint", trained / cli.CHECKPOINT, "--dataset", sep, "--out", trained,
               "--bins", "2", "--min-count", "1") == 0
    report = json.loads((trained / "report.json").read_text())
    assert report["config"]["epochs"] == 40  # recovered from the checkpoint
    assert body(trained / "bins.csv")[0] == "bin,lo,hi,center,accuracy,count,retained"
    assert body(trained / "report.csv")[0].startswith("dataset,model,fusion,hop,line,seed,acc")


def test_audit_with_baseline_fills_improvement(tmp_path, sep):
    common = ["--dataset", sep, "--split", "0.5", "--bins", "2", "--min-count", "1", *FAST]
    for model in ("gcn", "sfairgnn"):
        out = tmp_path / model
        assert run("train", "--model", model, "--out", out, *common) == 0
    assert run("audit", "--checkpoint", tmp_path / "gcn" / cli.CHECKPOINT, "--out", tmp_path / "gcn", *common) == 0
    assert run("audit", "--checkpoint", tmp_path / "sfairgnn" / cli.CHECKPOINT, "--out", tmp_path / "sfairgnn",
               "--baseline", tmp_path / "gcn" / "report.json", *common) == 0
    report = json.loads((tmp_path / "sfairgnn" / "report.json").read_text())
    assert set(report["improvement"]) == {"std", "pcc"}


def test_audit_without_checkpoint_exit_2(sep, tmp_path):
    assert run("audit", "--dataset", sep, "--out", tmp_path) == 2
    assert run("audit", "--dataset", sep, "--checkpoint", tmp_path / "missing.sfc") == 2


def test_audit_shape_mismatch_exit_3(trained, tmp_path):
    other = tmp_path / "tg"
    assert run("synth", "--out", other) == 0
    assert run("audit", "--checkpoint", trained / cli.CHECKPOINT, "--dataset", other, "--out", tmp_path / "a") == 3


def test_audit_model_mismatch_exit_3(trained, sep, tmp_path):
    assert run("audit", "--checkpoint", trained / cli.CHECKPOINT, "--dataset", sep, "--hidden", "4",
               "--out", tmp_path / "a") == 3


def test_corrupt_checkpoint_exit_3(sep, tmp_path):
    bad = tmp_path / "bad.sfc"
    bad.write_text("not a checkpoint\nend\n")
    assert run("audit", "--checkpoint", bad, "--dataset", sep, "--out", tmp_path) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_4(sep, tmp_path):
    assert run("train", "--dataset", sep, "--out", tmp_path / "n", "--lr", "1e300", *FAST) == 4


def test_env_override(tmp_path, sep):
    out = tmp_path / "env"
    assert run("train", "--dataset", sep, "--out", out, *FAST, env={"STRUCTFAIR_EPOCHS": "5"}) == 0
    # the CLI flag still wins over the environment
    assert len(body(out / "loss.csv")) == 41


def test_config_file(tmp_path, sep):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"dataset = {sep}\nepochs = 3\nembed_dim = 4\nhidden = 4\nout = {tmp_path / 'cf'}\n")
    assert run("train", "--config", cfg) == 0
    assert len(body(tmp_path / "cf" / "loss.csv")) == 4


def test_sweep_long_format_and_means(tmp_path, sep):
    out = tmp_path / "sw"
    assert run("sweep", "--dataset", sep, "--grid", "hops", "--values", "1,2,3", "--seeds", "2", "--out", out,
               "--bins", "2", "--min-count", "1", *FAST) == 0
    rows = [r.split(",") for r in body(out / "sweep_hops.csv")]
    assert rows[0] == ["grid", "point", "seed", "metric", "value"]
    metrics = len(cli.SWEEP_METRICS)
    assert len(rows) - 1 == 3 * (2 + 1) * metrics
    assert {r[2] for r in rows[1:]} == {"0", "1", "mean"}
    assert (out / "sweep_hops_flags.csv").is_file()


def test_sweep_records_failures_and_continues(tmp_path, sep):
    out = tmp_path / "sw"
    assert run("sweep", "--dataset", sep, "--grid", "fusion", "--values", "max,bogus", "--seeds", "1",
               "--out", out, *FAST) == 0
    rows = [r.split(",") for r in body(out / "sweep_fusion.csv")]
    assert any(r[1] == "bogus" and r[3] == "error" for r in rows)
    assert any(r[1] == "max" and r[3] == "acc" for r in rows)


def test_sweep_empty_grid_exit_2(tmp_path, sep):
    assert run("sweep", "--dataset", sep, "--grid", "line", "--values", " , ", "--out", tmp_path) == 2


def test_trend_flags():
    means = {h: {"abs_pcc": 10.0 - h, "std": 5.0 - h} for h in (1, 2, 3, 4)}
    flags = {f[0]: f[1] for f in cli.trend_flags("hops", means)}
    assert flags == {"abs_pcc_decreases_below_h4": 1, "std_decreases_below_h4": 1}
    u = {x: {"std": (x - 0.5) ** 2} for x in (0.1, 0.5, 0.9)}
    assert cli.trend_flags("line", u)[0][:2] == ["std_u_shape", 1]
    edge = {x: {"std": x} for x in (0.1, 0.5, 0.9)}
    assert cli.trend_flags("line", edge)[0][:2] == ["std_u_shape", 0]


def test_expand_report(tmp_path):
    d = tmp_path / "tg"
    assert run("synth", "--out", d) == 0
    out = tmp_path / "ex"
    assert run("expand", "--dataset", d, "--out", out) == 0
    gap = [r.split(",") for r in body(out / "expand_gap.csv")]
    assert gap[0] == ["hop", "group", "mean_closeness", "gap", "num_edges"]
    gaps = {int(r[0]): float(r[3]) for r in gap[1:]}
    assert gaps[1] > gaps[2] > gaps[3]
    assert {r[1] for r in gap[1:]} == {"central", "middle", "marginal"}
    sizes = body(out / "expand_sizes.csv")
    assert sizes[0] == "hop,set_size,count"


def test_expand_bad_hops_exit_2(tmp_path):
    d = tmp_path / "tg"
    run("synth", "--out", d)
    assert run("expand", "--dataset", d, "--hops", "0", "--out", tmp_path) == 2


def test_missing_dataset_flag_exit_2(tmp_path):
    assert run("train", "--out", tmp_path) == 2


def test_usage_error_from_argparse():
    with pytest.raises(SystemExit) as err:
        cli.main(["sweep"])
    assert err.value.code == 2
