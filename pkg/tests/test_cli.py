"""Command-line interface tests: config resolution, exit codes, the pipeline."""

import csv
import os

import numpy as np
import pytest

from tvdbn.cli import RunConfig, build_parser, main, parse_config_file, resolve_config
from tvdbn.errors import ConfigError

TINY = """
# desk-scale run
out_dir={out}
synth_n=4
synth_t=240
synth_regimes=2
synth_density=0.3
synth_noise_std=0.1
t_in=6
t_out=3
stride=3
heads=2
d_att=4
h_r=6
d_s=3
h_m=6
sem_width=6
gconv_layers=1
dy_width=4
prior_width=4
inner_epochs=1
max_outer_iters=2
structure_batch=16
forecast_epochs=3
forecast_batch=16
patience=10
horizons=1,2,3
seed=11
"""


# ------------------------------------------------------------------ #
# configuration
# ------------------------------------------------------------------ #


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment\n"
        "\n"
        "t_in=8\n"
        "tau = 0.5\n"
        "use_prior=false\n"
        "horizons=3,6\n"
        "speed_csv=a=b.csv\n"  # value may contain '='
    )
    values = parse_config_file(str(path))
    assert values == {
        "t_in": 8,
        "tau": 0.5,
        "use_prior": False,
        "horizons": "3,6",
        "speed_csv": "a=b.csv",
    }


def test_config_file_rejects_unknown_keys_and_bad_values(tmp_path):
    bad_key = tmp_path / "a.cfg"
    bad_key.write_text("no_such_knob=1\n")
    with pytest.raises(ConfigError, match="no_such_knob"):
        parse_config_file(str(bad_key))
    bad_value = tmp_path / "b.cfg"
    bad_value.write_text("t_in=abc\n")
    with pytest.raises(ConfigError):
        parse_config_file(str(bad_value))
    bad_line = tmp_path / "c.cfg"
    bad_line.write_text("just a line\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_file(str(bad_line))
    with pytest.raises(ConfigError):
        parse_config_file(str(tmp_path / "missing.cfg"))
    bad_bool = tmp_path / "d.cfg"
    bad_bool.write_text("use_prior=maybe\n")
    with pytest.raises(ConfigError):
        parse_config_file(str(bad_bool))


def test_flags_override_file_values(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("t_in=8\nseed=3\n")
    parser = build_parser()
    args = parser.parse_args(["synth", "--config", str(path), "--t-in", "10"])
    cfg = resolve_config(args)
    assert cfg.t_in == 10  # flag wins
    assert cfg.seed == 3  # file wins over default
    assert cfg.t_out == RunConfig().t_out  # untouched default


def test_env_seed_overrides_everything(tmp_path, monkeypatch):
    path = tmp_path / "run.cfg"
    path.write_text("seed=3\n")
    parser = build_parser()
    args = parser.parse_args(["synth", "--config", str(path), "--seed", "5"])
    monkeypatch.setenv("TVDBN_SEED", "42")
    assert resolve_config(args).seed == 42
    monkeypatch.setenv("TVDBN_SEED", "not-a-number")
    with pytest.raises(ConfigError):
        resolve_config(args)


def test_boolean_flags_accept_word_forms():
    parser = build_parser()
    args = parser.parse_args(["synth", "--use-prior", "off"])
    assert resolve_config(args).use_prior is False
    args = parser.parse_args(["synth", "--use-prior", "YES"])
    assert resolve_config(args).use_prior is True


def test_horizon_list_parsing():
    assert RunConfig(horizons="3,6,12").horizon_list() == [3, 6, 12]
    assert RunConfig(horizons="1").horizon_list() == [1]
    with pytest.raises(ConfigError):
        RunConfig(horizons="3;6").horizon_list()


# ------------------------------------------------------------------ #
# exit codes
# ------------------------------------------------------------------ #


def test_usage_errors_exit_one(tmp_path):
    assert main([]) == 1  # no command
    assert main(["no-such-command"]) == 1
    assert main(["--help"]) == 0
    # configuration error: required key missing
    assert main(["train-structure", "--out-dir", str(tmp_path)]) == 1
    # configuration error: unparseable flag value
    assert main(["synth", "--out-dir", str(tmp_path), "--synth-n", "abc"]) == 1


def test_data_errors_exit_two(tmp_path):
    assert main(["train-structure", "--speed-csv", str(tmp_path / "missing.csv"),
                 "--out-dir", str(tmp_path)]) == 2
    bad = tmp_path / "forecasts.csv"
    bad.write_text("wrong,header\n1,2\n")
    assert main(["evaluate", "--forecast-csv", str(bad), "--out-dir", str(tmp_path)]) == 2


def test_gradcheck_exits_zero_and_prints_reports(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("ok") >= 10  # one line per checked operation


# ------------------------------------------------------------------ #
# the pipeline end to end (desk scale)
# ------------------------------------------------------------------ #


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run synth -> train-structure -> export-graphs -> train-forecast ->
    predict -> evaluate once and share the artifact directory."""
    out = tmp_path_factory.mktemp("pipeline")
    cfg = out / "run.cfg"
    cfg.write_text(TINY.format(out=out))
    base = ["--config", str(cfg)]

    assert main(["synth", *base]) == 0
    data_flags = ["--speed-csv", str(out / "speed.csv"), "--dist-csv", str(out / "dist.csv")]
    assert main(["train-structure", *base, *data_flags]) == 0
    assert main(["export-graphs", *base, *data_flags]) == 0
    assert main(["train-forecast", *base, *data_flags]) == 0
    assert main(["predict", *base, *data_flags]) == 0
    assert main(["evaluate", *base, *data_flags]) == 0
    return out


def test_pipeline_writes_every_artifact(pipeline):
    for name in (
        "speed.csv", "dist.csv", "truth.npz", "truth_edges.csv",
        "grcsl.npz", "history.csv", "manifest.txt",
        "graphs.csv", "dgcpm.npz", "forecast_history.csv",
        "forecasts.csv", "report.txt", "report.csv",
    ):
        assert (pipeline / name).exists(), name


def test_pipeline_history_matches_the_multiplier_rule(pipeline):
    with open(pipeline / "history.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) >= 1
    assert rows[0]["outer_iter"] == "1"
    etas = []
    for prev, cur in zip(rows, rows[1:]):
        ratio = float(cur["rho"]) / float(prev["rho"])
        etas.append(ratio)
        assert ratio in (1.0, 10.0)
    assert float(rows[0]["rho"]) == pytest.approx(1e-3)


def test_pipeline_graphs_csv_is_well_formed(pipeline):
    with open(pipeline / "graphs.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["window_start_ts", "step", "lag", "src_id", "dst_id", "weight"]
    for row in rows[1:]:
        assert row[2] in ("0", "1")
        assert 2 <= int(row[1]) <= 6
        assert 0.5 < float(row[5]) <= 1.0
        assert row[3].startswith("s") and row[4].startswith("s")
        if row[2] == "0":
            assert row[3] != row[4]  # no self-loops at lag 0


def test_pipeline_forecasts_cover_the_test_split(pipeline):
    with open(pipeline / "forecasts.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:6] == ["window_start_ts", "horizon_step", "sensor_id", "predicted", "actual", "valid"]
    body = rows[1:]
    # synth_t=240 -> test split 48 ticks -> (48 - 9 + 1 + 2) // 3 windows of
    # 4 sensors x 3 horizon steps
    horizon_steps = {int(r[1]) for r in body}
    assert horizon_steps == {1, 2, 3}
    sensors = {r[2] for r in body}
    assert sensors == {"s000", "s001", "s002", "s003"}
    assert len(body) % (4 * 3) == 0
    for r in body[:50]:
        float(r[3]), float(r[4])
        assert r[5] in ("0", "1")


def test_pipeline_report_lists_requested_horizons(pipeline):
    with open(pipeline / "report.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["horizon", "mae", "rmse", "mape", "valid_cells"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "overall"]
    for r in rows[1:]:
        assert float(r[1]) > 0.0
        assert float(r[2]) >= float(r[1])  # RMSE >= MAE
    text = (pipeline / "report.txt").read_text()
    assert "reference (non-binding" in text


def test_pipeline_manifest_records_split_and_normalization(pipeline):
    from tvdbn.data import load_manifest

    entries = load_manifest(str(pipeline / "manifest.txt"))
    assert int(entries["rows"]) == 240
    assert int(entries["train_end"]) == 168
    assert int(entries["val_end"]) == 192
    assert float(entries["std"]) > 0.0
    assert int(entries["seed"]) == 11


def test_evaluate_reads_back_exported_forecasts(pipeline, tmp_path, capsys):
    out2 = tmp_path / "eval2"
    code = main([
        "evaluate", "--forecast-csv", str(pipeline / "forecasts.csv"),
        "--out-dir", str(out2), "--horizons", "1,3",
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "horizon" in printed and "overall" in printed
    with open(out2 / "report.csv", newline="") as fh:
        rows = {r[0]: r for r in csv.reader(fh)}
    # identical inputs -> identical overall MAE as the pipeline's own report
    with open(pipeline / "report.csv", newline="") as fh:
        base = {r[0]: r for r in csv.reader(fh)}
    assert rows["overall"][1] == base["overall"][1]


def test_evaluate_perfect_forecast_scores_zero(tmp_path):
    path = tmp_path / "forecasts.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start_ts", "horizon_step", "sensor_id", "predicted", "actual", "valid"])
        for h in (1, 2):
            for sid in ("a", "b"):
                writer.writerow([100, h, sid, 55.5, 55.5, 1])
    out = tmp_path / "out"
    assert main(["evaluate", "--forecast-csv", str(path), "--out-dir", str(out),
                 "--horizons", "1,2"]) == 0
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert [r[0] for r in rows[1:]] == ["1", "2", "overall"]
    for r in rows[1:]:
        assert float(r[1]) == 0.0 and float(r[2]) == 0.0 and float(r[3]) == 0.0


def test_evaluate_rejects_horizons_beyond_the_forecast(tmp_path):
    path = tmp_path / "forecasts.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start_ts", "horizon_step", "sensor_id", "predicted", "actual", "valid"])
        writer.writerow([100, 1, "a", 1.0, 1.0, 1])
    # requested horizons all exceed the single forecast step -> config error
    assert main(["evaluate", "--forecast-csv", str(path), "--out-dir", str(tmp_path / "o"),
                 "--horizons", "6,12"]) == 1


def test_ablation_graph_sources_run_without_a_checkpoint(pipeline, tmp_path):
    """distance and static-dbn-file sources skip structure training."""
    out = tmp_path / "ablate"
    flags = [
        "--speed-csv", str(pipeline / "speed.csv"),
        "--dist-csv", str(pipeline / "dist.csv"),
        "--out-dir", str(out),
        "--t-in", "6", "--t-out", "3", "--stride", "3",
        "--gconv-layers", "1", "--dy-width", "4", "--prior-width", "4",
        "--forecast-epochs", "2", "--forecast-batch", "16", "--horizons", "1",
        "--seed", "11",
    ]
    assert main(["train-forecast", *flags, "--graph-source", "distance"]) == 0
    assert (out / "dgcpm.npz").exists()
    assert main(["train-forecast", *flags, "--graph-source", "static-dbn-file",
                 "--static-graph-file", str(pipeline / "truth_edges.csv")]) == 0
    assert main(["train-forecast", *flags, "--graph-source", "bogus"]) == 1
