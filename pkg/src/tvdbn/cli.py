"""Command-line interface.

Commands:

* ``synth``: generate a synthetic ground truth, its simulated speed table,
  a planar distance table, and the true edges;
* ``train-structure``: learn per-step causal graphs on the training split
  and write a checkpoint plus the outer-loop history;
* ``export-graphs``: write the learned graphs of a split as edge rows;
* ``train-forecast``: train the forecaster on top of a frozen structure
  checkpoint;
* ``predict``: forecast the test split and write per-cell rows;
* ``evaluate``: score forecasts (freshly computed or from a forecast CSV)
  and write text and CSV reports;
* ``gradcheck``: run the analytic-vs-numeric gradient suite.

Configuration is a flat ``key=value`` file (``#`` starts a comment line);
any key can be overridden by the matching ``--key`` flag. Unknown config
keys are rejected. The environment variable ``TVDBN_SEED`` overrides the
seed for every command. Logs go to stderr; machine-readable output goes to
files and stdout. Exit codes: 0 success, 1 usage or configuration error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from .constraint import GrcslTrainConfig, save_history, train_grcsl
from .data import (
    NormStats,
    PriorGraph,
    SpeedSeries,
    WindowSet,
    build_distance_graph,
    load_distance_rows,
    load_manifest,
    load_speed_table,
    make_windows,
    save_manifest,
    save_speed_table,
    split_chronological,
    zscore_fit_apply,
    apply_zscore,
)
from .dgcpm import (
    DgcpmDims,
    DgcpmTrainConfig,
    SplitArrays,
    baseline_masked_mae,
    curriculum_train,
    export_forecasts,
    node_mean_baseline,
    predict as dgcpm_predict,
)
from .errors import ConfigError, DataError, NumericalError, ShapeError, TvdbnError
from .grcsl import CausalGraphSeq, GrcslDims, GrcslParams, export_graph_edges, grcsl_forward_batch
from .metrics import evaluate as evaluate_metrics, render_report, write_report_csv
from .numerics import no_grad
from .synth import (
    export_truth_edges,
    planar_distance_rows,
    sample_tvdbn,
    save_truth,
    simulate_linear_sem,
    to_speed_series,
)
from .verification import gradient_suite

log = logging.getLogger("tvdbn")

COMMANDS = (
    "synth",
    "train-structure",
    "train-forecast",
    "predict",
    "evaluate",
    "export-graphs",
    "gradcheck",
)


@dataclass
class RunConfig:
    """Every tunable of the pipeline, flat so config files stay trivial."""

    # paths
    speed_csv: str = ""
    dist_csv: str = ""
    out_dir: str = "out"
    structure_checkpoint: str = ""
    forecast_checkpoint: str = ""
    forecast_csv: str = ""
    static_graph_file: str = ""
    # windows and split
    t_in: int = 12
    t_out: int = 12
    stride: int = 1
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    kappa: float = 0.1
    # model widths
    heads: int = 4
    d_att: int = 16
    h_r: int = 32
    d_s: int = 8
    h_m: int = 32
    sem_width: int = 16
    gconv_layers: int = 2
    tau: float = 0.2
    dy_width: int = 16
    prior_width: int = 16
    use_prior: bool = True
    graph_source: str = "grcsl"  # grcsl | distance | static-dbn-file
    # structure training
    lam: float = 2e-5
    eta: float = 10.0
    gamma: float = 0.5
    xi: float = 1e-8
    alpha0: float = 0.0
    rho0: float = 1e-3
    inner_epochs: int = 5
    max_outer_iters: int = 30
    structure_lr: float = 1e-3
    structure_batch: int = 32
    # forecast training
    forecast_lr: float = 1e-3
    forecast_epochs: int = 60
    forecast_batch: int = 32
    curriculum_step: int = 1
    patience: int = 10
    # synthetic data
    synth_n: int = 10
    synth_t: int = 2000
    synth_regimes: int = 4
    synth_density: float = 0.2
    synth_noise_std: float = 0.1
    synth_weight_min: float = 0.3
    synth_weight_max: float = 0.8
    synth_max_radius: float = 0.95
    synth_offset: float = 50.0
    synth_scale: float = 10.0
    synth_start_ts: int = 1330560000
    # misc
    seed: int = 0
    graph_threshold: float = 0.5
    horizons: str = "3,6,12"
    export_split: str = "train"  # which split export-graphs writes

    def horizon_list(self) -> list[int]:
        try:
            return [int(tok) for tok in self.horizons.split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(f"bad horizons list {self.horizons!r}") from None

    def grcsl_dims(self) -> GrcslDims:
        return GrcslDims(
            heads=self.heads,
            d_att=self.d_att,
            h_r=self.h_r,
            d_s=self.d_s,
            h_m=self.h_m,
            sem_width=self.sem_width,
            gconv_layers=self.gconv_layers,
            tau=self.tau,
            use_prior=self.use_prior,
        )

    def dgcpm_dims(self) -> DgcpmDims:
        return DgcpmDims(
            t_in=self.t_in,
            t_out=self.t_out,
            dy_width=self.dy_width,
            prior_width=self.prior_width,
            gconv_layers=self.gconv_layers,
            use_prior=self.use_prior,
        )

    def grcsl_train_config(self) -> GrcslTrainConfig:
        return GrcslTrainConfig(
            lam=self.lam,
            eta=self.eta,
            gamma=self.gamma,
            xi=self.xi,
            alpha0=self.alpha0,
            rho0=self.rho0,
            inner_epochs=self.inner_epochs,
            max_outer_iters=self.max_outer_iters,
            lr=self.structure_lr,
            batch_size=self.structure_batch,
            seed=self.seed,
        )

    def dgcpm_train_config(self) -> DgcpmTrainConfig:
        return DgcpmTrainConfig(
            lr=self.forecast_lr,
            max_epochs=self.forecast_epochs,
            batch_size=self.forecast_batch,
            curriculum_step=self.curriculum_step,
            patience=self.patience,
            seed=self.seed,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    field = _FIELDS.get(key)
    if field is None:
        raise ConfigError(f"unknown configuration key {key!r}")
    if field.type in ("bool", bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")
    try:
        if field.type in ("int", int):
            return int(raw)
        if field.type in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {field.type}") from None
    return raw


def parse_config_file(path: str) -> dict:
    """Flat key=value lines; blank lines and lines starting with # skipped."""
    values: dict = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path} line {line_no}: expected key=value")
            key, raw = line.split("=", 1)
            values[key.strip()] = _coerce(key.strip(), raw.strip())
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config file, then CLI flags, then TVDBN_SEED."""
    merged: dict = {}
    if args.config:
        merged.update(parse_config_file(args.config))
    for key in _FIELDS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = _coerce(key, str(flag_value)) if isinstance(flag_value, str) else flag_value
    cfg = RunConfig(**merged)
    env_seed = os.environ.get("TVDBN_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"TVDBN_SEED must be an integer, got {env_seed!r}") from None
        log.info("seed overridden by TVDBN_SEED=%d", cfg.seed)
    return cfg


# --------------------------------------------------------------------- #
# shared pipeline pieces
# --------------------------------------------------------------------- #


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        if not getattr(cfg, key):
            raise ConfigError(f"configuration key {key!r} is required for this command")


def _load_series(cfg: RunConfig) -> SpeedSeries:
    _require(cfg, "speed_csv")
    return load_speed_table(cfg.speed_csv)


def _load_prior(cfg: RunConfig, sensor_ids: list[str]) -> PriorGraph | None:
    if not cfg.use_prior and cfg.graph_source != "distance":
        return None
    _require(cfg, "dist_csv")
    rows = load_distance_rows(cfg.dist_csv)
    return build_distance_graph(rows, sensor_ids, kappa=cfg.kappa)


def _split_windows(
    cfg: RunConfig, series: SpeedSeries
) -> tuple[NormStats, dict[str, WindowSet], SpeedSeries]:
    train_s, val_s, test_s = split_chronological(series, cfg.train_ratio, cfg.val_ratio)
    stats, train_n = zscore_fit_apply(train_s)
    sets = {
        "train": make_windows(train_n, cfg.t_in, cfg.t_out, cfg.stride),
        "val": make_windows(apply_zscore(stats, val_s), cfg.t_in, cfg.t_out, cfg.stride),
        "test": make_windows(apply_zscore(stats, test_s), cfg.t_in, cfg.t_out, cfg.stride),
    }
    return stats, sets, train_s


def _structure_ckpt_path(cfg: RunConfig) -> str:
    return cfg.structure_checkpoint or os.path.join(cfg.out_dir, "grcsl.npz")


def _forecast_ckpt_path(cfg: RunConfig) -> str:
    return cfg.forecast_checkpoint or os.path.join(cfg.out_dir, "dgcpm.npz")


def _static_graphs_from_file(cfg: RunConfig, sensor_ids: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Constant graph pair from an edge CSV in the export format."""
    import csv as _csv

    _require(cfg, "static_graph_file")
    n = len(sensor_ids)
    index = {sid: i for i, sid in enumerate(sensor_ids)}
    intra = np.zeros((n, n))
    inter = np.zeros((n, n))
    with open(cfg.static_graph_file, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:6] != ["window_start_ts", "step", "lag", "src_id", "dst_id", "weight"]:
            raise DataError(f"{cfg.static_graph_file}: expected graph edge CSV header")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise DataError(f"{cfg.static_graph_file} line {line_no}: expected 6 cells")
            _, _, lag, src, dst, weight = row
            if src not in index or dst not in index:
                missing = src if src not in index else dst
                raise DataError(
                    f"{cfg.static_graph_file} line {line_no}: unknown sensor {missing!r}"
                )
            # Aggregation needs non-negative strengths in [0, 1].
            w = min(abs(float(weight)), 1.0)
            target = intra if lag.strip() == "0" else inter
            target[index[dst], index[src]] = max(target[index[dst], index[src]], w)
    np.fill_diagonal(intra, 0.0)
    return intra, inter


def _graph_stacks(
    cfg: RunConfig,
    windows: WindowSet,
    prior: PriorGraph | None,
    params: GrcslParams | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-window graph stacks (W, T_in - 1, N, N) for the forecaster."""
    w = len(windows)
    steps = cfg.t_in - 1
    n = len(windows.sensor_ids)
    if cfg.graph_source == "grcsl":
        if params is None:
            raise ConfigError("graph_source=grcsl needs a structure checkpoint")
        values = np.stack([win.values for win in windows.windows])
        tod = np.stack([win.tod for win in windows.windows])
        intra = np.empty((w, steps, n, n))
        inter = np.empty((w, steps, n, n))
        prior_w = prior.weights if prior is not None else None
        with no_grad():
            for lo in range(0, w, cfg.structure_batch):
                hi = min(lo + cfg.structure_batch, w)
                fwd = grcsl_forward_batch(values[lo:hi], tod[lo:hi], prior_w, params, train=False)
                for j in range(steps):
                    intra[lo:hi, j] = fwd.intra[j].data
                    inter[lo:hi, j] = fwd.inter[j].data
        return intra, inter
    if cfg.graph_source == "distance":
        if prior is None:
            raise ConfigError("graph_source=distance needs a distance file")
        base = prior.weights.copy()
        intra0 = base.copy()
        np.fill_diagonal(intra0, 0.0)
        intra = np.broadcast_to(intra0, (w, steps, n, n)).copy()
        inter = np.broadcast_to(base, (w, steps, n, n)).copy()
        return intra, inter
    if cfg.graph_source == "static-dbn-file":
        intra0, inter0 = _static_graphs_from_file(cfg, windows.sensor_ids)
        intra = np.broadcast_to(intra0, (w, steps, n, n)).copy()
        inter = np.broadcast_to(inter0, (w, steps, n, n)).copy()
        return intra, inter
    raise ConfigError(f"unknown graph_source {cfg.graph_source!r}")


def _write_manifest(cfg: RunConfig, stats: NormStats, series: SpeedSeries) -> None:
    t = series.length
    n_train = int(np.floor(cfg.train_ratio * t))
    n_val = int(np.floor(cfg.val_ratio * t))
    save_manifest(
        os.path.join(cfg.out_dir, "manifest.txt"),
        {
            "mean": stats.mean,
            "std": stats.std,
            "rows": t,
            "train_end": n_train,
            "val_end": n_train + n_val,
            "t_in": cfg.t_in,
            "t_out": cfg.t_out,
            "stride": cfg.stride,
            "seed": cfg.seed,
        },
    )


# --------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------- #


def cmd_synth(cfg: RunConfig) -> int:
    _require(cfg, "out_dir")
    os.makedirs(cfg.out_dir, exist_ok=True)
    truth = sample_tvdbn(
        n=cfg.synth_n,
        t=cfg.synth_t,
        num_regimes=cfg.synth_regimes,
        density=cfg.synth_density,
        noise_std=cfg.synth_noise_std,
        weight_range=(cfg.synth_weight_min, cfg.synth_weight_max),
        seed=cfg.seed,
        max_radius=cfg.synth_max_radius,
    )
    values = simulate_linear_sem(truth)
    series = to_speed_series(
        values, start_ts=cfg.synth_start_ts, offset=cfg.synth_offset, scale=cfg.synth_scale
    )
    speed_path = os.path.join(cfg.out_dir, "speed.csv")
    dist_path = os.path.join(cfg.out_dir, "dist.csv")
    save_speed_table(speed_path, series)
    rows = planar_distance_rows(series.sensor_ids, seed=cfg.seed + 1)
    with open(dist_path, "w", newline="") as fh:
        fh.write("from,to,dist\n")
        for src, dst, d in rows:
            fh.write(f"{src},{dst},{d:.6f}\n")
    save_truth(os.path.join(cfg.out_dir, "truth.npz"), truth)
    export_truth_edges(
        os.path.join(cfg.out_dir, "truth_edges.csv"), truth, series.sensor_ids, cfg.synth_start_ts
    )
    log.info(
        "synth: wrote %s (%d ticks x %d sensors), %s, truth.npz, truth_edges.csv",
        speed_path, series.length, series.num_sensors, dist_path,
    )
    return 0


def cmd_train_structure(cfg: RunConfig) -> int:
    _require(cfg, "speed_csv", "out_dir")
    os.makedirs(cfg.out_dir, exist_ok=True)
    series = _load_series(cfg)
    prior = _load_prior(cfg, series.sensor_ids)
    stats, sets, _ = _split_windows(cfg, series)
    result = train_grcsl(
        sets["train"],
        prior.weights if prior is not None else None,
        cfg.grcsl_dims(),
        cfg.grcsl_train_config(),
    )
    ckpt.save_grcsl(_structure_ckpt_path(cfg), result.params)
    save_history(os.path.join(cfg.out_dir, "history.csv"), result.history)
    _write_manifest(cfg, stats, series)
    if result.converged:
        log.info("structure training converged: S=%.3e", result.final_s)
    else:
        log.warning("structure training did not converge: %s", result.warning)
    return 0


def cmd_export_graphs(cfg: RunConfig) -> int:
    _require(cfg, "speed_csv", "out_dir")
    os.makedirs(cfg.out_dir, exist_ok=True)
    series = _load_series(cfg)
    prior = _load_prior(cfg, series.sensor_ids)
    _, sets, _ = _split_windows(cfg, series)
    if cfg.export_split not in sets:
        raise ConfigError(f"export_split must be one of train/val/test, got {cfg.export_split!r}")
    windows = sets[cfg.export_split]
    params = ckpt.load_grcsl(_structure_ckpt_path(cfg)) if cfg.graph_source == "grcsl" else None
    intra, inter = _graph_stacks(cfg, windows, prior, params)
    seqs = [
        CausalGraphSeq(
            intra=intra[k],
            inter=inter[k],
            start_index=windows.windows[k].start_index,
            start_ts=windows.windows[k].start_ts,
        )
        for k in range(len(windows))
    ]
    path = os.path.join(cfg.out_dir, "graphs.csv")
    edge_count = export_graph_edges(path, seqs, windows.sensor_ids, cfg.graph_threshold)
    log.info("exported %d edges over %d windows to %s", edge_count, len(seqs), path)
    return 0


def cmd_train_forecast(cfg: RunConfig) -> int:
    _require(cfg, "speed_csv", "out_dir")
    os.makedirs(cfg.out_dir, exist_ok=True)
    series = _load_series(cfg)
    prior = _load_prior(cfg, series.sensor_ids)
    stats, sets, train_raw = _split_windows(cfg, series)
    params = ckpt.load_grcsl(_structure_ckpt_path(cfg)) if cfg.graph_source == "grcsl" else None
    splits = {}
    for name in ("train", "val"):
        intra, inter = _graph_stacks(cfg, sets[name], prior, params)
        splits[name] = SplitArrays.from_windows(sets[name], intra, inter)
    result = curriculum_train(
        splits["train"],
        splits["val"],
        prior.weights if prior is not None and cfg.use_prior else None,
        cfg.dgcpm_dims(),
        stats,
        cfg.dgcpm_train_config(),
    )
    ckpt.save_dgcpm(_forecast_ckpt_path(cfg), result.params)
    with open(os.path.join(cfg.out_dir, "forecast_history.csv"), "w") as fh:
        fh.write("epoch,horizon_limit,train_loss,val_mae\n")
        for row in result.history:
            fh.write(
                f"{row['epoch']},{row['horizon_limit']},"
                f"{row['train_loss']:.10g},{row['val_mae']:.10g}\n"
            )
    baseline = node_mean_baseline(train_raw)
    base_mae = baseline_masked_mae(baseline, sets["val"], stats)
    log.info(
        "forecast training done: best val MAE %.4f (constant per-node baseline %.4f)",
        result.best_val_mae, base_mae,
    )
    return 0


def _predict_test(cfg: RunConfig):
    series = _load_series(cfg)
    prior = _load_prior(cfg, series.sensor_ids)
    stats, sets, _ = _split_windows(cfg, series)
    g_params = ckpt.load_grcsl(_structure_ckpt_path(cfg)) if cfg.graph_source == "grcsl" else None
    f_params = ckpt.load_dgcpm(_forecast_ckpt_path(cfg))
    windows = sets["test"]
    intra, inter = _graph_stacks(cfg, windows, prior, g_params)
    split = SplitArrays.from_windows(windows, intra, inter)
    preds = dgcpm_predict(
        split,
        prior.weights if prior is not None and cfg.use_prior else None,
        f_params,
        stats,
        batch_size=cfg.forecast_batch,
    )
    from .data import invert_zscore

    actual_norm = split.target[..., 0]
    valid = split.target_mask[..., 0]
    actuals = np.where(valid, invert_zscore(stats, actual_norm), 0.0)
    start_ts = [win.start_ts for win in windows.windows]
    return windows, preds, actuals, valid, start_ts


def cmd_predict(cfg: RunConfig) -> int:
    _require(cfg, "speed_csv", "out_dir")
    os.makedirs(cfg.out_dir, exist_ok=True)
    windows, preds, actuals, valid, start_ts = _predict_test(cfg)
    path = os.path.join(cfg.out_dir, "forecasts.csv")
    export_forecasts(path, start_ts, preds, actuals, valid, windows.sensor_ids)
    log.info("wrote %d window forecasts to %s", preds.shape[0], path)
    return 0


def _load_forecast_csv(path: str):
    import csv as _csv

    by_window: dict[int, dict[tuple[int, str], tuple[float, float, bool]]] = {}
    horizon_max = 0
    sensor_order: list[str] = []
    seen_sensors = set()
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        expected = ["window_start_ts", "horizon_step", "sensor_id", "predicted", "actual", "valid"]
        if header is None or header[:6] != expected:
            raise DataError(f"{path}: expected forecast CSV header {','.join(expected)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise DataError(f"{path} line {line_no}: expected 6 cells")
            try:
                ts = int(row[0])
                h = int(row[1])
                pred = float(row[3])
                actual = float(row[4])
                valid = bool(int(row[5]))
            except ValueError:
                raise DataError(f"{path} line {line_no}: malformed cell") from None
            sid = row[2]
            if sid not in seen_sensors:
                seen_sensors.add(sid)
                sensor_order.append(sid)
            horizon_max = max(horizon_max, h)
            by_window.setdefault(ts, {})[(h, sid)] = (pred, actual, valid)
    if not by_window:
        raise DataError(f"{path}: no forecast rows")
    ts_order = sorted(by_window)
    w, n = len(ts_order), len(sensor_order)
    preds = np.zeros((w, horizon_max, n))
    actuals = np.zeros((w, horizon_max, n))
    valid = np.zeros((w, horizon_max, n), dtype=bool)
    sidx = {sid: i for i, sid in enumerate(sensor_order)}
    for k, ts in enumerate(ts_order):
        for (h, sid), (p, a, v) in by_window[ts].items():
            preds[k, h - 1, sidx[sid]] = p
            actuals[k, h - 1, sidx[sid]] = a
            valid[k, h - 1, sidx[sid]] = v
    return preds, actuals, valid


def cmd_evaluate(cfg: RunConfig) -> int:
    _require(cfg, "out_dir")
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.forecast_csv:
        preds, actuals, valid = _load_forecast_csv(cfg.forecast_csv)
    else:
        _, preds, actuals, valid, _ = _predict_test(cfg)
    horizons = [h for h in cfg.horizon_list() if h <= preds.shape[1]]
    if not horizons:
        raise ConfigError(
            f"no requested horizon fits the forecast range 1..{preds.shape[1]}"
        )
    report = evaluate_metrics(preds, actuals, valid, horizons)
    text = render_report(report)
    write_report_csv(os.path.join(cfg.out_dir, "report.csv"), report)
    with open(os.path.join(cfg.out_dir, "report.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    # Fixed battery at its canonical seed: kink-free check points are part
    # of the suite definition, so the run seed must not move them.
    reports = gradient_suite()
    failed = [r for r in reports if not r.ok()]
    for r in reports:
        print(str(r))
    if failed:
        raise NumericalError(f"{len(failed)} gradient check(s) failed")
    return 0


# --------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvdbn",
        description="Learn time-varying causal graphs from sensor series and forecast with them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        for field in dataclasses.fields(RunConfig):
            flag = "--" + field.name.replace("_", "-")
            p.add_argument(flag, dest=field.name, default=None, help=f"override {field.name}")
    return parser


_HANDLERS = {
    "synth": cmd_synth,
    "train-structure": cmd_train_structure,
    "train-forecast": cmd_train_forecast,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "export-graphs": cmd_export_graphs,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=os.environ.get("TVDBN_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return 0 if exc.code == 0 else 1
    try:
        cfg = resolve_config(args)
        return _HANDLERS[args.command](cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 1
    except (DataError, ShapeError) as exc:
        log.error("data error: %s", exc)
        return 2
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return 3
    except TvdbnError as exc:  # pragma: no cover - safety net
        log.error("error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
