"""Command-line entry point.

One JSON config drives every command; flags override config scalars:

    toilcast synth --config run.json [--out DIR]
    toilcast train --config run.json --model ann [--loss point|quantile]
    toilcast grid  --config run.json --model ann [--loss point|quantile]
    toilcast eval  --config run.json [CHECKPOINT ...] [--iec]

Exit codes: 0 success, 2 config/validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .iec import IecParams
from .metrics import validate_quantiles
from .models import config_from_dict, load_checkpoint, save_checkpoint
from .rolling import autoregressive_predict, evaluate, iec_predict
from .series import AffineScaler, SplitSpec, format_instant, load_dataset, split
from .svgplot import line_plot_svg
from .synth import SynthSpec, gen_dataset, write_dataset_csvs
from .training import (DivergenceError, GridSpec, TrainConfig, fit_dataset,
                       grid_search, select_best)

DEFAULT_SCALING = {
    "top_oil": {"gain": 0.01, "offset": 0.0},
    "ambient": {"gain": 0.01, "offset": 0.0},
    "load_factor": {"gain": 1.0, "offset": 0.0},
    "temp_rise": {"gain": 0.01, "offset": 0.0},
}

# Training parameters reproduced per model family (quantile TiDE runs use a
# higher rate than its point runs).
DEFAULT_TRAIN = {
    "ann": {"batch_size": 256, "max_epochs": 4000, "learning_rate": 1e-5},
    "tcn": {"batch_size": 512, "max_epochs": 500, "learning_rate": 1e-4},
    "tide": {"batch_size": 512, "max_epochs": 100, "learning_rate": 1e-6},
}
DEFAULT_TRAIN_QUANTILE_LR = {"tide": 1e-5}

DEFAULT_GRID = {
    "ann": {"n_neurons": (32, 64, 128), "n_layers": (2, 4, 8)},
    "tcn": {"kernel": (2, 4), "n_filters": (8, 16, 32)},
    "tide": {"temporal_decoder_hidden": (8, 16), "decoder_output_dim": (2, 4, 8)},
}


class ConfigError(ValueError):
    pass


def _require(cfg: dict, key: str):
    cur = cfg
    for part in key.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ConfigError(f"config is missing required key '{key}'")
        cur = cur[part]
    return cur


def _load_config(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    env_seed = os.environ.get("TOILCAST_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"TOILCAST_SEED must be an integer, got '{env_seed}'")
    cfg.setdefault("seed", 0)
    return cfg


def _resolve_path(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _check_single_source(cfg: dict) -> dict:
    data = _require(cfg, "data")
    has_files = "measurements" in data or "ambient" in data
    if ("synth" in data) == has_files:
        raise ConfigError("config data section must have exactly one source: "
                          "either 'synth' or 'measurements'+'ambient'")
    return data


def _synth_spec(cfg: dict) -> SynthSpec:
    _check_single_source(cfg)
    raw = dict(_require(cfg, "data.synth"))
    raw.setdefault("seed", cfg["seed"])
    try:
        return SynthSpec.from_config(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid data.synth spec: {exc}") from exc


def _dataset(cfg: dict, base: Path):
    data = _check_single_source(cfg)
    if "synth" in data:
        ds, _, _ = gen_dataset(_synth_spec(cfg))
        return ds
    return load_dataset(_resolve_path(base, _require(cfg, "data.measurements")),
                        _resolve_path(base, _require(cfg, "data.ambient")),
                        rated_current_a=data.get("rated_current_a"),
                        default_offset=data.get("timezone"))


def _split(cfg: dict, ds):
    s = _require(cfg, "split")
    try:
        spec = SplitSpec.from_isoformat(tuple(_require(cfg, "split.train")),
                                        tuple(_require(cfg, "split.valid")),
                                        cfg.get("data", {}).get("timezone"))
        return split(ds, spec)
    except ValueError as exc:
        raise ConfigError(f"invalid split {s}: {exc}") from exc


def _scaler(cfg: dict) -> AffineScaler:
    raw = dict(DEFAULT_SCALING)
    raw.update(cfg.get("scaling", {}))
    return AffineScaler.from_config(raw)


def _train_config(cfg: dict, family: str, loss: str) -> TrainConfig:
    raw = dict(DEFAULT_TRAIN[family])
    if loss == "quantile" and family in DEFAULT_TRAIN_QUANTILE_LR:
        raw["learning_rate"] = DEFAULT_TRAIN_QUANTILE_LR[family]
    raw.update(cfg.get("train", {}).get(family, {}))
    quantiles = validate_quantiles(cfg.get("quantiles", [0.01, 0.5, 0.99]))
    try:
        return TrainConfig(batch_size=int(raw["batch_size"]),
                           max_epochs=int(raw["max_epochs"]),
                           learning_rate=float(raw["learning_rate"]),
                           seed=int(cfg["seed"]), loss=loss, quantiles=quantiles,
                           optimizer=raw.get("optimizer", "adam"),
                           patience=raw.get("patience"))
    except ValueError as exc:
        raise ConfigError(f"invalid train.{family} settings: {exc}") from exc


def _model_config(cfg: dict, family: str, loss: str, overrides: dict | None = None):
    raw = dict(cfg.get("models", {}).get(family, {}))
    raw.update(overrides or {})
    if bool(cfg.get("multi_target")):
        raw["n_targets"] = 2
    n_targets = int(raw.get("n_targets", 1))
    if family == "tide":
        raw.setdefault("n_covariates", 2)
    else:
        raw.setdefault("n_channels", n_targets + 2)
    if loss == "quantile":
        raw["quantiles"] = validate_quantiles(cfg.get("quantiles", [0.01, 0.5, 0.99]))
    try:
        return config_from_dict(family, raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid models.{family} config: {exc}") from exc


def _out_dir(cfg: dict, base: Path, flag: str | None) -> Path:
    out = Path(flag) if flag else _resolve_path(base, cfg.get("out_dir", "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


# -------- commands --------

def cmd_synth(cfg: dict, base: Path, out_dir: Path) -> int:
    spec = _synth_spec(cfg)
    ds, clean, hourly = gen_dataset(spec)
    paths = write_dataset_csvs(out_dir, ds, hourly, clean)
    print(f"wrote {ds.n} samples over {spec.days} days "
          f"(seed {spec.seed}, noise {spec.measurement_noise_k} K)")
    for name, p in paths.items():
        print(f"  {name}: {p}")
    return 0


def _describe(name: str, ds) -> None:
    span_h = (ds.timestamps[-1] - ds.timestamps[0]) / 3600.0
    print(f"{name}: {ds.n} points over {span_h / 24.0:.2f} days "
          f"[{format_instant(ds.timestamps[0])} .. {format_instant(ds.timestamps[-1])}]")


def cmd_train(cfg: dict, base: Path, out_dir: Path, family: str, loss: str) -> int:
    ds = _dataset(cfg, base)
    train_ds, _ = _split(cfg, ds)
    _describe("train split", train_ds)
    model_cfg = _model_config(cfg, family, loss)
    train_cfg = _train_config(cfg, family, loss)
    trained, report = fit_dataset(family, model_cfg, train_ds, _scaler(cfg), train_cfg,
                                  multi_target=bool(cfg.get("multi_target")))
    ckpt = out_dir / f"{family}_{loss}.checkpoint.json"
    save_checkpoint(ckpt, trained)
    report_path = out_dir / f"{family}_{loss}.train_report.json"
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"trained {family} ({loss}) for {report.epochs_run} epochs, "
          f"final loss {report.epoch_losses[-1]:.6g}")
    print(f"  checkpoint: {ckpt}")
    print(f"  report: {report_path}")
    return 0


def cmd_grid(cfg: dict, base: Path, out_dir: Path, family: str, loss: str) -> int:
    ds = _dataset(cfg, base)
    train_ds, valid_ds = _split(cfg, ds)
    grid_cfg = cfg.get("grid", {})
    raw = grid_cfg.get(family, DEFAULT_GRID[family])
    if not raw:
        raise ConfigError(f"empty grid for '{family}'")
    lookbacks = tuple(int(x) for x in grid_cfg.get("lookbacks", (24, 48, 96)))
    grid = GridSpec(family, {k: tuple(v) for k, v in raw.items()}, lookbacks)
    base_cfg = _model_config(cfg, family, loss)
    train_cfg = _train_config(cfg, family, loss)

    results_path = out_dir / f"grid_{family}_{loss}.csv"
    with open(results_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "family", "params_json", "lookback",
                         "val_mae", "val_mse", "status"])

        def on_trial(r):  # append-on-complete so interrupts keep finished rows
            writer.writerow([r.trial_id, r.family, r.params_json(), r.lookback,
                             "" if r.val_mae is None else repr(r.val_mae),
                             "" if r.val_mse is None else repr(r.val_mse), r.status])
            fh.flush()

        ranked = grid_search(grid, base_cfg, train_ds, valid_ds, _scaler(cfg),
                             train_cfg, multi_target=bool(cfg.get("multi_target")),
                             on_trial=on_trial)

    print(f"{grid.n_trials} trials -> {results_path}")
    print("rank  trial  lookback  val_mae    params")
    for rank, r in enumerate(ranked):
        score = f"{r.val_mae:.4f}" if r.val_mae is not None else f"({r.status})"
        print(f"{rank:>4}  {r.trial_id:>5}  {r.lookback:>8}  {score:<9}  {r.params_json()}")
    best = select_best(ranked)
    print(f"best: trial {best.trial_id}, val MAE {best.val_mae:.4f}")
    return 0


def cmd_eval(cfg: dict, base: Path, out_dir: Path, checkpoints: list[str],
             use_iec: bool) -> int:
    if not checkpoints and not use_iec:
        raise ConfigError("eval needs at least one checkpoint or --iec")
    ds = _dataset(cfg, base)
    _, valid_ds = _split(cfg, ds)
    _describe("validation split", valid_ds)

    traces = []
    for ck in checkpoints:
        model = load_checkpoint(_resolve_path(base, ck))
        trace = autoregressive_predict(model, valid_ds)
        trace.model_id = Path(ck).stem.replace(".checkpoint", "")
        traces.append(trace)
    if use_iec:
        params = IecParams.from_json(_resolve_path(base, _require(cfg, "iec_params")))
        traces.append(iec_predict(params, valid_ds,
                                  dt_min=float(cfg.get("iec_dt_min", 5.0)),
                                  enforce_timestep=bool(cfg.get("iec_enforce_timestep",
                                                                True))))

    report = evaluate(traces, valid_ds)
    report_path = out_dir / "evaluation_report.json"
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")

    for trace in traces:
        _write_predictions_csv(out_dir / f"predictions_{trace.model_id}.csv",
                               trace, valid_ds)

    band = None
    for trace in traces:
        if trace.quantiles is not None and len(trace.alphas) >= 2:
            band = {"lower": trace.quantiles[:, 0, 0], "upper": trace.quantiles[:, 0, -1],
                    "label": f"PI [{trace.alphas[0]:g}, {trace.alphas[-1]:g}]"}
            break
    series = [{"label": "measured", "values": valid_ds.top_oil.values,
               "color": "#333333"}]
    series += [{"label": t.model_id, "values": t.values[:, 0]} for t in traces]
    plot_path = out_dir / "eval_plot.svg"
    line_plot_svg(plot_path, valid_ds.timestamps, series, band,
                  title="top-oil temperature: measurements vs. estimates")

    print(f"report: {report_path}")
    print(f"plot: {plot_path}")
    for model_id, entry in report.models.items():
        for target, m in entry["targets"].items():
            line = f"{model_id} {target}: MAE {m['mae']:.3f} MSE {m['mse']:.3f}"
            if "picp" in entry and target == "top_oil":
                line += f" | PICP {entry['picp']:.3f} width {entry['mean_interval_width']:.3f}"
            print(line)
    return 0


def _write_predictions_csv(path: Path, trace, valid_ds) -> None:
    offset = valid_ds.n - len(trace)
    header = ["timestamp", "measured", "predicted"]
    extra_targets = list(trace.target_channels[1:])
    for name in extra_targets:
        header += [f"measured_{name}", f"predicted_{name}"]
    if trace.quantiles is not None:
        header += [f"q{round(a * 100):02d}" for a in trace.alphas]
    measured = {name: valid_ds.channel(name).values[offset:]
                for name in trace.target_channels}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, ts in enumerate(trace.timestamps):
            row = [format_instant(ts), repr(float(measured[trace.target_channels[0]][i])),
                   repr(float(trace.values[i, 0]))]
            for j, name in enumerate(extra_targets, start=1):
                row += [repr(float(measured[name][i])), repr(float(trace.values[i, j]))]
            if trace.quantiles is not None:
                row += [repr(float(q)) for q in trace.quantiles[i, 0, :]]
            writer.writerow(row)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="toilcast",
                                     description="transformer top-oil forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")

    add_common(sub.add_parser("synth", help="generate a synthetic dataset"))

    p_train = sub.add_parser("train", help="train one model")
    add_common(p_train)
    p_train.add_argument("--model", required=True, choices=("ann", "tcn", "tide"))
    p_train.add_argument("--loss", default="point", choices=("point", "quantile"))

    p_grid = sub.add_parser("grid", help="hyperparameter grid search")
    add_common(p_grid)
    p_grid.add_argument("--model", required=True, choices=("ann", "tcn", "tide"))
    p_grid.add_argument("--loss", default="point", choices=("point", "quantile"))

    p_eval = sub.add_parser("eval", help="autoregressive evaluation")
    add_common(p_eval)
    p_eval.add_argument("checkpoints", nargs="*", help="checkpoint JSON files")
    p_eval.add_argument("--iec", action="store_true", help="also run the IEC solver")

    args = parser.parse_args(argv)
    try:
        config_path = Path(args.config)
        cfg = _load_config(config_path)
        base = config_path.resolve().parent
        out_dir = _out_dir(cfg, base, args.out)
        if args.command == "synth":
            return cmd_synth(cfg, base, out_dir)
        if args.command == "train":
            return cmd_train(cfg, base, out_dir, args.model, args.loss)
        if args.command == "grid":
            return cmd_grid(cfg, base, out_dir, args.model, args.loss)
        return cmd_eval(cfg, base, out_dir, args.checkpoints, args.iec)
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
