"""Command-line entry point: prepare, benchmark, rank, train, forecast.

Runs are driven by a JSON config file (flags override individual fields);
all outputs embed the tool version and a hash of the resolved config so
results are traceable and reruns are reproducible. Exit codes: 0 success,
1 usage/config error, 2 data-quality failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import fnmatch
import hashlib
import json
import logging
import os
import sys
import time
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import __version__, data, models, stats
from .errors import ConfigError, DataQualityError, NumericalError
from .evaluation import ScoreTensor, grid_search, run_benchmark

log = logging.getLogger("flowcast")

DEFAULT_CONFIG = {
    "data_dir": "data",
    "sensors": ["*"],
    "horizons": [1, 2, 3, 4],
    "window": 6,
    "folds": 10,
    "alpha": 0.05,
    "seed": 0,
    "output_dir": "out",
    "workers": 1,
    "missing_threshold": 0.03,
    "standardize": True,
    "schema": {},
    "models": [
        {"name": "persistence", "type": "persistence"},
        {"name": "LR", "type": "linear"},
        {"name": "kNN", "type": "knn", "k": 5},
        {"name": "DeepESN", "type": "deepesn", "units": 100, "layers": 2},
    ],
}

_OVERRIDABLE = ("data_dir", "output_dir", "window", "folds", "alpha", "seed", "workers")


def load_config(path: str | None, overrides: dict) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"{p}: unknown config keys {sorted(unknown)}")
        config.update(user)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    if not 0.0 < config["alpha"] < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if config["window"] < 1 or config["folds"] < 1 or config["workers"] < 1:
        raise ConfigError("window, folds and workers must be >= 1")
    if not config["horizons"] or any(int(h) < 1 for h in config["horizons"]):
        raise ConfigError("horizons must be positive integers")
    return config


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(canonical).hexdigest()[:12]


def _meta(config: dict) -> str:
    return f"flowcast {__version__} config={config_hash(config)}"


def _schema(config: dict) -> data.ColumnSchema:
    try:
        return data.ColumnSchema(**config.get("schema", {}))
    except TypeError as exc:
        raise ConfigError(f"bad schema mapping: {exc}") from exc


def cache_dir(config: dict) -> Path:
    env = os.environ.get("FLOWCAST_CACHE_DIR")
    if env:
        return Path(env)
    return Path(config["output_dir"]) / "cache"


def _match_sensors(config: dict) -> list[Path]:
    root = Path(config["data_dir"])
    if not root.is_dir():
        raise ConfigError(f"data_dir does not exist: {root}")
    patterns = config["sensors"]
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix == ".csv")
    return [p for p in files if any(fnmatch.fnmatch(p.stem, pat) for pat in patterns)]


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_prepare(config: dict) -> int:
    """Load, validate and impute every sensor; write the series cache."""
    out = cache_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    schema = _schema(config)
    raw_files = _match_sensors(config)
    if not raw_files:
        raise ConfigError(f"no sensor files match {config['sensors']} in {config['data_dir']}")
    report_rows = []
    cached = skipped = reused = 0
    for path in raw_files:
        sensor = path.stem
        target = out / f"{sensor}.series.txt"
        source_hash = _file_hash(path)
        if target.exists() and data.cache_source_hash(target) == source_hash:
            series = data.load_cache(target)
            report_rows.append((sensor, len(series), series.missing_fraction,
                                "cached", "unchanged"))
            reused += 1
            continue
        try:
            series = data.load_series(path, schema)
            frac = series.missing_fraction
            full = data.impute(series, config["missing_threshold"])
        except DataQualityError as exc:
            log.warning("skipping %s: %s", sensor, exc)
            report_rows.append((sensor, 0, float("nan"), "skipped", str(exc)))
            skipped += 1
            continue
        data.save_cache(full, target, source_hash=source_hash, meta=_meta(config))
        report_rows.append((sensor, len(full), frac, "cached", ""))
        cached += 1
    report = out / "quality_report.csv"
    lines = [f"# {_meta(config)}", "sensor,slots,missing_fraction,status,reason"]
    for sensor, slots, frac, status, reason in report_rows:
        frac_txt = "" if frac != frac else f"{frac:.6f}"
        lines.append(f"{sensor},{slots},{frac_txt},{status},{reason.replace(',', ';')}")
    report.write_text("\n".join(lines) + "\n")
    log.info("prepare: %d cached, %d reused, %d skipped -> %s",
             cached, reused, skipped, out)
    if cached + reused == 0:
        raise DataQualityError("no sensor could be prepared")
    return skipped


def _load_cached_series(config: dict) -> dict:
    out = cache_dir(config)
    series = {}
    for path in sorted(out.glob("*.series.txt")):
        ts = data.load_cache(path)
        if any(fnmatch.fnmatch(ts.sensor_id, pat) for pat in config["sensors"]):
            series[ts.sensor_id] = ts
    if not series:
        raise ConfigError(f"no cached series in {out}; run `flowcast prepare` first")
    return series


def _model_seed(base_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _split_model_specs(config: dict):
    builtin, external = [], []
    for spec in config["models"]:
        if isinstance(spec, str):
            if spec.startswith("external:"):
                external.append(spec.partition(":")[2])
            else:
                builtin.append({"type": spec, "name": spec})
        else:
            builtin.append(dict(spec))
    return builtin, external


def _factories(config: dict) -> dict:
    factories = {}
    builtin, _ = _split_model_specs(config)
    for spec in builtin:
        name = spec.get("name") or spec.get("type")
        if name in factories:
            raise ConfigError(f"duplicate model name {name!r}")
        factories[name] = models.SpecFactory(spec, seed=_model_seed(config["seed"], name))
    return factories


def tensor_path(config: dict, horizon: int) -> Path:
    return Path(config["output_dir"]) / f"scores_h{horizon}.csv"


def cmd_benchmark(config: dict, resume: bool = False) -> None:
    """Fill and export one score tensor per horizon, plus summary tables."""
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    series = _load_cached_series(config)
    factories = _factories(config)
    _, external_files = _split_model_specs(config)
    summary_rows = []
    for horizon in config["horizons"]:
        horizon = int(horizon)
        t0 = time.perf_counter()
        path = tensor_path(config, horizon)
        existing = None
        if resume and path.exists():
            existing = ScoreTensor.load(path, horizon=horizon)
            log.info("resume: %d pairs already scored for h=%d",
                     len(existing.scores), horizon)
        tensor = run_benchmark(factories, series, folds=config["folds"],
                               window=config["window"], horizon=horizon,
                               standardize=config["standardize"],
                               existing=existing, workers=config["workers"])
        for ext in external_files:
            if not Path(ext).exists():
                raise ConfigError(f"external score file not found: {ext}")
            ext_tensor = ScoreTensor.load(ext, horizon=horizon)
            missing = [a for a in series if a not in ext_tensor.atrs]
            if missing:
                log.warning("external %s lacks scores for %d dataset(s): %s",
                            ext, len(missing), ", ".join(missing[:5]))
            tensor.merge(ext_tensor)
        tensor.save(path, header_comment=_meta(config))
        log.info("benchmark h=%d: %d pairs scored, %d failed (%.1fs) -> %s",
                 horizon, len(tensor.scores), len(tensor.failures),
                 time.perf_counter() - t0, path)
        for model in tensor.models:
            per_atr = [tensor.average_score(a, model) for a in tensor.atrs
                       if (a, model) in tensor.scores]
            if per_atr:
                summary_rows.append((horizon, model, float(np.mean(per_atr)),
                                     float(np.std(per_atr)), len(per_atr)))
    summary_csv = out / "summary.csv"
    lines = [f"# {_meta(config)}", "horizon,model,mean_r2,std_r2,n_atrs"]
    for h, model, mean, std, n in summary_rows:
        lines.append(f"{h},{model},{mean!r},{std!r},{n}")
    summary_csv.write_text("\n".join(lines) + "\n")
    table = [f"# {_meta(config)}",
             f"{'horizon':>7}  {'model':<16} {'mean±std R²':>14}  n"]
    for h, model, mean, std, n in summary_rows:
        table.append(f"{h:>7}  {model:<16} {mean:6.2f}±{std:4.2f}      {n}")
    (out / "summary.txt").write_text("\n".join(table) + "\n")


def cmd_rank(config: dict, tensor_files: list[str] | None = None) -> None:
    """Run the statistical ranking pipeline per horizon; emit diagrams."""
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    files = ([Path(f) for f in tensor_files] if tensor_files
             else [tensor_path(config, int(h)) for h in config["horizons"]])
    for path in files:
        if not path.exists():
            raise ConfigError(f"tensor file not found: {path}")
        tensor = ScoreTensor.load(path)
        horizon = tensor.horizon
        model_names = tensor.models
        if len(model_names) < 2:
            raise ConfigError(f"{path}: ranking needs at least 2 models")
        complete, dropped = [], []
        for atr in tensor.atrs:
            if all((atr, m) in tensor.scores for m in model_names):
                complete.append(atr)
            else:
                dropped.append(atr)
        if dropped:
            log.warning("h=%d: dropping %d dataset(s) with failed pairs: %s",
                        horizon, len(dropped), ", ".join(dropped[:5]))
        if not complete:
            raise DataQualityError(f"{path}: no dataset has complete scores")
        t0 = time.perf_counter()
        tallies_by_atr = {}
        for atr in complete:
            matrix = tensor.fold_matrix(atr, model_names)
            avg = matrix.mean(axis=0)
            tallies_by_atr[atr] = stats.rank_models_for_atr(
                matrix, avg, config["alpha"], model_names=model_names)
        report = stats.average_ranks(tallies_by_atr, alpha=config["alpha"])
        header = f"# {_meta(config)}\n# horizon={horizon} CD={report.cd:.4f}\n"
        (out / f"rank_h{horizon}.txt").write_text(header + stats.report_table(report))
        (out / f"rank_h{horizon}.csv").write_text(header + stats.report_csv(report))
        tally_lines = [f"# {_meta(config)}", "atr,model,wins,ties,losses,rank"]
        for atr in complete:
            for t in tallies_by_atr[atr]:
                tally_lines.append(f"{atr},{t.model},{t.wins},{t.ties},{t.losses},{t.rank!r}")
        (out / f"tallies_h{horizon}.csv").write_text("\n".join(tally_lines) + "\n")
        stats.cd_diagram(report, out / f"cd_h{horizon}.svg",
                         out / f"cd_h{horizon}.txt", meta=_meta(config))
        log.info("rank h=%d: CD=%.4f over %d datasets, best=%s (%.1fs)",
                 horizon, report.cd, report.n_datasets,
                 report.model_names[int(np.argmin(report.avg_ranks))],
                 time.perf_counter() - t0)


def _resolve_series(config: dict, ref: str) -> data.TimeSeries:
    """A series reference is a cached sensor id or a raw CSV path."""
    candidate = cache_dir(config) / f"{ref}.series.txt"
    if candidate.exists():
        return data.load_cache(candidate)
    path = Path(ref)
    if path.exists():
        if path.name.endswith(".series.txt"):
            return data.load_cache(path)
        series = data.load_series(path, _schema(config))
        return data.impute(series, config["missing_threshold"])
    raise ConfigError(f"series not found: no cache entry or file named {ref!r}")


def cmd_train(config: dict, model_name: str, series_ref: str, horizon: int,
              output: str) -> None:
    """Fit one configured model on a full series and save the forecaster."""
    builtin, _ = _split_model_specs(config)
    spec = next((s for s in builtin if (s.get("name") or s.get("type")) == model_name), None)
    if spec is None:
        raise ConfigError(f"model {model_name!r} not present in config models")
    series = _resolve_series(config, series_ref)
    window = config["window"]
    values = series.values
    if config["standardize"]:
        mean, std = float(values.mean()), float(values.std()) or 1.0
    else:
        mean, std = 0.0, 1.0
    scaled = (values - mean) / std
    dataset = models.make_windows(scaled, window, horizon)
    forecaster = models.make_forecaster(spec, seed=_model_seed(config["seed"], model_name))
    forecaster.fit(dataset)
    models.save_forecaster(forecaster, output, window=window, horizon=horizon,
                           scaler_mean=mean, scaler_std=std, meta=_meta(config))
    log.info("trained %s on %s (%d windows) -> %s", model_name, series_ref,
             len(dataset), output)


def cmd_forecast(config: dict, model_file: str, series_ref: str, output: str,
                 horizon: int | None = None) -> None:
    """Emit timestamped h-step-ahead predictions for every window position."""
    forecaster, meta = models.load_forecaster(model_file)
    if horizon is not None and horizon != meta["horizon"]:
        raise ConfigError(
            f"requested horizon {horizon} != model horizon {meta['horizon']}")
    series = _resolve_series(config, series_ref)
    window, h = meta["window"], meta["horizon"]
    values = series.values
    if values.size < window:
        raise ConfigError(f"series has {values.size} slots, model needs {window}")
    scaled = (values - meta["scaler_mean"]) / meta["scaler_std"]
    m = values.size - window + 1
    idx = np.arange(window)[None, :] + np.arange(m)[:, None]
    predictions = forecaster.predict_many(scaled[idx])
    predictions = predictions * meta["scaler_std"] + meta["scaler_mean"]
    step = timedelta(seconds=series.step_seconds)
    lines = [f"# {_meta(config)}", "timestamp,prediction"]
    for i in range(m):
        ts = series.start + (window - 1 + i + h) * step
        lines.append(f"{ts.isoformat()},{float(predictions[i])!r}")
    Path(output).write_text("\n".join(lines) + "\n")
    log.info("forecast: %d predictions (h=%d) -> %s", m, h, output)


def cmd_grid_search(config: dict, model_type: str, grid_file: str,
                    tuning_sensors: list[str], horizon: int, output: str) -> None:
    """Exhaustive hyper-parameter search on a disjoint tuning subset."""
    grid = json.loads(Path(grid_file).read_text())
    if not isinstance(grid, dict) or not grid:
        raise ConfigError(f"{grid_file}: grid must be a non-empty JSON object")
    series = _load_cached_series({**config, "sensors": tuning_sensors})
    benchmark_sensors = set(_load_cached_series(config))
    overlap = benchmark_sensors & set(series)
    if overlap:
        raise ConfigError(
            f"tuning sensors overlap benchmark sensors: {sorted(overlap)[:5]}")
    seed = _model_seed(config["seed"], f"grid:{model_type}")

    def factory_for(cfg: dict):
        spec = {"type": model_type, "name": model_type, **cfg}

        def factory():
            return models.make_forecaster(spec, seed=seed)

        return factory

    best, results = grid_search(factory_for, grid, series, folds=config["folds"],
                                window=config["window"], horizon=horizon,
                                standardize=config["standardize"])
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    keys = sorted(grid)
    lines = [f"# {_meta(config)}", ",".join(keys) + ",mean_r2,failure"]
    for cfg, mean, failure in results:
        vals = ",".join(repr(cfg[k]) for k in keys)
        lines.append(f"{vals},{'' if mean is None else repr(mean)},"
                     f"{(failure or '').replace(',', ';')}")
    out.write_text("\n".join(lines) + "\n")
    best_path = out.with_suffix(".best.json")
    best_path.write_text(json.dumps({"model_type": model_type, "horizon": horizon,
                                     "config": best, "meta": _meta(config)},
                                    indent=1) + "\n")
    log.info("grid-search: best %s -> %s / %s", best, out, best_path)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowcast",
                     description="reservoir-computing traffic forecasting benchmark")
    parser.add_argument("--version", action="version", version=f"flowcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        for key in _OVERRIDABLE:
            kind = str if key in ("data_dir", "output_dir") else (
                float if key == "alpha" else int)
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind)
        p.add_argument("--horizons", type=lambda s: [int(x) for x in s.split(",")],
                       help="comma-separated horizons")
        p.add_argument("--sensors", type=lambda s: s.split(","),
                       help="comma-separated sensor id globs")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("prepare", help="load, impute and cache sensor series")
    add_common(p)

    p = sub.add_parser("benchmark", help="run the cross-validated benchmark")
    add_common(p)
    p.add_argument("--resume", action="store_true", help="skip already-scored cells")

    p = sub.add_parser("rank", help="statistical ranking and CD diagrams")
    add_common(p)
    p.add_argument("--tensors", nargs="*", help="score tensor files (default: from config)")

    p = sub.add_parser("train", help="fit one model on a series and save it")
    add_common(p)
    p.add_argument("--model", required=True, help="model name from config")
    p.add_argument("--series", required=True, help="sensor id or CSV path")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("forecast", help="emit predictions from a saved model")
    add_common(p)
    p.add_argument("--model", required=True, help="forecaster file")
    p.add_argument("--series", required=True, help="sensor id or CSV path")
    p.add_argument("--horizon", type=int, help="must match model metadata if given")
    p.add_argument("--output", required=True)

    p = sub.add_parser("grid-search", help="exhaustive hyper-parameter search")
    add_common(p)
    p.add_argument("--model-type", required=True)
    p.add_argument("--grid", required=True, help="JSON file: param -> list of values")
    p.add_argument("--tuning-sensors", required=True,
                   type=lambda s: s.split(","), help="sensor globs, disjoint from benchmark")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--output", required=True)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        overrides = {k: getattr(args, k, None) for k in
                     (*_OVERRIDABLE, "horizons", "sensors")}
        config = load_config(args.config, overrides)
        if args.command == "prepare":
            cmd_prepare(config)
        elif args.command == "benchmark":
            cmd_benchmark(config, resume=args.resume)
        elif args.command == "rank":
            cmd_rank(config, args.tensors)
        elif args.command == "train":
            cmd_train(config, args.model, args.series, args.horizon, args.output)
        elif args.command == "forecast":
            cmd_forecast(config, args.model, args.series, args.output, args.horizon)
        elif args.command == "grid-search":
            cmd_grid_search(config, args.model_type, args.grid,
                            args.tuning_sensors, args.horizon, args.output)
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    except (DataQualityError, OSError) as exc:
        log.error("%s", exc)
        return 2
    except NumericalError as exc:
        log.error("%s", exc)
        return 3
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
