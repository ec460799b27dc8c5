"""Command-line driver: ingest, synth, cluster, train, predict, evaluate, report.

Exit status is 0 on success, 1 on usage errors and 2 on data or model errors.
"""

from __future__ import annotations

import argparse
import glob
import json
import math
import os
import sys
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import evo, fcm, metrics, pipeline, som, synth
from .evo import GAConfig
from .fcm import ClusterModel
from .ingest import (LogParseError, Scaler, aggregate, build_features, design_matrix, normalize, parse_lines,
                     read_features_csv, reindex_by_cluster, to_daily, write_features_csv,
                     write_series_csv)
from .som import SOMModel
from .tsfis import InferenceError, TSModel

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
SYNTH_START = "2002-01-09"

_GA_FIELDS = {f.name: f for f in fields(GAConfig)}
_RUN_KEYS = {"granularity", "horizon", "boundary", "method", "out"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_value(key: str, text: str):
    text = text.strip()
    if key in _GA_FIELDS:
        if key == "target_error":
            return None if text.lower() in ("", "none") else float(text)
        kind = _GA_FIELDS[key].type
        return int(text) if kind in (int, "int") else float(text)
    if key == "horizon":
        return int(text)
    return text


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _GA_FIELDS and key not in _RUN_KEYS:
                raise UsageError(f"{path}:{n}: unknown key {key!r}")
            try:
                out[key] = _parse_value(key, value)
            except ValueError:
                raise UsageError(f"{path}:{n}: bad value for {key}: {value!r}") from None
    return out


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over the environment seed over defaults."""
    settings = {f.name: f.default for f in fields(GAConfig)}
    settings.update(granularity=None, horizon=1, boundary=None, method="i-miner", out="runs")
    env_seed = _env_seed()
    if env_seed is not None:
        settings["seed"] = env_seed
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for key in list(_GA_FIELDS) + sorted(_RUN_KEYS):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def ga_config(settings: dict) -> GAConfig:
    return GAConfig(**{k: settings[k] for k in _GA_FIELDS})


def _env_seed() -> Optional[int]:
    env = os.environ.get("IMINER_SEED")
    if env in (None, ""):
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"IMINER_SEED must be an integer, got {env!r}") from None


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = _env_seed()
    return 0 if env is None else env


def _parse_time(text: str) -> datetime:
    ts = datetime.fromisoformat(text)
    return ts.replace(tzinfo=timezone.utc) if ts.tzinfo is None else ts.astimezone(timezone.utc)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _read_features(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return read_features_csv(fh)


def _granularity_of(table) -> str:
    if table.starts is None or len(table.starts) < 2:
        return "hourly"
    step = min(b - a for a, b in zip(table.starts, table.starts[1:]))
    return "daily" if step.total_seconds() >= 86400 else "hourly"


def _scaler_dict(scaler: Scaler) -> dict:
    return {k: list(v) for k, v in scaler.ranges.items()}


def _clusterer_dict(obj) -> dict:
    if isinstance(obj, ClusterModel):
        return {"kind": "fcm", "model": obj.to_dict()}
    if isinstance(obj, SOMModel):
        return {"kind": "som", "model": obj.to_dict()}
    return {"kind": "none"}


def _assign(clusterer: dict, points) -> Optional[np.ndarray]:
    kind = clusterer["kind"]
    if kind == "fcm":
        return fcm.assign_many(ClusterModel.from_dict(clusterer["model"]), points)
    if kind == "som":
        return som.assign_many(SOMModel.from_dict(clusterer["model"]), points)
    if kind == "none":
        return None
    raise ValueError(f"unknown clusterer kind {kind!r}")


# -- subcommands -------------------------------------------------------------

def cmd_ingest(args) -> int:
    paths = sorted(glob.glob(args.logs))
    if not paths:
        raise FileNotFoundError(f"no log files match {args.logs}")
    records, skipped = [], 0
    for path in paths:
        with open(path, encoding="utf-8", errors="replace") as fh:
            recs, bad = parse_lines(fh)
        records.extend(recs)
        skipped += bad
    if not records:
        raise ValueError(f"no parsable records in {args.logs}")
    series = aggregate(records, args.granularity)
    out = _outdir(args.out)
    with open(out / "series.csv", "w", encoding="utf-8", newline="") as fh:
        write_series_csv(series, fh)
    with open(out / "features.csv", "w", encoding="utf-8", newline="") as fh:
        write_features_csv(build_features(series, args.horizon), fh)
    print(f"parsed {len(records)} records, skipped {skipped}; {len(series)} {args.granularity} buckets -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = _seed(args)
    series = synth.generate(synth.TrafficProfile(), args.start, args.days, seed)
    out = _outdir(args.out)
    with open(out / "series.csv", "w", encoding="utf-8", newline="") as fh:
        write_series_csv(series, fh)
    for gran, s in (("hourly", series), ("daily", to_daily(series))):
        with open(out / f"features-{gran}.csv", "w", encoding="utf-8", newline="") as fh:
            write_features_csv(build_features(s, args.horizon), fh)
    if args.log_lines:
        with open(out / "access.log", "w", encoding="utf-8") as fh:
            for line in synth.log_lines(series, seed):
                fh.write(line + "\n")
    print(f"wrote {len(series)} hourly buckets from {args.start} -> {out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    table = normalize(_read_features(args.features))
    pts = evo.cluster_space(table)
    seed = _seed(args)
    if args.method == "fcm":
        cl = pipeline.fcm_clusterer(table, args.clusters, seed)
    else:
        rows, cols = (int(v) for v in args.grid.lower().split("x"))
        cl = pipeline.som_clusterer(table, (rows, cols), seed)
    labels = cl.assign(pts)
    out = _outdir(args.out)
    with open(out / "clustered.csv", "w", encoding="utf-8", newline="") as fh:
        write_features_csv(reindex_by_cluster(table, labels), fh)
    _write(out / "clusters.json", json.dumps(_clusterer_dict(cl.model), indent=2) + "\n")
    counts = np.bincount(labels, minlength=cl.n_clusters)
    print(f"{args.method}: {cl.n_clusters} clusters, sizes {counts.tolist()} -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings = resolve_settings(args)
    config = ga_config(settings)
    table = _read_features(args.features)
    horizon = settings["granularity"] or _granularity_of(table)
    boundary = _parse_time(settings["boundary"]) if settings["boundary"] else pipeline.default_boundary(table)
    train, test = pipeline.prepare_table(table, boundary)
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    result = pipeline.run_method(settings["method"], train, test, config, horizon, log=log)
    out = _outdir(settings["out"])

    bundle = {
        "method": result.method,
        "horizon": horizon,
        "n_clusters": result.n_clusters,
        "next_index": int(result.train.raw_index.max()) + 1,
        "scaler": _scaler_dict(train.scaler),
        "clusterer": _clusterer_dict(result.clusters),
        "fis": result.model.to_dict(),
        "config": config.to_dict(),
    }
    _write(out / "model.json", json.dumps(bundle, indent=2) + "\n")
    _write(out / "eval.csv", metrics.compare([result.report]))
    if result.history is not None:
        _write(out / "history.csv", result.history.to_csv())
    if result.chromosome is not None:
        _write(out / "chromosome.json", result.chromosome.to_json(indent=2) + "\n")
    actual = pipeline.time_order(result.test, result.test.target)
    pred = pipeline.time_order(result.test, result.test_pred)
    _write(out / "predictions.csv", metrics.prediction_csv(actual, pred))
    r = result.report
    print(f"{r.method} {r.horizon}: train RMSE {r.train_rmse:.6f}, test RMSE {r.test_rmse:.6f}, "
          f"test CC {r.test_cc:.4f}, rules {r.rule_count}, clusters {r.cluster_count} -> {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        bundle = json.load(fh)
    try:
        model = TSModel.from_dict(bundle["fis"])
        scaler = Scaler({k: tuple(v) for k, v in bundle["scaler"].items()})
        clusterer, n_clusters = bundle["clusterer"], int(bundle["n_clusters"])
        start = int(bundle["next_index"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{args.model} is not a model bundle: missing {exc}") from None
    table = normalize(_read_features(args.features), scaler)
    labels = _assign(clusterer, evo.cluster_space(table))
    if labels is not None:
        table = reindex_by_cluster(table, labels, start=start)
    X, d = design_matrix(table, n_clusters)
    y = model.predict(X)
    text = metrics.prediction_csv(pipeline.time_order(table, d), pipeline.time_order(table, y))
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    with open(args.pred, encoding="utf-8") as fh:
        actual, pred = metrics.read_predictions(fh.read())
    err = metrics.rmse(pred, actual)
    try:
        cc = metrics.corr_coef(pred, actual)
    except ValueError:
        cc = math.nan
    print(f"rows,rmse,cc\n{len(actual)},{err!r},{cc!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    paths = sorted(Path(args.runs).rglob("eval.csv"))
    if not paths:
        raise FileNotFoundError(f"no eval.csv under {args.runs}")
    reports = []
    for p in paths:
        reports.extend(metrics.read_reports(p.read_text(encoding="utf-8")))
    if args.reference:
        for (method, horizon), (tr, te, cc) in metrics.REFERENCE_RESULTS.items():
            reports.append(metrics.EvalReport(f"{method} (reference)", horizon, tr, te, cc))
    text = metrics.compare(reports)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iminer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("ingest", help="parse access logs into traffic series and features")
    s.add_argument("--logs", required=True, help="glob of CLF/Combined log files")
    s.add_argument("--granularity", choices=("hourly", "daily"), default="hourly")
    s.add_argument("--horizon", type=int, default=1, help="steps ahead for the target column")
    s.add_argument("--out", default=".", help="output directory")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="generate a synthetic traffic corpus")
    s.add_argument("--days", type=int, default=180)
    s.add_argument("--start", default=SYNTH_START, help="first day (ISO date)")
    s.add_argument("--seed", type=int, default=None, help="RNG seed (default $IMINER_SEED or 0)")
    s.add_argument("--horizon", type=int, default=1)
    s.add_argument("--log-lines", action="store_true", help="also write access.log in CLF")
    s.add_argument("--out", default=".", help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("cluster", help="cluster feature rows by traffic volume")
    s.add_argument("--features", required=True, help="feature CSV")
    s.add_argument("--method", choices=("fcm", "som"), default="fcm")
    s.add_argument("--clusters", type=int, default=pipeline.FCM_ONLY_CLUSTERS, help="FCM cluster count")
    s.add_argument("--grid", default="2x2", help="SOM grid as ROWSxCOLS")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=".", help="output directory")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("train", help="train a predictor and write model, history and evaluation")
    s.add_argument("--features", required=True, help="feature CSV with bucket_start")
    s.add_argument("--config", help="key = value file; flags override it")
    s.add_argument("--method", choices=pipeline.METHODS, default=None)
    s.add_argument("--granularity", choices=("hourly", "daily"), default=None,
                   help="horizon label (default: inferred from bucket spacing)")
    s.add_argument("--boundary", default=None, help="first test bucket (ISO time); default: final 7 days")
    s.add_argument("--out", default=None, help="output directory (default runs)")
    s.add_argument("--seed", type=int, default=None, help="RNG seed (default $IMINER_SEED or 0)")
    for name in ("population_size", "max_generations", "mfs_per_input", "gd_epochs", "C_max"):
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=int, default=None)
    for name in ("ranking_pressure", "elitism_fraction", "mutation_rate_start", "mutation_shape_b", "target_error"):
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=None)
    s.add_argument("-v", "--verbose", action="store_true", help="log each generation to stderr")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict targets for a feature CSV with a trained model")
    s.add_argument("--model", required=True, help="model.json written by train")
    s.add_argument("--features", required=True, help="feature CSV")
    s.add_argument("--out", default=None, help="prediction CSV (default stdout)")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="RMSE and correlation of a prediction CSV")
    s.add_argument("--pred", required=True, help="CSV with t,actual,predicted,trend")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="combine eval.csv files into one comparison table")
    s.add_argument("--runs", required=True, help="directory searched recursively for eval.csv")
    s.add_argument("--reference", action="store_true", help="append the stored reference rows")
    s.add_argument("--out", default=None, help="also write the table here")
    s.set_defaults(func=cmd_report)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"iminer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, LogParseError, InferenceError, json.JSONDecodeError) as exc:
        msg = f"{exc.strerror}: {exc.filename}" if isinstance(exc, OSError) and exc.filename else str(exc)
        print(f"iminer: error: {msg}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
