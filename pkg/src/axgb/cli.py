"""Command-line driver: ``axgb {gen,run,tune,bench,nodes}``.

Settings come from three layers, later ones winning: built-in defaults, a
flat ``key=value`` config file (``--config``), then command-line flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boosting import TreeParams
from .ensemble import MODEL_NAMES, make_model, model_from_dict
from .evaluation import (
    ArrayStream,
    EvaluationError,
    ParamGrid,
    benchmark_time,
    grid_search,
    materialize,
    prequential_run,
)
from .streams import PRESETS, ConfigError, IngestionError, StreamSpec, compose_drift, load_csv, preset_spec, write_csv

log = logging.getLogger("axgb")


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _class_map(text):
    out = {}
    for part in str(text).split(","):
        if not part.strip():
            continue
        key, _, val = part.partition("=")
        if not _:
            raise ValueError(f"class map entries look like VALUE=0|1, got {part!r}")
        out[key.strip()] = int(val)
    return out


# name -> (type, default, help).  Flags are --name with '_' -> '-'.
SETTINGS = {
    "model": (str, "axgb_replace", f"one of {', '.join(MODEL_NAMES)}"),
    "ensemble_size": (int, 30, "ensemble capacity K (BXGB: number of sub-ensembles)"),
    "sub_ensemble_size": (int, 30, "trees per BXGB sub-ensemble"),
    "w_min": (int, 1, "minimum window size"),
    "w_max": (int, 1000, "maximum window size (BXGB: fixed window)"),
    "max_depth": (int, 6, "maximum tree depth"),
    "eta": (float, 0.3, "learning rate"),
    "lam": (float, 1.0, "L2 leaf regularization (lambda)"),
    "gamma": (float, 0.0, "per-split penalty"),
    "min_child_weight": (float, 1.0, "minimum hessian sum per child"),
    "delta": (float, 0.002, "ADWIN confidence"),
    "stream": (str, "SEA_a", f"stream preset: {', '.join(PRESETS)}"),
    "length": (int, 100_000, "stream length"),
    "noise": (float, None, "override label noise of the preset"),
    "perturbation": (float, None, "override Agrawal perturbation"),
    "generator": (str, None, "custom stream: SEA, AGRAWAL or HYPERPLANE (instead of a preset)"),
    "concepts": (_int_list, None, "custom stream: comma-separated concept ids"),
    "drift_positions": (_int_list, None, "custom stream: comma-separated drift centers"),
    "drift_widths": (_int_list, None, "custom stream: comma-separated drift widths (0 = abrupt)"),
    "csv": (str, None, "read samples from this CSV file instead of a generator"),
    "class_column": (int, -1, "CSV class column index"),
    "class_map": (_class_map, None, "CSV class mapping, e.g. UP=1,DOWN=0"),
    "seed": (int, 1, "random seed"),
    "report_every": (int, 1000, "samples per report window"),
    "out": (str, None, "output path or prefix"),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def tree_params(self) -> TreeParams:
        return TreeParams(max_depth=self.max_depth, lam=self.lam, gamma=self.gamma,
                          learning_rate=self.eta, min_child_weight=self.min_child_weight)

    def build_model(self, name=None):
        name = name or self.model
        if name not in MODEL_NAMES:
            raise CliError(f"config error: field 'model': unknown model {name!r}", 2)
        return make_model(name, n_estimators=self.ensemble_size, w_min=self.w_min, w_max=self.w_max,
                          tree_params=self.tree_params(), delta=self.delta,
                          sub_ensemble_size=self.sub_ensemble_size)

    def stream_spec(self, length=None) -> StreamSpec:
        length = self.length if length is None else length
        if self.generator:
            concepts = self.concepts or [1]
            positions = self.drift_positions or []
            kwargs = dict(generator=self.generator, length=length, concept_sequence=concepts,
                          drift_positions=positions, drift_widths=self.drift_widths or [0] * len(positions),
                          seed=self.seed, name="custom")
            if self.noise is not None:
                kwargs["noise_prob"] = self.noise
            if self.perturbation is not None:
                kwargs["perturbation"] = self.perturbation
            return StreamSpec(**kwargs)
        overrides = {}
        if self.noise is not None:
            overrides["noise_prob"] = self.noise
        if self.perturbation is not None:
            overrides["perturbation"] = self.perturbation
        return preset_spec(self.stream, length, self.seed, **overrides)

    def open_stream(self, length=None):
        if self.csv:
            if not Path(self.csv).is_file():
                raise CliError(f"input CSV not found: {self.csv}")
            return load_csv(self.csv, self.class_column, self.class_map)
        return compose_drift(self.stream_spec(length))

    def stream_label(self):
        if self.csv:
            return {"csv": self.csv}
        return self.stream_spec().to_dict()


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {path}", 2)
    out = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"config error: {path}:{lineno}: expected key=value", 2)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    values = {}
    for name, (typ, default, _) in SETTINGS.items():
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            values[name] = cli_value
        elif name in file_values:
            try:
                values[name] = typ(file_values[name])
            except (TypeError, ValueError) as exc:
                raise CliError(f"config error: field '{name}': {exc}", 2) from None
        else:
            values[name] = default
    unknown = set(file_values) - set(SETTINGS)
    if unknown:
        raise CliError(f"config error: unknown field(s): {', '.join(sorted(unknown))}", 2)
    cfg = ExperimentConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    checks = [
        ("model", cfg.model in MODEL_NAMES, f"unknown model {cfg.model!r}"),
        ("ensemble_size", cfg.ensemble_size >= 1, "must be >= 1"),
        ("sub_ensemble_size", cfg.sub_ensemble_size >= 1, "must be >= 1"),
        ("w_min", cfg.w_min >= 1, "must be >= 1"),
        ("w_max", cfg.w_max >= cfg.w_min, "must be >= w_min"),
        ("max_depth", cfg.max_depth >= 0, "must be >= 0"),
        ("eta", 0.0 < cfg.eta <= 1.0, "must be in (0, 1]"),
        ("lam", cfg.lam >= 0, "must be >= 0"),
        ("gamma", cfg.gamma >= 0, "must be >= 0"),
        ("delta", 0.0 < cfg.delta < 1.0, "must be in (0, 1)"),
        ("length", cfg.length >= 0, "must be >= 0"),
        ("report_every", cfg.report_every >= 1, "must be >= 1"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise CliError(f"config error: field '{name}': {msg}", 2)
    if not cfg.csv and not cfg.generator and cfg.stream.upper() not in {p.upper() for p in PRESETS}:
        raise CliError(f"config error: field 'stream': unknown preset {cfg.stream!r}", 2)


def _add_settings(parser, names):
    for name in names:
        typ, default, help_ = SETTINGS[name]
        flag = "--" + name.replace("_", "-")
        extra = ["--lambda"] if name == "lam" else []
        parser.add_argument(flag, *extra, dest=name, type=typ, default=None,
                            help=f"{help_} (default: {default})")


STREAM_KEYS = ["stream", "length", "seed", "noise", "perturbation", "generator", "concepts",
               "drift_positions", "drift_widths", "csv", "class_column", "class_map"]
MODEL_KEYS = ["model", "ensemble_size", "sub_ensemble_size", "w_min", "w_max", "max_depth", "eta", "lam",
              "gamma", "min_child_weight", "delta"]


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen(cfg: ExperimentConfig) -> int:
    if cfg.csv:
        raise CliError("gen materializes generated streams; --csv is not accepted here", 2)
    if not cfg.out:
        raise CliError("config error: field 'out': gen needs an output path", 2)
    n = write_csv(cfg.open_stream(), cfg.out)
    log.info("wrote %d samples to %s", n, cfg.out)
    return 0


def _out_paths(cfg, default_prefix):
    prefix = Path(cfg.out or default_prefix)
    if prefix.suffix in (".json", ".csv"):
        prefix = prefix.with_suffix("")
    return prefix.with_name(prefix.name + ".csv"), prefix.with_name(prefix.name + ".json")


def cmd_run(cfg: ExperimentConfig) -> int:
    model = cfg.build_model()
    stream = cfg.open_stream()
    report = prequential_run(model, stream, report_every=cfg.report_every)
    csv_path, json_path = _out_paths(cfg, f"run_{cfg.model}")
    report.write_csv(csv_path)
    report.write_json(json_path, stream=cfg.stream_label(), seed=cfg.seed)
    print(f"{report.model}: accuracy={report.final_accuracy:.4f} drifts={report.drift_count} "
          f"peak_nodes={report.peak_nodes} throughput={report.throughput_sps:.0f} samples/s")
    return 0


def load_grid(path) -> ParamGrid:
    if str(path).lower() == "default":
        return ParamGrid()
    raw = read_config_file(path)
    keys = {"max_depth": int, "learning_rate": float, "ensemble_size": int, "max_window": int, "min_window": int}
    unknown = set(raw) - set(keys)
    if unknown:
        raise CliError(f"config error: unknown grid field(s): {', '.join(sorted(unknown))}", 2)
    doc = {}
    for key, typ in keys.items():
        if key not in raw:
            raise CliError(f"config error: grid field '{key}' is missing", 2)
        try:
            doc[key] = [typ(v) for v in raw[key].split(",") if v.strip()]
        except ValueError as exc:
            raise CliError(f"config error: grid field '{key}': {exc}", 2) from None
    try:
        return ParamGrid.from_dict(doc)
    except EvaluationError as exc:
        raise CliError(f"config error: {exc}", 2) from None


def cmd_tune(cfg: ExperimentConfig, grid_path, split, jobs) -> int:
    grid = load_grid(grid_path)
    X, y = materialize(cfg.open_stream())
    prefix = Path(cfg.out or f"tune_{cfg.model}")
    evals_path = prefix.with_name(prefix.name + "_evaluations.csv")
    rows = []
    result = grid_search(grid, X, y, split=split, model=cfg.model, jobs=jobs, base_params=cfg.tree_params(),
                         delta=cfg.delta, sub_ensemble_size=cfg.sub_ensemble_size,
                         log=lambda pt, acc: rows.append((pt, acc)))
    with open(evals_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["max_depth", "learning_rate", "ensemble_size", "max_window", "min_window", "accuracy"])
        for pt, acc in rows:
            w.writerow([pt["max_depth"], pt["learning_rate"], pt["ensemble_size"], pt["max_window"],
                        pt["min_window"], repr(acc)])
    doc = {"model": cfg.model, "stream": cfg.stream_label(), "seed": cfg.seed, "split": split,
           **result.to_dict()}
    _write_json(prefix.with_name(prefix.name + "_best.json"), doc)
    result.test_report.write_csv(prefix.with_name(prefix.name + "_test.csv"))
    log.info("evaluated %d grid points", len(rows))
    print(f"best {result.best_params} validation={result.validation_accuracy:.4f} "
          f"test={result.test_accuracy:.4f}")
    return 0


def cmd_bench(cfg: ExperimentConfig, models, sizes, repeats) -> int:
    models = models or [cfg.model]
    for m in models:
        if m not in MODEL_NAMES:
            raise CliError(f"config error: field 'model': unknown model {m!r}", 2)
    if cfg.csv:
        raise CliError("bench uses generated streams; --csv is not accepted here", 2)
    all_rows = []
    for m in models:
        rows = benchmark_time(lambda m=m: cfg.build_model(m), lambda n: compose_drift(cfg.stream_spec(n)),
                              sizes, repeats, name=m)
        all_rows.extend(rows)
        for r in rows:
            print(f"{m:20s} size={r.size:>9d} mean={r.mean_seconds:8.3f}s  {r.throughput_sps:10.0f} samples/s")
    out = Path(cfg.out or "bench.csv")
    header = ["model", "size", "repeats", "mean_seconds"] + (["std_seconds"] if repeats > 1 else []) + \
        ["throughput_sps"]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in all_rows:
            d = r.as_dict()
            w.writerow([d[k] if not isinstance(d[k], float) else repr(d[k]) for k in header])
    return 0


def node_stats(model) -> dict:
    if model.kind == "bxgb":
        trees = [t for sub in model.sub_ensembles for t in sub]
    else:
        trees = list(model.members)
    counts = [t.n_nodes for t in trees]
    return {
        "kind": model.kind,
        "members": model.n_members,
        "trees": len(trees),
        "total_nodes": int(sum(counts)),
        "per_tree_nodes": counts,
        "mean_nodes_per_tree": float(np.mean(counts)) if counts else 0.0,
        "max_depth_seen": max((t.depth() for t in trees), default=0),
    }


def cmd_nodes(cfg: ExperimentConfig, load_path, dump_path) -> int:
    if load_path:
        p = Path(load_path)
        if not p.is_file():
            raise CliError(f"model file not found: {load_path}")
        model = model_from_dict(json.loads(p.read_text(encoding="utf-8")))
    else:
        model = cfg.build_model()
        prequential_run(model, cfg.open_stream(), report_every=cfg.report_every)
    stats = node_stats(model)
    if dump_path:
        _write_json(dump_path, model.to_dict())
    print(json.dumps(stats))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="axgb", description="Adaptive XGBoost stream experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="materialize a stream to CSV")
    p.add_argument("--config")
    _add_settings(p, [k for k in STREAM_KEYS if k not in ("csv", "class_column", "class_map")] + ["out"])

    p = sub.add_parser("run", help="prequential evaluation of one model")
    p.add_argument("--config")
    _add_settings(p, MODEL_KEYS + STREAM_KEYS + ["report_every", "out"])

    p = sub.add_parser("tune", help="two-phase grid search")
    p.add_argument("--config")
    p.add_argument("--grid", default="default", help="grid file (key=v1,v2,...) or 'default' for the built-in 1200-point grid")
    p.add_argument("--split", type=float, default=0.3)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_settings(p, MODEL_KEYS + STREAM_KEYS + ["out"])

    p = sub.add_parser("bench", help="training time and throughput")
    p.add_argument("--config")
    p.add_argument("--models", type=lambda s: [v.strip() for v in s.split(",") if v.strip()], default=None)
    p.add_argument("--sizes", type=_int_list, default=[200_000, 400_000, 600_000, 800_000, 1_000_000])
    p.add_argument("--repeats", type=int, default=10)
    _add_settings(p, MODEL_KEYS + [k for k in STREAM_KEYS if k not in ("csv", "class_column", "class_map")]
                  + ["out"])

    p = sub.add_parser("nodes", help="train (or load) a model and report node statistics")
    p.add_argument("--config")
    p.add_argument("--load", help="read a model dump instead of training")
    p.add_argument("--dump", help="write the model as JSON")
    _add_settings(p, MODEL_KEYS + STREAM_KEYS + ["report_every"])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "tune":
            if not 0.0 < args.split < 1.0 or args.jobs < 1:
                raise CliError("config error: field 'split' must be in (0, 1) and 'jobs' >= 1", 2)
            return cmd_tune(cfg, args.grid, args.split, args.jobs)
        if args.command == "bench":
            if args.repeats < 1:
                raise CliError("config error: field 'repeats': must be >= 1", 2)
            return cmd_bench(cfg, args.models, args.sizes, args.repeats)
        if args.command == "nodes":
            return cmd_nodes(cfg, args.load, args.dump)
    except CliError as exc:
        print(f"axgb: error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, IngestionError, EvaluationError, ValueError, OSError) as exc:
        print(f"axgb: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
