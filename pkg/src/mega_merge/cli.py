"""``mega-merge`` command line: train, merge, merge-tree, average, eval, report.

Settings come from an optional flat ``key = value`` config file, then
``--key value`` flags, which win.  Exit codes: 0 success, 2 usage or config
error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import PARTITIONS, dataset_from_source, split
from .errors import ConfigError, DataError, MegaError
from .fitness import AccuracyFitness, spec_for
from .ga import GaConfig, history_csv
from .genome import (
    atomic_write_bytes,
    flatten,
    load_checkpoint,
    save_checkpoint,
    unflatten,
)
from .merge import build_merge_plan, execute_merge_plan, format_table, weight_average
from .nn import ModelSpec, TrainConfig, accuracy, train

DEFAULTS = {
    # data
    "dataset": None,
    "label_column": "y",
    "n_samples": 1000,
    "noise": 0.15,
    "data_seed": 0,
    "val_fraction": 0.1,
    "test_fraction": 0.0,
    # model + training
    "hidden_widths": "16,16",
    "batch_size": 256,
    "epochs": 50,
    "learning_rate": 0.01,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_epsilon": 1e-8,
    # GA
    "population_size": 20,
    "generations": 20,
    "parents_per_generation": 4,
    "mutation_rate": 0.02,
    "mutation_sigma": 0.01,
    "tournament_size": 3,
    "elite_count": 1,
    "seed_endpoints": True,
    "pairing": "adjacent",
    # run
    "seed": 0,
    "out": None,
    "partition": "val",
    "timings": False,
}

_STR_KEYS = {"dataset", "label_column", "hidden_widths", "pairing", "out", "partition"}


def _coerce(key, raw):
    if key in _STR_KEYS:
        return raw
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value.strip())
    return out


def resolve_config(args) -> dict:
    """Defaults, then config file, then flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = _coerce(key, val)
    return cfg


def ga_config(cfg) -> GaConfig:
    return GaConfig(**{f.name: cfg[f.name] for f in fields(GaConfig)})


def train_config(cfg) -> TrainConfig:
    return TrainConfig(**{f.name: cfg[f.name] for f in fields(TrainConfig)})


def load_dataset(cfg):
    if not cfg["dataset"]:
        raise ConfigError("no dataset given; pass --dataset <kind|file.csv> or set it in --config")
    ds = dataset_from_source(cfg["dataset"], cfg["n_samples"], cfg["noise"],
                             cfg["label_column"], cfg["data_seed"])
    return split(ds, cfg["val_fraction"], cfg["test_fraction"], cfg["data_seed"])


def model_spec(cfg, ds) -> ModelSpec:
    text = cfg["hidden_widths"].strip()
    try:
        hidden = [int(w) for w in text.split(",")] if text else []
    except ValueError:
        raise ConfigError(f"hidden_widths must be comma-separated integers, got {text!r}") from None
    return ModelSpec((ds.n_features, *hidden, ds.n_classes))


def _sibling(out, suffix):
    out = Path(out)
    return out.with_name(out.stem + suffix)


def _write_text(path, text):
    atomic_write_bytes(path, text.encode())


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_checkpoints(paths):
    genomes = [load_checkpoint(p) for p in paths]
    names = [Path(p).stem for p in paths]
    return genomes, names


def _check_against_data(genome, ds, name):
    spec = spec_for(genome)
    if spec.n_inputs != ds.n_features or spec.n_classes < ds.n_classes:
        raise DataError(
            f"{name}: model is {spec.layer_widths} but data has {ds.n_features} features "
            f"and {ds.n_classes} classes"
        )


def _eval_fns(ds):
    val = AccuracyFitness(*ds.require("val"), checkpoint_precision=True)
    test = (AccuracyFitness(ds.X_test, ds.y_test, checkpoint_precision=True)
            if len(ds.test_idx) else None)
    return val, test


def cmd_train(cfg):
    ds = load_dataset(cfg)
    spec = model_spec(cfg, ds)
    genome = flatten(train(spec, ds, train_config(cfg)))
    # metrics describe the checkpoint as stored, i.e. at float32 precision
    params = unflatten(genome.with_values(genome.values.astype(np.float32)))
    out = cfg["out"] or f"model_{cfg['seed']}.ckpt"
    metrics = {
        "seed": cfg["seed"],
        "layer_widths": list(spec.layer_widths),
        "train_accuracy": accuracy(params, spec, ds.X_train, ds.y_train),
    }
    for part in ("val", "test"):
        X, y = ds.partition(part)
        metrics[f"{part}_accuracy"] = accuracy(params, spec, X, y) if len(y) else None
    # the sidecar goes first: a checkpoint never exists without its metrics
    _write_json(_sibling(out, ".metrics.json"), metrics)
    save_checkpoint(genome, out)
    line = f"wrote {out}  train accuracy {metrics['train_accuracy']:.4f}"
    if metrics["val_accuracy"] is not None:
        line += f"  val accuracy {metrics['val_accuracy']:.4f}"
    print(line)
    return 0


def _run_tree(cfg, paths, default_out):
    ds = load_dataset(cfg)
    genomes, names = _load_checkpoints(paths)
    plan = build_merge_plan(genomes, ga_config(cfg), names, cfg["pairing"])
    for g, name in zip(plan.leaves, plan.names):
        _check_against_data(g, ds, name)
    val_fn, test_fn = _eval_fns(ds)
    final, report = execute_merge_plan(plan, val_fn, test_fn, workers=None)
    out = cfg["out"] or default_out
    _write_text(_sibling(out, ".report.json"), report.to_json(cfg["timings"]))
    save_checkpoint(final, out)
    print(format_table(report.to_dict(cfg["timings"])), end="")
    return out, report


def cmd_merge(cfg, paths):
    if len(paths) != 2:
        raise ConfigError("merge takes exactly two checkpoints")
    out, report = _run_tree(cfg, paths, "merged.ckpt")
    _write_text(_sibling(out, ".history.csv"), history_csv(report.nodes[0].history))
    return 0


def cmd_merge_tree(cfg, paths):
    _run_tree(cfg, paths, "merged_tree.ckpt")
    return 0


def cmd_average(cfg, paths):
    if not paths:
        raise ConfigError("average needs at least one checkpoint")
    ds = load_dataset(cfg)
    genomes, names = _load_checkpoints(paths)
    for g, name in zip(genomes, names):
        _check_against_data(g, ds, name)
    avg = weight_average(genomes)
    val_fn, test_fn = _eval_fns(ds)
    report = {
        "inputs": [
            {"name": n, "val_accuracy": val_fn(g),
             "test_accuracy": test_fn(g) if test_fn else None}
            for n, g in zip(names, genomes)
        ],
        "average_val_accuracy": val_fn(avg),
        "average_test_accuracy": test_fn(avg) if test_fn else None,
    }
    out = cfg["out"] or "average.ckpt"
    _write_json(_sibling(out, ".report.json"), report)
    save_checkpoint(avg, out)
    for row in report["inputs"]:
        print(f"{row['name']}  {row['val_accuracy']:.4f}")
    print(f"Weight Average  {report['average_val_accuracy']:.4f}")
    return 0


def cmd_eval(cfg, paths):
    if len(paths) != 1:
        raise ConfigError("eval takes exactly one checkpoint")
    if cfg["partition"] not in PARTITIONS:
        raise ConfigError(f"unknown partition {cfg['partition']!r}; choose from {', '.join(PARTITIONS)}")
    ds = load_dataset(cfg)
    genome = load_checkpoint(paths[0])
    _check_against_data(genome, ds, paths[0])
    X, y = ds.require(cfg["partition"])
    print(f"{AccuracyFitness(X, y, checkpoint_precision=True)(genome):.4f}")
    return 0


def cmd_report(cfg, paths):
    if len(paths) != 1:
        raise ConfigError("report takes exactly one report JSON")
    path = Path(paths[0])
    if not path.is_file():
        raise ConfigError(f"{path} not found")
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    if "nodes" in report:
        print(format_table(report), end="")
    elif "inputs" in report:
        for row in report["inputs"]:
            print(f"{row['name']}  {row['val_accuracy']:.4f}")
        print(f"Weight Average  {report['average_val_accuracy']:.4f}")
    else:
        raise DataError(f"{path}: not a merge or average report")
    return 0


COMMANDS = {
    "train": (cmd_train, None, "train one model and write its checkpoint"),
    "merge": (cmd_merge, "+", "merge two checkpoints with the genetic algorithm"),
    "merge-tree": (cmd_merge_tree, "+", "merge 2^k checkpoints pairwise, level by level"),
    "average": (cmd_average, "+", "coordinate-wise mean of checkpoints"),
    "eval": (cmd_eval, "+", "accuracy of a checkpoint on one partition"),
    "report": (cmd_report, "+", "print a saved report as a table"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mega-merge", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, nargs, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, allow_abbrev=False)
        if nargs:
            p.add_argument("paths", nargs=nargs, metavar="FILE")
        p.add_argument("--config", help="flat key = value file")
        for key in DEFAULTS:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="VALUE")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = resolve_config(args)
        if COMMANDS[args.command][1]:
            return func(cfg, args.paths)
        return func(cfg)
    except ConfigError as exc:
        print(f"usage: mega-merge {args.command} [options] (see --help)", file=sys.stderr)
        print(f"mega-merge: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MegaError as exc:
        print(f"mega-merge: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mega-merge: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
