"""Command-line entry point: train, verify, bench.

``maxup-lab train|verify|bench --config cfg.json [--set k=v]... [--seed N]
[--out DIR]``.  All randomness derives from the single top-level seed.  The
resolved configuration is written next to the artifacts, and re-running it
reproduces them byte for byte.  ``MAXUP_LAB_THREADS`` caps the worker pool
used for verification checks and benchmark repeats.

Exit codes: 0 success; 1 runtime failure; 2 configuration error (message
names the offending key, nothing is written); 3 verification found failures
(reports are still written).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .augment import AugmentationSpec, BadSpec
from .checks import CHECKS, run_check
from .datasets import DatasetSpec, generate
from .losses import Loss
from .models import init_mlp, save_model
from .rng import RngStream
from .theory import summary_table, write_reports_jsonl, write_residual_csv
from .trainers import ConfigInvalid, TrainConfig, train


class ConfigError(ValueError):
    """Bad configuration; message names the offending key."""


DEFAULT_CONFIG = {
    "seed": 0,
    "out": "runs/latest",
    "dataset": {
        "kind": "gaussian_mixture_halfspace",
        "n_train": 500,
        "n_test": 200,
        "d": 10,
        "noise_sigma": 1.0,
        "theta_star": None,
    },
    "model": {
        "kind": "mlp",
        "hidden": [16],
        "activation": "tanh",
    },
    "train": {
        "method": "maxup",
        "m": 4,
        "batch_size": 32,
        "lr": 0.1,
        "epochs": 20,
        "warmup_epochs": 0,
        "weight_decay": 0.0,
        "loss": {"kind": "logistic", "bound": None},
        "spec": {"kind": "gaussian", "sigma": 0.3,
                 "patch_fraction": 0.25, "fill_value": 0.0},
    },
    "verify": {
        "checks": list(CHECKS),
        "samples": 10 ** 6,
    },
    "bench": {
        "methods": ["erm", "avg_aug", "maxup", "ohem"],
        "repeats": 3,
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_set(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set needs key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config key: {dotted}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key: {dotted}")
    node[parts[-1]] = value


def load_config(path: str | None, sets, seed=None, out=None) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        config = _merge(config, user)
    for assignment in sets or ():
        _apply_set(config, assignment)
    if seed is not None:
        config["seed"] = int(seed)
    if out is not None:
        config["out"] = out
    return config


def _dataset_spec(config: dict) -> DatasetSpec:
    d = config["dataset"]
    theta = d.get("theta_star")
    try:
        return DatasetSpec(
            kind=d["kind"], n_train=int(d["n_train"]), n_test=int(d["n_test"]),
            d=int(d["d"]), noise_sigma=float(d["noise_sigma"]),
            theta_star=tuple(theta) if theta is not None else None,
            seed=int(config["seed"]),
        )
    except (BadSpec, TypeError, ValueError) as exc:
        raise ConfigError(f"dataset: {exc}")


def _train_config(config: dict) -> TrainConfig:
    t = config["train"]
    try:
        spec = AugmentationSpec(
            kind=t["spec"]["kind"], sigma=float(t["spec"]["sigma"]),
            patch_fraction=float(t["spec"]["patch_fraction"]),
            fill_value=float(t["spec"]["fill_value"]))
        loss = Loss(t["loss"]["kind"],
                    None if t["loss"]["bound"] is None else float(t["loss"]["bound"]))
        return TrainConfig(
            method=t["method"], m=int(t["m"]), batch_size=int(t["batch_size"]),
            lr=float(t["lr"]), epochs=int(t["epochs"]),
            warmup_epochs=int(t["warmup_epochs"]), seed=int(config["seed"]),
            weight_decay=float(t["weight_decay"]), spec=spec, loss=loss)
    except (ConfigInvalid, BadSpec, ValueError) as exc:
        raise ConfigError(f"train: {exc}")


def _build_model(config: dict, seed: int):
    m = config["model"]
    if m["kind"] not in ("mlp", "linear"):
        raise ConfigError(f"model.kind: unknown value {m['kind']!r}")
    hidden = list(m.get("hidden") or []) if m["kind"] == "mlp" else []
    try:
        return init_mlp(int(config["dataset"]["d"]), hidden, 1,
                        m.get("activation", "tanh"), RngStream(seed, 12345))
    except ValueError as exc:
        raise ConfigError(f"model: {exc}")


def _write_resolved(config: dict, out_dir: str) -> None:
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as fh:
        json.dump(config, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _workers() -> int:
    cap = os.environ.get("MAXUP_LAB_THREADS")
    if cap:
        return max(1, int(cap))
    return min(4, os.cpu_count() or 1)


def cmd_train(config: dict) -> int:
    spec = _dataset_spec(config)
    cfg = _train_config(config)
    model = _build_model(config, cfg.seed)
    out_dir = config["out"]
    os.makedirs(out_dir, exist_ok=True)
    train_set, test_set = generate(spec)
    model, trace = train(model, train_set, cfg, test_set)
    trace.to_csv(os.path.join(out_dir, "trace.csv"))
    save_model(model, os.path.join(out_dir, "model.json"))
    _write_resolved(config, out_dir)
    last = trace.records[-1]
    print(f"trained {cfg.method} for {cfg.epochs} epochs: "
          f"train_loss={last.train_loss:.6g} test_acc={last.test_acc:.4g} "
          f"mean_input_grad_norm={last.mean_input_grad_norm:.6g}")
    print(f"artifacts in {out_dir}: trace.csv model.json resolved_config.json")
    return 0


def cmd_verify(config: dict, selection=None) -> int:
    checks = selection if selection else config["verify"]["checks"]
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ConfigError(
            f"verify.checks: unknown check {unknown[0]!r}; valid names: "
            + ", ".join(CHECKS))
    samples = int(config["verify"]["samples"])
    seed = int(config["seed"])
    out_dir = config["out"]
    os.makedirs(out_dir, exist_ok=True)

    def run(name):
        return run_check(name, samples, seed)

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(run, checks))
    reports = [r for batch in results for r in batch]
    write_reports_jsonl(reports, os.path.join(out_dir, "reports.jsonl"))
    write_residual_csv(reports, os.path.join(out_dir, "residuals.csv"))
    table = summary_table(reports)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(table + "\n")
    _write_resolved(config, out_dir)
    print(table)
    failed = [r for r in reports if r.status == "fail"]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return 3 if failed else 0


def _dataset_hash(train_set, test_set) -> str:
    h = hashlib.sha256()
    for part in (train_set.X, train_set.y, test_set.X, test_set.y):
        h.update(np.ascontiguousarray(part).tobytes())
    return h.hexdigest()[:16]


def cmd_bench(config: dict) -> int:
    methods = config["bench"]["methods"]
    for name in methods:
        if name not in ("erm", "avg_aug", "maxup", "ohem"):
            raise ConfigError(f"bench.methods: unknown method {name!r}")
    repeats = int(config["bench"]["repeats"])
    if repeats < 1:
        raise ConfigError("bench.repeats: must be >= 1")
    spec = _dataset_spec(config)
    base_cfg = _train_config(config)
    out_dir = config["out"]
    os.makedirs(out_dir, exist_ok=True)

    jobs = []
    for rep in range(repeats):
        seed = int(config["seed"]) + rep
        rep_spec = replace(spec, seed=seed)
        for method in methods:
            # warmup is shared-budget noise in a method comparison; keep it off
            cfg = replace(base_cfg, method=method, seed=seed, warmup_epochs=0)
            jobs.append((rep, method, rep_spec, cfg))

    def run(job):
        rep, method, rep_spec, cfg = job
        train_set, test_set = generate(rep_spec)
        model = _build_model(config, cfg.seed)
        started = time.perf_counter()
        _, trace = train(model, train_set, cfg, test_set)
        wall = time.perf_counter() - started
        last = trace.records[-1]
        return {
            "method": method, "repeat": rep,
            "test_loss": last.test_loss, "test_acc": last.test_acc,
            "mean_input_grad_norm": last.mean_input_grad_norm,
            "forward_count": last.forward_count,
            "backward_count": last.backward_count,
            "wall_time_s": wall,
            "dataset_hash": _dataset_hash(train_set, test_set),
        }

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        rows = list(pool.map(run, jobs))

    fields = ["method", "repeat", "test_loss", "test_acc",
              "mean_input_grad_norm", "forward_count", "backward_count",
              "wall_time_s", "dataset_hash"]
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(str(row[f]) for f in fields))
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        med = {f: float(np.median([r[f] for r in sub]))
               for f in fields if f not in ("method", "repeat", "dataset_hash")}
        lines.append(",".join([method, "median"]
                              + [str(med[f]) for f in fields[2:-1]] + [""]))
    with open(os.path.join(out_dir, "bench.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_resolved(config, out_dir)
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxup-lab",
        description="Worst-case-augmentation training and verification of its "
                    "regularization properties.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("train", "train one model and write its trace"),
                           ("verify", "run numerical verification checks"),
                           ("bench", "compare training methods on shared data")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dot path, e.g. train.m=8")
        p.add_argument("--seed", type=int, default=None, help="top-level seed")
        p.add_argument("--out", default=None, help="output directory")
        if name == "verify":
            p.add_argument("--checks", default=None,
                           help="comma-separated check names (default: all)")
            p.add_argument("--samples", type=int, default=None,
                           help="Monte-Carlo sample budget per check")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.set, args.seed, args.out)
        if args.command == "verify" and getattr(args, "samples", None) is not None:
            config["verify"]["samples"] = int(args.samples)
        selection = None
        if args.command == "verify" and getattr(args, "checks", None):
            selection = [c.strip() for c in args.checks.split(",") if c.strip()]
        if args.command == "train":
            return cmd_train(config)
        if args.command == "verify":
            return cmd_verify(config, selection)
        return cmd_bench(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: artifacts may be incomplete
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
