"""Command-line front end.

    fedcso run        one federated run -> trace CSV + metadata sidecar
    fedcso bias-check Monte-Carlo squared bias of the estimator vs inner batch size
    fedcso sweep      cross product of algorithms x m x noise ratio x seed

Exit codes: 0 ok, 1 I/O error, 2 usage error, 3 check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any


from .errors import ConfigError, InvalidArgumentError, UnsupportedTaskError
from .federation import FederationConfig, run, run_from_metadata
from .metrics import bias_study, read_trace, write_trace
from .objectives import DEFAULT_PARAMS, TASK_KINDS, TaskSpec, make_task
from .rng import SERVER, Purpose, rng_stream
from .schedules import schedule_for

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3

ALGOS = ("fcsg", "fcsg-m", "acc-fcsg-m")

# run options: config-file key -> default
RUN_DEFAULTS: dict[str, Any] = {
    "algo": "fcsg",
    "task": "quadratic",
    "dim": 10,
    "workers": 1,
    "steps": 100,
    "local_steps": None,  # 1 unless --auto-hyper
    "lr": 0.01,
    "momentum": None,  # 0.1 for fcsg-m / acc-fcsg-m unless given
    "outer_batch": 1,
    "inner_batch": 1,
    "init_batch": 1,
    "seed": 0,
    "out": None,
    "auto_hyper": False,
    "hetero": False,
    "record_every_step": False,
    "eval_outer": 10_000,
    "eval_inner": 10_000,
    "threads": 1,
}
DEFAULT_MOMENTUM = 0.1
TASK_PARAM_KEYS = sorted({k for params in DEFAULT_PARAMS.values() for k in params})


class UsageError(Exception):
    pass


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(tok) for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def _add_run_options(p: argparse.ArgumentParser, with_algo: bool = True) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file of lowercase snake_case keys; flags override it")
    if with_algo:
        p.add_argument("--algo", choices=ALGOS, default=S)
    p.add_argument("--task", choices=TASK_KINDS, default=S)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--workers", type=int, default=S, help="N")
    p.add_argument("--steps", type=int, default=S, help="T")
    p.add_argument("--local-steps", dest="local_steps", type=int, default=S, help="q")
    p.add_argument("--lr", type=float, default=S, help="alpha")
    p.add_argument("--momentum", type=float, default=S, help="beta")
    p.add_argument("--outer-batch", dest="outer_batch", type=int, default=S, help="b")
    p.add_argument("--inner-batch", dest="inner_batch", type=int, default=S, help="m")
    p.add_argument("--init-batch", dest="init_batch", type=int, default=S, help="B")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--auto-hyper", dest="auto_hyper", action="store_true", default=S)
    p.add_argument("--hetero", action="store_true", default=S)
    p.add_argument("--record-every-step", dest="record_every_step", action="store_true", default=S)
    p.add_argument("--eval-outer", dest="eval_outer", type=int, default=S)
    p.add_argument("--eval-inner", dest="eval_inner", type=int, default=S)
    p.add_argument("--threads", type=int, default=S)
    p.add_argument(
        "--task-param", dest="task_param", action="append", default=S, metavar="KEY=VALUE", help="task parameter override"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcso", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one federated optimisation")
    _add_run_options(p)
    p.add_argument("--out", default=argparse.SUPPRESS, help="trace CSV path")
    p.add_argument("--replay", help="re-run the configuration stored in a .meta.json sidecar")

    p = sub.add_parser("bias-check", help="estimator bias versus inner batch size")
    p.add_argument("--config")
    p.add_argument("--task", choices=TASK_KINDS, default="quadratic")
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--m-list", dest="m_list", type=_csv_list(int), default=[5, 10, 20, 40])
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--task-param", dest="task_param", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE")

    p = sub.add_parser("sweep", help="grid of runs with a summary CSV")
    _add_run_options(p, with_algo=False)
    p.add_argument("--algo-list", dest="algo_list", type=_csv_list(str), default=["fcsg", "fcsg-m"])
    p.add_argument("--m-list", dest="m_list", type=_csv_list(int), default=[1, 10, 100])
    p.add_argument("--noise-ratio-list", dest="noise_ratio_list", type=_csv_list(str), default=["1"])
    p.add_argument("--seed-list", dest="seed_list", type=_csv_list(int), default=[0])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a flat key-value object")
    allowed = set(RUN_DEFAULTS) | set(TASK_PARAM_KEYS)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise UsageError(f"{path}: unknown keys {unknown}")
    return doc


def merged_options(ns: argparse.Namespace, **defaults) -> dict:
    """Defaults < config file < command-line flags."""
    opts = dict(RUN_DEFAULTS, **defaults)
    task_params: dict[str, Any] = {}
    if getattr(ns, "config", None):
        for k, v in _load_config_file(ns.config).items():
            (opts if k in RUN_DEFAULTS else task_params)[k] = v
    for k, v in vars(ns).items():
        if k in RUN_DEFAULTS:
            opts[k] = v
    for item in getattr(ns, "task_param", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--task-param expects KEY=VALUE, got {item!r}")
        task_params[key.strip()] = _parse_value(value.strip())
    opts["task_params"] = task_params
    return opts


def config_from_options(opts: dict) -> FederationConfig:
    algo = opts["algo"]
    if algo not in ALGOS:
        raise UsageError(f"unknown algorithm {algo!r}")
    kind = opts["task"]
    params = {k: v for k, v in opts["task_params"].items()}
    try:
        spec = TaskSpec(kind, int(opts["dim"]), params)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    momentum = opts["momentum"]
    if algo == "fcsg" and momentum is not None:
        raise UsageError("--momentum is not accepted with --algo fcsg")
    if algo != "fcsg" and momentum is None:
        momentum = DEFAULT_MOMENTUM
    q = opts["local_steps"]
    lr, B = opts["lr"], opts["init_batch"]
    schedule = None
    if opts["auto_hyper"]:
        S_F = make_task(spec, int(opts["workers"]), bool(opts["hetero"]), int(opts["seed"])).constants.S_F
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sched = schedule_for(algo, int(opts["workers"]), int(opts["steps"]), int(opts["outer_batch"]), S_F)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        lr, q = sched.alpha, sched.q
        if sched.beta is not None:
            momentum = sched.beta
        if sched.B is not None:
            B = sched.B
        schedule = sched.to_dict() | {"S_F": S_F}
    return FederationConfig(
        task=spec,
        algorithm=algo,
        n_workers=int(opts["workers"]),
        steps=int(opts["steps"]),
        local_steps=1 if q is None else int(q),
        lr=float(lr),
        momentum=None if momentum is None else float(momentum),
        outer_batch=int(opts["outer_batch"]),
        inner_batch=int(opts["inner_batch"]),
        init_batch=int(B),
        seed=int(opts["seed"]),
        heterogeneous=bool(opts["hetero"]),
        record_every_step=bool(opts["record_every_step"]),
        eval_outer=int(opts["eval_outer"]),
        eval_inner=int(opts["eval_inner"]),
        schedule=schedule,
    ).validate()


def cmd_run(ns) -> int:
    if ns.replay:
        meta = json.loads(Path(ns.replay).read_text())
        out = getattr(ns, "out", None)
        if out is None:
            raise UsageError("--out is required")
        trace = run_from_metadata(meta)
        write_trace(trace, out)
        return EXIT_OK
    opts = merged_options(ns)
    if not opts["out"]:
        raise UsageError("--out is required")
    cfg = config_from_options(opts)
    if cfg.schedule is not None:
        print(json.dumps({"auto_hyper": cfg.schedule}, sort_keys=True))
    trace = run(cfg, threads=int(opts["threads"]))
    write_trace(trace, opts["out"])
    return EXIT_OK


def cmd_bias_check(ns) -> int:
    opts = {"task": ns.task, "dim": getattr(ns, "dim", None), "task_params": {}}
    if ns.config:
        for k, v in _load_config_file(ns.config).items():
            if k in ("task", "dim"):
                opts[k] = v
            elif k in TASK_PARAM_KEYS:
                opts["task_params"][k] = v
    if getattr(ns, "dim", None) is not None:
        opts["dim"] = ns.dim
    for item in getattr(ns, "task_param", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--task-param expects KEY=VALUE, got {item!r}")
        opts["task_params"][key.strip()] = _parse_value(value.strip())
    if not ns.m_list:
        raise UsageError("--m-list is empty")
    if ns.trials < 1:
        raise UsageError("--trials must be >= 1")
    try:
        spec = TaskSpec(opts["task"], int(opts["dim"] or 5), opts["task_params"])
        task = make_task(spec, 1, False, ns.seed)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    if not task.has_oracle:
        raise UsageError(f"bias-check needs a task with an exact gradient oracle, not {spec.kind}")
    x = task.initial_point(rng_stream(ns.seed, SERVER, 0, Purpose.INIT))
    try:
        result = bias_study(task, x, ns.m_list, ns.trials, ns.seed)
    except UnsupportedTaskError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(ns.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "bias_sq"])
        for m, b in result:
            w.writerow([m, format(b, ".17g")])
    ok = all(b2 <= 0.75 * b1 for (_, b1), (_, b2) in zip(result, result[1:]))
    meta = {
        "command": "bias-check",
        "task": spec.to_dict(),
        "m_list": list(ns.m_list),
        "trials": ns.trials,
        "seed": ns.seed,
        "x": [float(v) for v in x],
        "passed": ok,
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for m, b in result:
        print(f"m={m:<6d} bias_sq={b:.6e}")
    print("PASS" if ok else "FAIL: bias_sq does not shrink by 0.75 between consecutive m")
    return EXIT_OK if ok else EXIT_CHECK


NOISE_PARAM = {"invlogreg": ("sigma2", "sigma1"), "quadratic": ("sigma2", "sigma1"), "maml-toy": ("support_noise", "query_noise")}
SUMMARY_HEADER = ("algo", "m", "noise_ratio", "seed", "final_test_metric", "final_grad_norm_sq")


def _cell_name(algo, m, ratio, seed) -> str:
    return f"{algo}_m{m}_r{ratio}_s{seed}.csv"


def _run_cell(args) -> str:
    cfg_dict, path = args
    trace = run(FederationConfig.from_dict(cfg_dict))
    write_trace(trace, path)
    return path


def cmd_sweep(ns) -> int:
    base = merged_options(ns, task="invlogreg")
    for name in ("algo_list", "m_list", "noise_ratio_list", "seed_list"):
        if not getattr(ns, name):
            raise UsageError(f"--{name.replace('_', '-')} is empty: nothing to sweep")
    bad = sorted(set(ns.algo_list) - set(ALGOS))
    if bad:
        raise UsageError(f"unknown algorithms {bad}")
    kind = base["task"]
    if kind not in NOISE_PARAM:
        raise UsageError(f"sweep varies the noise ratio, which {kind} does not have")
    noisy, reference = NOISE_PARAM[kind]
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)

    cells, todo = [], []
    for algo in ns.algo_list:
        for m in ns.m_list:
            for ratio in ns.noise_ratio_list:
                for seed in ns.seed_list:
                    opts = dict(base, algo=algo, inner_batch=m, seed=seed, task_params=dict(base["task_params"]))
                    ref = opts["task_params"].get(reference, DEFAULT_PARAMS[kind][reference])
                    opts["task_params"][noisy] = float(ratio) * float(ref)
                    if algo == "fcsg":
                        opts["momentum"] = None
                    path = out / _cell_name(algo, m, ratio, seed)
                    cells.append((algo, m, ratio, seed, path))
                    done = path.exists() and Path(str(path) + ".meta.json").exists()
                    if not done:
                        todo.append((config_from_options(opts).to_dict(), str(path)))
    if ns.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(ns.jobs) as ex:
            list(ex.map(_run_cell, todo))
    else:
        for item in todo:
            _run_cell(item)

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for algo, m, ratio, seed, path in cells:
            last = read_trace(path).rows[-1]
            w.writerow([algo, m, ratio, seed, format(last.test_metric, ".17g"), format(last.grad_norm_sq, ".17g")])
    meta = {"command": "sweep", "cells": [str(c[4].name) for c in cells], "base": {k: v for k, v in base.items()}}
    (out / "summary.csv.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    print(f"{len(cells)} cells ({len(cells) - len(todo)} reused) -> {out / 'summary.csv'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "bias-check": cmd_bias_check, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return COMMANDS[ns.command](ns)
    except (UsageError, ConfigError, InvalidArgumentError) as exc:
        print(f"fedcso {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"fedcso {ns.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
