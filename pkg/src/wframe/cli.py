"""Command-line experiment runner.

Subcommands: ``train`` (one learning run), ``compare`` (frame and wframe
under shared seeds and data), ``sample`` (continue a checkpoint's
persistent chains without learning), ``eval`` (response distance and mean
energy of a checkpoint against a dataset), and ``oracle-check`` (the
verification suite). All artifacts land under ``--out`` with fixed names;
exit code 2 marks configuration faults, while sampler divergence during a
run is an expected outcome reported via ``summary.json`` with exit 0.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from .checks import main_report
from .config import (
    ConfigError,
    make_bank,
    make_dataset,
    make_learner_config,
    make_sampler_config,
    resolve_config,
    resolve_from_doc,
)
from .dataio import (
    export_metrics_csv,
    export_sample_grid,
    load_checkpoint,
    save_checkpoint,
)
from .learner import MODES, TrainingDiverged, train
from .metrics import CSV_HEADER, mean_energy, response_distance
from .sampler import DivergenceError, langevin_step

__all__ = ["main", "build_parser"]


def _add_run_flags(p: argparse.ArgumentParser, with_mode: bool = True):
    p.add_argument("--config", default=None,
                   help="JSON config file or preset name "
                        "(stable-default, stress, paper-literal, clip-baseline)")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("--out", default=None, help="output directory")
    if with_mode:
        p.add_argument("--mode", choices=MODES, default=None,
                       help="override the update rule")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wframe",
        description="Train and probe descriptive filter-bank energy models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one learning experiment")
    _add_run_flags(p)

    p = sub.add_parser("compare",
                       help="run frame and wframe with shared seed and data")
    _add_run_flags(p, with_mode=False)

    p = sub.add_parser("sample",
                       help="advance a checkpoint's persistent chains, no learning")
    p.add_argument("--checkpoint", required=True, help="checkpoint.json path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=None,
                   help="number of chains to render (default: all)")
    p.add_argument("--steps", type=int, default=None,
                   help="Langevin steps to run (default: one inner loop)")

    p = sub.add_parser("eval",
                       help="response distance and mean energy of a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint.json path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="KEY=VALUE",
                   help="override dataset keys of the checkpoint's config")

    p = sub.add_parser("oracle-check", help="run the verification suite")
    p.add_argument("--full", action="store_true",
                   help="acceptance-scale draw counts instead of the fast ones")
    p.add_argument("--out", default=None,
                   help="also write the report to <out>/oracle_report.txt")

    return parser


def _write_json(path: str, doc: dict):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _run_summary(state, cfg: dict, wall: float) -> dict:
    last = state.trace[-1] if len(state.trace) else None
    return {
        "mode": cfg["mode"],
        "iterations_completed": state.iteration,
        "diverged": state.diverged,
        "divergence": state.divergence_info,
        "final_response_distance":
            None if last is None else _json_safe(last.response_distance),
        "final_energy_mean":
            None if last is None else _json_safe(last.energy_mean),
        "final_theta_norm":
            None if last is None else _json_safe(last.theta_norm),
        "wall_time_s": wall,
        "config": cfg,
    }


def _train_once(cfg: dict, out: str) -> dict:
    """One training run with its full artifact set; returns the summary."""
    os.makedirs(out, exist_ok=True)
    dataset = make_dataset(cfg)
    bank = make_bank(cfg)
    sampler_config = make_sampler_config(cfg)
    learner_config = make_learner_config(cfg)
    target = learner_config.n_iters

    def on_iteration(state):
        it = state.iteration
        if cfg["sample_every"] and it % cfg["sample_every"] == 0 and it != target:
            export_sample_grid(state.chains.values,
                               os.path.join(out, f"samples_{it:06d}.pgm"))
        if cfg["checkpoint_every"] and it % cfg["checkpoint_every"] == 0:
            save_checkpoint(state, os.path.join(out, "checkpoint.json"),
                            config_echo=cfg)

    start = time.perf_counter()
    try:
        state = train(dataset, bank, sampler_config, learner_config,
                      seed=cfg["seed"], on_iteration=on_iteration)
    except TrainingDiverged as exc:
        state = exc.state
    wall = time.perf_counter() - start

    export_metrics_csv(state.trace, os.path.join(out, "metrics.csv"))
    export_sample_grid(state.chains.values, os.path.join(out, "samples_final.pgm"))
    save_checkpoint(state, os.path.join(out, "checkpoint.json"), config_echo=cfg)
    summary = _run_summary(state, cfg, wall)
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.sets, args.seed, args.out, args.mode)
    summary = _train_once(cfg, cfg["out_dir"])
    r = summary["final_response_distance"]
    print(f"train: mode={summary['mode']} "
          f"iterations={summary['iterations_completed']} "
          f"diverged={str(summary['diverged']).lower()} "
          f"final_R={'n/a' if r is None else f'{r:.6g}'} "
          f"out={cfg['out_dir']}")
    return 0


def _joined_csv(traces: dict) -> str:
    """Join per-mode traces on the iteration column."""
    fields = CSV_HEADER.split(",")[2:]
    header = "iter," + ",".join(f"{mode}_{f}" for mode in MODES for f in fields)
    by_iter: dict[str, dict[int, list[str]]] = {
        mode: {row.iteration: row.to_csv_line().split(",")[2:] for row in trace}
        for mode, trace in traces.items()
    }
    iters = sorted(set().union(*(d.keys() for d in by_iter.values())))
    lines = [header]
    for it in iters:
        cells = [str(it)]
        for mode in MODES:
            cells.extend(by_iter[mode].get(it, [""] * len(fields)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    cfg = resolve_config(args.config, args.sets, args.seed, args.out, None)
    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    summaries: dict[str, dict] = {}
    traces: dict = {}
    finals: dict = {}
    for mode in MODES:
        run_cfg = dict(cfg)
        run_cfg["mode"] = mode
        run_cfg["out_dir"] = os.path.join(out, mode)
        summaries[mode] = _train_once(run_cfg, run_cfg["out_dir"])
        final = load_checkpoint(os.path.join(run_cfg["out_dir"], "checkpoint.json"))
        traces[mode] = final.trace
        finals[mode] = final.chains.values

    with open(os.path.join(out, "compare.csv"), "w") as fh:
        fh.write(_joined_csv(traces))
    both = np.concatenate([finals[mode] for mode in MODES], axis=0)
    export_sample_grid(both, os.path.join(out, "compare_samples.pgm"),
                       cols=finals[MODES[0]].shape[0])
    _write_json(os.path.join(out, "summary.json"),
                {mode: summaries[mode] for mode in MODES})
    for mode in MODES:
        s = summaries[mode]
        r = s["final_response_distance"]
        print(f"compare[{mode}]: iterations={s['iterations_completed']} "
              f"diverged={str(s['diverged']).lower()} "
              f"final_R={'n/a' if r is None else f'{r:.6g}'}")
    print(f"compare: joined CSV and side-by-side grid under {out}")
    return 0


def _load_checkpoint_cli(path: str):
    try:
        return load_checkpoint(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from None


def cmd_sample(args) -> int:
    state = _load_checkpoint_cli(args.checkpoint)
    out = args.out
    os.makedirs(out, exist_ok=True)
    chains = state.chains
    steps = args.steps if args.steps is not None else state.sampler_config.steps_per_iter
    if steps < 0:
        raise ConfigError("--steps must be >= 0")
    count = args.count if args.count is not None else chains.n_chains
    if not 1 <= count <= chains.n_chains:
        raise ConfigError(f"--count must lie in [1, {chains.n_chains}]")
    diverged = False
    note = None
    for j in range(steps):
        try:
            langevin_step(chains, state.bank, state.sampler_config, step=j)
        except DivergenceError as exc:
            diverged = True
            note = str(exc)
            break
    export_sample_grid(chains.values[:count], os.path.join(out, "samples.pgm"))
    _write_json(os.path.join(out, "summary.json"), {
        "kind": "sample",
        "checkpoint": args.checkpoint,
        "steps_requested": steps,
        "count": count,
        "diverged": diverged,
        "divergence": note,
    })
    print(f"sample: {count} chains, {steps} steps, "
          f"diverged={str(diverged).lower()}, out={out}")
    return 0


def cmd_eval(args) -> int:
    state = _load_checkpoint_cli(args.checkpoint)
    with open(args.checkpoint) as fh:
        echo = json.load(fh).get("config_echo")
    if echo is None and not args.sets:
        raise ConfigError(
            "checkpoint has no embedded config; pass --set data_* overrides")
    cfg = resolve_from_doc(echo or {}, args.sets)
    dataset = make_dataset(cfg)
    out = args.out
    os.makedirs(out, exist_ok=True)
    r = response_distance(state.bank, dataset.items, state.chains.values)
    e = mean_energy(state.bank, state.chains.values)
    _write_json(os.path.join(out, "summary.json"), {
        "kind": "eval",
        "checkpoint": args.checkpoint,
        "response_distance": _json_safe(r),
        "energy_mean": _json_safe(e),
        "n_observed": dataset.count,
        "n_chains": state.chains.n_chains,
        "config": cfg,
    })
    print(f"eval: R={r:.6g} energy_mean={e:.6g} out={out}")
    return 0


def cmd_oracle_check(args) -> int:
    text, ok = main_report(fast=not args.full)
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "oracle_report.txt"), "w") as fh:
            fh.write(text)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "compare": cmd_compare,
        "sample": cmd_sample,
        "eval": cmd_eval,
        "oracle-check": cmd_oracle_check,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
