"""Experiment harness: run controllers, sweep thresholds, report power.

Subcommands
    run        one controller on one scenario instance -> one CSV record
    sweep      grid of (mode, SE threshold, seed) cells -> CSV + figure
    breakdown  per-subsystem power of both functional splits -> CSV + figure
    bench      controller runtime comparison -> CSV
    train      PPO training -> checkpoint + learning-curve CSV + figure

Every table is written as CSV; report subcommands also render a PNG next
to the CSV.  EARL_THREADS caps the worker count for sweep cells.  Errors
exit nonzero after printing one machine-readable JSON line to stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .channel import generate_channel_set
from .controller import earl_infer, simulate_full
from .downlink import evaluate
from .heuristic import WEIGHT_MODES, heuristic_allocate
from .powermodel import total_power
from .ppo import TrainConfig, load_checkpoint, save_checkpoint, train
from .rlenv import AntennaEnv
from .scenario import ConfigurationError, Scenario, Split, build_deployment, load_scenario
from . import plotting

MODES = ("full-on", "heuristic", "rl", "rl-greedy")

RUN_FIELDS = (
    "mode",
    "split",
    "k",
    "se_thr",
    "seed",
    "p_total_w",
    "p_ru_radio_w",
    "p_ru_proc_w",
    "p_fh_w",
    "p_cloud_w",
    "p_fh_cloud_w",
    "avg_se",
    "r_vio",
    "runtime_s",
    "n",
    "scenario_hash",
    "checkpoint_hash",
)


@dataclass
class RunRecord:
    """One controller run; reproducible from (scenario, mode, seed, checkpoint)."""

    mode: str
    split: str
    k: int
    se_thr: float
    seed: int
    p_total_w: float
    p_ru_radio_w: float
    p_ru_proc_w: float
    p_fh_w: float
    p_cloud_w: float
    p_fh_cloud_w: float
    avg_se: float
    r_vio: float
    runtime_s: float
    n: str
    scenario_hash: str
    checkpoint_hash: str


def earl_threads() -> int:
    """Worker cap for concurrent sweep cells, from EARL_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("EARL_THREADS", "1")))
    except ValueError:
        return 1


def scenario_hash(scenario: Scenario) -> str:
    payload = json.dumps(asdict(scenario), sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def file_hash(path: str | Path | None) -> str:
    if path is None:
        return ""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]


def format_activation(n: np.ndarray) -> str:
    return "|".join(str(int(v)) for v in n)


def _load_policy(path: str | None, scenario: Scenario):
    if path is None:
        raise ConfigurationError("rl modes need --checkpoint")
    policy = load_checkpoint(path)
    expected = scenario.n_ru * scenario.n_ue + scenario.n_ru + 2
    if policy.n_ru != scenario.n_ru or policy.obs_dim != expected:
        raise ConfigurationError(
            f"checkpoint built for obs_dim={policy.obs_dim}, n_ru={policy.n_ru}; "
            f"scenario needs obs_dim={expected}, n_ru={scenario.n_ru}"
        )
    return policy


def single_run(
    scenario: Scenario,
    mode: str,
    se_thr: float,
    seed: int,
    n_realizations: int,
    policy=None,
    scn_hash: str = "",
    ckpt_hash: str = "",
) -> RunRecord:
    """Execute one controller and evaluate its final activation.

    Scenario and channel construction are excluded from the reported
    controller runtime; the controller's own simulate calls are included.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; pick from {MODES}")
    ss = np.random.SeedSequence(seed)
    dep_seed, ch_seed = [int(s.generate_state(1)[0]) for s in ss.spawn(2)]
    deployment = build_deployment(scenario, seed=dep_seed)
    chset = generate_channel_set(scenario, deployment, n_realizations, ch_seed)
    cache: dict = {}
    if mode == "full-on":
        t0 = time.perf_counter()
        n = np.full(scenario.n_ru, scenario.n_ant)
        runtime = time.perf_counter() - t0
    elif mode == "heuristic":
        beta_db = 10.0 * np.log10(chset.beta).T  # (L, K)
        t0 = time.perf_counter()
        n = heuristic_allocate(beta_db, scenario.n_ant)
        runtime = time.perf_counter() - t0
    else:
        candidate, runtime = earl_infer(
            policy, chset.beta, chset, scenario, se_thr,
            refine=(mode == "rl-greedy"), cache=cache,
        )
        n = candidate.n
    result = simulate_full(n, chset, scenario, se_thr, cache)
    return RunRecord(
        mode=mode,
        split=scenario.split.value,
        k=scenario.n_ue,
        se_thr=se_thr,
        seed=seed,
        p_total_w=result.power.p_total_w,
        p_ru_radio_w=result.power.p_ru_radio_w,
        p_ru_proc_w=result.power.p_ru_proc_w,
        p_fh_w=result.power.p_fh_ru_w,
        p_cloud_w=result.power.p_cloud_w,
        p_fh_cloud_w=result.power.p_fh_cloud_w,
        avg_se=float(result.se.mean()),
        r_vio=result.r_vio,
        runtime_s=runtime,
        n=format_activation(n),
        scenario_hash=scn_hash,
        checkpoint_hash=ckpt_hash,
    )


def write_records(records: list[RunRecord], path: str | Path | None):
    rows = [asdict(r) for r in records]
    if path is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(RUN_FIELDS))
        writer.writeheader()
        writer.writerows(rows)
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(RUN_FIELDS))
            writer.writeheader()
            writer.writerows(rows)


def _scenario_from_args(args) -> Scenario:
    scn = load_scenario(args.scenario) if args.scenario else Scenario()
    overrides = {}
    if getattr(args, "k", None) is not None:
        overrides["n_ue"] = args.k
    if getattr(args, "split", None) is not None:
        overrides["split"] = Split(args.split)
    if overrides:
        scn = replace(scn, **overrides)
    return scn


def cmd_run(args) -> int:
    scn = _scenario_from_args(args)
    policy = _load_policy(args.checkpoint, scn) if args.mode in ("rl", "rl-greedy") else None
    record = single_run(
        scn,
        args.mode,
        args.se_thr,
        args.seed,
        args.realizations,
        policy=policy,
        scn_hash=scenario_hash(scn),
        ckpt_hash=file_hash(args.checkpoint) if policy is not None else "",
    )
    write_records([record], args.out)
    if args.out:
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    scn = _scenario_from_args(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise ConfigurationError(f"unknown mode {m!r}; pick from {MODES}")
    thresholds = [float(v) for v in args.se_thrs.split(",")]
    needs_policy = any(m in ("rl", "rl-greedy") for m in modes)
    policy = _load_policy(args.checkpoint, scn) if needs_policy else None
    scn_h = scenario_hash(scn)
    ckpt_h = file_hash(args.checkpoint) if needs_policy else ""

    # same seed list for every (mode, threshold): paired deployments
    cells = [
        (mode, thr, args.seed + rep)
        for mode in modes
        for thr in thresholds
        for rep in range(args.reps)
    ]

    def job(cell):
        mode, thr, seed = cell
        return single_run(
            scn, mode, thr, seed, args.realizations,
            policy=policy if mode in ("rl", "rl-greedy") else None,
            scn_hash=scn_h,
            ckpt_hash=ckpt_h if mode in ("rl", "rl-greedy") else "",
        )

    with ThreadPoolExecutor(max_workers=earl_threads()) as pool:
        records = list(pool.map(job, cells))
    out = Path(args.out)
    write_records(records, out)

    summary_rows = []
    for mode in modes:
        for thr in thresholds:
            group = [r for r in records if r.mode == mode and r.se_thr == thr]
            summary_rows.append(
                {
                    "mode": mode,
                    "se_thr": thr,
                    "mean_p_total_w": float(np.mean([r.p_total_w for r in group])),
                    "mean_r_vio": float(np.mean([r.r_vio for r in group])),
                    "mean_avg_se": float(np.mean([r.avg_se for r in group])),
                    "mean_runtime_s": float(np.mean([r.runtime_s for r in group])),
                    "reps": len(group),
                }
            )
    summary_path = out.with_name(out.stem + "_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary_rows[0]))
        writer.writeheader()
        writer.writerows(summary_rows)
    fig_path = out.with_suffix(".png")
    plotting.render_sweep_figure(summary_rows, fig_path)
    print(f"wrote {out}, {summary_path}, {fig_path}")
    return 0


def cmd_breakdown(args) -> int:
    scn = _scenario_from_args(args)
    policy = _load_policy(args.checkpoint, scn) if args.mode in ("rl", "rl-greedy") else None
    ss = np.random.SeedSequence(args.seed)
    dep_seed, ch_seed = [int(s.generate_state(1)[0]) for s in ss.spawn(2)]
    deployment = build_deployment(scn, seed=dep_seed)
    chset = generate_channel_set(scn, deployment, args.realizations, ch_seed)
    if args.mode == "full-on":
        n = np.full(scn.n_ru, scn.n_ant)
    elif args.mode == "heuristic":
        n = heuristic_allocate(10.0 * np.log10(chset.beta).T, scn.n_ant)
    else:
        candidate, _ = earl_infer(
            policy, chset.beta, chset, scn, args.se_thr, refine=(args.mode == "rl-greedy")
        )
        n = candidate.n
    result = evaluate(chset, n, scn, args.se_thr)
    rho_ru = None
    if n.sum() > 0:
        from .downlink import precode

        rho_ru = precode(chset, n, scn).rho_ru
    rows = []
    for split in (Split.SPLIT8, Split.SPLIT71):
        pb = total_power(replace(scn, split=split), n, rho_ru, args.se_thr)
        rows.append(
            {
                "split": split.value,
                "mode": args.mode,
                "k": scn.n_ue,
                "se_thr": args.se_thr,
                "seed": args.seed,
                "n": format_activation(n),
                "avg_se": float(result.se.mean()),
                "r_vio": result.r_vio,
                "p_ru_radio_w": pb.p_ru_radio_w,
                "p_ru_proc_w": pb.p_ru_proc_w,
                "p_fh_w": pb.p_fh_ru_w,
                "p_cloud_w": pb.p_cloud_w,
                "p_fh_cloud_w": pb.p_fh_cloud_w,
                "p_total_w": pb.p_total_w,
            }
        )
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    fig_path = out.with_suffix(".png")
    plotting.render_breakdown_figure(rows, fig_path)
    print(f"wrote {out}, {fig_path}")
    return 0


def cmd_bench(args) -> int:
    scn = _scenario_from_args(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    needs_policy = any(m in ("rl", "rl-greedy") for m in modes)
    policy = _load_policy(args.checkpoint, scn) if needs_policy else None
    scn_h = scenario_hash(scn)
    rows = []
    for mode in modes:
        times = []
        for rep in range(args.reps):
            rec = single_run(
                scn, mode, args.se_thr, args.seed + rep, args.realizations,
                policy=policy if mode in ("rl", "rl-greedy") else None,
                scn_hash=scn_h,
            )
            times.append(rec.runtime_s)
        rows.append(
            {
                "mode": mode,
                "reps": args.reps,
                "mean_runtime_s": float(np.mean(times)),
                "std_runtime_s": float(np.std(times)),
            }
        )
        print(f"{mode:10s} {rows[-1]['mean_runtime_s']:.4f} s "
              f"+/- {rows[-1]['std_runtime_s']:.4f} (n={args.reps})")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    scn = _scenario_from_args(args)
    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        minibatch_size=args.minibatch_size,
    )
    env = AntennaEnv(scn, args.se_thr, n_realizations=args.realizations)
    params, curve = train(
        env, cfg, total_steps=args.steps, seed=args.seed, verbose=args.verbose
    )
    save_checkpoint(params, args.out)
    curve_path = Path(args.out).with_suffix(".curve.csv")
    from .ppo import write_training_curve

    write_training_curve(curve, curve_path)
    fig_path = Path(args.out).with_suffix(".curve.png")
    plotting.render_training_curve(curve, fig_path)
    print(f"wrote {args.out}, {curve_path}, {fig_path}")
    return 0


def _add_common(p: argparse.ArgumentParser, with_mode=True):
    p.add_argument("--scenario", help="scenario JSON file (defaults otherwise)")
    if with_mode:
        p.add_argument("--mode", default="full-on", choices=MODES, help="controller")
    p.add_argument("--se-thr", type=float, default=1.5, help="SE threshold [bit/s/Hz]")
    p.add_argument("--k", type=int, help="override number of UEs")
    p.add_argument("--split", choices=[s.value for s in Split], help="functional split")
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")
    p.add_argument("--checkpoint", help="policy checkpoint for rl modes")
    p.add_argument("--realizations", type=int, default=100,
                   help="channel realizations per evaluation batch")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earl",
        description="energy-aware antenna activation for cell-free massive MIMO",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single controller run")
    _add_common(p_run)
    p_run.add_argument("--out", help="CSV path (stdout when omitted)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of modes x thresholds x seeds")
    _add_common(p_sweep, with_mode=False)
    p_sweep.add_argument("--modes", default="full-on,heuristic",
                         help="comma-separated controller modes")
    p_sweep.add_argument("--se-thrs", default="0.5,1.0,1.5,2.0",
                         help="comma-separated SE thresholds")
    p_sweep.add_argument("--reps", type=int, default=3, help="seeds per cell")
    p_sweep.add_argument("--out", required=True, help="detail CSV path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_break = sub.add_parser("breakdown", help="per-subsystem power for both splits")
    _add_common(p_break)
    p_break.add_argument("--out", required=True, help="CSV path")
    p_break.set_defaults(func=cmd_breakdown)

    p_bench = sub.add_parser("bench", help="controller runtime comparison")
    _add_common(p_bench, with_mode=False)
    p_bench.add_argument("--modes", default="heuristic,rl,rl-greedy")
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--out", help="CSV path")
    p_bench.set_defaults(func=cmd_bench)

    p_train = sub.add_parser("train", help="train a PPO activation policy")
    _add_common(p_train, with_mode=False)
    p_train.add_argument("--steps", type=int, default=50_000,
                         help="environment steps to train for")
    p_train.add_argument("--lr", type=float, default=1e-4)
    p_train.add_argument("--batch-size", type=int, default=256)
    p_train.add_argument("--minibatch-size", type=int, default=64)
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.add_argument("--verbose", action="store_true")
    p_train.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
