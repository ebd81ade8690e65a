"""Command line: ``nmarl {train, evaluate, sweep-alpha, gradcheck, proptest}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import diffcomp as dc
from .agents import PROTOCOLS
from .config import RunConfig, resolve
from .envs import ENVIRONMENTS
from .errors import ConfigError

OVERRIDES = {"alpha": "alpha", "gamma": "gamma", "beta": "beta", "batch": "batch_size",
             "steps": "total_steps", "seed": "seed", "protocol": "protocol",
             "multipass_k": "passes", "episodes": "eval_episodes"}


def _parser():
    p = argparse.ArgumentParser(prog="nmarl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file with run settings")
        sp.add_argument("--env", help=f"one of {', '.join(ENVIRONMENTS)}")
        sp.add_argument("--protocol", help=f"one of {', '.join(PROTOCOLS)}")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--batch", type=int)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--multipass-k", type=int, dest="multipass_k")
        sp.add_argument("--out", default="runs", help="parent directory of run directories")
        sp.add_argument("-v", "--verbose", action="store_true")

    tr = sub.add_parser("train", help="train a policy")
    common(tr)
    tr.add_argument("--progress-every", type=int, default=50, help="log every K batches")

    ev = sub.add_parser("evaluate", help="run a checkpoint and report metrics")
    common(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int)
    ev.add_argument("--greedy", action="store_true")
    ev.add_argument("--faults", default="none",
                    help="none | drop[:p] | delay[:p] (per link and step)")
    ev.add_argument("--trajectories", action="store_true",
                    help="also write per-episode trajectory CSVs")

    sw = sub.add_parser("sweep-alpha", help="train one model per spatial discount factor")
    common(sw)
    sw.add_argument("--alphas", default="0,0.25,0.5,0.75,1",
                    help="comma-separated alpha values")
    sw.add_argument("--window", type=int, default=100)
    sw.add_argument("--progress-every", type=int, default=0)

    gc = sub.add_parser("gradcheck", help="finite-difference check of one protocol")
    gc.add_argument("--protocol", default="neurcomm")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--multipass-k", type=int, default=1, dest="multipass_k")
    gc.add_argument("--tolerance", type=float, default=1e-4)

    pt = sub.add_parser("proptest", help="randomized invariant checks")
    pt.add_argument("--seed", type=int, default=0)
    return p


def load_config(args, fallback=None) -> RunConfig:
    """Config file (if any), then command-line flags; ``fallback`` fills unset flags."""
    over = dict(fallback or {})
    over.update({dest: getattr(args, flag) for flag, dest in OVERRIDES.items()
                 if getattr(args, flag, None) is not None})
    if getattr(args, "env", None):
        over["env"] = args.env
    if getattr(args, "greedy", False):
        over["greedy"] = True
    faults = getattr(args, "faults", None)
    if faults and faults != "none":
        mode, _, prob = faults.partition(":")
        over["fault_mode"] = mode
        over["fault_prob"] = float(prob) if prob else 1.0
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ConfigError(f"config file {args.config!r} does not exist")
        return RunConfig.from_ini(args.config, **over)
    return resolve(over.pop("env", "cacc_catchup"), over)


def run_dir_for(cfg: RunConfig, parent, label):
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = os.path.join(parent, f"{stamp}-{label}-seed{cfg.seed}")
    os.makedirs(path, exist_ok=True)
    return path


def cmd_train(args):
    from .trainer import train
    cfg = load_config(args)
    run_dir = run_dir_for(cfg, args.out, "train")
    res = train(cfg, run_dir, args.progress_every)
    print(f"trained {res.steps} steps, {len(res.episode_returns)} episodes "
          f"in {res.wall_seconds:.0f}s")
    print(f"run directory: {run_dir}")
    print(f"final checkpoint: {res.checkpoint}")
    return 0


def cmd_evaluate(args):
    from .executor import (CommFaults, cacc_metrics, execute, load_system, metrics_table,
                           write_metrics_csv)
    _, meta = dc.ParamStore.read(args.checkpoint)
    fallback = {"protocol": meta["protocol"]}
    if not args.config:
        fallback["env"] = meta["env"]
    cfg = load_config(args, fallback)
    system, env, meta = load_system(args.checkpoint, cfg)
    faults = CommFaults.parse(args.faults, seed=cfg.seed)
    res = execute(system, env, cfg.eval_episodes, cfg.eval_seed, cfg.greedy, faults,
                  policy_seed=cfg.seed)
    run_dir = run_dir_for(cfg, args.out, "eval")
    label = f"{meta['protocol']}"
    print(f"mean episode return over {len(res.episode_returns)} episodes: {res.mean_return:.3f}")
    if cfg.env.startswith("cacc"):
        cols = {label: cacc_metrics(res.trajectories)}
        table = metrics_table(cols)
        print(table)
        write_metrics_csv(os.path.join(run_dir, "metrics.csv"), cols)
        with open(os.path.join(run_dir, "metrics.txt"), "w") as fh:
            fh.write(table + "\n")
    with open(os.path.join(run_dir, "returns.csv"), "w") as fh:
        fh.write("episode,seed,average_return\n")
        for k, r in enumerate(res.episode_returns):
            fh.write(f"{k},{cfg.eval_seed + k},{r!r}\n")
    if args.trajectories:
        _write_trajectories(run_dir, cfg, res)
    print(f"run directory: {run_dir}")
    return 0


def _write_trajectories(run_dir, cfg, res):
    if cfg.env.startswith("cacc"):
        from .envs.cacc import write_trajectory_csv
        for k, tr in enumerate(res.trajectories):
            rows = [{"step": t + 1, "vehicle": i, "h": tr["h"][t, i], "v": tr["v"][t, i],
                     "a": tr["a"][t, i], "u": tr["u"][t, i], "reward": tr["rewards"][t, i],
                     "collided": tr["collided"]}
                    for t in range(len(tr["h"])) for i in range(tr["h"].shape[1])]
            write_trajectory_csv(os.path.join(run_dir, f"trajectory_{k:03d}.csv"), rows)
    else:
        from .envs.chain import write_trajectory_csv
        for k, tr in enumerate(res.trajectories):
            rows = [{"step": t + 1, "node": i, "q": tr["q"][t, i], "action": tr["actions"][t, i],
                     "reward": tr["rewards"][t, i]}
                    for t in range(len(tr["q"])) for i in range(tr["q"].shape[1])]
            write_trajectory_csv(os.path.join(run_dir, f"trajectory_{k:03d}.csv"), rows)


def cmd_sweep(args):
    from .trainer import sweep_alpha
    cfg = load_config(args)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"--alphas must be comma-separated numbers, got {args.alphas!r}")
    run_dir = run_dir_for(cfg, args.out, "sweep")
    out = sweep_alpha(cfg, alphas, args.window, run_dir, args.progress_every)
    for a, (rets, curve) in out.items():
        last = f"{curve[-1]:.3f}" if len(curve) else "n/a (fewer episodes than the window)"
        print(f"alpha={a:g}: {len(rets)} episodes, final smoothed return {last}")
    print(f"run directory: {run_dir}")
    return 0


def cmd_gradcheck(args):
    from .agents import canonical_protocol
    from .checks import protocol_gradcheck
    try:
        proto = canonical_protocol(args.protocol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    err, det = protocol_gradcheck(proto, seed=args.seed, passes=args.multipass_k,
                                  return_details=True)
    ok = err <= args.tolerance
    print(f"{proto}: max relative error {err:.3e} "
          f"({'ok' if ok else 'FAILED'}, tolerance {args.tolerance:g}, "
          f"{det['skipped']} coordinates skipped at relu kinks)")
    return 0 if ok else 1


def cmd_proptest(args):
    from .checks import property_checks
    results = property_checks(args.seed)
    for name, (ok, detail) in results.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for ok, _ in results.values()) else 1


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "sweep-alpha": cmd_sweep,
            "gradcheck": cmd_gradcheck, "proptest": cmd_proptest}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except dc.CheckpointError as exc:
        print(f"load error: {exc}", file=sys.stderr)
        return 3
    except dc.TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
