"""Command-line entry point: ``python -m ndp <command> [flags]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, NumericalError
from .imitation import (baseline_train_direct, generate_digit_dataset, save_dataset, split_dataset,
                        train_imitation, write_trajectory_csv)
from .dmp import DmpConfig
from .gradients import gradient_sweep
from .nets import save_checkpoint
from .plot import Series, plot_file, render
from .ppo import RlConfig, Trainer

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

N_BASIS_GRID = (2, 6, 10, 15, 20)
ROLLOUT_GRID = (3, 5, 7, 10, 15)
INTEGRATION_GRID = (15, 25, 35, 45)
BASIS_KINDS = ("gaussian", "linear", "multiquadric", "inverse_quadric", "inverse_multiquadric")
BASE_STEPS = 35
BASE_HORIZON = 100


class MetricWriter:
    """Appends ``{wall_time, env_steps, metric_name, value}`` lines to metrics.jsonl.

    ``wall_time`` is ``null`` unless requested, so logs of identical runs
    compare equal byte for byte.
    """

    def __init__(self, path: Path, wall_time: bool = False):
        self.path = Path(path)
        self.wall_time = wall_time
        self.t0 = time.perf_counter()
        self.path.write_text("")

    def write(self, env_steps: int, metrics: dict) -> None:
        stamp = round(time.perf_counter() - self.t0, 3) if self.wall_time else None
        with open(self.path, "a") as fh:
            for name in sorted(metrics):
                value = metrics[name]
                value = None if isinstance(value, float) and not math.isfinite(value) else value
                fh.write(json.dumps({"wall_time": stamp, "env_steps": int(env_steps),
                                     "metric_name": name, "value": value}) + "\n")


def run_dir(config: cfgmod.RunConfig, command: str, out: str | None) -> Path:
    """Fresh ``<out>/<command>-<timestamp>-seed<seed>`` directory holding the resolved config."""
    root = Path(out or config.run.out)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = root / f"{command}-{stamp}-seed{config.run.seed}"
    suffix = 1
    while path.exists():
        path = root / f"{command}-{stamp}-seed{config.run.seed}-{suffix}"
        suffix += 1
    path.mkdir(parents=True)
    (path / "config.ini").write_text(cfgmod.dumps(config))
    return path


def cmd_grad_check(config: cfgmod.RunConfig, out: Path) -> int:
    gc = config.grad_check
    reports = gradient_sweep(gc.instances, config.run.seed, gc.max_dof, gc.max_basis, gc.max_steps, gc.h)
    worst = max(reports, key=lambda r: r.max_rel_error)
    passed = worst.max_rel_error <= gc.tolerance
    summary = {"instances": len(reports), "max_rel_error": worst.max_rel_error, "parameter": worst.parameter,
               "index": list(worst.index), "tolerance": gc.tolerance, "passed": passed,
               "per_instance": [r.max_rel_error for r in reports]}
    (out / "grad_check.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"grad-check: {len(reports)} instances, max relative error {worst.max_rel_error:.3e} "
          f"({'pass' if passed else 'FAIL'} at {gc.tolerance:g})")
    return EXIT_OK if passed else EXIT_NUMERIC


def cmd_train_imitation(config: cfgmod.RunConfig, out: Path) -> int:
    im = config.imitation
    seed = config.run.seed
    data = generate_digit_dataset(im.num_per_class, im.T, seed, im.noise, im.classes, im.raster)
    train, held = split_dataset(data, seed=seed)
    save_dataset(out / "dataset.jsonl", data)
    dmp = DmpConfig(n_basis=im.n_basis, m_steps=im.T, k_rollout=im.T, zero_forcing=im.zero_forcing)
    log_every = max(1, im.epochs // 20)
    ndp, ndp_log = train_imitation(train, held, im.hidden, dmp, im.epochs, im.batch_size, im.lr,
                                   im.w_scale, seed, log_every)
    direct, direct_log = baseline_train_direct(train, held, match_params=ndp.params.net.n_params,
                                               epochs=im.epochs, batch_size=im.batch_size, lr=im.lr,
                                               seed=seed, log_every=log_every)
    writer = MetricWriter(out / "metrics.jsonl", config.run.wall_time)
    for kind, log in (("ndp", ndp_log), ("direct", direct_log)):
        for rec in log.records:
            writer.write(rec["epoch"] * len(train), {f"{kind}/train_loss": rec["train_loss"],
                                                     f"{kind}/held_out_loss": rec["held_out_loss"]})
    summary = {"ndp_held_out": ndp_log.records[-1]["held_out_loss"],
               "direct_held_out": direct_log.records[-1]["held_out_loss"],
               "ndp_params": ndp.params.net.n_params, "direct_params": direct.params.net.n_params,
               "train_samples": len(train), "held_out_samples": len(held)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    save_checkpoint(out / "ndp.npz", ndp.params.net.state_dict())
    save_checkpoint(out / "direct.npz", direct.params.net.state_dict())
    shown = {}
    for d in held or train:
        shown.setdefault(d.digit, d)
    for digit, demo in sorted(shown.items()):
        cond, start = demo.condition[None], demo.start[None]
        pred_n = ndp.predict(cond, start)[0]
        pred_d = direct.predict(cond, start)[0]
        write_trajectory_csv(out / f"digit{digit}_ndp.csv", pred_n)
        write_trajectory_csv(out / f"digit{digit}_direct.csv", pred_d)
        svg = render([Series("target", demo.target[:, 0], demo.target[:, 1]),
                      Series("ndp", pred_n[:, 0], pred_n[:, 1]),
                      Series("direct", pred_d[:, 0], pred_d[:, 1])],
                     f"digit {digit}", "x", "y", equal_aspect=True)
        (out / f"digit{digit}.svg").write_text(svg)
    print(f"train-imitation: held-out per-point loss ndp {summary['ndp_held_out']:.4f} "
          f"vs direct {summary['direct_held_out']:.4f}")
    return EXIT_OK


def run_rl(rl: RlConfig, ppo, seed: int, out: Path, wall_time: bool = False) -> dict:
    """Train one RL configuration, writing metrics, checkpoint and an eval trace into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(rl, ppo, seed)
    writer = MetricWriter(out / "metrics.jsonl", wall_time)

    def log(rec):
        writer.write(rec["env_steps"], {k: v for k, v in rec.items() if k != "env_steps"})

    result = trainer.train(callback=log)
    save_checkpoint(out / "agent.npz", trainer.agent.state_dict())
    _write_eval_trace(trainer, out / "trace.csv", seed)
    last = result.records[-1] if result.records else {}
    final = trainer.final_success() if rl.final_eval_episodes else float("nan")
    writer.write(trainer.env_steps, {"final_success": final})
    return {"env_steps": trainer.env_steps, "forward_passes": trainer.forward_passes,
            "final_success": final, "last_eval_success": last.get("success_rate", float("nan")),
            "final_train_success": last.get("train_success", float("nan"))}


def _write_eval_trace(trainer: Trainer, path: Path, seed: int) -> None:
    from .envs import make_env

    env = make_env(trainer.cfg.env, horizon=trainer.cfg.horizon, obs_period=trainer.k)
    obs = env.reset(seed)
    done = False
    while not done:
        y0, y0_dot = trainer._robot(obs[None])
        mu, _ = trainer.agent.means(trainer._norm(obs[None], update=False), y0, y0_dot)
        for j in range(trainer.k):
            obs, _, done, _ = env.step(mu[0, j])
    env.write_trace(path)


def cmd_train_rl(config: cfgmod.RunConfig, out: Path) -> int:
    summary = run_rl(config.rl, config.ppo, config.run.seed, out, config.run.wall_time)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"train-rl: {config.rl.algo} on {config.rl.env}, {summary['env_steps']} env steps, "
          f"final success {summary['final_success']:.2f}")
    return EXIT_OK


def ablation_cells(config: cfgmod.RunConfig) -> list[tuple[str, RlConfig]]:
    """Every (name, RlConfig) cell of the requested grids, on the ablation env."""
    ab = config.ablate
    base = RlConfig(**{**asdict(config.rl), "algo": "ndp", "env": ab.env, "total_steps": ab.total_steps,
                      "init_log_std": ab.init_log_std})

    def cell(**changes):
        return RlConfig(**{**asdict(base), **changes})

    cells = [("full", base)]
    for grid in ab.grids:
        if grid == "n_basis":
            cells += [(f"n_basis={n}", cell(n_basis=n)) for n in N_BASIS_GRID]
        elif grid == "rollout":
            for k in ROLLOUT_GRID:
                m = k * math.ceil(BASE_STEPS / k)
                cells.append((f"rollout={k}", cell(k=k, m_steps=m, horizon=k * math.ceil(BASE_HORIZON / k))))
        elif grid == "integration":
            cells += [(f"integration={m}", cell(m_steps=m, dmp_dt=1.0 / BASE_STEPS)) for m in INTEGRATION_GRID]
        elif grid == "basis":
            cells += [(f"basis={b}", cell(basis=b)) for b in BASIS_KINDS]
        elif grid == "learn_alpha":
            cells.append(("learn_alpha", cell(learn_alpha=True)))
        elif grid == "only_g":
            cells.append(("only_g", cell(zero_forcing=True)))
        else:
            raise ConfigError(f"unknown ablation grid {grid!r}")
    return cells


def cmd_ablate(config: cfgmod.RunConfig, out: Path, dry_run: bool = False) -> int:
    cells = ablation_cells(config)
    if dry_run:
        for name, rl in cells:
            print(f"{name}\tn_basis={rl.n_basis} k={rl.k} m={rl.m_steps} dt={rl.dmp_config().dt:.5f} "
                  f"horizon={rl.horizon} basis={rl.basis} learn_alpha={rl.learn_alpha} "
                  f"only_g={rl.zero_forcing} seeds={list(config.ablate.seeds)}")
        return EXIT_OK
    rows = []
    for name, rl in cells:
        finals = []
        for seed in config.ablate.seeds:
            res = run_rl(rl, config.ppo, seed, out / name / f"seed{seed}", config.run.wall_time)
            finals.append(res["final_success"])
        rows.append((name, finals))
        print(f"{name}: final success {np.mean(finals):.2f} over seeds {list(config.ablate.seeds)}", flush=True)
    with open(out / "summary.csv", "w") as fh:
        fh.write("cell,mean_final_success," + ",".join(f"seed{s}" for s in config.ablate.seeds) + "\n")
        for name, finals in rows:
            fh.write(f"{name},{np.mean(finals)!r}," + ",".join(repr(float(f)) for f in finals) + "\n")
    return EXIT_OK


def cmd_plot(config: cfgmod.RunConfig, out: Path, inputs) -> int:
    paths = list(inputs) or list(config.plot.inputs)
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise ConfigError(f"plot input {p} does not exist")
        (out / f"{p.stem}.svg").write_text(plot_file(p, config.plot.width, config.plot.height))
    print(f"plot: wrote {len(paths)} SVG file(s) to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ndp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [run]/[rl]/[ppo]/... sections")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--out", help="root directory for run outputs (overrides run.out)")
    common.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    common.add_argument("--wall-time", action="store_true", help="record wall-clock seconds in metrics")
    sub.add_parser("grad-check", parents=[common], help="finite-difference check of the DMP Jacobians")
    sub.add_parser("train-imitation", parents=[common], help="behaviour cloning on digit strokes")
    sub.add_parser("train-rl", parents=[common], help="NDP-PPO or a PPO baseline on a planar task")
    ab = sub.add_parser("ablate", parents=[common], help="run the ablation grids")
    ab.add_argument("--dry-run", action="store_true", help="list cells without running them")
    pl = sub.add_parser("plot", parents=[common], help="render trace CSVs or metrics.jsonl to SVG")
    pl.add_argument("inputs", nargs="*")
    return parser


def resolve_config(args) -> cfgmod.RunConfig:
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"run.out={args.out}")
    if args.wall_time:
        overrides.append("run.wall_time=true")
    return cfgmod.load(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        if args.command == "ablate" and args.dry_run:
            return cmd_ablate(config, Path("."), dry_run=True)
        out = run_dir(config, args.command, None)
        if args.command == "grad-check":
            return cmd_grad_check(config, out)
        if args.command == "train-imitation":
            return cmd_train_imitation(config, out)
        if args.command == "train-rl":
            return cmd_train_rl(config, out)
        if args.command == "ablate":
            return cmd_ablate(config, out)
        return cmd_plot(config, out, args.inputs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
