"""Command-line entry point.

Subcommands: train, eval, distill, ablate, plot-data.  Exit codes:
0 success, 2 configuration error, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .ppo import NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file (may include a profile)")
    p.add_argument("--profile", choices=("desk", "paper"),
                   help="packaged base profile")
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument("--mode", choices=("multi_critic", "single_critic"),
                   help="critic architecture")
    p.add_argument("--out", required=True, help="output directory")


def _resolve_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if args.config is None and args.profile is None:
        args.profile = "desk"
    return load_config(args.config, args.profile, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locomanip",
        description="Multi-critic whole-body loco-manipulation at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a teacher policy")
    _add_config_args(p_train)

    p_eval = sub.add_parser("eval", help="run a trajectory evaluation")
    _add_config_args(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--trajectory", default="line",
                        choices=("line", "circle", "semicircle",
                                 "workspace_sweep", "chicken_head"))
    p_eval.add_argument("--speed", type=float, default=0.1)
    p_eval.add_argument("--walking", action="store_true")

    p_distill = sub.add_parser("distill", help="distill a teacher into a student")
    _add_config_args(p_distill)
    p_distill.add_argument("--teacher", required=True, help="teacher checkpoint")
    p_distill.add_argument("--clean-student", action="store_true",
                           help="noiseless, privileged student (capacity check)")

    p_ablate = sub.add_parser("ablate", help="run an ablation suite")
    _add_config_args(p_ablate)
    p_ablate.add_argument("--suite", required=True,
                          choices=("reward_scale", "critic_mode", "frame_curriculum"))
    p_ablate.add_argument("--seeds", type=int, default=5,
                          help="number of seeds (0..n-1 offset by --seed)")
    p_ablate.add_argument("--cells", nargs="*",
                          help="reward-scale cells to run (default: all five)")

    p_plot = sub.add_parser("plot-data", help="merge metric CSVs to long format")
    p_plot.add_argument("--inputs", nargs="+", required=True)
    p_plot.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _dispatch(args) -> int:
    if args.command == "plot-data":
        from .metrics import merge_long_format

        cells = merge_long_format(args.inputs, args.out)
        print(f"wrote {cells} cells to {args.out}")
        return EXIT_OK

    cfg = _resolve_config(args)
    out_dir = Path(args.out)

    if args.command == "train":
        from .trainer import train

        result = train(cfg, out_dir)
        print(f"checkpoint: {result['checkpoint']}")
        print(f"metrics:    {result['metrics']}")
        return EXIT_OK

    if args.command == "eval":
        from .evaluate import EvalTrajectory, run_eval

        traj = EvalTrajectory(kind=args.trajectory, speed=args.speed)
        summary = run_eval(args.checkpoint, cfg, traj, walking=args.walking,
                           out_dir=out_dir)
        for key in ("delta_r", "delta_theta", "delta_rdot", "delta_thetadot",
                    "saturation"):
            print(f"{key}: {summary[key]}")
        return EXIT_OK

    if args.command == "distill":
        from .trainer import distill

        result = distill(cfg, args.teacher, out_dir,
                         student_noise=not args.clean_student,
                         student_privileged=args.clean_student)
        print(f"student:  {result['checkpoint']}")
        print(f"eval MSE: {result['eval_mse'][-1] if result['eval_mse'] else 'n/a'}")
        return EXIT_OK

    if args.command == "ablate":
        from .ablate import run_frame_suite, run_critic_mode_suite, run_reward_scale_suite

        seeds = [cfg.seed + k for k in range(args.seeds)]
        if args.suite == "reward_scale":
            rows = run_reward_scale_suite(cfg, seeds, out_dir, cells=args.cells)
        elif args.suite == "critic_mode":
            rows = run_critic_mode_suite(cfg, seeds, out_dir)
        else:
            rows = run_frame_suite(cfg, seeds, out_dir)
        failed = sum(1 for r in rows if r["status"] == "failed")
        print(f"{len(rows)} rows ({failed} failed cells) -> {out_dir / 'comparison.csv'}")
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
