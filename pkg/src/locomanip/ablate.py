"""Ablation suites.

- ``reward_scale``: {multi, single} critic modes across per-group reward
  scale factors; the mechanism test behind multi-critic robustness.
- ``critic_mode``: the unscaled {multi, single} comparison.
- ``frame_curriculum``: command frame fixed to base or control, a 50/50
  per-episode mixture, and the base-to-control curriculum.

Every cell trains in its own directory with a seed-matched config; cell
failures are recorded and the suite continues.  The comparison CSV holds
one row per (cell, seed) plus a median row per cell.
"""

from __future__ import annotations

import dataclasses
import traceback
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .metrics import CsvLogger, read_csv
from .trainer import train

REWARD_SCALE_CELLS = {
    "baseline": (1.0, 1.0, 1.0),
    "loco5": (5.0, 1.0, 1.0),
    "loco10": (10.0, 1.0, 1.0),
    "mani5": (1.0, 5.0, 1.0),
    "mani10": (1.0, 10.0, 1.0),
}

FRAME_CELLS = ("base", "control", "mixture", "curriculum")

COMPARISON_COLUMNS = (
    "suite", "cell", "mode", "seed", "status",
    "base_vel_rmse", "base_ang_rmse", "ee_pos_rmse", "ee_ori_rmse",
    "base_track_reward", "ee_track_reward", "gait_quality",
    "rew_locomotion", "rew_manipulation", "rew_contact_schedule",
    "run_dir",
)


def final_metrics(metrics_csv, tail_frac: float = 0.1, min_rows: int = 5) -> dict:
    """Mean of each column over the final stretch of training."""
    columns, rows = read_csv(metrics_csv)
    if not rows:
        raise ValueError(f"empty metrics file {metrics_csv}")
    tail = max(int(round(len(rows) * tail_frac)), min(min_rows, len(rows)))
    data = np.asarray(rows[-tail:], dtype=np.float64)
    return {c: float(data[:, i].mean()) for i, c in enumerate(columns)}


def _run_cell(cfg: ExperimentConfig, run_dir: Path) -> dict:
    result = train(cfg, run_dir)
    return final_metrics(result["metrics"])


def _write_rows(out_csv: Path, rows: list) -> None:
    with CsvLogger(out_csv, COMPARISON_COLUMNS, {}) as logger:
        for row in rows:
            logger.write(row)


def _cell_rows(rows: list, keys: tuple) -> list:
    """Append a median row per cell over its seed rows."""
    out = list(rows)
    cells = sorted({tuple(r[k] for k in keys) for r in rows})
    metric_cols = [c for c in COMPARISON_COLUMNS
                   if c not in keys + ("seed", "status", "run_dir", "suite")]
    for cell in cells:
        members = [r for r in rows
                   if tuple(r[k] for k in keys) == cell and r["status"] == "ok"]
        if not members:
            continue
        median = dict(members[0])
        median["seed"] = "median"
        median["run_dir"] = ""
        for col in metric_cols:
            median[col] = float(np.median([m[col] for m in members]))
        out.append(median)
    return out


def run_reward_scale_suite(cfg: ExperimentConfig, seeds, out_dir,
                           cells=None, modes=("multi_critic", "single_critic")) -> list:
    """Seed-matched grid of critic modes x reward scale factors."""
    out_dir = Path(out_dir)
    cell_names = list(cells) if cells else list(REWARD_SCALE_CELLS)
    unknown = set(cell_names) - set(REWARD_SCALE_CELLS)
    if unknown:
        raise ValueError(f"unknown reward-scale cells {sorted(unknown)}")
    rows = []
    for mode in modes:
        for cell in cell_names:
            for seed in seeds:
                run_dir = out_dir / f"{mode}_{cell}_seed{seed}"
                cell_cfg = dataclasses.replace(
                    cfg, mode=mode, seed=int(seed),
                    rewards=dataclasses.replace(
                        cfg.rewards, group_scales=REWARD_SCALE_CELLS[cell]))
                rows.append(_one_row("reward_scale", cell, mode, seed,
                                     cell_cfg, run_dir))
    rows = _cell_rows(rows, ("cell", "mode"))
    _write_rows(out_dir / "comparison.csv", rows)
    return rows


def run_critic_mode_suite(cfg: ExperimentConfig, seeds, out_dir) -> list:
    return run_reward_scale_suite(cfg, seeds, out_dir, cells=["baseline"])


def run_frame_suite(cfg: ExperimentConfig, seeds, out_dir, frames=FRAME_CELLS) -> list:
    out_dir = Path(out_dir)
    rows = []
    for frame in frames:
        for seed in seeds:
            run_dir = out_dir / f"frame_{frame}_seed{seed}"
            cell_cfg = dataclasses.replace(
                cfg, seed=int(seed),
                commands=dataclasses.replace(cfg.commands, frame_mode=frame))
            rows.append(_one_row("frame_curriculum", frame, cfg.mode, seed,
                                 cell_cfg, run_dir))
    rows = _cell_rows(rows, ("cell", "mode"))
    _write_rows(out_dir / "comparison.csv", rows)
    return rows


def _one_row(suite: str, cell: str, mode: str, seed, cfg: ExperimentConfig,
             run_dir: Path) -> dict:
    row = {c: "" for c in COMPARISON_COLUMNS}
    row.update({"suite": suite, "cell": cell, "mode": mode, "seed": int(seed),
                "run_dir": str(run_dir)})
    try:
        metrics = _run_cell(cfg, run_dir)
    except Exception:
        (run_dir / "error.log").parent.mkdir(parents=True, exist_ok=True)
        (run_dir / "error.log").write_text(traceback.format_exc())
        row["status"] = "failed"
        for col in COMPARISON_COLUMNS:
            if col not in ("suite", "cell", "mode", "seed", "status", "run_dir"):
                row[col] = float("nan")
        return row
    row["status"] = "ok"
    for col in ("base_vel_rmse", "base_ang_rmse", "ee_pos_rmse", "ee_ori_rmse",
                "base_track_reward", "ee_track_reward", "gait_quality",
                "rew_locomotion", "rew_manipulation", "rew_contact_schedule"):
        row[col] = metrics[col]
    return row
