"""Command-line experiment driver: prepare | train | analyze | theory | eval.

Each (experiment, seed) pair gets its own directory under the output root
holding a config snapshot, a log, CSV outputs, the checkpoint and a JSON
run summary. Data is rebuilt deterministically from (config, seed) by every
command, so commands can run independently.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .analytics import collect_losses, overlap_stats, quartile_gap_per_user
from .baselines import TruncateSchedule
from .config import ConfigError, ExperimentConfig, describe_defaults, dump_config, load_config
from .dataset import (DataError, NoisyTrainSet, filter_min_degree, generate_synthetic,
                      inject_noise_per_user, inject_noise_ratio, load_interactions, split,
                      write_id_mapping, write_labeled)
from .evaluation import evaluate
from .loss import LossKind
from .model import load_checkpoint, propagate, save_checkpoint
from .sampler import ResampleConfig
from .theory import SWEEP_HEADER, grid_from_lists, sweep
from .trainer import TrainConfig, TrainingError, run_training, write_history

logger = logging.getLogger("pldrec")


@contextlib.contextmanager
def atomic_write(path):
    """Yield a temporary path that is renamed onto ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_csv(path, header, rows):
    with atomic_write(path) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        w.writerows(rows)


def _write_json(path, obj):
    with atomic_write(path) as tmp, open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)


def run_dir(cfg: ExperimentConfig, seed: int) -> Path:
    return Path(cfg.experiment.output_dir) / cfg.experiment.name / f"seed_{seed}"


def _start_run(cfg: ExperimentConfig, seed: int) -> Path:
    d = run_dir(cfg, seed)
    d.mkdir(parents=True, exist_ok=True)
    with atomic_write(d / "config.ini") as tmp:
        Path(tmp).write_text(dump_config(cfg))
    handler = logging.FileHandler(d / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logging.getLogger().addHandler(handler)
    return d


def _end_run():
    root = logging.getLogger()
    for h in list(root.handlers):
        if isinstance(h, logging.FileHandler):
            root.removeHandler(h)
            h.close()


def build_data(cfg: ExperimentConfig, seed: int):
    """(split, noisy training set, base interaction set) for one seed."""
    d = cfg.dataset
    if d.source == "file":
        data = load_interactions(d.path)
    else:
        data = generate_synthetic(d.num_users, d.num_items, d.latent_dim, d.per_user,
                                  seed=seed).interactions
    if d.min_count > 1:
        data = filter_min_degree(data, d.min_count)
    sp = split(data, d.train_frac, d.val_frac, seed=seed)
    held_out = [sp.validation, sp.test]
    if d.noise_mode == "none" or d.noise_level == 0:
        noisy = NoisyTrainSet.clean(sp.train)
    elif d.noise_mode == "ratio":
        noisy = inject_noise_ratio(sp.train, d.noise_level, seed=seed + 1, forbidden=held_out)
    else:
        noisy = inject_noise_per_user(sp.train, int(d.noise_level), seed=seed + 1,
                                      forbidden=held_out)
    return sp, noisy, data


def train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    t = cfg.train
    return TrainConfig(loss_kind=t.loss, denoiser=t.denoiser,
                       resample=ResampleConfig(t.k, t.tau), learning_rate=t.learning_rate,
                       weight_decay=t.weight_decay, batch_size=t.batch_size,
                       max_epochs=t.max_epochs, patience=t.patience or None, seed=seed,
                       rce_beta=t.rce_beta,
                       truncate=TruncateSchedule(t.tce_max_drop_rate, t.tce_ramp_epochs))


def _load_matching_checkpoint(path, noisy: NoisyTrainSet):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    state = load_checkpoint(path)
    obs = noisy.observed
    if (state.num_users, state.num_items) != (obs.num_users, obs.num_items):
        raise DataError(f"checkpoint {path} has {state.num_users}x{state.num_items} embeddings "
                        f"but the data has {obs.num_users}x{obs.num_items}")
    if state.layers:
        propagate(state, obs)
    return state


# ---------------------------------------------------------------- commands

def cmd_prepare(cfg: ExperimentConfig, seed: int) -> Path:
    d = _start_run(cfg, seed)
    sp, noisy, data = build_data(cfg, seed)
    obs = noisy.observed
    with atomic_write(d / "train.tsv") as tmp:
        write_labeled(tmp, obs, noisy.is_noisy)
    with atomic_write(d / "validation.tsv") as tmp:
        write_labeled(tmp, sp.validation)
    with atomic_write(d / "test.tsv") as tmp:
        write_labeled(tmp, sp.test)
    with atomic_write(d / "user_ids.tsv") as tmp:
        write_id_mapping(tmp, data.user_ids, data.num_users)
    with atomic_write(d / "item_ids.tsv") as tmp:
        write_id_mapping(tmp, data.item_ids, data.num_items)
    _write_json(d / "prepare_summary.json", {
        "num_users": obs.num_users, "num_items": obs.num_items,
        "train_normal": len(obs) - noisy.num_injected, "train_noisy": noisy.num_injected,
        "validation": len(sp.validation), "test": len(sp.test),
        "noise_shortfall_users": len(noisy.shortfall),
        "excluded_users": len(sp.excluded_users), "seed": seed})
    logger.info("prepared %s", d)
    return d


def cmd_train(cfg: ExperimentConfig, seed: int) -> Path:
    d = _start_run(cfg, seed)
    sp, noisy, _ = build_data(cfg, seed)
    t0 = time.perf_counter()
    state, history = run_training(noisy, sp.validation, train_config(cfg, seed),
                                  dim=cfg.model.dim, layers=cfg.model.layers)
    with atomic_write(d / "epochs.csv") as tmp:
        write_history(tmp, history)
    with atomic_write(d / "model.npz") as tmp:
        save_checkpoint(tmp, state)
    _write_json(d / "train_summary.json", {
        "epochs": len(history), "seed": seed,
        "best_val_recall": max((h.val_metric for h in history), default=float("nan")),
        "wall_clock_s": time.perf_counter() - t0,
        "sampled_noisy_total": sum(h.sampled_noisy for h in history),
        "sampled_normal_total": sum(h.sampled_normal for h in history)})
    return d


def cmd_analyze(cfg: ExperimentConfig, seed: int, checkpoint=None) -> Path:
    d = _start_run(cfg, seed)
    sp, noisy, _ = build_data(cfg, seed)
    state = _load_matching_checkpoint(checkpoint or d / "model.npz", noisy)
    record = collect_losses(state, noisy, LossKind(cfg.train.loss), np.random.default_rng(seed))
    with atomic_write(d / "losses.csv") as tmp:
        record.write_csv(tmp)
    rows = []
    for scope in ("global", "personal"):
        s = overlap_stats(record, scope)
        rows.append({"scope": scope, "noise_level": cfg.dataset.noise_level,
                     "normal_in_overlap": s.normal_in, "normal_ratio": s.normal_ratio,
                     "noise_in_overlap": s.noise_in, "noise_ratio": s.noise_ratio,
                     "normal_total": s.normal_total, "noise_total": s.noise_total})
    _write_csv(d / "overlap.csv", list(rows[0]), rows)
    gaps, skipped = quartile_gap_per_user(record)
    _write_csv(d / "gaps.csv", ["user", "gap"], [{"user": u, "gap": g} for u, g in gaps.items()])
    no_noise = rows[0]["noise_total"] == 0
    if no_noise:
        logger.warning("no noisy interactions: noise-side statistics are empty")
    _write_json(d / "analyze_summary.json", {
        "entries": len(record), "users_with_gap": len(gaps), "users_skipped": len(skipped),
        "noise_side_empty": no_noise, "overlap": rows,
        "negative_gap_fraction": float(np.mean([g < 0 for g in gaps.values()])) if gaps else None})
    return d


def cmd_eval(cfg: ExperimentConfig, seed: int, checkpoint=None) -> Path:
    d = _start_run(cfg, seed)
    sp, noisy, _ = build_data(cfg, seed)
    state = _load_matching_checkpoint(checkpoint or d / "model.npz", noisy)
    seen = noisy.observed.union(sp.validation)
    report = evaluate(state, seen, sp.test, cfg.eval.k_values)
    rows = [dict(r, seed=seed) for r in report.rows()]
    _write_csv(d / "metrics.csv", ["seed", "K", "recall", "ndcg", "users"], rows)
    _write_json(d / "metrics.json", {"seed": seed, "metrics": rows})
    return d


def cmd_theory(cfg: ExperimentConfig, seed: int) -> Path:
    th = cfg.theory
    try:
        grid = grid_from_lists(th.n, th.m, th.mu1, th.delta, th.sigma, th.k, th.tau)
    except ValueError as exc:
        raise ConfigError(f"invalid theory grid: {exc}") from exc
    if not grid or th.trials < 1:
        raise ConfigError("theory grid is empty or trials < 1")
    if any(p.n + p.m == 0 for p in grid):
        raise ConfigError("theory grid needs n + m > 0")
    d = _start_run(cfg, seed)
    rows = sweep(grid, th.trials, seed)
    _write_csv(d / "theory.csv", SWEEP_HEADER, rows)
    _write_json(d / "theory_summary.json", {
        "points": len(rows), "seed": seed,
        "max_abs_diff": max(r["abs_diff"] for r in rows),
        "within_0.05_or_6se": float(np.mean([r["abs_diff"] <= max(0.05, 6 * r["mc_stderr"])
                                             for r in rows]))})
    return d


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "analyze": cmd_analyze,
            "theory": cmd_theory, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pldrec", description=__doc__,
        epilog="Config sections and defaults:\n" + describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", help="INI experiment config (defaults used if omitted)")
    parser.add_argument("--seed", type=int, action="append",
                        help="seed to run; repeatable; overrides [experiment] seeds")
    parser.add_argument("--out", help="output root; overrides [experiment] output_dir")
    parser.add_argument("--checkpoint", help="checkpoint for analyze/eval "
                                             "(default: <run dir>/model.npz)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
        if args.out:
            cfg.experiment.output_dir = args.out
        if args.seed:
            cfg.experiment.seeds = list(args.seed)
        cmd = COMMANDS[args.command]
        for seed in cfg.experiment.seeds:
            try:
                if args.command in ("analyze", "eval"):
                    out = cmd(cfg, seed, args.checkpoint)
                else:
                    out = cmd(cfg, seed)
            finally:
                _end_run()
            print(out)
    except (ConfigError, DataError, TrainingError, FileNotFoundError, ValueError) as exc:
        print(f"pldrec {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
