"""Command line: ``sdrl {train,eval,compare,checkpoint-info}``.

Exit codes: 0 success, 1 missing file / bad checkpoint, 2 configuration
error, 3 runtime invariant breach.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .checkpoint import load_checkpoint, save_checkpoint
from .config import CONFIG_KEYS, coerce, parse_config, render_config
from .errors import CheckpointError, ConfigError

log = logging.getLogger("sdrl")

CSV_COLUMNS = ("episode", "steps", "train_return", "k", "lambda", "r_p", "outcome",
               "critic_loss_mean", "actor_grad_norm", "pioneer_loss_mean", "handoff",
               "eval_mean_return", "eval_success", "eval_crash")
_INT_COLUMNS = {"episode", "steps", "handoff", "eval_success", "eval_crash"}

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_BREACH = 0, 1, 2, 3


def format_cell(name: str, value) -> str:
    if value is None:
        return ""
    if name == "outcome":
        return str(value)
    if name in _INT_COLUMNS:
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6g}"


def format_row(row: dict) -> list[str]:
    return [format_cell(c, row.get(c)) for c in CSV_COLUMNS]


class CsvLog:
    """Appends one flushed line per episode."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        fresh = not (append and self.path.exists() and self.path.stat().st_size > 0)
        self._fh = self.path.open("w" if fresh else "a", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if fresh:
            self._writer.writerow(CSV_COLUMNS)
            self._fh.flush()

    def write(self, row: dict) -> None:
        self._writer.writerow(format_row(row))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_run_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def _num(text: str) -> Optional[float]:
    return float(text) if text not in ("", None) else None


def compare_runs(runs: dict[str, list[dict]], window: int = 20,
                 column: str = "train_return") -> tuple[list[str], list[list[str]]]:
    """Per-window mean/min of ``column`` and cumulative crashes, one column group per run."""
    header = ["window_start", "window_end"]
    for name in runs:
        header += [f"{name}_mean", f"{name}_min", f"{name}_crashes"]
    n_episodes = max((len(r) for r in runs.values()), default=0)
    rows = []
    cumulative = {name: 0 for name in runs}
    for start in range(0, n_episodes, window):
        out = [str(start + 1), str(min(start + window, n_episodes))]
        for name, rs in runs.items():
            chunk = rs[start:start + window]
            cumulative[name] += sum(r["outcome"] in ("crashed", "crash") for r in chunk)
            vals = [v for v in (_num(r[column]) for r in chunk) if v is not None]
            if vals:
                out += [format_cell("x", sum(vals) / len(vals)), format_cell("x", min(vals))]
            else:
                out += ["", ""]
            out.append(str(cumulative[name]))
        rows.append(out)
    return header, rows


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for key in CONFIG_KEYS:
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        p.add_argument(*flags, dest=f"cfg_{key}", default=None, metavar="VALUE",
                       help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdrl", description="Supervisor-blended actor-critic training with pioneer handoff.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="run training, stream the per-episode CSV")
    tr.add_argument("--config", help="key = value config file")
    tr.add_argument("--out", required=True, help="CSV output path")
    tr.add_argument("--ckpt", help="checkpoint path (written at the end and every --ckpt-every)")
    tr.add_argument("--ckpt-every", type=int, default=0)
    tr.add_argument("--resume", help="continue from this checkpoint, appending to --out")
    _add_config_flags(tr)

    ev = sub.add_parser("eval", help="noise-free evaluation of a checkpoint")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--episodes", type=int, default=20)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--k", type=float, default=None,
                    help="combination factor to evaluate at (default: the stored one)")

    cmp_ = sub.add_parser("compare", help="windowed side-by-side summary of run CSVs")
    cmp_.add_argument("csvs", nargs="+")
    cmp_.add_argument("--window", type=int, default=20)
    cmp_.add_argument("--column", default="train_return",
                      choices=["train_return", "eval_mean_return"])
    cmp_.add_argument("--out", help="write the table here instead of stdout")

    info = sub.add_parser("checkpoint-info", help="print checkpoint metadata")
    info.add_argument("ckpt")
    return parser


def _config_overrides(args) -> dict:
    return {key: getattr(args, f"cfg_{key}") for key in CONFIG_KEYS
            if getattr(args, f"cfg_{key}") is not None}


def cmd_train(args) -> int:
    from .harness import Trainer, TrainingAborted

    overrides = _config_overrides(args)
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        stored = parse_config(None, ckpt.config)
        unsupported = set(overrides) - {"episodes", "eval_every", "eval_episodes"}
        if unsupported or args.config:
            raise ConfigError("only episodes/eval_every/eval_episodes may change on --resume",
                              key=sorted(unsupported)[0] if unsupported else "config")
        cfg = stored.replace(**{k: coerce(k, v) for k, v in overrides.items()})
        trainer = Trainer.from_checkpoint(ckpt, cfg)
    else:
        cfg = parse_config(args.config, overrides)
        trainer = Trainer(cfg)
    for line in render_config(cfg).splitlines():
        print(f"# {line}", file=sys.stderr)

    out = CsvLog(args.out, append=bool(args.resume))
    try:
        while trainer.episode < cfg.episodes:
            try:
                row = trainer.run_episode()
            except TrainingAborted as exc:
                out.write(exc.row)
                log.error("training aborted at episode %d: %s", trainer.episode + 1, exc)
                return EXIT_BREACH
            out.write(row)
            log.info("episode %d return %.3f k %.4f", row["episode"], row["train_return"],
                     row["k"])
            if args.ckpt and args.ckpt_every > 0 and trainer.episode % args.ckpt_every == 0:
                save_checkpoint(args.ckpt, trainer.to_checkpoint())
    finally:
        out.close()
    if args.ckpt:
        save_checkpoint(args.ckpt, trainer.to_checkpoint())
    return EXIT_OK


def cmd_eval(args) -> int:
    from .harness import build_supervisor, evaluate

    ckpt = load_checkpoint(args.ckpt)
    cfg = parse_config(None, ckpt.config)
    k = float(ckpt.scalars["k"]) if args.k is None else args.k
    supervisor = build_supervisor(cfg) if k > 0.0 else None
    stats = evaluate(ckpt.network("actor"), supervisor, k, cfg.env, args.episodes, args.seed)
    print(f"{'env':<10}{'k':>10}{'episodes':>10}{'mean_return':>14}{'success':>9}{'crash':>7}")
    print(f"{cfg.env:<10}{format_cell('k', k):>10}{args.episodes:>10}"
          f"{format_cell('x', stats.mean_return):>14}{stats.success_count:>9}"
          f"{stats.crash_count:>7}")
    return EXIT_OK


def cmd_compare(args) -> int:
    runs = {}
    for path in args.csvs:
        name = Path(path).stem
        while name in runs:
            name += "_"
        runs[name] = read_run_csv(path)
    header, rows = compare_runs(runs, args.window, args.column)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_checkpoint_info(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    print(f"format: SDRL-CKPT v1")
    print(f"env: {ckpt.env}")
    print(f"episode: {ckpt.episode}")
    print(f"ablation: {ckpt.config.get('ablation', '?')}")
    print(f"seed: {ckpt.config.get('seed', '?')}")
    for key in ("k", "lambda", "r_p", "schedule.decays"):
        if key in ckpt.scalars:
            print(f"{key}: {ckpt.scalars[key]}")
    for name, params in ckpt.networks.items():
        print(f"network {name}: layers {','.join(map(str, params.layer_sizes))} "
              f"({params.size} parameters)")
    for prefix in ("replay", "pioneer_buffer"):
        key = f"{prefix}.r"
        if key in ckpt.arrays:
            print(f"{prefix}: {ckpt.arrays[key].size} transitions")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
            "checkpoint-info": cmd_checkpoint_info}


def run_subcommand(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"sdrl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"sdrl: error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
