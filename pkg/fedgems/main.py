from __future__ import annotations
import argparse
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from fedgems.config import APP_NAME, DEFAULT_WORKERS, LOG_LEVEL, RUNS_DIR, ensure_dirs
from fedgems.errors import ConfigError, FedGemsError
from fedgems.models.experiment import ExperimentConfig
from fedgems.services import experiment_service


def _setup_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(
        sys.stderr,
        level="DEBUG" if verbose else LOG_LEVEL,
        format="{time:HH:mm:ss} | {level: <7} | {message}",
        filter=lambda record: "listing" not in record["extra"],
    )
    # listings are command output, not diagnostics
    logger.add(sys.stdout, level="INFO", format="{message}", filter=lambda record: "listing" in record["extra"])


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        try:
            cfg = cfg.updated(seed=args.seed)
        except ValidationError as e:
            raise ConfigError(f"invalid --seed {args.seed}: {e.errors()[0]['msg']}") from e
    return cfg


def _out_dir(args: argparse.Namespace, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return RUNS_DIR / cfg.name


def _csv_list(text: str) -> List[str]:
    return [t.strip() for t in (text or "").split(",") if t.strip()]


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    summary = experiment_service.run_to_dir(cfg, _out_dir(args, cfg), args.workers, "run", not args.no_registry)
    final = summary["final"]
    logger.info(
        f"{cfg.name}: server {final['server_acc']:.4f}, clients {final['client_acc_mean']:.4f}, "
        f"{summary['ledger']['kb_up']:.1f} KB up / {summary['ledger']['kb_down']:.1f} KB down"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    values = _csv_list(args.values)
    if not values:
        raise ConfigError("--values needs at least one value")
    rows = experiment_service.sweep(cfg, args.axis, values, _out_dir(args, cfg), args.workers, not args.no_registry)
    failed = [r for r in rows if r["status"] != "done"]
    logger.info(f"sweep {args.axis}: {len(rows) - len(failed)} done, {len(failed)} failed")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    for row in experiment_service.ablate(cfg, _out_dir(args, cfg), args.workers, not args.no_registry):
        logger.info(f"{row['variant']:<20} server {row['server_acc']:.4f} clients {row['client_acc_mean']:.4f}")
    return 0


def cmd_attack_eval(args: argparse.Namespace) -> int:
    cfg = _load(args)
    kinds = _csv_list(args.kinds)
    for kind in kinds:
        if kind not in ("paf", "lie", "ofom"):
            raise ConfigError(f"unknown attack kind {kind!r}")
    experiment_service.attack_eval(cfg, kinds, _out_dir(args, cfg), _csv_list(args.modes) or None, args.workers)
    return 0


def cmd_history(args: argparse.Namespace) -> int:
    from fedgems.db import dao
    from fedgems.db.database import init_db

    init_db()
    listing = logger.bind(listing=True)
    for r in dao.list_runs(limit=args.limit):
        acc = "-" if r.final_server_acc is None else f"{r.final_server_acc:.4f}"
        listing.info(f"{r.id:>5}  {r.status:<7} {r.command:<8} {r.mode:<10} {r.attack:<5} seed={r.seed:<4} server={acc}  {r.name}  {r.output_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedgems", description=f"{APP_NAME} federated distillation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=DEFAULT_WORKERS, help="parallel clients / sub-runs")
        p.add_argument("--no-registry", action="store_true", help="do not record the run in the sqlite registry")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("run", help="run one experiment")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one run per value of an axis")
    common(p)
    p.add_argument("--axis", required=True, choices=sorted(experiment_service.SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="disable each selective component in turn")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("attack-eval", help="honest baseline vs poisoned runs")
    common(p)
    p.add_argument("--kinds", default="paf,lie,ofom", help="comma separated attack kinds")
    p.add_argument("--modes", default="", help="comma separated modes (default: the config's mode)")
    p.set_defaults(func=cmd_attack_eval)

    p = sub.add_parser("history", help="list runs recorded in the registry")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_history)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    ensure_dirs()
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error(str(e))
        return 2
    except (FedGemsError, ValueError) as e:
        logger.error(str(e))
        return 1
