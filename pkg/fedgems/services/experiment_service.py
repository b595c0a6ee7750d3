from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from loguru import logger
from pydantic import ValidationError

from fedgems.db import dao
from fedgems.db.database import init_db
from fedgems.errors import ConfigError, ExperimentAborted
from fedgems.models.dataset import Dataset, PartitionPlan
from fedgems.models.experiment import ExperimentConfig
from fedgems.models.metrics import RoundMetrics
from fedgems.services import checkpoint_service
from fedgems.services.async_worker import Worker, run_all
from fedgems.services.data_service import (
    build_dataset,
    partition_dirichlet,
    partition_iid,
    split_public_private,
    split_train_test,
)
from fedgems.services.export_service import ExportService, MetricsWriter, header_comment, partition_summary
from fedgems.services.ledger_service import comu_at
from fedgems.services.protocol_service import ExperimentResult, client_shards, run_experiment

SWEEP_AXES = {
    "public_fraction": ("split.public_fraction", float),
    "server_hidden_dim": ("server_model.hidden_dim", int),
    "client_count": ("client_count", int),
}

ABLATIONS = [
    ("full", {}),
    ("no_self_train", {"protocol.self_train_on": False}),
    ("no_self_distill", {"protocol.self_distill_on": False}),
    ("no_ensemble_distill", {"protocol.ensemble_distill_on": False}),
]


@dataclass(frozen=True)
class PreparedData:
    public_train: Dataset
    public_test: Dataset
    private: Dataset
    plan: PartitionPlan


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    try:
        ds = build_dataset(cfg.dataset, cfg.seed)
    except NotImplementedError as e:
        raise ConfigError(str(e)) from e
    public, private = split_public_private(ds, cfg.split, cfg.seed, cfg.dataset.public_label_skew)
    public_train, public_test = split_train_test(public, cfg.seed + 1, cfg.split.train_test_ratio)
    if cfg.partition.mode == "iid":
        plan = partition_iid(private, cfg.client_count, cfg.seed + 2)
    else:
        plan = partition_dirichlet(private, cfg.client_count, cfg.partition.alpha, cfg.seed + 2)
    return PreparedData(public_train, public_test, private, plan)


def execute(cfg: ExperimentConfig, workers: int = 1, on_round=None, data: Optional[PreparedData] = None) -> ExperimentResult:
    data = data or prepare_data(cfg)
    return run_experiment(cfg, data.public_train, data.public_test, data.private, data.plan, on_round, workers)


def _variant(cfg: ExperimentConfig, **changes: Any) -> ExperimentConfig:
    try:
        return cfg.updated(**changes)
    except ValidationError as e:
        details = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"{cfg.name}: invalid variant {changes}", details) from e


def _final(metrics: Sequence[RoundMetrics]) -> Dict[str, Any]:
    last = metrics[-1]
    return {
        "server_acc": last.server_acc,
        "client_acc_mean": last.client_acc_mean,
        "client_acc_best": last.client_acc_best,
        "client_acc_public_mean": last.client_acc_public_mean,
        "client_acc_private_mean": last.client_acc_private_mean,
        "kb_up_cum": last.kb_up_cum,
        "kb_down_cum": last.kb_down_cum,
    }


def summarize(cfg: ExperimentConfig, result: ExperimentResult, data: PreparedData) -> Dict[str, Any]:
    return {
        "name": cfg.name,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "mode": cfg.protocol.mode,
        "attack": cfg.attack.kind,
        "rounds": len(result.metrics),
        "final": _final(result.metrics),
        "branch_counts": [
            [m.n_selftrain, m.n_selfdistill, m.n_ensemble, m.n_fallback] for m in result.metrics
        ],
        "ledger": result.ledger.summary(),
        "pool_size": len(result.server.pool),
        "public_train_size": len(data.public_train),
        "partition": partition_summary(data.plan, data.private),
    }


def run_to_dir(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    workers: int = 1,
    command: str = "run",
    registry: bool = False,
) -> Dict[str, Any]:
    """One experiment plus its configured baselines, with every artifact written under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, seed = cfg.config_hash(), cfg.seed
    embedded = cfg.model_dump(mode="json", exclude={"output_dir", "workers"})
    embedded["_meta"] = {"config_hash": h, "seed": seed}
    ExportService.to_json(out / "config.json", embedded)
    data = prepare_data(cfg)
    if cfg.export_data:
        shards = client_shards(cfg, data.private, data.plan)
        ExportService.dataset_csv(out / "data.csv", data.public_train, data.public_test, shards, header_comment("data", h, seed))

    run_id = None
    if registry:
        init_db()
        run_id = dao.start_run(cfg, command, out)
    with MetricsWriter(out / "metrics.csv", header_comment("metrics", h, seed)) as writer:
        try:
            result = execute(cfg, workers, writer.write, data)
        except ExperimentAborted as e:
            if run_id is not None:
                dao.finish_run(run_id, e.partial_metrics, error=str(e))
            raise

    ExportService.ledger_csv(out / "ledger.csv", result.ledger.events, header_comment("ledger", h, seed))
    ExportService.attacks_csv(out / "attacks.csv", result.attack_events, header_comment("attacks", h, seed))
    checkpoint_service.save(
        out / "checkpoint.bin",
        checkpoint_service.Checkpoint(
            round=len(result.metrics),
            class_count=data.public_train.class_count,
            config_hash=h,
            seed=seed,
            server=result.server.trainable,
            clients=[c.trainable for c in result.clients],
            pool=result.server.pool,
        ),
    )

    summary = summarize(cfg, result, data)
    if cfg.baselines:
        summary["comparison"] = compare_baselines(cfg, result, data, workers)
    ExportService.to_json(out / "summary.json", summary)
    if run_id is not None:
        dao.finish_run(run_id, result.metrics)
    return summary


def compare_baselines(cfg: ExperimentConfig, result: ExperimentResult, data: PreparedData, workers: int = 1) -> Dict[str, Any]:
    """Final numbers per mode on identical data and seed, plus ComU at the stand-alone server accuracy."""
    runs = {cfg.protocol.mode: result}
    for mode in cfg.baselines:
        if mode in runs:
            continue
        logger.info(f"{cfg.name}: baseline mode {mode}")
        runs[mode] = execute(_variant(cfg, **{"protocol.mode": mode, "baselines": []}), workers, data=data)
    out: Dict[str, Any] = {mode: _final(r.metrics) for mode, r in runs.items()}
    if "standalone" in runs:
        target = runs["standalone"].metrics[-1].server_acc
        out["comu_at_standalone_server_acc"] = {
            "target": target,
            **{mode: comu_at(r.ledger, r.metrics, target) for mode, r in runs.items() if mode != "standalone"},
        }
    return out


def _totals(metrics: Sequence[RoundMetrics]) -> List[int]:
    return [
        sum(m.n_selftrain for m in metrics),
        sum(m.n_selfdistill for m in metrics),
        sum(m.n_ensemble for m in metrics),
        sum(m.n_fallback for m in metrics),
    ]


def sweep(
    template: ExperimentConfig,
    axis: str,
    values: Sequence[Any],
    out_dir: str | Path,
    workers: int = 1,
    registry: bool = False,
) -> List[Dict[str, Any]]:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    path, cast = SWEEP_AXES[axis]
    out = Path(out_dir)
    configs = []
    for value in values:
        try:
            configs.append((value, template.updated(**{path: cast(value), "name": f"{template.name}-{axis}={value}"}), None))
        except Exception as e:
            configs.append((value, None, f"invalid value: {e}"))

    def one(value, cfg):
        return run_to_dir(cfg, out / f"{axis}={value}", 1, "sweep", registry)

    jobs = [Worker(one, v, c) for v, c, err in configs if c is not None]
    done = iter(run_all(jobs, workers))
    rows = []
    for value, cfg, err in configs:
        summary = None
        if cfg is not None:
            job = next(done)
            err = None if job.error is None else str(job.error)
            summary = job.result
        if err:
            logger.warning(f"sweep {axis}={value} failed: {err}")
            rows.append({"axis": axis, "value": value, "status": "failed", "error": err})
            continue
        rows.append({"axis": axis, "value": value, "status": "done", "error": "", **summary["final"]})

    columns = ["axis", "value", "status", "server_acc", "client_acc_mean", "client_acc_best", "kb_up_cum", "kb_down_cum", "error"]
    ExportService.to_csv(
        out / "sweep.csv",
        columns,
        ([r.get(c, "") for c in columns] for r in rows),
        header_comment("sweep", template.config_hash(), template.seed),
    )
    return rows


def ablate(cfg: ExperimentConfig, out_dir: str | Path, workers: int = 1, registry: bool = False) -> List[Dict[str, Any]]:
    if cfg.protocol.mode != "fedgems":
        raise ConfigError("ablations need protocol.mode = fedgems")
    out = Path(out_dir)
    base = _variant(cfg, **{"protocol.self_train_on": True, "protocol.self_distill_on": True, "protocol.ensemble_distill_on": True, "baselines": []})
    rows = []
    for variant, changes in ABLATIONS:
        sub = _variant(base, **changes, name=f"{cfg.name}-{variant}")
        data = prepare_data(sub)
        result = execute(sub, workers, data=data)
        run_dir = out / variant
        run_dir.mkdir(parents=True, exist_ok=True)
        ExportService.to_json(run_dir / "summary.json", summarize(sub, result, data))
        if registry:
            init_db()
            dao.finish_run(dao.start_run(sub, "ablate", run_dir), result.metrics)
        st, sd, ed, ce = _totals(result.metrics)
        last = result.metrics[-1]
        rows.append({
            "variant": variant,
            "self_train_on": sub.protocol.self_train_on,
            "self_distill_on": sub.protocol.self_distill_on,
            "ensemble_distill_on": sub.protocol.ensemble_distill_on,
            "server_acc": last.server_acc,
            "client_acc_mean": last.client_acc_mean,
            "n_selftrain_total": st,
            "n_selfdistill_total": sd,
            "n_ensemble_total": ed,
            "n_fallback_total": ce,
            "kb_up_cum": last.kb_up_cum,
        })
    columns = list(rows[0])
    ExportService.to_csv(out / "ablation.csv", columns, ([r[c] for c in columns] for r in rows),
                         header_comment("ablation", cfg.config_hash(), cfg.seed))
    return rows


def attack_eval(
    cfg: ExperimentConfig,
    kinds: Sequence[str],
    out_dir: str | Path,
    modes: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> List[Dict[str, Any]]:
    """Honest baseline plus one run per attack kind; reports accuracy after the attack and its signed delta."""
    modes = list(modes or [cfg.protocol.mode])
    for mode in modes:
        if mode not in ("fedgems", "fedgem"):
            raise ConfigError(f"attack evaluation needs fedgems or fedgem mode, got {mode!r}")
    out = Path(out_dir)
    plan = []
    for mode in modes:
        honest = _variant(cfg, **{"protocol.mode": mode, "attack.kind": "none", "baselines": []})
        attacked = [_variant(honest, **{"attack.kind": kind, "name": f"{cfg.name}-{mode}-{kind}"}) for kind in kinds]
        plan.append((mode, honest, attacked))

    rows = []
    for mode, honest, attacked in plan:
        data = prepare_data(honest)
        base = execute(honest, workers, data=data).metrics[-1]
        for kind, variant in [("none", None), *zip(kinds, attacked)]:
            after = base if variant is None else execute(variant, workers, data=data).metrics[-1]
            ds, dc = after.server_acc - base.server_acc, after.client_acc_mean - base.client_acc_mean
            rows.append({
                "mode": mode,
                "attack": kind,
                "server_acc_after": after.server_acc,
                "server_delta": ds,
                "client_acc_after": after.client_acc_mean,
                "client_delta": dc,
                "server_ab": f"{after.server_acc * 100:.2f}/{ds * 100:+.2f}",
                "client_ab": f"{after.client_acc_mean * 100:.2f}/{dc * 100:+.2f}",
            })
            logger.info(f"attack-eval {mode}/{kind}: server {rows[-1]['server_ab']} clients {rows[-1]['client_ab']}")
    columns = ["mode", "attack", "server_acc_after", "server_delta", "client_acc_after", "client_delta", "server_ab", "client_ab"]
    ExportService.to_csv(out / "attack_eval.csv", columns, ([r[c] for c in columns] for r in rows),
                         header_comment("attack-eval", cfg.config_hash(), cfg.seed))
    return rows
