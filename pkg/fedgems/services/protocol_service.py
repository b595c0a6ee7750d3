"""Selective knowledge fusion between one large server model and K clients.

Each round every client first distills from the last server broadcast and
trains on its private shard, then the server walks the public train set in
mini-batches and routes every sample to one of four losses:

* predicted correctly            -> cross-entropy (self-training), logit pooled
* wrong but pooled before        -> distill from its own pooled logit
* wrong, never pooled            -> distill from an entropy-weighted ensemble of
                                    the clients that predict the label
* wrong, never pooled, no client -> cross-entropy only

``fedgem`` mode skips the selection and distills every sample from the plain
average of all clients; ``standalone`` mode trains both sides on their own data
with no exchange.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from fedgems.config import ENTROPY_FLOOR, INVERSE_ENTROPY_CAP
from fedgems.errors import CorruptLogitsError, DivergedLossError, ExperimentAborted, ProtocolError
from fedgems.models.classifier import Classifier, TrainableModel
from fedgems.models.dataset import Dataset, PartitionPlan
from fedgems.models.experiment import AttackSpec, ExperimentConfig, ProtocolConfig
from fedgems.models.metrics import AttackEvent, RoundMetrics
from fedgems.models.protocol import (
    AggregationWeights,
    Branch,
    ClientReport,
    GlobalLogitPool,
    RoutingDecision,
    ServerRoundResult,
)
from fedgems.services import losses, optimizer
from fedgems.services.async_worker import Worker, run_all
from fedgems.services.attack_service import apply_attack
from fedgems.services.data_service import split_shard
from fedgems.services.ledger_service import CommLedger
from fedgems.services.network import LossSpec, accuracy, batch_logits, forward, forward_backward


@dataclass
class ClientState:
    client_id: int
    trainable: TrainableModel
    private_train: Dataset
    private_test: Dataset

    @property
    def model(self) -> Classifier:
        return self.trainable.model


@dataclass
class ServerState:
    trainable: TrainableModel
    pool: GlobalLogitPool
    # L_s: latest server logits over the public train set, refreshed per batch
    logits: Optional[np.ndarray] = None

    @property
    def model(self) -> Classifier:
        return self.trainable.model


@dataclass
class ExperimentResult:
    metrics: List[RoundMetrics]
    ledger: CommLedger
    server: ServerState
    clients: List[ClientState]
    attack_events: List[AttackEvent] = field(default_factory=list)


# ---------- Selection ----------

def classify_reliability(reports: Sequence[ClientReport], label: int, index: int) -> Tuple[List[int], List[int]]:
    """Split client ids by whether their argmax for ``index`` equals ``label``."""
    reliable: List[int] = []
    unreliable: List[int] = []
    for report in sorted(reports, key=lambda r: r.client_id):
        row = report.row(index)
        if row is None:
            raise ProtocolError(f"client {report.client_id} did not report sample {index}")
        (reliable if losses.predict(row) == label else unreliable).append(report.client_id)
    return reliable, unreliable


def weights_from_entropies(entropies: Sequence[float]) -> np.ndarray:
    """softmax over 1/H, with 1/H capped for near-certain clients."""
    h = np.asarray(entropies, dtype=np.float64)
    inv = np.where(h < ENTROPY_FLOOR, INVERSE_ENTROPY_CAP, 1.0 / np.maximum(h, ENTROPY_FLOOR))
    return losses.softmax(inv)


def compute_weights(
    reports: Sequence[ClientReport],
    index: int,
    reliable: Sequence[int],
    temperature: float = 1.0,
) -> AggregationWeights:
    reliable_set = set(reliable)
    if not reliable_set:
        raise ProtocolError(f"no reliable client for sample {index}")
    ordered = sorted(reports, key=lambda r: r.client_id)
    chosen = [r for r in ordered if r.client_id in reliable_set]
    ents = [losses.entropy(losses.softmax(r.row(index), temperature)) for r in chosen]
    alphas = weights_from_entropies(ents)
    weights = {r.client_id: 0.0 for r in ordered}
    for r, a in zip(chosen, alphas):
        weights[r.client_id] = float(a)
    return AggregationWeights(index, weights)


def ensemble_target(reports: Sequence[ClientReport], weights: AggregationWeights, temperature: float = 1.0) -> np.ndarray:
    """sum_j alpha_j * softmax(l_j), accumulated in ascending client id order."""
    ordered = sorted(reports, key=lambda r: r.client_id)
    target = np.zeros(ordered[0].logits.shape[1])
    for r in ordered:
        a = weights.weights.get(r.client_id, 0.0)
        if a > 0.0:
            target = target + a * losses.softmax(r.row(weights.index), temperature)
    return target


def average_target(reports: Sequence[ClientReport], index: int, temperature: float = 1.0) -> np.ndarray:
    ordered = sorted(reports, key=lambda r: r.client_id)
    target = np.zeros(ordered[0].logits.shape[1])
    for r in ordered:
        target = target + losses.softmax(r.row(index), temperature)
    return target / len(ordered)


def route_sample(
    server_logits: np.ndarray,
    label: int,
    pool: GlobalLogitPool,
    index: int,
    reliable_count: Optional[int],
    cfg: Optional[ProtocolConfig] = None,
) -> RoutingDecision:
    """Pick the loss branch for one public sample.

    ``reliable_count`` is the number of clients predicting ``label`` (``None``
    when clients have not been asked yet). Disabled branches fall through to
    cross-entropy only.
    """
    cfg = cfg or ProtocolConfig()
    if losses.predict(server_logits) == label:
        branch = Branch.SELF_TRAIN if cfg.self_train_on else Branch.CE_ONLY_FALLBACK
    elif index in pool:
        branch = Branch.SELF_DISTILL if cfg.self_distill_on else Branch.CE_ONLY_FALLBACK
    elif not cfg.ensemble_distill_on or reliable_count == 0:
        branch = Branch.CE_ONLY_FALLBACK
    else:
        branch = Branch.ENSEMBLE_DISTILL
    return RoutingDecision(branch, int(index))


# ---------- Client side ----------

def client_select(
    clients: Sequence[ClientState],
    indices: Sequence[int],
    public_x: np.ndarray,
    round_no: int,
    attack: Optional[AttackSpec] = None,
    attack_seed: int = 0,
) -> Tuple[List[ClientReport], Optional[AttackEvent]]:
    """Every client evaluates only the requested public indices."""
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        return [], None
    x = public_x[idx]
    reports = [
        ClientReport(c.client_id, round_no, idx, forward(c.model, x))
        for c in sorted(clients, key=lambda c: c.client_id)
    ]
    if attack is not None and attack.active:
        return apply_attack(reports, attack, round_no, attack_seed, client_count=len(clients))
    return reports, None


def client_train(
    client: ClientState,
    server_logits: Optional[np.ndarray],
    public_train: Dataset,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    public_pass: bool = True,
) -> ClientState:
    """One distillation pass over public train, then ``local_epochs`` of CE on the private shard.

    Until a server broadcast exists the public pass is plain cross-entropy.
    """
    opt = cfg.optimizer
    bs = cfg.protocol.batch_size
    c = public_train.class_count
    tm = client.trainable
    if public_pass:
        if server_logits is not None and server_logits.shape != (len(public_train), c):
            raise ProtocolError("server logits must cover the whole public train set")
        order = rng.permutation(len(public_train))
        for start in range(0, order.shape[0], bs):
            idx = order[start : start + bs]
            y = public_train.y[idx]
            if server_logits is None:
                spec = LossSpec.ce(y, c)
            else:
                targets = losses.softmax(server_logits[idx], opt.temperature)
                spec = LossSpec.composite(opt.kd_weight, y, targets, opt.temperature)
            _, grad, _ = forward_backward(tm.model, public_train.x[idx], spec)
            optimizer.apply(tm, grad, opt)

    if len(client.private_train) == 0:
        logger.warning(f"client {client.client_id}: empty private shard, local phase skipped")
        return client
    for _ in range(cfg.protocol.local_epochs):
        order = rng.permutation(len(client.private_train))
        for start in range(0, order.shape[0], bs):
            idx = order[start : start + bs]
            spec = LossSpec.ce(client.private_train.y[idx], c)
            _, grad, _ = forward_backward(tm.model, client.private_train.x[idx], spec)
            optimizer.apply(tm, grad, opt)
    return client


# ---------- Server side ----------

def server_round(
    server: ServerState,
    public_train: Dataset,
    clients: Sequence[ClientState],
    cfg: ExperimentConfig,
    round_no: int,
    rng: np.random.Generator,
) -> ServerRoundResult:
    pc = cfg.protocol
    opt = cfg.optimizer
    eps, temp = opt.kd_weight, opt.temperature
    n, c = len(public_train), public_train.class_count
    pool = server.pool
    if server.logits is None:
        server.logits = batch_logits(server.model, public_train.x, 1024)

    result = ServerRoundResult(uploads={cl.client_id: 0 for cl in clients})
    victims: set[int] = set()
    batch_losses: List[float] = []
    order = rng.permutation(n)
    for b, start in enumerate(range(0, n, pc.batch_size)):
        idx = order[start : start + pc.batch_size]
        x, y = public_train.x[idx], public_train.y[idx]
        z = forward(server.model, x)
        kd = np.ones(idx.shape[0])
        targets = np.zeros((idx.shape[0], c))

        if pc.mode == "standalone":
            for _ in idx:
                result.counts.add(Branch.CE_ONLY_FALLBACK)
        else:
            if pc.mode == "fedgem":
                need = idx
            else:
                correct = losses.predict(z) == y
                unpooled = np.array([i not in pool for i in idx], dtype=bool)
                need = idx[~correct & unpooled] if pc.ensemble_distill_on else idx[:0]
            reports, event = client_select(clients, need, public_train.x, round_no, cfg.attack, cfg.attack_seed)
            for r in reports:
                result.uploads[r.client_id] += int(r.indices.shape[0])
            if event is not None:
                victims.update(event.victims)
            asked = set(int(i) for i in need)

            for j, i in enumerate(idx):
                i = int(i)
                if pc.mode == "fedgem":
                    result.counts.add(Branch.ENSEMBLE_DISTILL)
                    kd[j] = eps
                    targets[j] = average_target(reports, i, temp)
                    continue
                reliable: List[int] = []
                if i in asked:
                    reliable, _ = classify_reliability(reports, int(y[j]), i)
                decision = route_sample(z[j], int(y[j]), pool, i, len(reliable) if i in asked else None, pc)
                result.counts.add(decision.branch)
                # the pool is the self-training memory; without self-training nothing is kept
                if pc.self_train_on and losses.predict(z[j]) == y[j]:
                    pool.store(i, z[j])
                if decision.branch is Branch.SELF_DISTILL:
                    kd[j] = eps
                    targets[j] = losses.softmax(pool.get(i), temp)
                elif decision.branch is Branch.ENSEMBLE_DISTILL:
                    weights = compute_weights(reports, i, reliable, temp)
                    kd[j] = eps
                    targets[j] = ensemble_target(reports, weights, temp)

        try:
            loss, grad, _ = forward_backward(server.model, x, LossSpec.mixed(y, kd, targets, temp))
        except CorruptLogitsError as e:
            raise DivergedLossError(round_no, b, float("nan")) from e
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergedLossError(round_no, b, loss)
        optimizer.apply(server.trainable, grad, opt)
        batch_losses.append(loss)

        # L_s[idx] <- f_s(W_s; x) after the step; newly correct logits overwrite the pool
        z_new = forward(server.model, x)
        server.logits[idx] = z_new
        if pc.mode == "fedgems" and pc.self_train_on:
            for j in np.flatnonzero(losses.predict(z_new) == y):
                pool.store(int(idx[j]), z_new[j])

    result.victims = tuple(sorted(victims))
    result.mean_loss = float(np.mean(batch_losses)) if batch_losses else 0.0
    logger.debug(
        f"round {round_no}: server loss {result.mean_loss:.4f}, pool {len(pool)}/{n}, "
        f"uplinked rows {sum(result.uploads.values())}"
    )
    return result


# ---------- Orchestration ----------

def _party_rng(seed: int, round_no: int, party: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_no, party])


def client_shards(cfg: ExperimentConfig, private: Dataset, plan: PartitionPlan) -> List[Tuple[int, Dataset, Dataset]]:
    """Each client's shard split into private train and private test."""
    shards = []
    for k in range(plan.client_count):
        shard = private.subset(plan.client_positions(k))
        train, test = split_shard(shard, cfg.seed + 7919 * (k + 1), cfg.split.train_test_ratio, k)
        shards.append((k, train, test))
    return shards


def build_federation(
    cfg: ExperimentConfig,
    public_train: Dataset,
    private: Dataset,
    plan: PartitionPlan,
) -> Tuple[ServerState, List[ClientState]]:
    d, c = public_train.input_dim, public_train.class_count
    server_model = Classifier.create(d, cfg.server_model.hidden_dim, c, _party_rng(cfg.seed, 0, 0))
    server = ServerState(TrainableModel(server_model), GlobalLogitPool(len(public_train), c))
    clients = []
    for k, train, test in client_shards(cfg, private, plan):
        model = Classifier.create(d, cfg.client_model(k).hidden_dim, c, _party_rng(cfg.seed, 0, k + 1))
        clients.append(ClientState(k, TrainableModel(model), train, test))
    return server, clients


def _client_scores(client: ClientState, public_test: Dataset) -> Tuple[float, float, float]:
    """(combined, public-only, private-only) accuracy; private is NaN for an empty test shard."""
    pred_pub = losses.predict(forward(client.model, public_test.x))
    hits_pub = int(np.sum(pred_pub == public_test.y))
    n_priv = len(client.private_test)
    hits_priv = 0
    if n_priv:
        hits_priv = int(np.sum(losses.predict(forward(client.model, client.private_test.x)) == client.private_test.y))
    combined = (hits_pub + hits_priv) / (len(public_test) + n_priv)
    private = hits_priv / n_priv if n_priv else float("nan")
    return combined, hits_pub / len(public_test), private


def run_experiment(
    cfg: ExperimentConfig,
    public_train: Dataset,
    public_test: Dataset,
    private: Dataset,
    plan: PartitionPlan,
    on_round: Optional[Callable[[RoundMetrics], None]] = None,
    workers: int = 1,
) -> ExperimentResult:
    pc = cfg.protocol
    server, clients = build_federation(cfg, public_train, private, plan)
    ledger = CommLedger(public_train.class_count)
    metrics: List[RoundMetrics] = []
    events: List[AttackEvent] = []
    n_pub = len(public_train)
    exchange = pc.mode != "standalone"
    logger.info(
        f"{cfg.name}: mode={pc.mode} K={plan.client_count} rounds={pc.rounds} "
        f"public_train={n_pub} attack={cfg.attack.kind}"
    )

    try:
        for t in range(1, pc.rounds + 1):
            broadcast = server.logits if (exchange and t > 1) else None
            jobs = [
                Worker(client_train, cl, broadcast, public_train, cfg, _party_rng(cfg.seed, t, cl.client_id + 1), exchange)
                for cl in clients
            ]
            for job in run_all(jobs, workers):
                if job.error is not None:
                    raise job.error

            res = server_round(server, public_train, clients, cfg, t, _party_rng(cfg.seed, t, 0))
            downlink = {cl.client_id: n_pub for cl in clients} if exchange else {}
            ledger.record_round(t, res.uploads if exchange else {}, downlink)
            if res.victims:
                events.append(AttackEvent(t, cfg.attack.kind, res.victims))

            scores = [_client_scores(cl, public_test) for cl in clients]
            combined = [s[0] for s in scores]
            private_scores = [s[2] for s in scores if not np.isnan(s[2])]
            row = RoundMetrics(
                round=t,
                server_acc=accuracy(server.model, public_test),
                client_acc_mean=float(np.mean(combined)),
                client_acc_min=float(np.min(combined)),
                client_acc_max=float(np.max(combined)),
                n_selftrain=res.counts.self_train,
                n_selfdistill=res.counts.self_distill,
                n_ensemble=res.counts.ensemble,
                n_fallback=res.counts.fallback,
                kb_up_cum=ledger.cumulative_up_kb,
                kb_down_cum=ledger.cumulative_down_kb,
                client_acc_public_mean=float(np.mean([s[1] for s in scores])),
                client_acc_private_mean=float(np.mean(private_scores)) if private_scores else float("nan"),
                client_acc_best=float(np.max(combined)),
                uploaded_logits=sum(res.uploads.values()) if exchange else 0,
                attack_kind=cfg.attack.kind if res.victims else "none",
                attack_victims=";".join(str(v) for v in res.victims),
            )
            metrics.append(row)
            if on_round is not None:
                on_round(row)
            logger.info(
                f"round {t}/{pc.rounds}: server={row.server_acc:.4f} clients={row.client_acc_mean:.4f} "
                f"[st={row.n_selftrain} sd={row.n_selfdistill} ed={row.n_ensemble} ce={row.n_fallback}] "
                f"up={row.kb_up_cum:.1f}KB down={row.kb_down_cum:.1f}KB"
            )
    except Exception as e:
        logger.error(f"{cfg.name}: aborted after {len(metrics)} rounds: {e}")
        raise ExperimentAborted(f"experiment aborted after {len(metrics)} rounds: {e}", metrics) from e

    return ExperimentResult(metrics, ledger, server, clients, events)
