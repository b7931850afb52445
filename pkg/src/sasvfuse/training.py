"""Deterministic minibatch training with dev-set model selection.

Shuffling uses a counter-based stream keyed by (seed, epoch), parameter
init by (seed, init-stream), and batch gradients reduce in fixed trial
order, so identical (config, data, seed) reproduce checkpoints
byte-for-byte.

Dev metrics are always computed on float32-quantized parameters — the
precision a checkpoint stores — so evaluating a saved checkpoint
reproduces the logged numbers exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import EmbeddingStore, MissingEmbeddingError, ScoreSet, TrialRecord
from .losses import LossConfig, combined_loss
from .metrics import eer_report, min_adcf
from .network import ModelParams, TrialBatch, backward_batch, forward_batch, init_params
from .rngs import STREAM_EPOCH_BASE, stream_rng

# Fixed scoring batch size shared by training-time dev evaluation and
# checkpoint scoring, keeping both bitwise identical.
SCORE_BATCH = 512

OPTIMIZERS = ("adam", "sgd")
SELECT_MODES = ("min_adcf", "final_epoch")


class NonFiniteError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 192
    learning_rate: float = 0.005
    seed: int = 0
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rho: float | str = 0.5  # frozen value in [0,1], or "trainable"
    hidden1: int = 384
    hidden2: int = 160
    loss: LossConfig = field(default_factory=LossConfig)
    select_on: str = "min_adcf"

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.select_on not in SELECT_MODES:
            raise ValueError(f"unknown select_on {self.select_on!r}")
        if self.rho != "trainable" and not 0.0 <= float(self.rho) <= 1.0:
            raise ValueError("frozen rho must lie in [0, 1]")
        self.loss.validate()


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_min_adcf: float
    dev_min_adcf_norm: float
    dev_sasv_eer: float


@dataclass
class TrainReport:
    epochs: list[EpochStats]
    best_epoch: int | None
    wall_time_s: float

    TSV_HEADER = "epoch\ttrain_loss\tdev_min_adcf\tdev_min_adcf_norm\tdev_sasv_eer"

    def to_tsv(self) -> str:
        # Wall time is intentionally excluded: the log must be a pure
        # function of (config, data, seed).
        lines = [self.TSV_HEADER]
        for row in self.epochs:
            lines.append(
                f"{row.epoch}\t{row.train_loss:.12g}\t{row.dev_min_adcf:.12g}"
                f"\t{row.dev_min_adcf_norm:.12g}\t{row.dev_sasv_eer:.12g}"
            )
        return "\n".join(lines) + "\n"


def make_batches(
    trials: list[TrialRecord], batch_size: int, seed: int, epoch: int
) -> list[list[TrialRecord]]:
    """Shuffle deterministically by (seed, epoch) and chunk; the last batch
    may be short."""
    if not trials:
        raise ValueError("no trials to batch")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    perm = stream_rng(seed, STREAM_EPOCH_BASE + epoch).permutation(len(trials))
    shuffled = [trials[i] for i in perm]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


def gather_batch(
    trials: list[TrialRecord], asv_store: EmbeddingStore, cm_store: EmbeddingStore
) -> tuple[TrialBatch, list[str]]:
    batch = TrialBatch(
        enr_asv=asv_store.matrix([t.enrol_id for t in trials]),
        tst_asv=asv_store.matrix([t.test_id for t in trials]),
        tst_cm=cm_store.matrix([t.test_id for t in trials]),
    )
    return batch, [t.label for t in trials]


def _score_chunks(trials, asv_store, cm_store, params):
    for i in range(0, len(trials), SCORE_BATCH):
        chunk = trials[i : i + SCORE_BATCH]
        batch, _ = gather_batch(chunk, asv_store, cm_store)
        yield forward_batch(batch, params)


def score_trials(
    trials: list[TrialRecord],
    asv_store: EmbeddingStore,
    cm_store: EmbeddingStore,
    params: ModelParams,
) -> ScoreSet:
    """Fused SASV score for every trial, in trial order."""
    if not trials:
        return ScoreSet([])
    sasv = np.concatenate([t.sasv for t in _score_chunks(trials, asv_store, cm_store, params)])
    return ScoreSet.from_trials(trials, sasv)


def score_trials_with_branches(
    trials: list[TrialRecord],
    asv_store: EmbeddingStore,
    cm_store: EmbeddingStore,
    params: ModelParams,
) -> tuple[ScoreSet, np.ndarray, np.ndarray]:
    """As score_trials, also returning the calibrated per-branch scores."""
    if not trials:
        return ScoreSet([]), np.empty(0), np.empty(0)
    traces = list(_score_chunks(trials, asv_store, cm_store, params))
    sasv = np.concatenate([t.sasv for t in traces])
    asv_cal = np.concatenate([t.asv_cal for t in traces])
    cm_cal = np.concatenate([t.cm_cal for t in traces])
    return ScoreSet.from_trials(trials, sasv), asv_cal, cm_cal


@dataclass
class OptimizerState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_optimizer_state(params: ModelParams, cfg: TrainConfig) -> OptimizerState:
    state = OptimizerState()
    if cfg.optimizer == "adam":
        for name, tensor in params.tensor_items():
            state.m[name] = np.zeros_like(tensor)
            state.v[name] = np.zeros_like(tensor)
    return state


def _apply_update(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
) -> None:
    lr = cfg.learning_rate
    if cfg.optimizer == "sgd":
        for name, tensor in params.tensor_items():
            tensor -= lr * grads[name]
        return
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, tensor in params.tensor_items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        tensor -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def train_step(
    params: ModelParams,
    opt_state: OptimizerState,
    batch: list[TrialRecord],
    asv_store: EmbeddingStore,
    cm_store: EmbeddingStore,
    cfg: TrainConfig,
) -> float:
    """One forward/backward/update over a batch; params update in place."""
    tensors, labels = gather_batch(batch, asv_store, cm_store)
    trace = forward_batch(tensors, params)
    loss, dscores, dtau = combined_loss(
        trace.sasv, labels, float(params.tau_soft[0]), cfg.loss
    )
    if not np.isfinite(loss):
        raise NonFiniteError(
            f"non-finite loss {loss} (batch of {len(batch)}, "
            f"score range [{trace.sasv.min()}, {trace.sasv.max()}])"
        )
    grads = backward_batch(trace, params, dscores)
    grads["tau_soft"] = grads["tau_soft"] + np.array([dtau])
    if params.rho_frozen is not None:
        grads["rho_raw"] = np.zeros(1)
    _apply_update(params, grads, opt_state, cfg)
    if not params.all_finite():
        bad = [name for name, t in params.tensor_items() if not np.all(np.isfinite(t))]
        raise NonFiniteError(f"non-finite parameters after update: {bad}")
    return loss


def _check_coverage(trials, asv_store, cm_store) -> None:
    for t in trials:
        for utt_id, store, name in (
            (t.enrol_id, asv_store, "ASV"),
            (t.test_id, asv_store, "ASV"),
            (t.test_id, cm_store, "CM"),
        ):
            if utt_id not in store:
                raise MissingEmbeddingError(
                    f"no {name} embedding for utterance id {utt_id!r}"
                )


def fit(
    train_trials: list[TrialRecord],
    dev_trials: list[TrialRecord],
    asv_store: EmbeddingStore,
    cm_store: EmbeddingStore,
    cfg: TrainConfig,
) -> tuple[ModelParams, TrainReport]:
    """Train for cfg.epochs, tracking dev min a-DCF after every epoch.

    Returns float32-quantized parameters (the checkpoint precision) for
    the selected epoch, plus the per-epoch report.
    """
    cfg.validate()
    if not train_trials:
        raise ValueError("empty training trial list")
    dev_labels = {t.label for t in dev_trials}
    if dev_labels != {"target", "nontarget", "spoof"}:
        raise ValueError(
            f"dev set must contain all three classes, has {sorted(dev_labels)}"
        )
    _check_coverage(train_trials, asv_store, cm_store)
    _check_coverage(dev_trials, asv_store, cm_store)

    t0 = time.perf_counter()
    params = init_params(
        d_asv=asv_store.dim,
        d_cm=cm_store.dim,
        hidden1=cfg.hidden1,
        hidden2=cfg.hidden2,
        seed=cfg.seed,
        rho=cfg.rho,
    )
    opt_state = init_optimizer_state(params, cfg)
    op = cfg.loss.operating_point

    rows: list[EpochStats] = []
    best_epoch: int | None = None
    best_value = np.inf
    best_params: ModelParams | None = None
    for epoch in range(1, cfg.epochs + 1):
        batches = make_batches(train_trials, cfg.batch_size, cfg.seed, epoch)
        total, count = 0.0, 0
        for batch in batches:
            loss = train_step(params, opt_state, batch, asv_store, cm_store, cfg)
            total += loss * len(batch)
            count += len(batch)
        snapshot = params.quantized()
        dev_scores = score_trials(dev_trials, asv_store, cm_store, snapshot)
        sweep = min_adcf(dev_scores, op)
        sasv_eer = eer_report(dev_scores)["sasv_eer"]
        rows.append(
            EpochStats(
                epoch=epoch,
                train_loss=total / count,
                dev_min_adcf=sweep.min_adcf,
                dev_min_adcf_norm=sweep.min_adcf_normalized,
                dev_sasv_eer=sasv_eer,
            )
        )
        if sweep.min_adcf_normalized < best_value:
            best_value = sweep.min_adcf_normalized
            best_epoch = epoch
            best_params = snapshot

    if cfg.select_on == "min_adcf" and best_params is not None:
        selected = best_params
    else:
        selected = params.quantized()
    report = TrainReport(
        epochs=rows, best_epoch=best_epoch, wall_time_s=time.perf_counter() - t0
    )
    return selected, report
