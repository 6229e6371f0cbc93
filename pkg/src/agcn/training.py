"""Loss, optimizers and the epoch loop.

The objective is mean clamped cross-entropy over subgraph examples plus an
optional L2 penalty. Batch gradients are averaged (not summed) so the
learning rate is stable under batch-size changes. Everything downstream of
the seed is deterministic: the validation split, the per-epoch shuffle and
the fixed-order gradient accumulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedLoss, SingleClassDataset
from .evaluation import auc
from .extraction import TrainingExample
from .model import merge_compiled
from .tensor import Tape

PROB_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"            # "adam" or "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    l2_weight: float = 0.0
    seed: int = 0
    neg_ratio: float = 1.0             # used by dataset builders, echoed here
    early_stop_patience: int = 0       # 0 disables early stopping
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def bce_loss(prob: float, label: int) -> float:
    """Cross-entropy of one prediction, clamped away from log(0)."""
    p = min(max(prob, PROB_EPS), 1.0 - PROB_EPS)
    return -(label * math.log(p) + (1 - label) * math.log(1.0 - p))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_auc: float


@dataclass
class TrainResult:
    trace: list[EpochStats] = field(default_factory=list)
    stopped_early: bool = False
    best_val_auc: float = float("nan")


def stratified_split(labels: list[int], fraction: float,
                     rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Per-label shuffled split; returns (train indices, validation indices).

    A label whose validation share rounds to zero keeps all its examples in
    train (validation is then skipped by the caller if one-sided).
    """
    train_idx, val_idx = [], []
    for lbl in sorted(set(labels)):
        members = [k for k, y in enumerate(labels) if y == lbl]
        members = [members[p] for p in rng.permutation(len(members))]
        n_val = int(round(fraction * len(members)))
        val_idx += members[:n_val]
        train_idx += members[n_val:]
    return sorted(train_idx), sorted(val_idx)


class _Optimizer:
    def __init__(self, cfg: TrainConfig, params: list[tuple[str, np.ndarray]]):
        self.cfg = cfg
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in params}
        self.v = {name: np.zeros_like(a) for name, a in params}

    def step(self, params: list[tuple[str, np.ndarray]],
             grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        for name, arr in params:
            g = grads[name]
            if cfg.l2_weight:
                g = g + cfg.l2_weight * arr
            if cfg.optimizer == "sgd":
                arr -= cfg.learning_rate * g
            else:
                m = self.m[name]
                v = self.v[name]
                m *= cfg.adam_beta1
                m += (1 - cfg.adam_beta1) * g
                v *= cfg.adam_beta2
                v += (1 - cfg.adam_beta2) * (g * g)
                m_hat = m / (1 - cfg.adam_beta1 ** self.t)
                v_hat = v / (1 - cfg.adam_beta2 ** self.t)
                arr -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def train(dataset: list[TrainingExample], model, cfg: TrainConfig) -> TrainResult:
    """Mini-batch training of any model exposing compile / loss_on_tape /
    named_params / predict_proba. Parameters are updated in place."""
    if not dataset:
        raise SingleClassDataset("empty dataset")
    labels = [ex.label for ex in dataset]
    if len(set(labels)) < 2:
        raise SingleClassDataset(f"dataset holds only label {labels[0]}")

    rng = np.random.default_rng([cfg.seed & 0x7FFFFFFF, 0x7E])
    train_idx, val_idx = stratified_split(labels, cfg.val_fraction, rng)
    val_labels = [labels[k] for k in val_idx]
    if len(set(val_labels)) < 2:
        val_idx, val_labels = [], []
        train_idx = list(range(len(dataset)))

    compiled = {k: model.compile(dataset[k].sub, dataset[k].bundle,
                                 label=dataset[k].label)
                for k in range(len(dataset))}
    params = model.named_params()
    opt = _Optimizer(cfg, params)
    result = TrainResult()
    best_auc, best_epoch = -np.inf, -1

    for epoch in range(cfg.epochs):
        order = [train_idx[p] for p in rng.permutation(len(train_idx))]
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            # one tape per batch: the disjoint-union graph of the batch
            # members, so accumulation order is fixed by batch order
            tape = Tape()
            merged = merge_compiled([compiled[k] for k in batch])
            loss_slot, _, param_slots = model.loss_on_tape(tape, merged)
            batch_loss = float(loss_slot.value[0, 0])
            if not math.isfinite(batch_loss):
                raise DivergedLoss(epoch)
            tape.backward(loss_slot)
            grads = {name: param_slots[name].grad for name, _ in params}
            opt.step(params, grads)
            if any(not np.all(np.isfinite(arr)) for _, arr in params):
                raise DivergedLoss(epoch, "parameters became non-finite")
            epoch_loss += batch_loss
            n_batches += 1

        val_auc = float("nan")
        if val_idx:
            scores = model.predict_batch([compiled[k] for k in val_idx])
            val_auc = auc(scores, val_labels)
        result.trace.append(EpochStats(epoch=epoch,
                                       train_loss=epoch_loss / max(n_batches, 1),
                                       val_auc=val_auc))

        if val_idx and math.isfinite(val_auc):
            if val_auc > best_auc:
                best_auc, best_epoch = val_auc, epoch
            elif cfg.early_stop_patience > 0 and \
                    epoch - best_epoch >= cfg.early_stop_patience:
                result.stopped_early = True
                break

    result.best_val_auc = best_auc if best_epoch >= 0 else float("nan")
    return result
