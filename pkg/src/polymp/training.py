"""Optimization loop (Adam, plateau decay, early stopping), metrics, reports.

Training is single-threaded and bit-reproducible for a fixed (seed, dataset,
config): shuffling, validation split and initialization all flow from seeded
generators. The epoch log carries a `seconds` column that is written as
0.000 by default so logs stay byte-reproducible; set POLY_LOG_TIMING=1 to
record wall-clock times instead (which breaks byte-identity between runs).
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .errors import (
    EmptyDataset,
    IncompatibleBackbone,
    LabelOutOfRange,
    MissingGradient,
)
from .geometry import TransformTag
from .models import (
    ModelParams,
    default_max_seq_len,
    forward_logits,
    make_seq_batch,
    with_new_head,
    _param_shapes,
)

TAG_ORDER = ("O", "R", "SC", "SH")


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 64
    max_epochs: int = 100
    plateau_patience: int = 25
    plateau_factor: float = 10.0
    early_stop_patience: int = 50
    min_delta: float = 1e-4
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.lr, self.batch_size) <= 0 or self.max_epochs < 0:
            raise ValueError("lr and batch_size must be positive, max_epochs >= 0")
        if self.plateau_factor <= 1:
            raise ValueError(f"plateau_factor must be > 1, got {self.plateau_factor}")


# --- optimizer -------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment estimates per parameter tensor."""

    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.named.items()},
            v={k: np.zeros_like(p.data) for k, p in params.named.items()},
        )


def adam_step(params: ModelParams, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, in place; requires populated gradients."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.named.items():
        if p.grad is None:
            raise MissingGradient(f"no gradient for parameter {name!r}")
        g = p.grad
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# --- schedules -------------------------------------------------------------------

class PlateauScheduler:
    """Divide the learning rate by `factor` after `patience` epochs without a
    loss improvement of more than `min_delta`; the counter resets after each
    reduction."""

    def __init__(self, lr: float, patience: int = 25, factor: float = 10.0,
                 min_delta: float = 1e-4):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.min_delta = min_delta
        self.best = math.inf
        self.stale = 0

    def step(self, loss: float) -> float:
        if loss < self.best - self.min_delta:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr /= self.factor
                self.stale = 0
        return self.lr


def lr_on_plateau(history, lr: float, patience: int = 25, factor: float = 10.0,
                  min_delta: float = 1e-4) -> float:
    """Learning rate after replaying `history` of epoch losses from `lr`."""
    if not len(history):
        raise ValueError("history must be nonempty")
    sched = PlateauScheduler(lr, patience, factor, min_delta)
    for loss in history:
        sched.step(float(loss))
    return sched.lr


def early_stop(history, patience: int = 50, min_delta: float = 1e-4) -> bool:
    """True iff the last improvement (> min_delta) is at least `patience`
    epochs in the past."""
    if not len(history):
        raise ValueError("history must be nonempty")
    best = math.inf
    stale = 0
    for loss in history:
        if loss < best - min_delta:
            best = float(loss)
            stale = 0
        else:
            stale += 1
    return stale >= patience


# --- data plumbing ---------------------------------------------------------------

def _as_samples(data):
    samples = list(data.samples) if hasattr(data, "samples") else list(data)
    if not samples:
        raise EmptyDataset("no samples")
    return samples


def _check_labels(samples, n_classes: int) -> None:
    bad = [s.id for s in samples if not 0 <= s.label < n_classes]
    if bad:
        raise LabelOutOfRange(f"labels outside 0..{n_classes - 1} for samples {bad[:5]}")


def _stratified_split(samples, fraction: float, rng):
    """(train, val) with ~fraction of each class in val, at least 1 kept in train."""
    if fraction <= 0:
        return samples, []
    by_class: dict = {}
    for i, s in enumerate(samples):
        by_class.setdefault(s.label, []).append(i)
    val_idx = set()
    for label in sorted(by_class):
        idxs = by_class[label]
        k = int(round(fraction * len(idxs)))
        k = min(k, len(idxs) - 1)
        if k <= 0:
            continue
        chosen = rng.choice(len(idxs), size=k, replace=False)
        val_idx.update(idxs[int(c)] for c in chosen)
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def _batch_loss(params: ModelParams, samples) -> T.Tensor:
    graphs = [s.graph for s in samples]
    labels = np.array([s.label for s in samples], dtype=np.int64)
    logits = forward_logits(params, graphs)
    return T.softmax_cross_entropy(logits, labels)


def _mean_loss(params: ModelParams, samples, chunk: int = 256) -> float:
    total = 0.0
    with T.no_grad():
        for at in range(0, len(samples), chunk):
            part = samples[at : at + chunk]
            total += float(_batch_loss(params, part).data) * len(part)
    return total / len(samples)


# --- training loop ---------------------------------------------------------------

def train(params: ModelParams, train_data, val_data=None,
          cfg: TrainConfig | None = None, log_fn=None):
    """Mini-batch training with Adam, plateau LR decay and early stopping.

    Returns (params, epoch_log). The parameter set is updated in place and,
    when a validation split exists, restored to the best-validation epoch at
    the end. epoch_log is a list of dicts with keys epoch, train_loss,
    val_loss, lr, seconds.
    """
    cfg = cfg or TrainConfig()
    train_samples = _as_samples(train_data)
    n_classes = params.config.n_classes
    _check_labels(train_samples, n_classes)

    if val_data is not None:
        val_samples = list(val_data.samples) if hasattr(val_data, "samples") else list(val_data)
        _check_labels(val_samples, n_classes)
    else:
        split_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 11)))
        train_samples, val_samples = _stratified_split(train_samples,
                                                       cfg.val_fraction, split_rng)

    if params.arch == "veercnn":
        counts = [s.graph.n for s in train_samples]
        max_len = default_max_seq_len(counts)
        params.config = replace(params.config, max_seq_len=max_len)
        _, _, truncated = make_seq_batch([s.graph for s in train_samples], max_len)
        if truncated and log_fn:
            log_fn(f"warning: {truncated} training sequences truncated to {max_len}")

    state = AdamState.for_params(params)
    sched = PlateauScheduler(cfg.lr, cfg.plateau_patience, cfg.plateau_factor,
                             cfg.min_delta)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 12)))

    log: list[dict] = []
    monitor_history: list[float] = []
    best_monitor = math.inf
    best_snapshot = None
    lr = cfg.lr

    for epoch in range(1, cfg.max_epochs + 1):
        tic = time.perf_counter()
        order = shuffle_rng.permutation(len(train_samples))
        total, seen = 0.0, 0
        for at in range(0, len(order), cfg.batch_size):
            batch = [train_samples[i] for i in order[at : at + cfg.batch_size]]
            loss = _batch_loss(params, batch)
            T.backward(loss)
            adam_step(params, state, lr)
            params.zero_grads()
            total += float(loss.data) * len(batch)
            seen += len(batch)
        train_loss = total / seen
        val_loss = _mean_loss(params, val_samples) if val_samples else train_loss

        monitor = val_loss
        monitor_history.append(monitor)
        lr = sched.step(monitor)
        entry = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                 "lr": lr, "seconds": time.perf_counter() - tic}
        log.append(entry)
        if log_fn:
            log_fn(f"epoch {epoch:3d}  train {train_loss:.4f}  val {val_loss:.4f}  lr {lr:g}")

        if monitor < best_monitor - cfg.min_delta:
            best_monitor = monitor
            best_snapshot = {k: p.data.copy() for k, p in params.named.items()}
        if early_stop(monitor_history, cfg.early_stop_patience, cfg.min_delta):
            if log_fn:
                log_fn(f"early stop at epoch {epoch}")
            break

    if best_snapshot is not None and val_samples:
        for k, p in params.named.items():
            p.data = best_snapshot[k]
    return params, log


def fine_tune(pretrained: ModelParams, train_data, val_data=None,
              cfg: TrainConfig | None = None, n_classes: int | None = None,
              log_fn=None):
    """Continue training on a new label space: the classifier head is freshly
    initialized for `n_classes`, feature layers start from `pretrained`, and
    every layer stays trainable."""
    cfg = cfg or TrainConfig()
    samples = _as_samples(train_data)
    if n_classes is None:
        n_classes = max(s.label for s in samples) + 1
    fresh = with_new_head(pretrained, n_classes, seed=cfg.seed)
    backbone = {k: v for k, v in _param_shapes(fresh.config).items()
                if not k.startswith("head.")}
    for name, shape in backbone.items():
        if name not in pretrained.named or pretrained.named[name].data.shape != shape:
            raise IncompatibleBackbone(f"feature layer {name!r} missing or misshaped")
    if cfg.max_epochs == 0:
        return fresh, []
    return train(fresh, train_data, val_data, cfg, log_fn=log_fn)


# --- evaluation ------------------------------------------------------------------

@dataclass
class EvalReport:
    overall: float
    per_tag: dict
    tag_counts: dict
    confusion: list
    n_samples: int
    n_classes: int
    model: str = ""
    trans_ratio: str = ""
    extras: dict = field(default_factory=dict)

    def csv_row(self) -> str:
        def fmt(code: str) -> str:
            acc = self.per_tag.get(code)
            return "" if acc is None else f"{acc:.4f}"

        cells = [self.model, self.trans_ratio] + [fmt(c) for c in TAG_ORDER]
        cells.append(f"{self.overall:.4f}")
        return ",".join(cells)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "trans_ratio": self.trans_ratio,
            "overall": self.overall,
            "per_tag": self.per_tag,
            "tag_counts": self.tag_counts,
            "confusion": self.confusion,
            "n_samples": self.n_samples,
            "n_classes": self.n_classes,
            **self.extras,
        }


EVAL_CSV_HEADER = "model,trans_ratio,acc_O,acc_R,acc_SC,acc_SH,OA"


def predict(params: ModelParams, samples, chunk: int = 256) -> np.ndarray:
    """Argmax-logit class prediction per sample."""
    preds = np.empty(len(samples), dtype=np.int64)
    with T.no_grad():
        for at in range(0, len(samples), chunk):
            part = samples[at : at + chunk]
            logits = forward_logits(params, [s.graph for s in part])
            preds[at : at + len(part)] = np.argmax(logits.data, axis=1)
    return preds


def evaluate(params: ModelParams, test_data, model: str = "",
             trans_ratio: str = "") -> EvalReport:
    """Accuracy per transform tag, overall accuracy, and a confusion matrix."""
    samples = _as_samples(test_data)
    n_classes = params.config.n_classes
    _check_labels(samples, n_classes)
    preds = predict(params, samples)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    correct = preds == labels

    per_tag: dict = {}
    tag_counts: dict = {}
    for code in TAG_ORDER:
        mask = np.array([s.transform.code == code for s in samples])
        tag_counts[code] = int(mask.sum())
        per_tag[code] = float(correct[mask].mean()) if mask.any() else None

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    return EvalReport(
        overall=float(correct.mean()),
        per_tag=per_tag,
        tag_counts=tag_counts,
        confusion=confusion.tolist(),
        n_samples=len(samples),
        n_classes=n_classes,
        model=model or params.arch,
        trans_ratio=trans_ratio,
    )


# --- epoch log io ---------------------------------------------------------------

EPOCH_CSV_HEADER = "epoch,train_loss,val_loss,lr,seconds"


def write_epoch_log(log, path: str, timing: bool | None = None) -> None:
    """CSV epoch log. The seconds column defaults to 0.000 so repeated runs
    are byte-identical; POLY_LOG_TIMING=1 writes measured wall time."""
    if timing is None:
        timing = os.environ.get("POLY_LOG_TIMING", "") == "1"
    with open(path, "w") as f:
        f.write(EPOCH_CSV_HEADER + "\n")
        for e in log:
            secs = f"{e['seconds']:.3f}" if timing else "0.000"
            f.write(f"{e['epoch']},{e['train_loss']!r},{e['val_loss']!r},"
                    f"{e['lr']!r},{secs}\n")
