"""Mini-batch training with class-weighted cross-entropy, Adam and early stopping."""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .errors import ConfigurationError, DataError, NumericError, TrainingDivergedError
from .models import load_state, model_state, save_checkpoint
from .preprocess import TASKS, WindowedSet, class_weights, task_targets

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 2000
    learning_rate: float = 3e-4
    max_epochs: int = 100
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    task: str = "epr"
    class_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("max_epochs and patience must be >= 1")
        if self.task not in TASKS:
            raise ConfigurationError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))

    @property
    def num_classes(self) -> int:
        return 3 if self.task == "multiclass" else 2

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


DESK = TrainConfig(batch_size=256, learning_rate=2e-3, max_epochs=40, patience=8)


def weighted_cross_entropy(logits: Tensor, targets: np.ndarray, weights) -> Tensor:
    """Mean over all node-targets of ``-w_y log softmax(logits)_y``."""
    C = logits.shape[-1]
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise DataError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= C):
        raise DataError(f"target indices must lie in [0, {C}), got range [{targets.min()}, {targets.max()}]")
    w = np.asarray(weights, dtype=np.float64)
    onehot = np.eye(C)[targets]
    picked = (ad.log_softmax(logits, axis=-1) * Tensor(onehot)).sum(axis=-1)
    return (picked * Tensor(w[targets])).mean() * -1.0


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    epochs_run: int = 0
    class_weights: list[float] = field(default_factory=list)
    checkpoint_path: str | None = None
    wall_time_s: float = 0.0

    def to_json(self) -> str:
        # wall time stays out of the file so reruns are byte-identical
        d = asdict(self)
        d.pop("wall_time_s")
        return json.dumps(d, indent=2, sort_keys=True)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rep, csv = out / "report.json", out / "losses.csv"
        rep.write_text(self.to_json() + "\n")
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{i},{tr:.17g},{va:.17g}" for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss))]
        csv.write_text("\n".join(lines) + "\n")
        return {"report": rep, "losses": csv}


def evaluate_loss(model, ws: WindowedSet, task: str, weights, chunk: int = 4096) -> float:
    model.eval()
    targets = ws.targets(task)
    total = 0.0
    with no_grad():
        for i in range(0, len(ws), chunk):
            x = Tensor(ws.inputs[i : i + chunk])
            loss = weighted_cross_entropy(model.logits(x), targets[i : i + chunk], weights)
            total += loss.item() * len(x)
    return total / max(len(ws), 1)


def _param_norms(model) -> dict[str, float]:
    return {name: float(np.linalg.norm(p.data)) for name, p in model.named_parameters()}


def train(model, datasets: dict[str, WindowedSet], cfg: TrainConfig, checkpoint_path=None) -> TrainReport:
    """Fit ``model`` on ``datasets['train']`` with early stopping on ``datasets['val']``.

    The parameters of the epoch with the lowest validation loss are restored
    before returning (and written to ``checkpoint_path`` when given).
    """
    train_set, val_set = datasets["train"], datasets["val"]
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training needs non-empty train and validation sets")
    if model.config.num_classes != cfg.num_classes:
        raise ConfigurationError(
            f"model has {model.config.num_classes} classes but task {cfg.task!r} needs {cfg.num_classes}"
        )
    targets = train_set.targets(cfg.task)
    if cfg.class_weights is not None:
        weights = np.asarray(cfg.class_weights, dtype=np.float64)
        if weights.shape != (cfg.num_classes,):
            raise ConfigurationError(f"class_weights must have {cfg.num_classes} entries")
    else:
        weights = class_weights(targets, cfg.num_classes).weights
    n = len(train_set)
    batch_size = cfg.batch_size
    if batch_size > n:
        log.warning("batch size %d exceeds %d training samples; using %d", batch_size, n, n)
        batch_size = n

    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    params = model.parameters()
    state = AdamState.zeros_like([p.data for p in params])
    report = TrainReport(class_weights=[float(w) for w in weights])
    best_state = copy.deepcopy(model_state(model))
    stale = 0
    started = time.perf_counter()

    for epoch in range(cfg.max_epochs):
        model.train()
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, batch_size)):
            idx = perm[start : start + batch_size]
            if len(idx) < 2 and n >= 2:
                continue  # batch norm needs two samples
            model.zero_grad()
            try:
                loss = weighted_cross_entropy(model.logits(Tensor(train_set.inputs[idx]), dropout_rng), targets[idx], weights)
                value = loss.item()
            except NumericError:
                value = float("nan")
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b}",
                    {"epoch": epoch, "batch": b, "param_norms": _param_norms(model)},
                )
            loss.backward()
            adam_step([p.data for p in params], [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params],
                      state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
            epoch_loss += value * len(idx)
        report.train_loss.append(epoch_loss / n)
        val = evaluate_loss(model, val_set, cfg.task, weights)
        report.val_loss.append(val)
        report.epochs_run = epoch + 1
        log.info("epoch %d train %.5f val %.5f", epoch, report.train_loss[-1], val)
        if val < report.best_val_loss:
            report.best_val_loss = val
            report.best_epoch = epoch
            best_state = copy.deepcopy(model_state(model))
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    load_state(model, best_state)
    model.eval()
    report.wall_time_s = time.perf_counter() - started
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
        report.checkpoint_path = str(checkpoint_path)
    return report
