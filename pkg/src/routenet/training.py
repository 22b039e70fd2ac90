"""Training loop: Adam on the summed per-path NLL plus an L2 penalty."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff.optim import Adam
from .autodiff.tensor import backward, zero_grad
from .datasets import Sample, assemble, make_batches
from .model import FeatureScaling, ModelConfig, ModelParams, total_loss
from .rng import derive_seed

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    head: str = "normal-delay"
    steps: int = 20000
    batch_size: int = 16
    learning_rate: float = 1e-3
    weight_decay: float = 0.1
    dropout_rate: float = 0.5
    hidden_dim: int = 32
    iterations: int = 8
    readout_hidden: int = 32
    seed: int = 0
    val_every: int = 500
    patience: int | None = 10
    val_samples: int | None = 256

    @classmethod
    def paper(cls, head: str = "normal-delay", seed: int = 0) -> "TrainConfig":
        """Hyperparameters as published: 260k steps, no early stopping."""
        return cls(head=head, steps=260000, batch_size=16, learning_rate=1e-3, weight_decay=0.1,
                   dropout_rate=0.5, hidden_dim=32, iterations=8, readout_hidden=32, seed=seed,
                   patience=None, val_samples=None)

    def model_config(self, scaling: FeatureScaling) -> ModelConfig:
        return ModelConfig(self.hidden_dim, self.iterations, self.readout_hidden, self.dropout_rate,
                           self.head, True, scaling)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)
    best_step: int = 0
    best_val: float = float("inf")
    steps_run: int = 0

    def checkpoint_text(self, cfg: TrainConfig, dataset_fingerprint: str = "") -> str:
        meta = {"train": asdict(cfg), "best_step": self.best_step, "best_val": self.best_val,
                "steps_run": self.steps_run, "dataset": dataset_fingerprint,
                "init": "glorot-uniform weights, zero biases"}
        return self.params.to_text(meta)


def validation_loss(params: ModelParams, samples: Sequence[Sample], chunk: int = 64) -> float:
    total = 0.0
    for i in range(0, len(samples), chunk):
        batch = assemble(samples[i:i + chunk])
        total += total_loss(params, batch.graph, batch.targets).item()
    return total / max(len(samples), 1)


def train(cfg: TrainConfig, train_set: Sequence[Sample], val_set: Sequence[Sample] = (),
          nan_dump: str | Path | None = None) -> TrainResult:
    if not train_set:
        raise ValueError("empty training set")
    scaling = FeatureScaling.fit([s.graph for s in train_set])
    params = ModelParams.init(cfg.model_config(scaling), derive_seed(cfg.seed, 0))
    tensors = params.tensors()
    opt = Adam(tensors, lr=cfg.learning_rate)
    val = list(val_set)[: cfg.val_samples] if cfg.val_samples else list(val_set)
    result = TrainResult(params.copy())
    if val:
        result.best_val = validation_loss(params, val)
    batches = make_batches(train_set, cfg.batch_size, derive_seed(cfg.seed, 1))
    bad_checks = 0
    started = time.time()
    for step in range(1, cfg.steps + 1):
        batch = next(batches)
        loss = total_loss(params, batch.graph, batch.targets, cfg.weight_decay, train=True,
                          seed=derive_seed(cfg.seed, 2, step))
        value = loss.item()
        if not np.isfinite(value):
            info = {"step": step, "batch": [int(i) for i in batch.indices], "loss": repr(value)}
            if nan_dump is not None:
                Path(nan_dump).write_text(json.dumps(info), encoding="utf-8")
            raise TrainingAborted(f"non-finite loss at step {step}, batch {info['batch']}")
        grads = backward(loss, tensors)
        zero_grad(tensors)
        opt.step(grads)
        result.steps_run = step
        if step % cfg.val_every == 0 or step == cfg.steps:
            entry = {"step": step, "train_loss": value / len(batch.indices),
                     "elapsed": round(time.time() - started, 2)}
            if val:
                v = validation_loss(params, val)
                entry["val_loss"] = v
                if v < result.best_val:
                    result.best_val, result.best_step = v, step
                    result.params = params.copy()
                    bad_checks = 0
                else:
                    bad_checks += 1
            else:
                result.params = params.copy()
                result.best_step = step
            result.history.append(entry)
            log.info("step %d %s", step, entry)
            if cfg.patience is not None and val and bad_checks >= cfg.patience:
                log.info("early stop at step %d (best %d)", step, result.best_step)
                break
    return result


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    return ModelParams.from_text(Path(path).read_text(encoding="utf-8"))
