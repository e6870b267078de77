"""The two training procedures: pretraining on labeled data and DCM
fine-tuning against an uncertainty set, plus the validation-partition
variant for selective classification and the transductive shortcut.

Every trainer is a pure function of (inputs, cfg.seed): model copies are
made up front, and each randomness consumer owns a separate stream derived
from the seed, so changing lambda or the uncertainty contents never
changes which ID batches are drawn.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .datagen import LabeledDataset, concat
from .errors import ConfigError
from .losses import dcm_objective
from .netcore import Batch, MlpModel, backward, sgd_step
from .scoring import predictions

# RNG stream ids, hashed with cfg.seed; 0 is reserved for model init
STREAM_INIT = 0
_S_PRETRAIN = 1
_S_FT_ID = 2
_S_FT_UNC = 3


class EmptyErrorSetWarning(UserWarning):
    """Raised (as a warning) when finetune_sc finds no validation errors."""


@dataclass
class DcmConfig:
    """Everything that determines a training run."""

    lam: float = 0.5
    pretrain_epochs: int = 200
    finetune_epochs: int = 20
    lr_pretrain: float = 0.1
    lr_finetune: float = 0.05
    batch_id: int = 32
    batch_unc: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        for name in ("pretrain_epochs", "finetune_epochs", "batch_id", "batch_unc"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lr_pretrain", "lr_finetune"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        self.seed = int(self.seed)

    def with_seed(self, seed: int) -> "DcmConfig":
        return replace(self, seed=int(seed))


class IndexCycler:
    """Endless stream of index batches of an exact size.

    Draws a fresh permutation whenever the pool runs low, so every example
    appears once per cycle and batches never straddle a size change.
    """

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        if n <= 0:
            raise ConfigError("cannot cycle over an empty index range")
        self._n = n
        self._batch = batch
        self._rng = rng
        self._buffer = np.zeros(0, dtype=np.int64)

    def next_batch(self) -> np.ndarray:
        while self._buffer.size < self._batch:
            self._buffer = np.concatenate([self._buffer, self._rng.permutation(self._n)])
        out, self._buffer = self._buffer[: self._batch], self._buffer[self._batch :]
        return out


def pretrain(
    init: MlpModel,
    train: LabeledDataset,
    cfg: DcmConfig,
    history: list | None = None,
) -> MlpModel:
    """Mini-batch SGD on the cross-entropy loss; returns a new model.

    One epoch is one shuffled pass over the training set, final partial
    batch included.  Appends per-epoch mean loss to history when given.
    """
    if len(train) == 0:
        raise ConfigError("pretraining needs a nonempty training set")
    if int(train.labels.max()) >= init.n_classes:
        raise ConfigError(
            f"training labels reach {int(train.labels.max())}, "
            f"model has {init.n_classes} outputs"
        )
    model = init.copy()
    rng = np.random.default_rng([cfg.seed, _S_PRETRAIN])
    n = len(train)
    for _ in range(cfg.pretrain_epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_id):
            idx = perm[start : start + cfg.batch_id]
            loss, grads = backward(
                model, Batch(train.features[idx], train.labels[idx])
            )
            sgd_step(model, grads, cfg.lr_pretrain)
            losses.append(loss)
        if history is not None:
            history.append(float(np.mean(losses)))
    return model


def finetune_ood(
    model: MlpModel,
    train: LabeledDataset,
    unlabeled,
    cfg: DcmConfig,
    history: list | None = None,
) -> MlpModel:
    """Detection fine-tuning: each step pairs one ID batch with one
    uncertainty batch and applies the combined objective gradient.

    An epoch is one shuffled pass over the uncertainty set; the ID stream
    cycles independently.  Returns a new model.
    """
    unc = np.ascontiguousarray(unlabeled, dtype=np.float64)
    if unc.ndim != 2 or unc.shape[0] == 0:
        raise ConfigError("fine-tuning needs a nonempty unlabeled feature matrix")
    if len(train) == 0:
        raise ConfigError("fine-tuning needs a nonempty ID training set")
    out = model.copy()
    id_cycler = IndexCycler(
        len(train), cfg.batch_id, np.random.default_rng([cfg.seed, _S_FT_ID])
    )
    rng_unc = np.random.default_rng([cfg.seed, _S_FT_UNC])
    n_unc = unc.shape[0]
    for _ in range(cfg.finetune_epochs):
        perm = rng_unc.permutation(n_unc)
        losses = []
        for start in range(0, n_unc, cfg.batch_unc):
            unc_idx = perm[start : start + cfg.batch_unc]
            id_idx = id_cycler.next_batch()
            loss, grads = dcm_objective(
                out,
                Batch(train.features[id_idx], train.labels[id_idx]),
                unc[unc_idx],
                cfg.lam,
            )
            sgd_step(out, grads, cfg.lr_finetune)
            losses.append(loss)
        if history is not None:
            history.append(float(np.mean(losses)))
    return out


@dataclass
class ValPartition:
    """Validation set split by the model's own argmax predictions."""

    correct: LabeledDataset
    error: LabeledDataset


def partition_val(model: MlpModel, val: LabeledDataset) -> ValPartition:
    """Exact split of val into correctly and incorrectly predicted examples."""
    if len(val) == 0:
        raise ConfigError("cannot partition an empty validation set")
    preds = predictions(model, val.features)
    hit = preds == val.labels
    return ValPartition(
        correct=val.subset(np.flatnonzero(hit)),
        error=val.subset(np.flatnonzero(~hit)),
    )


def finetune_sc(
    model: MlpModel,
    train: LabeledDataset,
    val: LabeledDataset,
    cfg: DcmConfig,
    history: list | None = None,
) -> MlpModel:
    """Selective-classification fine-tuning: fit train plus the correctly
    predicted validation examples, minimizing confidence on the
    misclassified ones.

    A model with no validation errors has nothing to be uncertain about:
    the input model is returned unchanged (as a copy) and an
    EmptyErrorSetWarning is emitted.
    """
    part = partition_val(model, val)
    if len(part.error) == 0:
        warnings.warn(
            "validation error set is empty; skipping confidence fine-tuning",
            EmptyErrorSetWarning,
            stacklevel=2,
        )
        return model.copy()
    ft_set = concat([train, part.correct]) if len(part.correct) else train
    return finetune_ood(model, ft_set, part.error.features, cfg, history=history)


def finetune_transductive(
    model: MlpModel,
    train: LabeledDataset,
    test_features,
    cfg: DcmConfig,
    history: list | None = None,
) -> MlpModel:
    """Uncertainty dataset = the test set itself; delegates to finetune_ood."""
    return finetune_ood(model, train, test_features, cfg, history=history)


def n_finetune_steps(n_unc: int, cfg: DcmConfig) -> int:
    """Steps per fine-tuning epoch: one per uncertainty batch."""
    return math.ceil(n_unc / cfg.batch_unc)
