"""The three loss terms: training cross-entropy, uniform-target confidence
loss, and their weighted combination.

Loss values are plain nonnegative floats in nats.  The confidence loss is
the cross-entropy of the prediction against the uniform distribution, so it
equals ln C plus KL(uniform || prediction) and is minimized exactly at the
uniform prediction.
"""

from __future__ import annotations

import numpy as np

from ._backend import kernels
from .errors import EmptyInputError, NumericError, ShapeError
from .netcore import Batch, GradientSet, MlpModel, backward

LOG_CLAMP = kernels.LOG_CLAMP

# probability rows must sum to 1 this closely
_ROW_TOL = 1e-9


def _check_probs(probs) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"probs must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInputError("empty batch of probabilities")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise NumericError("probs rows must be finite and nonnegative")
    if np.any(np.abs(arr.sum(axis=1) - 1.0) > _ROW_TOL):
        raise NumericError("probs rows must sum to 1")
    return arr


def xent_loss(probs, labels) -> float:
    """Mean over examples of -log p[i, label_i], clamped at 1e-12."""
    arr = _check_probs(probs)
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.shape[0] != arr.shape[0]:
        raise ShapeError(
            f"labels shape {lab.shape} does not match {arr.shape[0]} probability rows"
        )
    if lab.size and (lab.min() < 0 or lab.max() >= arr.shape[1]):
        raise IndexError(f"label out of range for {arr.shape[1]} classes")
    picked = arr[np.arange(arr.shape[0]), lab.astype(np.int64)]
    return float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))


def conf_loss(probs) -> float:
    """Mean over examples of -(1/C) * sum_i log p_i, clamped at 1e-12.

    Per example this is ln C + KL(U || p): minimized, at ln C, exactly when
    p is uniform.
    """
    arr = _check_probs(probs)
    logs = np.log(np.maximum(arr, LOG_CLAMP))
    return float(np.mean(-logs.mean(axis=1)))


def dcm_objective(
    model: MlpModel, ft_batch: Batch, unc_inputs, lam: float
) -> tuple[float, GradientSet]:
    """Loss and gradients of xent(ft_batch) + lam * conf(unc_inputs).

    The confidence pass is a cross-entropy backward against uniform target
    rows, so its logit gradient is softmax - 1/C.  An empty uncertainty
    batch is legal and contributes nothing.
    """
    if lam < 0:
        raise NumericError(f"lambda must be nonnegative, got {lam}")
    loss, grads = backward(model, ft_batch)
    if unc_inputs is None:
        return loss, grads
    unc = np.ascontiguousarray(unc_inputs, dtype=np.float64)
    if unc.ndim != 2 or (unc.shape[0] > 0 and unc.shape[1] != model.layer_dims[0]):
        raise ShapeError(
            f"unc_inputs shape {unc.shape} is not (n, {model.layer_dims[0]})"
        )
    if unc.shape[0] == 0 or lam == 0:
        return loss, grads
    c = model.n_classes
    uniform = np.full((unc.shape[0], c), 1.0 / c)
    unc_loss, unc_grads = backward(model, Batch(unc, uniform))
    return loss + lam * unc_loss, grads.added(unc_grads.scaled(lam))
