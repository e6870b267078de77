"""Dense feed-forward classifier with analytic forward and backward passes.

The model is a plain MLP: affine layers with ReLU or Tanh hidden
activations and a linear output layer producing logits.  All arithmetic is
float64.  Softmax lives here (and in the losses) rather than in the model
so scoring can see raw logits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ConfigError, NumericError, ShapeError

CHECKPOINT_MAGIC = b"DCM1\n"

# row sums of distribution targets must match 1 this closely
_TARGET_ROW_TOL = 1e-9


class Activation(enum.Enum):
    RELU = "relu"
    TANH = "tanh"

    @classmethod
    def parse(cls, value: "Activation | str") -> "Activation":
        if isinstance(value, Activation):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"unknown activation {value!r}; expected 'relu' or 'tanh'"
            ) from None

    @property
    def code(self) -> int:
        return kernels.ACT_RELU if self is Activation.RELU else kernels.ACT_TANH


def _as_f64(a, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def _as_matrix(a, name: str) -> np.ndarray:
    arr = _as_f64(a, name)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


@dataclass
class MlpModel:
    """Weights, biases, and the hidden activation of a dense classifier.

    ``weights[k]`` has shape (layer_dims[k+1], layer_dims[k]) and maps
    activations of layer k to pre-activations of layer k+1; the output
    layer is linear.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        self.activation = Activation.parse(self.activation)
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeError("weights and biases must be nonempty and congruent")
        self.weights = [_as_matrix(w, "weights") for w in self.weights]
        self.biases = [_as_f64(b, "biases") for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise ShapeError(
                    f"layer {k}: bias shape {b.shape} does not match weight rows {w.shape[0]}"
                )
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k}: input dim {w.shape[1]} does not chain with "
                    f"previous output dim {self.weights[k - 1].shape[0]}"
                )

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpModel":
        return MlpModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )

    def params_equal(self, other: "MlpModel") -> bool:
        if self.layer_dims != other.layer_dims or self.activation != other.activation:
            return False
        return all(
            np.array_equal(a, b)
            for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


@dataclass
class Batch:
    """Inputs plus targets, which are integer labels or distribution rows."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        self.inputs = _as_matrix(self.inputs, "batch inputs")
        targets = np.asarray(self.targets)
        if targets.ndim == 1:
            if not np.issubdtype(targets.dtype, np.integer):
                # float vector of whole numbers is accepted as labels
                as_int = targets.astype(np.int64)
                if not np.array_equal(as_int, targets):
                    raise ShapeError("1-D targets must be integer labels")
                targets = as_int
            self.targets = np.ascontiguousarray(targets, dtype=np.int64)
        elif targets.ndim == 2:
            targets = _as_matrix(targets, "batch targets")
            if np.any(targets < 0):
                raise ShapeError("distribution targets must be nonnegative")
            sums = targets.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > _TARGET_ROW_TOL):
                raise ShapeError("distribution target rows must sum to 1")
            self.targets = targets
        else:
            raise ShapeError(f"targets must be 1-D labels or 2-D rows, got {targets.ndim}-D")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ShapeError(
                f"batch has {self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def target_rows(self, n_classes: int) -> np.ndarray:
        """Targets as a row-stochastic matrix, one-hot encoding labels."""
        if self.targets.ndim == 2:
            if self.targets.shape[1] != n_classes:
                raise ShapeError(
                    f"target rows have {self.targets.shape[1]} classes, model has {n_classes}"
                )
            return self.targets
        labels = self.targets
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise IndexError(f"label out of range for {n_classes} classes")
        rows = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
        rows[np.arange(labels.shape[0]), labels] = 1.0
        return rows


@dataclass
class GradientSet:
    """Per-layer gradients, shape-congruent with the owning model."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def check_congruent(self, model: MlpModel) -> None:
        ok = len(self.d_weights) == len(model.weights) and all(
            dw.shape == w.shape and db.shape == b.shape
            for dw, db, w, b in zip(self.d_weights, self.d_biases, model.weights, model.biases)
        )
        if not ok:
            raise ShapeError("gradient shapes do not match model")

    def scaled(self, c: float) -> "GradientSet":
        return GradientSet([c * dw for dw in self.d_weights], [c * db for db in self.d_biases])

    def added(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            [a + b for a, b in zip(self.d_weights, other.d_weights)],
            [a + b for a, b in zip(self.d_biases, other.d_biases)],
        )

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "GradientSet":
        return cls(
            [np.zeros_like(w) for w in model.weights],
            [np.zeros_like(b) for b in model.biases],
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.d_weights + self.d_biases])


def init_model(
    layer_dims: list[int],
    activation: "Activation | str" = Activation.RELU,
    seed: "int | np.random.Generator" = 0,
) -> MlpModel:
    """Glorot-uniform weights, zero biases, fully determined by the seed."""
    if len(layer_dims) < 2:
        raise ConfigError("layer_dims needs at least an input and an output dim")
    if any(int(d) <= 0 for d in layer_dims):
        raise ConfigError(f"layer_dims must be positive, got {layer_dims}")
    dims = [int(d) for d in layer_dims]
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpModel(weights=weights, biases=biases, activation=Activation.parse(activation))


def _forward_cached(model: MlpModel, inputs: np.ndarray) -> list[np.ndarray]:
    """Returns [input, post-act 1, ..., post-act L-1, logits]."""
    acts = [inputs]
    x = inputs
    code = model.activation.code
    last = model.n_layers - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = kernels.affine_forward(x, w, b)
        x = z if k == last else kernels.act_forward(z, code)
        acts.append(x)
    return acts


def forward_logits(model: MlpModel, inputs) -> np.ndarray:
    """Logits for a batch of inputs; deterministic, no side effects."""
    x = _as_matrix(inputs, "inputs")
    if x.shape[1] != model.layer_dims[0]:
        raise ShapeError(
            f"inputs have {x.shape[1]} features, model expects {model.layer_dims[0]}"
        )
    return _forward_cached(model, x)[-1]


def softmax(logits) -> np.ndarray:
    """Row-wise stable softmax; accepts a single vector or a matrix."""
    arr = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("softmax input contains non-finite values")
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ShapeError(f"softmax expects rows of length >= 2, got shape {arr.shape}")
    out = kernels.softmax(np.ascontiguousarray(arr))
    return out[0] if single else out


def backward(
    model: MlpModel, batch: Batch, target_mix: np.ndarray | None = None
) -> tuple[float, GradientSet]:
    """Mean cross-entropy against per-example target rows, plus its gradients.

    ``target_mix`` overrides the batch targets with an explicit
    row-stochastic matrix; otherwise labels are one-hot encoded.
    """
    if batch.inputs.shape[1] != model.layer_dims[0]:
        raise ShapeError(
            f"batch has {batch.inputs.shape[1]} features, model expects {model.layer_dims[0]}"
        )
    if target_mix is not None:
        target_mix = _as_matrix(target_mix, "target_mix")
        if target_mix.shape != (len(batch), model.n_classes):
            raise ShapeError(
                f"target_mix shape {target_mix.shape} does not match "
                f"({len(batch)}, {model.n_classes})"
            )
        targets = target_mix
    else:
        targets = batch.target_rows(model.n_classes)
    acts = _forward_cached(model, batch.inputs)
    loss, dz = kernels.softmax_xent(acts[-1], targets)

    code = model.activation.code
    d_weights: list[np.ndarray] = [None] * model.n_layers  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * model.n_layers  # type: ignore[list-item]
    for k in range(model.n_layers - 1, -1, -1):
        dw, db, dx = kernels.affine_backward(dz, acts[k], model.weights[k])
        d_weights[k] = dw
        d_biases[k] = db
        if k > 0:
            dz = kernels.act_backward(dx, acts[k], code)
    return float(loss), GradientSet(d_weights, d_biases)


def sgd_step(model: MlpModel, grads: GradientSet, lr: float) -> MlpModel:
    """One step of p <- p - lr*g.  Mutates the model in place and returns it."""
    if lr < 0:
        raise ConfigError(f"learning rate must be nonnegative, got {lr}")
    grads.check_congruent(model)
    for w, dw in zip(model.weights, grads.d_weights):
        w -= lr * dw
    for b, db in zip(model.biases, grads.d_biases):
        b -= lr * db
    return model


def save_checkpoint(model: MlpModel, path) -> None:
    """Writes the DCM1 format: magic, text header, raw little-endian f64 arrays."""
    dims = ",".join(str(d) for d in model.layer_dims)
    header = f"layer_dims={dims} activation={model.activation.value}\n"
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(header.encode("ascii"))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> MlpModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a DCM1 checkpoint")
        header = fh.readline().decode("ascii").strip()
        fields = dict(part.split("=", 1) for part in header.split())
        try:
            dims = [int(d) for d in fields["layer_dims"].split(",")]
            activation = Activation.parse(fields["activation"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: malformed checkpoint header {header!r}") from exc
        weights = []
        biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            wb = fh.read(8 * fan_out * fan_in)
            bb = fh.read(8 * fan_out)
            if len(wb) != 8 * fan_out * fan_in or len(bb) != 8 * fan_out:
                raise ConfigError(f"{path}: truncated checkpoint")
            weights.append(
                np.frombuffer(wb, dtype="<f8").astype(np.float64).reshape(fan_out, fan_in)
            )
            biases.append(np.frombuffer(bb, dtype="<f8").astype(np.float64))
        if fh.read(1):
            raise ConfigError(f"{path}: trailing bytes after checkpoint payload")
    return MlpModel(weights=weights, biases=biases, activation=activation)
