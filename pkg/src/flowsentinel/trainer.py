"""Builds the two-conv / two-dense stack, runs mini-batch training with
Adam and validation monitoring, and drives prediction and evaluation.

The training loop is strictly sequential and deterministic: given the same
seed, data, and config it reproduces parameters, history, and reports
bit-exactly. Per-batch gradients are the mean of per-sample gradients,
accumulated in the order the samples appear in the (shuffled) batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import layers as L
from .dataset import Dataset, Taxonomy, map_labels
from .errors import ConfigurationError, DimensionError, ValidationError
from .metrics import EvalReport, classification_report, confusion_matrix
from .optim import AdamState, adam_step, glorot_uniform_init, softmax_ce_grad
from .pipeline import PreprocState, SplitIndices, apply_standardizer, stratified_split
from .tensor import Tensor

PARAM_ORDER = (
    "conv1.weights",
    "conv1.bias",
    "conv2.weights",
    "conv2.bias",
    "dense1.weights",
    "dense1.bias",
    "output.weights",
    "output.bias",
)


@dataclass
class ArchitectureConfig:
    feature_count: int
    class_count: int
    conv1_filters: int = 32
    conv2_filters: int = 64
    kernel_size: int = 3
    pool_size: int = 2
    dense_units: int = 128

    def __post_init__(self):
        if self.class_count < 1:
            raise ConfigurationError(
                f"class_count must be >= 1, got {self.class_count}"
            )
        shape_chain(self)  # raises if feature_count cannot flow through


def shape_chain(arch: ArchitectureConfig) -> list[int]:
    """Lengths along the stack: [F, conv1, pool1, conv2, pool2].

    Valid convolution maps L to L-k+1; pooling maps L to floor(L/pool).
    Raises if any stage underflows or the flattened length would be 0.
    """
    lengths = [arch.feature_count]
    for _ in range(2):
        if lengths[-1] < arch.kernel_size:
            break
        lengths.append(lengths[-1] - arch.kernel_size + 1)
        if lengths[-1] < arch.pool_size:
            break
        lengths.append(lengths[-1] // arch.pool_size)
    if len(lengths) < 5 or lengths[-1] < 1:
        raise ConfigurationError(
            f"feature_count {arch.feature_count} is too small for the "
            f"conv/pool stack; minimum is {_minimum_features(arch)}"
        )
    return lengths


def _minimum_features(arch: ArchitectureConfig) -> int:
    for f in range(arch.kernel_size, 1024):
        lengths = [f]
        ok = True
        for _ in range(2):
            if lengths[-1] < arch.kernel_size:
                ok = False
                break
            lengths.append(lengths[-1] - arch.kernel_size + 1)
            if lengths[-1] < arch.pool_size:
                ok = False
                break
            lengths.append(lengths[-1] // arch.pool_size)
        if ok and lengths[-1] >= 1:
            return f
    raise ConfigurationError("architecture admits no feature count up to 1024")


def flatten_length(arch: ArchitectureConfig) -> int:
    return shape_chain(arch)[-1] * arch.conv2_filters


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.001
    val_fraction: float = 0.2
    seed: int = 42
    early_stop_patience: int = 0  # 0 disables early stopping
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(
                f"batch_size must be >= 1, got {self.batch_size}"
            )
        if not 0.0 < self.val_fraction < 1.0:
            raise ValidationError(
                f"val_fraction must be in (0, 1), got {self.val_fraction}"
            )
        if self.early_stop_patience < 0:
            raise ValidationError("early_stop_patience must be >= 0")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 0-based index of the minimum validation loss

    def epochs_run(self) -> int:
        return len(self.train_loss)


@dataclass
class ModelParams:
    arch: ArchitectureConfig
    conv1: L.Conv1DLayer
    conv2: L.Conv1DLayer
    dense1: L.DenseLayer
    output: L.DenseLayer

    def param_tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("conv1.weights", self.conv1.weights),
            ("conv1.bias", self.conv1.bias),
            ("conv2.weights", self.conv2.weights),
            ("conv2.bias", self.conv2.bias),
            ("dense1.weights", self.dense1.weights),
            ("dense1.bias", self.dense1.bias),
            ("output.weights", self.output.weights),
            ("output.bias", self.output.bias),
        ]

    def set_param(self, name: str, tensor: Tensor) -> None:
        layer_name, attr = name.split(".")
        layer = {
            "conv1": self.conv1,
            "conv2": self.conv2,
            "dense1": self.dense1,
            "output": self.output,
        }[layer_name]
        if getattr(layer, attr).shape != tensor.shape:
            raise DimensionError(
                f"{name}: expected {getattr(layer, attr).shape}, "
                f"got {tensor.shape}"
            )
        setattr(layer, attr, tensor)


def build_model(arch: ArchitectureConfig, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases, in a fixed draw order."""
    k = arch.kernel_size
    conv1 = L.Conv1DLayer(
        weights=glorot_uniform_init(
            (arch.conv1_filters, 1, k), fan_in=1 * k, fan_out=arch.conv1_filters * k, rng=rng
        ),
        bias=Tensor.zeros((arch.conv1_filters,)),
        in_channels=1,
        filters=arch.conv1_filters,
        kernel_size=k,
    )
    conv2 = L.Conv1DLayer(
        weights=glorot_uniform_init(
            (arch.conv2_filters, arch.conv1_filters, k),
            fan_in=arch.conv1_filters * k,
            fan_out=arch.conv2_filters * k,
            rng=rng,
        ),
        bias=Tensor.zeros((arch.conv2_filters,)),
        in_channels=arch.conv1_filters,
        filters=arch.conv2_filters,
        kernel_size=k,
    )
    flat = flatten_length(arch)
    dense1 = L.DenseLayer(
        weights=glorot_uniform_init(
            (arch.dense_units, flat), fan_in=flat, fan_out=arch.dense_units, rng=rng
        ),
        bias=Tensor.zeros((arch.dense_units,)),
    )
    output = L.DenseLayer(
        weights=glorot_uniform_init(
            (arch.class_count, arch.dense_units),
            fan_in=arch.dense_units,
            fan_out=arch.class_count,
            rng=rng,
        ),
        bias=Tensor.zeros((arch.class_count,)),
    )
    return ModelParams(arch=arch, conv1=conv1, conv2=conv2, dense1=dense1, output=output)


@dataclass
class _ForwardCache:
    x: Tensor
    c1: Tensor
    r1: Tensor
    p1: Tensor
    arg1: np.ndarray
    c2: Tensor
    r2: Tensor
    p2: Tensor
    arg2: np.ndarray
    flat: Tensor
    h: Tensor
    hr: Tensor
    logits: Tensor


def forward_logits(model: ModelParams, x: Tensor) -> _ForwardCache:
    """Run one (feature_count, 1) sample through the stack."""
    pool = model.arch.pool_size
    c1 = L.conv1d_forward(model.conv1, x)
    r1 = L.relu(c1)
    p1, arg1 = L.maxpool1d_forward(r1, pool)
    c2 = L.conv1d_forward(model.conv2, p1)
    r2 = L.relu(c2)
    p2, arg2 = L.maxpool1d_forward(r2, pool)
    flat = L.flatten(p2)
    h = L.dense_forward(model.dense1, flat)
    hr = L.relu(h)
    logits = L.dense_forward(model.output, hr)
    return _ForwardCache(
        x=x, c1=c1, r1=r1, p1=p1, arg1=arg1, c2=c2, r2=r2, p2=p2, arg2=arg2,
        flat=flat, h=h, hr=hr, logits=logits,
    )


def loss_and_gradients(
    model: ModelParams, x: Tensor, one_hot_target: Tensor
) -> tuple[float, dict[str, Tensor], Tensor]:
    """Loss, parameter gradients (keyed per PARAM_ORDER), and the logits."""
    cache = forward_logits(model, x)
    lv = softmax_ce_grad(cache.logits, one_hot_target)
    g_out = L.dense_backward(model.output, cache.hr, lv.grad)
    g_h = L.relu_backward(cache.h, g_out.d_input)
    g_dense1 = L.dense_backward(model.dense1, cache.flat, g_h)
    d_p2 = Tensor._wrap(g_dense1.d_input.array.reshape(cache.p2.shape))
    d_r2 = L.maxpool1d_backward(cache.arg2, d_p2, cache.r2.shape)
    d_c2 = L.relu_backward(cache.c2, d_r2)
    g_conv2 = L.conv1d_backward(model.conv2, cache.p1, d_c2)
    d_r1 = L.maxpool1d_backward(cache.arg1, g_conv2.d_input, cache.r1.shape)
    d_c1 = L.relu_backward(cache.c1, d_r1)
    g_conv1 = L.conv1d_backward(model.conv1, cache.x, d_c1)
    grads = {
        "conv1.weights": g_conv1.d_weights,
        "conv1.bias": g_conv1.d_bias,
        "conv2.weights": g_conv2.d_weights,
        "conv2.bias": g_conv2.d_bias,
        "dense1.weights": g_dense1.d_weights,
        "dense1.bias": g_dense1.d_bias,
        "output.weights": g_out.d_weights,
        "output.bias": g_out.d_bias,
    }
    return lv.loss, grads, cache.logits


def _eval_split(
    model: ModelParams, x3: np.ndarray, y: np.ndarray, indices: Sequence[int]
) -> tuple[float, float]:
    """Mean loss and accuracy over the given sample indices (NaN if empty)."""
    if len(indices) == 0:
        return math.nan, math.nan
    total_loss = 0.0
    correct = 0
    for i in indices:
        cache = forward_logits(model, Tensor._wrap(x3[i]))
        lv = softmax_ce_grad(cache.logits, Tensor._wrap(y[i]))
        total_loss += lv.loss
        if int(np.argmax(cache.logits.array)) == int(np.argmax(y[i])):
            correct += 1
    n = len(indices)
    return total_loss / n, correct / n


def train(
    model: ModelParams,
    dataset_features: Tensor,
    one_hot_labels: Tensor,
    cfg: TrainConfig,
    split: SplitIndices | None = None,
    on_epoch: Callable[[int, int, float, float, float, float], None] | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Mini-batch training with per-epoch validation monitoring.

    Features must already be standardized and shaped (samples, F, 1); labels
    one-hot with class_count columns. When `split` is omitted it is derived
    from cfg.val_fraction and cfg.seed. With early_stop_patience > 0,
    training stops after that many consecutive epochs without a validation
    loss improvement and the best epoch's parameters are restored.
    """
    if dataset_features.rank != 3 or dataset_features.shape[2] != 1:
        raise DimensionError(
            f"features must be (samples, features, 1), got {dataset_features.shape}"
        )
    if one_hot_labels.rank != 2 or one_hot_labels.shape[1] != model.arch.class_count:
        raise DimensionError(
            f"labels must be (samples, {model.arch.class_count}), "
            f"got {one_hot_labels.shape}"
        )
    if dataset_features.shape[0] != one_hot_labels.shape[0]:
        raise DimensionError(
            f"{dataset_features.shape[0]} samples vs "
            f"{one_hot_labels.shape[0]} label rows"
        )
    x3 = dataset_features.array
    y = one_hot_labels.array
    if split is None:
        class_indices = [int(i) for i in np.argmax(y, axis=1)]
        split = stratified_split(class_indices, cfg.val_fraction, cfg.seed)
    train_idx = list(split.train_indices)
    val_idx = list(split.val_indices)
    if not train_idx:
        raise ValidationError("training set is empty")
    if cfg.early_stop_patience > 0 and not val_idx:
        raise ValidationError(
            "early stopping needs a non-empty validation split"
        )

    states = {
        name: AdamState(shape=t.shape, lr=cfg.lr)
        for name, t in model.param_tensors()
    }
    history = TrainHistory()
    rng = np.random.default_rng(cfg.seed)
    best_val = math.inf
    best_params: dict[str, Tensor] | None = None
    stale = 0

    for epoch in range(cfg.epochs):
        if cfg.shuffle_each_epoch:
            order = [train_idx[j] for j in rng.permutation(len(train_idx))]
        else:
            order = train_idx
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            sums: dict[str, np.ndarray] | None = None
            for i in batch:
                loss, grads, logits = loss_and_gradients(
                    model, Tensor._wrap(x3[i]), Tensor._wrap(y[i])
                )
                epoch_loss += loss
                if int(np.argmax(logits.array)) == int(np.argmax(y[i])):
                    epoch_correct += 1
                if sums is None:
                    sums = {name: g.array.copy() for name, g in grads.items()}
                else:
                    for name, g in grads.items():
                        sums[name] += g.array
            scale = 1.0 / len(batch)
            for name, _ in model.param_tensors():
                mean_grad = Tensor._wrap(sums[name] * scale)
                new_param = adam_step(states[name], _get_param(model, name), mean_grad)
                model.set_param(name, new_param)
        n_train = len(order)
        train_loss = epoch_loss / n_train
        train_acc = epoch_correct / n_train
        val_loss, val_acc = _eval_split(model, x3, y, val_idx)
        history.train_loss.append(train_loss)
        history.train_acc.append(train_acc)
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        if on_epoch is not None:
            on_epoch(epoch + 1, cfg.epochs, train_loss, train_acc, val_loss, val_acc)
        if not math.isnan(val_loss) and val_loss < best_val:
            best_val = val_loss
            best_params = dict(model.param_tensors())
            stale = 0
        else:
            stale += 1
        if cfg.early_stop_patience > 0 and stale >= cfg.early_stop_patience:
            break

    if cfg.early_stop_patience > 0 and best_params is not None:
        for name, tensor in best_params.items():
            model.set_param(name, tensor)
    history.best_epoch = _best_epoch(history.val_loss)
    return model, history


def _best_epoch(val_losses: list[float]) -> int:
    best, best_i = math.inf, len(val_losses) - 1
    for i, v in enumerate(val_losses):
        if not math.isnan(v) and v < best:
            best, best_i = v, i
    return best_i


def _get_param(model: ModelParams, name: str) -> Tensor:
    for n, t in model.param_tensors():
        if n == name:
            return t
    raise KeyError(name)


def predict(
    model: ModelParams, preproc: PreprocState, raw_features: Tensor
) -> tuple[list[int], Tensor]:
    """Standardize, run the stack, softmax. Ties pick the lowest class index."""
    x3 = apply_standardizer(preproc, raw_features).array
    n = x3.shape[0]
    probs = np.empty((n, model.arch.class_count))
    pred = []
    for i in range(n):
        cache = forward_logits(model, Tensor._wrap(x3[i]))
        probs[i] = L.softmax(cache.logits).array
        pred.append(int(np.argmax(cache.logits.array)))
    return pred, Tensor._wrap(probs)


def evaluate(
    model: ModelParams,
    preproc: PreprocState,
    dataset: Dataset,
    taxonomy: Taxonomy,
    task: str,
) -> EvalReport:
    """Map labels for the task, predict, and build the metrics report."""
    if task != preproc.task:
        raise ConfigurationError(
            f"model was trained for task {preproc.task!r}, cannot evaluate "
            f"as {task!r}"
        )
    if len(preproc.label_map) != model.arch.class_count:
        raise ConfigurationError(
            f"label map has {len(preproc.label_map)} classes but the model "
            f"outputs {model.arch.class_count}"
        )
    if dataset.sample_count == 0:
        raise ValidationError("evaluation set is empty")
    mapped = map_labels(dataset.raw_labels, taxonomy, task)
    index = {name: i for i, name in enumerate(preproc.label_map)}
    unknown = sorted({m for m in mapped if m not in index})
    if unknown:
        raise ValidationError(
            f"labels absent from the trained class map: {', '.join(unknown)}"
        )
    true_idx = [index[m] for m in mapped]
    pred_idx, _ = predict(model, preproc, dataset.features)
    matrix = confusion_matrix(true_idx, pred_idx, model.arch.class_count)
    return classification_report(matrix, preproc.label_map)
