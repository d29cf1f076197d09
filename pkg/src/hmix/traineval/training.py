"""Deterministic desk-scale training under any label policy.

Two mixing modes exist. In ``finite-augmenting-set`` mode a fixed set of
pre-mixed stimuli is labeled once via the active policy and concatenated
with the regular examples; batches sample proportionally from the combined
set. In ``per-batch-sampling`` mode each batch is paired with a shuffled
copy of itself, one coefficient is drawn per batch from the configured
distribution, and labels come from the active policy (only policies that
need no human judgments can run this way).

A run is fully determined by (config, seed): all randomness flows from
per-purpose child generators of one seed sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..boundaryfit import BoundaryFit
from ..hmixdata import Record
from ..labelpolicy import (
    PolicyError,
    PolicyKind,
    SmoothingSpec,
    _boundary_lambda,
    build_training_label,
)
from ..mixcore import BetaSpec, CoefficientSpec, MixedStimulus, sample_lambda
from .network import SoftmaxMLP


class MixMode(str, Enum):
    FINITE_SET = "finite-augmenting-set"
    PER_BATCH = "per-batch-sampling"


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries where it happened."""

    def __init__(self, epoch: int, batch: int, learning_rate: float):
        self.epoch = epoch
        self.batch = batch
        self.learning_rate = learning_rate
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch} (lr={learning_rate})"
        )


@dataclass(frozen=True)
class TrainConfig:
    policy: PolicyKind
    epochs: int = 25
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    mode: MixMode = MixMode.FINITE_SET
    coefficient: CoefficientSpec = field(default_factory=BetaSpec)
    hidden: tuple[int, ...] = (64, 64)
    smoothing: SmoothingSpec | None = None
    central: str = "mean"
    #: keep the random-baseline labels fixed instead of resampling per epoch
    random_labels_fixed: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", PolicyKind(self.policy))
        object.__setattr__(self, "mode", MixMode(self.mode))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be at least 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class TrainData:
    """Inputs shared across seeds: the regular set plus mixing material."""

    base_inputs: np.ndarray  # (N, D) float64 in [0, 1]
    base_labels: np.ndarray  # (N,) int
    num_classes: int
    stimuli: Sequence[MixedStimulus] = ()
    judgments_by_stimulus: Mapping[str, Sequence[Record]] = field(default_factory=dict)
    fits: Mapping[tuple[int, int], BoundaryFit] | None = None

    def __post_init__(self) -> None:
        if self.base_inputs.ndim != 2:
            raise ValueError("base inputs must be (N, D)")
        if len(self.base_inputs) != len(self.base_labels):
            raise ValueError("inputs and labels must have equal length")


@dataclass
class TrainHistory:
    epoch_losses: list[float] = field(default_factory=list)
    batch_lambdas: list[float] = field(default_factory=list)
    n_examples: int = 0


_RELABEL_POLICIES = {
    PolicyKind.RELABEL,
    PolicyKind.RELABEL_OMEGA_AGGREGATED,
    PolicyKind.RELABEL_OMEGA_SEPARATED,
    PolicyKind.TOP2CLAMP,
}


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    return np.eye(num_classes)[labels]


def _build_mixed_set(
    config: TrainConfig,
    data: TrainData,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Label every stimulus under the policy -> (M, D) inputs, (M, K) targets."""
    inputs = []
    targets = []
    spec = config.smoothing or SmoothingSpec(num_classes=data.num_classes)
    for stim in data.stimuli:
        pairs = build_training_label(
            config.policy,
            stim,
            judgments=data.judgments_by_stimulus.get(stim.stimulus_id, ()),
            fits=data.fits,
            spec=spec,
            rng=rng,
            num_classes=data.num_classes,
            central=config.central,
        )
        for image, label in pairs:
            inputs.append(image.flat())
            targets.append(label.probs)
    if not inputs:
        return (
            np.empty((0, data.base_inputs.shape[1])),
            np.empty((0, data.num_classes)),
        )
    return np.stack(inputs), np.stack(targets)


def _sgd_step(
    model: SoftmaxMLP,
    velocity: tuple[list[np.ndarray], list[np.ndarray]],
    d_weights: list[np.ndarray],
    d_biases: list[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    vel_w, vel_b = velocity
    for i in range(len(model.weights)):
        vel_w[i] = momentum * vel_w[i] - lr * d_weights[i]
        model.weights[i] += vel_w[i]
    for i in range(len(model.biases)):
        vel_b[i] = momentum * vel_b[i] - lr * d_biases[i]
        model.biases[i] += vel_b[i]


def train_single(
    config: TrainConfig, data: TrainData, seed: int
) -> tuple[SoftmaxMLP, TrainHistory]:
    """Train one model deterministically for one seed."""
    ss = np.random.SeedSequence(seed)
    init_rng, shuffle_rng, policy_rng, lambda_rng = (
        np.random.default_rng(child) for child in ss.spawn(4)
    )
    model = SoftmaxMLP.init(
        data.base_inputs.shape[1], config.hidden, data.num_classes, init_rng
    )
    velocity = (
        [np.zeros_like(w) for w in model.weights],
        [np.zeros_like(b) for b in model.biases],
    )
    history = TrainHistory()

    if config.mode is MixMode.PER_BATCH:
        if config.policy in _RELABEL_POLICIES:
            raise PolicyError(
                f"{config.policy.value} needs per-stimulus judgments and cannot "
                "run in per-batch sampling mode"
            )
        _train_per_batch(config, data, model, velocity, shuffle_rng, lambda_rng, history)
    else:
        _train_finite(config, data, model, velocity, shuffle_rng, policy_rng, history)
    return model, history


def _train_finite(config, data, model, velocity, shuffle_rng, policy_rng, history):
    base_targets = _one_hot(data.base_labels, data.num_classes)
    mixed_inputs, mixed_targets = _build_mixed_set(config, data, policy_rng)
    resample_random = (
        config.policy is PolicyKind.RANDOM
        and not config.random_labels_fixed
        and len(mixed_inputs) > 0
    )
    inputs = np.concatenate([data.base_inputs, mixed_inputs])
    targets = np.concatenate([base_targets, mixed_targets])
    history.n_examples = len(inputs)
    n_base = len(base_targets)
    for epoch in range(config.epochs):
        if resample_random:
            classes = policy_rng.integers(0, data.num_classes, size=len(mixed_inputs))
            targets[n_base:] = _one_hot(classes, data.num_classes)
        order = shuffle_rng.permutation(len(inputs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, dw, db, _ = model.loss_and_grads(inputs[batch], targets[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, n_batches, config.learning_rate)
            _sgd_step(model, velocity, dw, db, config.learning_rate, config.momentum)
            epoch_loss += loss
            n_batches += 1
        history.epoch_losses.append(epoch_loss / max(n_batches, 1))


def _train_per_batch(config, data, model, velocity, shuffle_rng, lambda_rng, history):
    inputs = data.base_inputs
    labels = data.base_labels
    history.n_examples = len(inputs)
    num_classes = data.num_classes
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(inputs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            x = inputs[batch]
            y = labels[batch]
            if config.policy is PolicyKind.NO_AUG:
                bx, bt = x, _one_hot(y, num_classes)
            else:
                partner = shuffle_rng.permutation(len(batch))
                lam = sample_lambda(config.coefficient, lambda_rng)
                history.batch_lambdas.append(lam)
                bx = lam * x + (1.0 - lam) * x[partner]
                bt = _per_batch_targets(
                    config, data, y, y[partner], lam, num_classes, lambda_rng
                )
            loss, dw, db, _ = model.loss_and_grads(bx, bt)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, n_batches, config.learning_rate)
            _sgd_step(model, velocity, dw, db, config.learning_rate, config.momentum)
            epoch_loss += loss
            n_batches += 1
        history.epoch_losses.append(epoch_loss / max(n_batches, 1))


def _per_batch_targets(
    config: TrainConfig,
    data: TrainData,
    y_a: np.ndarray,
    y_b: np.ndarray,
    lam: float,
    num_classes: int,
    rng: np.random.Generator,
) -> np.ndarray:
    if config.policy is PolicyKind.UNIFORM:
        return np.full((len(y_a), num_classes), 1.0 / num_classes)
    if config.policy is PolicyKind.RANDOM:
        classes = rng.integers(0, num_classes, size=len(y_a))
        return _one_hot(classes, num_classes)
    if config.policy is PolicyKind.MIXUP:
        return lam * _one_hot(y_a, num_classes) + (1.0 - lam) * _one_hot(y_b, num_classes)
    if config.policy is PolicyKind.BOUNDARY_FIT:
        if data.fits is None:
            raise PolicyError("boundary-fit policy needs fitted curves")
        targets = np.empty((len(y_a), num_classes))
        for i, (ca, cb) in enumerate(zip(y_a, y_b)):
            if ca == cb:
                lam_g = lam  # same-class mix: the label is one-hot either way
            else:
                lam_g = _boundary_lambda(data.fits, int(ca), int(cb), lam)
            row = np.zeros(num_classes)
            row[ca] += lam_g
            row[cb] += 1.0 - lam_g
            targets[i] = row
        return targets
    raise PolicyError(f"policy {config.policy.value} unsupported in per-batch mode")


def train(
    config: TrainConfig, data: TrainData
) -> list[tuple[SoftmaxMLP, TrainHistory]]:
    """Train one model per configured seed."""
    return [train_single(config, data, seed) for seed in config.seeds]
