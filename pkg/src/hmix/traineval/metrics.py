"""Evaluation metrics: soft-label cross-entropy, FGSM robustness, calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mixcore import ImageTensor, LabelDistribution
from .network import SoftmaxMLP, soft_cross_entropy

#: Default single-step perturbation budget on [0, 1] pixels.
DEFAULT_EPSILON = 8.0 / 255.0


@dataclass(frozen=True)
class EvalSet:
    """Flat eval inputs with soft targets; hard labels are target argmaxes."""

    inputs: np.ndarray  # (N, D)
    soft_targets: np.ndarray  # (N, K)

    def __post_init__(self) -> None:
        if self.inputs.shape[0] != self.soft_targets.shape[0]:
            raise ValueError("inputs and targets must have equal length")

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.soft_targets, axis=1)

    @property
    def num_classes(self) -> int:
        return int(self.soft_targets.shape[1])


@dataclass(frozen=True)
class SoftCEResult:
    value: float
    n_clamped: int


def soft_ce(model: SoftmaxMLP, eval_set: EvalSet) -> SoftCEResult:
    """Mean cross-entropy between model predictions and soft targets.

    Zero predicted probabilities on supported classes are clamped at 1e-12
    and counted.
    """
    probs = model.forward(eval_set.inputs)
    value, clamped = soft_cross_entropy(probs, eval_set.soft_targets)
    return SoftCEResult(value=value, n_clamped=clamped)


def fgsm_perturb_batch(
    model: SoftmaxMLP, inputs: np.ndarray, targets: np.ndarray, epsilon: float
) -> np.ndarray:
    """x + eps * sign(grad_x CE), clipped back into [0, 1]."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    grads = model.input_gradient(inputs, targets)
    adv = np.atleast_2d(inputs) + epsilon * np.sign(grads)
    return np.clip(adv, 0.0, 1.0)


def fgsm_attack(
    model: SoftmaxMLP, x: ImageTensor, target: LabelDistribution, epsilon: float
) -> ImageTensor:
    """Single-image FGSM perturbation; preserves the image's shape."""
    flat = x.flat()[None, :]
    adv = fgsm_perturb_batch(model, flat, target.probs[None, :], epsilon)
    return ImageTensor(adv.reshape(x.data.shape))


def fgsm_error(model: SoftmaxMLP, eval_set: EvalSet, epsilon: float = DEFAULT_EPSILON) -> float:
    """Robust error rate (%) under FGSM at the given budget.

    The attack gradient uses the one-hot hard label (target argmax); error
    is the fraction of perturbed examples whose prediction misses that
    label.
    """
    hard = eval_set.hard_labels
    onehot = np.eye(eval_set.num_classes)[hard]
    adv = fgsm_perturb_batch(model, eval_set.inputs, onehot, epsilon)
    preds = np.argmax(model.forward(adv), axis=1)
    return float(100.0 * np.mean(preds != hard))


def binned_calibration(
    confidences: np.ndarray, correct: np.ndarray, bins: int
) -> list[tuple[int, float, float]]:
    """Equal-width confidence bins -> (count, accuracy, mean confidence).

    Empty bins are omitted; confidence 1.0 lands in the top bin.
    """
    if bins < 1:
        raise ValueError("need at least one bin")
    confidences = np.asarray(confidences, dtype=np.float64)
    correct = np.asarray(correct, dtype=np.float64)
    idx = np.minimum((confidences * bins).astype(int), bins - 1)
    rows = []
    for b in range(bins):
        mask = idx == b
        n = int(mask.sum())
        if n == 0:
            continue
        rows.append((n, float(correct[mask].mean()), float(confidences[mask].mean())))
    return rows


def calibration_error(
    model: SoftmaxMLP, eval_set: EvalSet, bins: int = 15, flavor: str = "rms"
) -> float:
    """Binned gap between confidence and accuracy.

    ``flavor='ece'`` averages |acc - conf| with bin weights; ``'rms'`` takes
    the weighted root-mean-square gap.
    """
    probs = model.forward(eval_set.inputs)
    confidences = probs.max(axis=1)
    correct = np.argmax(probs, axis=1) == eval_set.hard_labels
    return calibration_error_from_scores(confidences, correct, bins=bins, flavor=flavor)


def calibration_error_from_scores(
    confidences: np.ndarray, correct: np.ndarray, bins: int = 15, flavor: str = "rms"
) -> float:
    if flavor not in {"ece", "rms"}:
        raise ValueError("flavor must be 'ece' or 'rms'")
    rows = binned_calibration(confidences, correct, bins)
    total = sum(n for n, _, _ in rows)
    if total == 0:
        return 0.0
    if flavor == "ece":
        return float(sum(n / total * abs(acc - conf) for n, acc, conf in rows))
    return float(
        np.sqrt(sum(n / total * (acc - conf) ** 2 for n, acc, conf in rows))
    )
