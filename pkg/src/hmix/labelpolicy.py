"""Training-label construction for mixed images.

Every scheme compared by the harness lives here: the classical two-hot mixed
label, sanity baselines (random / uniform), human relabeling with and
without confidence smoothing (aggregated across annotators or kept
separate), top-2 clamped soft labels, and fitted boundary curves.

Confidence smoothing turns a reported confidence omega in [0, 1] into an
additive-smoothing strength ``alpha = a * b**omega`` (decreasing in omega
since b < 1) and interpolates the label toward uniform:

    out_k = (y_k + alpha / K) / (1 + alpha)

so alpha -> 0 returns the label unchanged and alpha -> infinity yields the
uniform distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .boundaryfit import BoundaryFit, apply_boundary
from .hmixdata import Judgment, Record, SoftLabelJudgment
from .mixcore import (
    ImageTensor,
    LabelDistribution,
    MixedStimulus,
    check_unit_interval,
)


class PolicyError(ValueError):
    """A policy's prerequisites (judgments, fits, rng) are missing."""


class PolicyKind(str, Enum):
    NO_AUG = "no-aug"
    RANDOM = "random"
    UNIFORM = "uniform"
    MIXUP = "mixup"
    RELABEL = "relabel"
    RELABEL_OMEGA_AGGREGATED = "relabel-omega-aggregated"
    RELABEL_OMEGA_SEPARATED = "relabel-omega-separated"
    TOP2CLAMP = "top2clamp"
    BOUNDARY_FIT = "boundary-fit"


@dataclass(frozen=True)
class SmoothingSpec:
    """Hyperparameters of confidence-based additive smoothing."""

    a: float = 50.0
    b: float = 0.0001
    num_classes: int = 10

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not 0.0 < self.b < 1.0:
            raise ValueError("b must lie strictly inside (0, 1)")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")

    def alpha(self, omega: float) -> float:
        omega = check_unit_interval(omega, "omega")
        return self.a * self.b**omega


def mixup_label(
    class_a: int, class_b: int, lam: float, num_classes: int
) -> LabelDistribution:
    """Two-hot label: ``lam`` on class_a, ``1 - lam`` on class_b."""
    lam = check_unit_interval(lam, "lambda")
    if class_a == class_b:
        raise ValueError("mixup label needs two distinct classes")
    for c in (class_a, class_b):
        if not 0 <= c < num_classes:
            raise ValueError(f"class {c} out of range for {num_classes} classes")
    probs = np.zeros(num_classes)
    probs[class_a] = lam
    probs[class_b] = 1.0 - lam
    return LabelDistribution(probs)


def smooth_with_confidence(
    label: LabelDistribution, omega: float, spec: SmoothingSpec
) -> LabelDistribution:
    """Soften a label toward uniform, less so the more confident the report."""
    if label.num_classes != spec.num_classes:
        raise ValueError(
            f"label has {label.num_classes} classes but spec expects {spec.num_classes}"
        )
    alpha = spec.alpha(omega)
    k = spec.num_classes
    return LabelDistribution((label.probs + alpha / k) / (1.0 + alpha))


def clamp_soft_label(
    judgment: SoftLabelJudgment, num_classes: int, redistribution: float = 0.1
) -> LabelDistribution:
    """Build a dense label from a sparse top-1/top-2 report.

    The reported percentages are rescaled to probabilities; of the leftover
    mass, a ``redistribution`` fraction is spread evenly over the classes
    still possible (neither in the top-2 nor ruled out) and the rest is
    returned to the top classes proportionally to their reported
    probabilities. Ruled-out classes end at exactly zero.
    """
    if not 0.0 <= redistribution <= 1.0:
        raise ValueError("redistribution factor must lie in [0, 1]")
    named = [judgment.top1_class]
    if judgment.top2_class is not None:
        named.append(judgment.top2_class)
    for c in list(named) + sorted(judgment.ruled_out):
        if c >= num_classes:
            raise ValueError(f"class {c} out of range for {num_classes} classes")
    p1 = judgment.top1_prob / 100.0
    p2 = (judgment.top2_prob or 0) / 100.0
    leftover = max(0.0, 1.0 - p1 - p2)
    possible = [
        c
        for c in range(num_classes)
        if c not in named and c not in judgment.ruled_out
    ]
    probs = np.zeros(num_classes)
    probs[judgment.top1_class] = p1
    if judgment.top2_class is not None:
        probs[judgment.top2_class] = p2
    if possible:
        spread = leftover * redistribution
        probs[possible] += spread / len(possible)
        back = leftover - spread
    else:
        back = leftover
    if back > 0.0:
        if p1 + p2 > 0.0:
            probs[judgment.top1_class] += back * p1 / (p1 + p2)
            if judgment.top2_class is not None:
                probs[judgment.top2_class] += back * p2 / (p1 + p2)
        else:
            # Degenerate all-zero report: split the returned mass evenly
            # over the named classes.
            probs[named] += back / len(named)
    total = probs.sum()
    if total <= 0.0:
        raise ValueError("report assigns no probability mass at all")
    return LabelDistribution(probs / total)


def _mean(values: Sequence[float], central: str) -> float:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()) if central == "mean" else float(np.median(arr))


def _boundary_lambda(
    fits: Mapping[tuple[int, int], BoundaryFit], class_a: int, class_b: int, lambda_f: float
) -> float:
    """Look up the pair's curve (stored for the low-index orientation) and
    map lambda_f through it in the stimulus's own orientation."""
    pair = (min(class_a, class_b), max(class_a, class_b))
    fit = fits.get(pair)
    if fit is None:
        raise PolicyError(f"no boundary fit available for class pair {pair}")
    if class_a <= class_b:
        return apply_boundary(fit, lambda_f)
    return 1.0 - apply_boundary(fit, 1.0 - lambda_f)


def build_training_label(
    policy: PolicyKind | str,
    stimulus: MixedStimulus,
    judgments: Iterable[Record] = (),
    fits: Mapping[tuple[int, int], BoundaryFit] | None = None,
    spec: SmoothingSpec | None = None,
    rng: np.random.Generator | None = None,
    num_classes: int = 10,
    central: str = "mean",
    redistribution: float = 0.1,
) -> list[tuple[ImageTensor, LabelDistribution]]:
    """Emit (input, label) training pairs for one stimulus under a policy.

    Most policies yield exactly one pair; ``no-aug`` yields none (the
    stimulus is excluded from training) and ``relabel-omega-separated``
    yields one pair per individual judgment.
    """
    policy = PolicyKind(policy)
    image = stimulus.mixed_image
    coeff_judgments = [
        j for j in judgments if isinstance(j, Judgment)
    ]
    soft_judgments = [j for j in judgments if isinstance(j, SoftLabelJudgment)]

    if policy is PolicyKind.NO_AUG:
        return []
    if policy is PolicyKind.UNIFORM:
        return [(image, LabelDistribution.uniform(num_classes))]
    if policy is PolicyKind.RANDOM:
        if rng is None:
            raise PolicyError("random policy needs a seeded rng")
        cls = int(rng.integers(0, num_classes))
        return [(image, LabelDistribution.one_hot(cls, num_classes))]
    if policy is PolicyKind.MIXUP:
        return [
            (
                image,
                mixup_label(stimulus.class_a, stimulus.class_b, stimulus.lambda_f, num_classes),
            )
        ]
    if policy is PolicyKind.BOUNDARY_FIT:
        if fits is None:
            raise PolicyError("boundary-fit policy needs fitted curves")
        lam = _boundary_lambda(fits, stimulus.class_a, stimulus.class_b, stimulus.lambda_f)
        return [(image, mixup_label(stimulus.class_a, stimulus.class_b, lam, num_classes))]
    if policy is PolicyKind.TOP2CLAMP:
        if not soft_judgments:
            raise PolicyError("top2clamp policy needs soft-label judgments")
        labels = [
            clamp_soft_label(j, num_classes, redistribution).probs for j in soft_judgments
        ]
        return [(image, LabelDistribution(np.mean(labels, axis=0)))]

    # Relabel family: needs coefficient judgments for this stimulus.
    if not coeff_judgments:
        raise PolicyError(f"{policy.value} policy needs coefficient judgments")
    if policy is PolicyKind.RELABEL:
        lam = _mean([j.lambda_h for j in coeff_judgments], central)
        return [(image, mixup_label(stimulus.class_a, stimulus.class_b, lam, num_classes))]
    if spec is None:
        spec = SmoothingSpec(num_classes=num_classes)
    if spec.num_classes != num_classes:
        raise PolicyError("smoothing spec class count disagrees with num_classes")
    if any(j.confidence is None for j in coeff_judgments):
        raise PolicyError("confidence smoothing needs judgments with confidence")
    if policy is PolicyKind.RELABEL_OMEGA_AGGREGATED:
        lam = _mean([j.lambda_h for j in coeff_judgments], central)
        omega = _mean([j.confidence for j in coeff_judgments], central)
        base = mixup_label(stimulus.class_a, stimulus.class_b, lam, num_classes)
        return [(image, smooth_with_confidence(base, omega, spec))]
    if policy is PolicyKind.RELABEL_OMEGA_SEPARATED:
        out = []
        for j in coeff_judgments:
            base = mixup_label(stimulus.class_a, stimulus.class_b, j.lambda_h, num_classes)
            out.append((image, smooth_with_confidence(base, j.confidence, spec)))
        return out
    raise PolicyError(f"unhandled policy {policy!r}")
