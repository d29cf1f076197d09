"""Convex mixing kernels for images and labels, plus coefficient sampling.

Mixing happens in normalized pixel space: an image is a dense H x W x C grid
of float64 intensities in [0, 1], so the tensors shown to annotators and the
tensors fed to a classifier are the same numbers. ``data_mix`` and
``label_mix`` are evaluated so that mixing (a, b, lam) and (b, a, 1 - lam)
produce bit-identical output, and outputs always stay inside [0, 1].

Coefficients are plain floats carried at full precision; use
``coefficient_to_string`` / ``coefficient_from_string`` when writing them to
text files so that values like 0.1 round-trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

# The 11-point sweep used by the midpoint-selection interfaces, and the
# 5-point coefficient set used for inference stimuli.
SELECTION_GRID: tuple[float, ...] = tuple(i / 10 for i in range(11))
INFERENCE_COEFFICIENTS: tuple[float, ...] = (0.1, 0.25, 0.5, 0.75, 0.9)


class ShapeMismatchError(ValueError):
    """The two endpoints cannot be mixed because their shapes differ."""


def check_unit_interval(value: float, name: str = "value") -> float:
    """Validate and return ``value`` as a float in [0, 1]."""
    v = float(value)
    if math.isnan(v) or v < 0.0 or v > 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return v


def coefficient_to_string(value: float) -> str:
    """Serialize a coefficient as its shortest exact decimal string."""
    return repr(check_unit_interval(value, "coefficient"))


def coefficient_from_string(text: str) -> float:
    """Parse a coefficient written by :func:`coefficient_to_string`."""
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ValueError(f"not a decimal coefficient: {text!r}") from None
    return check_unit_interval(v, "coefficient")


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Dense H x W x C intensity grid with every value in [0, 1].

    The wrapped array is float64 and marked read-only, so instances are safe
    to share across threads and to reuse as mixing endpoints.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ShapeMismatchError(
                f"image data must have shape (height, width, channels), got {arr.shape}"
            )
        if arr.size == 0:
            raise ShapeMismatchError("image must contain at least one pixel")
        if not np.isfinite(arr).all():
            raise ValueError("image intensities must be finite")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    def flat(self) -> np.ndarray:
        """Row-major 1-D view of the intensities."""
        return self.data.reshape(-1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"ImageTensor(shape={self.data.shape})"


@dataclass(frozen=True, eq=False)
class LabelDistribution:
    """A probability vector over K classes (entries >= 0, summing to 1)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.probs, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("label distribution must be a non-empty 1-D vector")
        if not np.isfinite(arr).all() or float(arr.min()) < 0.0:
            raise ValueError("label probabilities must be finite and non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"label probabilities must sum to 1 (got {total!r})")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def num_classes(self) -> int:
        return int(self.probs.size)

    @classmethod
    def one_hot(cls, class_index: int, num_classes: int) -> "LabelDistribution":
        if not 0 <= class_index < num_classes:
            raise ValueError(
                f"class index {class_index} out of range for {num_classes} classes"
            )
        probs = np.zeros(num_classes)
        probs[class_index] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, num_classes: int) -> "LabelDistribution":
        if num_classes < 1:
            raise ValueError("need at least one class")
        return cls(np.full(num_classes, 1.0 / num_classes))

    def entropy(self) -> float:
        """Shannon entropy in nats."""
        p = self.probs[self.probs > 0.0]
        return float(-(p * np.log(p)).sum())

    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelDistribution):
            return NotImplemented
        return bool(np.array_equal(self.probs, other.probs))

    def __repr__(self) -> str:
        return f"LabelDistribution(K={self.num_classes})"


@dataclass(frozen=True, eq=False)
class MixedStimulus:
    """An identified mixed image: the endpoint pair, the coefficient, the pixels.

    ``lambda_f`` is the weight on endpoint a; the mixed image is recomputable
    as ``data_mix(endpoint_a, endpoint_b, lambda_f)``.
    """

    pair_id: str
    endpoint_a_id: str
    endpoint_b_id: str
    class_a: int
    class_b: int
    lambda_f: float
    mixed_image: ImageTensor

    def __post_init__(self) -> None:
        if self.class_a == self.class_b:
            raise ValueError("a mixed stimulus must combine two distinct classes")
        object.__setattr__(
            self, "lambda_f", check_unit_interval(self.lambda_f, "lambda_f")
        )

    @property
    def stimulus_id(self) -> str:
        return f"{self.pair_id}:{coefficient_to_string(self.lambda_f)}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MixedStimulus):
            return NotImplemented
        return (
            self.pair_id == other.pair_id
            and self.endpoint_a_id == other.endpoint_a_id
            and self.endpoint_b_id == other.endpoint_b_id
            and self.class_a == other.class_a
            and self.class_b == other.class_b
            and self.lambda_f == other.lambda_f
            and self.mixed_image == other.mixed_image
        )


def _convex_mix(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    # The branch makes the mirrored call evaluate the exact same weighted
    # sum: mixing (a, b, lam) with lam < 0.5 and (b, a, 1 - lam) both take
    # the second branch / first branch with identical float weights, so the
    # results are bit-identical and never leave [0, 1].
    if lam >= 0.5:
        return lam * a + (1.0 - lam) * b
    w = 1.0 - lam
    return w * b + (1.0 - w) * a


def data_mix(x_i: ImageTensor, x_j: ImageTensor, lambda_f: float) -> ImageTensor:
    """Blend two images: ``lambda_f * x_i + (1 - lambda_f) * x_j`` per pixel."""
    lam = check_unit_interval(lambda_f, "lambda_f")
    if x_i.data.shape != x_j.data.shape:
        raise ShapeMismatchError(
            f"endpoint shapes differ: {x_i.data.shape} vs {x_j.data.shape}"
        )
    return ImageTensor(_convex_mix(x_i.data, x_j.data, lam))


def label_mix(
    y_i: LabelDistribution, y_j: LabelDistribution, lambda_g: float
) -> LabelDistribution:
    """Blend two label distributions: ``lambda_g * y_i + (1 - lambda_g) * y_j``."""
    lam = check_unit_interval(lambda_g, "lambda_g")
    if y_i.num_classes != y_j.num_classes:
        raise ShapeMismatchError(
            f"class counts differ: {y_i.num_classes} vs {y_j.num_classes}"
        )
    return LabelDistribution(_convex_mix(y_i.probs, y_j.probs, lam))


@dataclass(frozen=True)
class BetaSpec:
    """Beta(alpha, beta) coefficient distribution; Beta(1, 1) is uniform."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise ValueError("Beta parameters must be positive")


@dataclass(frozen=True)
class DiscreteSpec:
    """A finite coefficient set with optional (unnormalized) weights."""

    values: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.values) == 0:
            raise ValueError("discrete coefficient set must be non-empty")
        object.__setattr__(
            self,
            "values",
            tuple(check_unit_interval(v, "coefficient") for v in self.values),
        )
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(self.values):
                raise ValueError("weights must match values")
            if any(x < 0.0 for x in w) or sum(w) <= 0.0:
                raise ValueError("weights must be non-negative with positive sum")
            object.__setattr__(self, "weights", w)


CoefficientSpec = Union[BetaSpec, DiscreteSpec]


def sample_lambda(distribution: CoefficientSpec, rng: np.random.Generator) -> float:
    """Draw one mixing coefficient from the given distribution spec."""
    if isinstance(distribution, BetaSpec):
        if distribution.alpha == 1.0 and distribution.beta == 1.0:
            return float(rng.random())
        return float(rng.beta(distribution.alpha, distribution.beta))
    if isinstance(distribution, DiscreteSpec):
        values = distribution.values
        if distribution.weights is None:
            idx = int(rng.integers(0, len(values)))
        else:
            w = np.asarray(distribution.weights, dtype=np.float64)
            idx = int(rng.choice(len(values), p=w / w.sum()))
        return values[idx]
    raise TypeError(f"unsupported coefficient distribution: {distribution!r}")


def sweep_stimuli(
    x_i: ImageTensor,
    x_j: ImageTensor,
    grid: Sequence[float],
    *,
    pair_id: str = "pair",
    endpoint_a_id: str = "a",
    endpoint_b_id: str = "b",
    class_a: int = 0,
    class_b: int = 1,
) -> list[MixedStimulus]:
    """Mix one endpoint pair at every coefficient of an ascending grid."""
    grid = [check_unit_interval(v, "grid value") for v in grid]
    if not grid:
        raise ValueError("grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be sorted strictly ascending")
    return [
        MixedStimulus(
            pair_id=pair_id,
            endpoint_a_id=endpoint_a_id,
            endpoint_b_id=endpoint_b_id,
            class_a=class_a,
            class_b=class_b,
            lambda_f=lam,
            mixed_image=data_mix(x_i, x_j, lam),
        )
        for lam in grid
    ]
