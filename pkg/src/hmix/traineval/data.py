"""Bundled desk-scale dataset plus a CIFAR-10 binary-batch reader.

The procedural generator draws 10 classes of 32x32x3 pattern images
(stripes, disks, checkers, ...) with per-sample jitter in position, scale,
contrast, tint, and additive noise. Intensities are quantized to the 8-bit
grid (multiples of 1/255) at creation time so images survive a uint8
save/load round-trip exactly.

``annotation_counts`` simulates a crowd of annotators per image, yielding
both integer label-frequency tables and the normalized soft labels used as
evaluation targets.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CLASS_NAMES: tuple[str, ...] = (
    "h-stripes",
    "v-stripes",
    "disk",
    "ring",
    "square",
    "gradient",
    "checker",
    "cross",
    "blobs",
    "triangle",
)

NUM_CLASSES = len(CLASS_NAMES)
IMAGE_SIZE = 32
CHANNELS = 3


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    axis = (np.arange(size) + 0.5) / size
    return np.meshgrid(axis, axis, indexing="ij")


def _render_pattern(class_index: int, rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    cy, cx = rng.uniform(0.35, 0.65, size=2)
    if class_index == 0:  # horizontal stripes
        freq = rng.uniform(3.0, 5.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        return 0.5 + 0.45 * np.sin(2 * np.pi * freq * yy + phase)
    if class_index == 1:  # vertical stripes
        freq = rng.uniform(3.0, 5.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        return 0.5 + 0.45 * np.sin(2 * np.pi * freq * xx + phase)
    if class_index == 2:  # filled disk
        r = rng.uniform(0.18, 0.30)
        dist2 = (yy - cy) ** 2 + (xx - cx) ** 2
        return np.where(dist2 < r * r, 0.9, 0.15)
    if class_index == 3:  # ring
        r = rng.uniform(0.22, 0.33)
        w = rng.uniform(0.05, 0.09)
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        return np.where(np.abs(dist - r) < w, 0.9, 0.15)
    if class_index == 4:  # filled square
        h = rng.uniform(0.15, 0.25)
        inside = (np.abs(yy - cy) < h) & (np.abs(xx - cx) < h)
        return np.where(inside, 0.9, 0.15)
    if class_index == 5:  # oriented gradient
        t = rng.uniform(0.0, 1.0)
        ramp = t * xx + (1.0 - t) * yy
        if rng.random() < 0.5:
            ramp = 1.0 - ramp
        return 0.1 + 0.8 * ramp
    if class_index == 6:  # checkerboard
        freq = rng.uniform(2.0, 3.5)
        phase = rng.uniform(0.0, 2 * np.pi)
        board = np.sin(2 * np.pi * freq * xx + phase) * np.sin(2 * np.pi * freq * yy + phase)
        return np.where(board > 0, 0.85, 0.15)
    if class_index == 7:  # cross
        w = rng.uniform(0.06, 0.11)
        bars = (np.abs(yy - cy) < w) | (np.abs(xx - cx) < w)
        return np.where(bars, 0.9, 0.15)
    if class_index == 8:  # three soft blobs
        img = np.full_like(yy, 0.12)
        for _ in range(3):
            by, bx = rng.uniform(0.2, 0.8, size=2)
            s = rng.uniform(0.05, 0.09)
            img += 0.7 * np.exp(-(((yy - by) ** 2 + (xx - bx) ** 2) / (2 * s * s)))
        return np.clip(img, 0.0, 1.0)
    if class_index == 9:  # downward triangle
        half = rng.uniform(0.25, 0.35)
        top = rng.uniform(0.15, 0.3)
        height = rng.uniform(0.4, 0.55)
        inside = (yy > top) & (yy < top + height) & (
            np.abs(xx - cx) < half * (1.0 - (yy - top) / height)
        )
        return np.where(inside, 0.9, 0.15)
    raise ValueError(f"no pattern for class {class_index}")


def make_image(class_index: int, rng: np.random.Generator, size: int = IMAGE_SIZE) -> np.ndarray:
    """One (size, size, 3) float64 image in [0, 1], quantized to 255ths."""
    pattern = _render_pattern(class_index, rng, size)
    contrast = rng.uniform(0.75, 1.0)
    brightness = rng.uniform(-0.05, 0.05)
    base = np.clip(pattern * contrast + brightness, 0.0, 1.0)
    # Tint is independent of the class so color carries no label signal.
    gains = rng.uniform(0.7, 1.0, size=CHANNELS)
    img = base[:, :, None] * gains[None, None, :]
    img += rng.normal(0.0, 0.04, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return np.round(img * 255.0) / 255.0


def make_dataset(
    n: int, rng: np.random.Generator, size: int = IMAGE_SIZE
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced sample of n images: (n, size, size, 3) plus int labels."""
    labels = np.arange(n) % NUM_CLASSES
    rng.shuffle(labels)
    images = np.stack([make_image(int(k), rng, size) for k in labels])
    return images, labels.astype(np.int64)


def annotation_counts(
    labels: np.ndarray,
    rng: np.random.Generator,
    annotators: int = 50,
    ambiguous_fraction: float = 0.3,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate per-image annotator votes.

    Most images get near-unanimous votes; an ``ambiguous_fraction`` of them
    draw votes from a label distribution with real mass on 1-2 confusable
    classes. Returns (counts (N, K) ints, soft labels (N, K)) where soft
    labels are the normalized counts.
    """
    n = len(labels)
    counts = np.zeros((n, NUM_CLASSES), dtype=np.int64)
    for i, true in enumerate(labels):
        base = np.full(NUM_CLASSES, 0.004)
        base[true] += 1.0
        if rng.random() < ambiguous_fraction:
            spread = rng.uniform(0.15, 0.5)
            others = rng.choice(
                [c for c in range(NUM_CLASSES) if c != true],
                size=int(rng.integers(1, 3)),
                replace=False,
            )
            base[true] -= spread
            base[others] += spread / len(others)
        base = base / base.sum()
        counts[i] = rng.multinomial(annotators, base)
    soft = counts / counts.sum(axis=1, keepdims=True)
    return counts, soft


def flatten_images(images: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N, H*W*C) row-major feature matrix."""
    return images.reshape(images.shape[0], -1)


# --------------------------------------------------------------------------
# CIFAR-10 binary batches (optional, user-supplied)
# --------------------------------------------------------------------------

_CIFAR_RECORD = 3073  # 1 label byte + 3 * 1024 pixel bytes


def load_cifar10_batch(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read one CIFAR-10 binary batch file.

    Records are 3073 bytes: a label byte then 3072 pixel bytes in planar
    R, G, B order. Returns images as (N, 32, 32, 3) float64 in [0, 1]
    (multiples of 1/255) and int labels.
    """
    raw = np.fromfile(str(path), dtype=np.uint8)
    if raw.size == 0 or raw.size % _CIFAR_RECORD != 0:
        raise ValueError(
            f"{path}: expected a multiple of {_CIFAR_RECORD} bytes, got {raw.size}"
        )
    records = raw.reshape(-1, _CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return pixels.astype(np.float64) / 255.0, labels
