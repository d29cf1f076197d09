"""Stimulus pools: endpoint images, pairs, and the mixes served to sessions.

A pool persists as a directory holding ``pool.json`` (classes, endpoints,
pairs, inference coefficients as decimal strings) plus ``endpoints.npz``
with the endpoint pixels as uint8. Mixed images are never stored: they are
recomputed from the endpoints on demand, so a stimulus is always exactly
``data_mix(endpoint_a, endpoint_b, lambda_f)`` and identical across
restarts.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from ..mixcore import (
    INFERENCE_COEFFICIENTS,
    SELECTION_GRID,
    ImageTensor,
    MixedStimulus,
    coefficient_from_string,
    coefficient_to_string,
    data_mix,
)

POOL_FORMAT = "hmix-pool-v1"


class PoolFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EndpointImage:
    image_id: str
    class_index: int
    image: ImageTensor


@dataclass(frozen=True)
class PairSpec:
    pair_id: str
    endpoint_a_id: str
    endpoint_b_id: str
    class_a: int
    class_b: int


@dataclass
class StimulusPool:
    class_names: tuple[str, ...]
    endpoints: dict[str, EndpointImage]
    pairs: dict[str, PairSpec]
    #: inference stimuli as (pair_id, lambda_f)
    inference_stimuli: list[tuple[str, float]]
    _cache: dict[str, MixedStimulus] = field(default_factory=dict, repr=False)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def stimulus(self, pair_id: str, lambda_f: float) -> MixedStimulus:
        """The (recomputed, cached) mixed image for one pair and coefficient."""
        pair = self.pairs[pair_id]
        key = f"{pair_id}:{coefficient_to_string(lambda_f)}"
        if key not in self._cache:
            a = self.endpoints[pair.endpoint_a_id]
            b = self.endpoints[pair.endpoint_b_id]
            self._cache[key] = MixedStimulus(
                pair_id=pair_id,
                endpoint_a_id=pair.endpoint_a_id,
                endpoint_b_id=pair.endpoint_b_id,
                class_a=pair.class_a,
                class_b=pair.class_b,
                lambda_f=lambda_f,
                mixed_image=data_mix(a.image, b.image, lambda_f),
            )
        return self._cache[key]

    def stimulus_by_id(self, stimulus_id: str) -> MixedStimulus:
        pair_id, _, lam_text = stimulus_id.rpartition(":")
        if not pair_id or pair_id not in self.pairs:
            raise KeyError(stimulus_id)
        return self.stimulus(pair_id, coefficient_from_string(lam_text))

    def selection_sweep(self, pair_id: str) -> list[MixedStimulus]:
        return [self.stimulus(pair_id, lam) for lam in SELECTION_GRID]

    def all_inference_stimuli(self) -> list[MixedStimulus]:
        return [self.stimulus(p, lam) for p, lam in self.inference_stimuli]

    def stimulus_png(self, stimulus_id: str) -> bytes:
        """Losslessly encoded 8-bit PNG of one stimulus."""
        stim = self.stimulus_by_id(stimulus_id)
        arr = np.round(stim.mixed_image.data * 255.0).astype(np.uint8)
        img = Image.fromarray(arr, mode="RGB" if arr.shape[2] == 3 else None)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    # -- persistence --------------------------------------------------------

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format": POOL_FORMAT,
            "class_names": list(self.class_names),
            "endpoints": [
                {"id": e.image_id, "class": e.class_index}
                for e in self.endpoints.values()
            ],
            "pairs": [
                {
                    "pair_id": p.pair_id,
                    "endpoint_a_id": p.endpoint_a_id,
                    "endpoint_b_id": p.endpoint_b_id,
                    "class_a": p.class_a,
                    "class_b": p.class_b,
                }
                for p in self.pairs.values()
            ],
            "inference_stimuli": [
                {"pair_id": pid, "lambda_f": coefficient_to_string(lam)}
                for pid, lam in self.inference_stimuli
            ],
        }
        (directory / "pool.json").write_text(json.dumps(manifest, indent=2) + "\n")
        arrays = {
            e.image_id: np.round(e.image.data * 255.0).astype(np.uint8)
            for e in self.endpoints.values()
        }
        np.savez_compressed(directory / "endpoints.npz", **arrays)
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "StimulusPool":
        directory = Path(directory)
        manifest_path = directory / "pool.json"
        if not manifest_path.exists():
            raise PoolFormatError(f"{manifest_path} not found")
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("format") != POOL_FORMAT:
            raise PoolFormatError(
                f"unsupported pool format: {manifest.get('format')!r} (expected {POOL_FORMAT})"
            )
        with np.load(directory / "endpoints.npz") as npz:
            pixel_data = {key: npz[key] for key in npz.files}
        endpoints = {}
        for entry in manifest["endpoints"]:
            arr = pixel_data[entry["id"]].astype(np.float64) / 255.0
            endpoints[entry["id"]] = EndpointImage(
                image_id=entry["id"],
                class_index=int(entry["class"]),
                image=ImageTensor(arr),
            )
        pairs = {
            p["pair_id"]: PairSpec(
                pair_id=p["pair_id"],
                endpoint_a_id=p["endpoint_a_id"],
                endpoint_b_id=p["endpoint_b_id"],
                class_a=int(p["class_a"]),
                class_b=int(p["class_b"]),
            )
            for p in manifest["pairs"]
        }
        stimuli = [
            (s["pair_id"], coefficient_from_string(s["lambda_f"]))
            for s in manifest["inference_stimuli"]
        ]
        return cls(
            class_names=tuple(manifest["class_names"]),
            endpoints=endpoints,
            pairs=pairs,
            inference_stimuli=stimuli,
        )


def build_pool(
    images_by_class: Mapping[int, Sequence[np.ndarray]],
    class_names: Sequence[str],
    rng: np.random.Generator,
    pairings_per_class_pair: int = 2,
    inference_per_pair: int = 2,
    enrich_midpoint: bool = False,
    coefficients: Sequence[float] = INFERENCE_COEFFICIENTS,
) -> StimulusPool:
    """Assemble a pool from per-class image banks.

    Every unordered class pair contributes ``pairings_per_class_pair`` image
    pairings; each pairing gets ``inference_per_pair`` inference coefficients
    drawn uniformly from ``coefficients``, or, with ``enrich_midpoint``, the
    midpoint plus one draw from each half of the coefficient set.
    """
    class_names = tuple(class_names)
    endpoints: dict[str, EndpointImage] = {}
    ids_by_class: dict[int, list[str]] = {}
    for class_index, images in sorted(images_by_class.items()):
        if not 0 <= class_index < len(class_names):
            raise ValueError(f"class index {class_index} out of range")
        for i, arr in enumerate(images):
            image_id = f"img-c{class_index}-{i:04d}"
            endpoints[image_id] = EndpointImage(
                image_id=image_id, class_index=class_index, image=ImageTensor(arr)
            )
            ids_by_class.setdefault(class_index, []).append(image_id)

    pairs: dict[str, PairSpec] = {}
    inference: list[tuple[str, float]] = []
    coeffs = list(coefficients)
    lows = [c for c in coeffs if c < 0.5]
    highs = [c for c in coeffs if c > 0.5]
    classes = sorted(ids_by_class)
    pair_no = 0
    for i, ca in enumerate(classes):
        for cb in classes[i + 1 :]:
            for _ in range(pairings_per_class_pair):
                a_id = ids_by_class[ca][int(rng.integers(0, len(ids_by_class[ca])))]
                b_id = ids_by_class[cb][int(rng.integers(0, len(ids_by_class[cb])))]
                pair_id = f"pair-{pair_no:05d}"
                pair_no += 1
                pairs[pair_id] = PairSpec(
                    pair_id=pair_id,
                    endpoint_a_id=a_id,
                    endpoint_b_id=b_id,
                    class_a=ca,
                    class_b=cb,
                )
                if enrich_midpoint and lows and highs:
                    chosen = [
                        0.5,
                        lows[int(rng.integers(0, len(lows)))],
                        highs[int(rng.integers(0, len(highs)))],
                    ]
                else:
                    chosen = [
                        coeffs[int(rng.integers(0, len(coeffs)))]
                        for _ in range(inference_per_pair)
                    ]
                inference.extend((pair_id, lam) for lam in chosen)
    return StimulusPool(
        class_names=class_names,
        endpoints=endpoints,
        pairs=pairs,
        inference_stimuli=inference,
    )


def build_procedural_pool(
    rng: np.random.Generator,
    per_class: int = 6,
    pairings_per_class_pair: int = 2,
    inference_per_pair: int = 2,
    enrich_midpoint: bool = False,
) -> StimulusPool:
    """A ready-to-serve pool over the bundled procedural dataset."""
    from ..traineval.data import CLASS_NAMES, NUM_CLASSES, make_image

    images_by_class = {
        k: [make_image(k, rng) for _ in range(per_class)] for k in range(NUM_CLASSES)
    }
    return build_pool(
        images_by_class,
        CLASS_NAMES,
        rng,
        pairings_per_class_pair=pairings_per_class_pair,
        inference_per_pair=inference_per_pair,
        enrich_midpoint=enrich_midpoint,
    )
