"""Synthetic annotator behavior for the desk-scale harness and fixtures.

Simulated annotators relabel a mixed image through a per-pair sigmoidal
curve (plus response noise) and report confidence that falls off as the
generating coefficient approaches the ambiguous 0.5 midpoint: mean
confidence is 0.79 at the extremes (folded coefficient 0.1), 0.72 at 0.25,
and 0.63 at the midpoint, linearly interpolated in |0.5 - lambda|.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .hmixdata import InterfaceKind, Judgment, StimulusRef
from .mixcore import MixedStimulus

#: (distance from 0.5, mean reported confidence) anchors.
CONFIDENCE_TREND = ((0.0, 0.63), (0.25, 0.72), (0.4, 0.79))


def confidence_mean_for(lambda_f: float) -> float:
    """Expected confidence at a generating coefficient, per the trend above."""
    dist = abs(0.5 - lambda_f)
    xs = [d for d, _ in CONFIDENCE_TREND]
    ys = [c for _, c in CONFIDENCE_TREND]
    return float(np.interp(dist, xs, ys))


@dataclass(frozen=True)
class AnnotatorModel:
    """Ground-truth relabeling curve parameters for one class pair."""

    c: float
    d: float
    k: float
    lambda0: float

    def relabel(self, lambda_f: float) -> float:
        z = -self.k * (lambda_f - self.lambda0)
        return float(self.c + (self.d - self.c) / (1.0 + np.exp(z)))


def pair_annotator_model(
    class_pair: tuple[int, int], rng: np.random.Generator
) -> AnnotatorModel:
    """Draw a jittered sigmoidal relabeling curve for a class pair."""
    return AnnotatorModel(
        c=float(rng.uniform(0.0, 0.08)),
        d=float(rng.uniform(0.92, 1.0)),
        k=float(rng.uniform(6.0, 14.0)),
        lambda0=float(rng.uniform(0.42, 0.58)),
    )


def simulate_inference_judgments(
    stimuli: Iterable[MixedStimulus],
    rng: np.random.Generator,
    judgments_per_stimulus: int = 2,
    lambda_noise: float = 0.04,
    confidence_noise: float = 0.05,
    session_prefix: str = "sim",
) -> list[Judgment]:
    """Simulated coefficient-inference responses for a stimulus set.

    Each simulated participant sees one stimulus per trial; λ_h follows the
    pair's sigmoidal curve in the low-class orientation plus Gaussian noise,
    and confidence follows the extremity trend plus noise.
    """
    models: dict[tuple[int, int], AnnotatorModel] = {}
    judgments = []
    counter = 0
    for stim in stimuli:
        pair = (min(stim.class_a, stim.class_b), max(stim.class_a, stim.class_b))
        if pair not in models:
            models[pair] = pair_annotator_model(pair, rng)
        model = models[pair]
        for _ in range(judgments_per_stimulus):
            # Curves live in the low-class orientation; express the result
            # back as the weight on this stimulus's class_a.
            lam_f = stim.lambda_f if stim.class_a <= stim.class_b else 1.0 - stim.lambda_f
            lam_h = model.relabel(lam_f) + rng.normal(0.0, lambda_noise)
            if stim.class_a > stim.class_b:
                lam_h = 1.0 - lam_h
            omega = confidence_mean_for(stim.lambda_f) + rng.normal(0.0, confidence_noise)
            counter += 1
            judgments.append(
                Judgment(
                    participant_id=f"{session_prefix}-p{counter:05d}",
                    session_id=f"{session_prefix}-s{counter:05d}",
                    trial_index=1,
                    stimulus=StimulusRef.from_stimulus(stim),
                    interface=InterfaceKind.INFER_COEFFICIENT,
                    lambda_h=float(np.clip(lam_h, 0.0, 1.0)),
                    confidence=float(np.clip(omega, 0.0, 1.0)),
                )
            )
    return judgments


def _spread_around(mean: float, n: int, width: float) -> list[float]:
    """n values symmetric around ``mean`` (so the float mean is exact to
    rounding), all inside [0, 1]."""
    width = min(width, mean, 1.0 - mean)
    offsets = np.linspace(-width, width, n)
    return [float(mean + o) for o in offsets]


def _ref(pair_no: int, lambda_f: float, class_a: int = 0, class_b: int = 1) -> StimulusRef:
    return StimulusRef(
        pair_id=f"fx-pair-{pair_no:03d}",
        endpoint_a_id=f"fx-img-{pair_no:03d}a",
        endpoint_b_id=f"fx-img-{pair_no:03d}b",
        class_a=class_a,
        class_b=class_b,
        lambda_f=lambda_f,
    )


def confidence_trend_fixture(per_bucket: int = 9) -> list[Judgment]:
    """Inference judgments whose per-extremity confidence means are exactly
    the trend anchors (0.79 / 0.72 / 0.63)."""
    out = []
    counter = 0
    for lam_f, mean in ((0.1, 0.79), (0.25, 0.72), (0.5, 0.63)):
        for i, omega in enumerate(_spread_around(mean, per_bucket, 0.1)):
            counter += 1
            out.append(
                Judgment(
                    participant_id=f"fx-p{counter:04d}",
                    session_id=f"fx-s{counter:04d}",
                    trial_index=1,
                    stimulus=_ref(counter, lam_f),
                    interface=InterfaceKind.INFER_COEFFICIENT,
                    lambda_h=0.5,
                    confidence=omega,
                )
            )
    return out


def high_relabel_fixture(
    n_flagged: int = 9, n_clean: int = 11, per_pair: int = 3
) -> tuple[list[Judgment], list[str]]:
    """Selection judgments planting ``n_flagged`` pairs that every selection
    interface flags as highly relabeled, among ``n_clean`` near-midpoint
    pairs. Returns (judgments, planted pair ids)."""
    kinds = (
        InterfaceKind.CONSTRUCT_START_LOW,
        InterfaceKind.CONSTRUCT_START_HIGH,
        InterfaceKind.SELECT_SHUFFLED,
    )
    judgments = []
    flagged_ids = []
    counter = 0
    for pair_no in range(n_flagged + n_clean):
        flagged = pair_no < n_flagged
        pair_id = f"fx-pair-{pair_no:03d}"
        if flagged:
            flagged_ids.append(pair_id)
        # Alternate the direction of departure to keep the fixture honest.
        center = (0.7 if pair_no % 2 == 0 else 0.3) if flagged else 0.5
        for kind in kinds:
            for lam_h in _spread_around(center, per_pair, 0.1):
                counter += 1
                judgments.append(
                    Judgment(
                        participant_id=f"fx-sel-p{counter:04d}",
                        session_id=f"fx-sel-s{counter:04d}",
                        trial_index=1,
                        stimulus=_ref(pair_no, 0.5),
                        interface=kind,
                        lambda_h=lam_h,
                    )
                )
    return judgments, flagged_ids


def repeat_consistency_fixture(
    lambda_diffs: Sequence[float] = (0.0, 0.03, 0.1),
    confidence_diffs: Sequence[float] = (0.01, 0.05, 0.2),
) -> list[Judgment]:
    """Inference sessions whose repeat-trial deltas are exactly as given."""
    if len(lambda_diffs) != len(confidence_diffs):
        raise ValueError("need matching diff lists")
    judgments = []
    for i, (dl, dc) in enumerate(zip(lambda_diffs, confidence_diffs)):
        participant = f"fx-rep-p{i:03d}"
        session = f"fx-rep-s{i:03d}"
        ref = _ref(i, 0.5)
        base_lambda, base_conf = 0.4, 0.5
        judgments.append(
            Judgment(
                participant_id=participant,
                session_id=session,
                trial_index=1,
                stimulus=ref,
                interface=InterfaceKind.INFER_COEFFICIENT,
                lambda_h=base_lambda,
                confidence=base_conf,
            )
        )
        judgments.append(
            Judgment(
                participant_id=participant,
                session_id=session,
                trial_index=2,
                stimulus=ref,
                interface=InterfaceKind.INFER_COEFFICIENT,
                lambda_h=base_lambda + dl,
                confidence=base_conf + dc,
                repeat_of=1,
            )
        )
    return judgments
