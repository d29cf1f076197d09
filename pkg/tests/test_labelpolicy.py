import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmix.boundaryfit import BoundaryFit
from hmix.hmixdata import InterfaceKind, Judgment, SoftLabelJudgment, StimulusRef
from hmix.labelpolicy import (
    PolicyError,
    PolicyKind,
    SmoothingSpec,
    build_training_label,
    clamp_soft_label,
    mixup_label,
    smooth_with_confidence,
)
from hmix.mixcore import ImageTensor, LabelDistribution, MixedStimulus, data_mix


def make_stimulus(class_a=3, class_b=7, lam=0.5):
    rng = np.random.default_rng(17)
    a = ImageTensor(rng.random((4, 4, 3)))
    b = ImageTensor(rng.random((4, 4, 3)))
    return MixedStimulus(
        pair_id="p0",
        endpoint_a_id="a",
        endpoint_b_id="b",
        class_a=class_a,
        class_b=class_b,
        lambda_f=lam,
        mixed_image=data_mix(a, b, lam),
    )


def infer_judgment(stim, lam_h, conf, i=0):
    return Judgment(
        participant_id=f"p{i}",
        session_id=f"s{i}",
        trial_index=1,
        stimulus=StimulusRef.from_stimulus(stim),
        interface=InterfaceKind.INFER_COEFFICIENT,
        lambda_h=lam_h,
        confidence=conf,
    )


class TestMixupLabel:
    def test_midpoint(self):
        label = mixup_label(3, 7, 0.5, 10)
        assert label.probs[3] == 0.5 and label.probs[7] == 0.5

    def test_identity(self):
        assert mixup_label(3, 7, 1.0, 10) == LabelDistribution.one_hot(3, 10)

    def test_hand_case(self):
        label = mixup_label(0, 1, 0.25, 10)
        assert label.probs[0] == 0.25 and label.probs[1] == 0.75

    def test_out_of_range_class(self):
        with pytest.raises(ValueError):
            mixup_label(0, 10, 0.5, 10)


class TestSmoothing:
    def test_defaults_at_full_confidence(self):
        spec = SmoothingSpec()
        out = smooth_with_confidence(mixup_label(0, 1, 0.5, 10), 1.0, spec)
        assert out.probs[0] == pytest.approx(0.49801, abs=5e-6)
        assert out.probs[5] == pytest.approx(0.0004975, abs=5e-8)

    def test_defaults_at_zero_confidence(self):
        spec = SmoothingSpec()
        out = smooth_with_confidence(mixup_label(0, 1, 0.5, 10), 0.0, spec)
        assert out.probs[0] == pytest.approx(0.10784, abs=5e-6)
        assert out.probs[5] == pytest.approx(0.09804, abs=5e-6)

    def test_huge_alpha_tends_uniform(self):
        spec = SmoothingSpec(a=1e9, b=0.5, num_classes=10)
        out = smooth_with_confidence(mixup_label(0, 1, 0.5, 10), 0.0, spec)
        assert out.probs == pytest.approx(np.full(10, 0.1), abs=1e-8)

    def test_alpha_zero_limit_returns_label(self):
        spec = SmoothingSpec(a=1e-12, b=0.5, num_classes=10)
        base = mixup_label(0, 1, 0.3, 10)
        out = smooth_with_confidence(base, 1.0, spec)
        assert out.probs == pytest.approx(base.probs, abs=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0.01, 0.99),
        st.floats(0.0, 1.0),
        st.floats(0.0, 1.0),
    )
    def test_entropy_strictly_decreasing_in_confidence(self, lam, w1, w2):
        if abs(w1 - w2) < 1e-3:
            return
        hi, lo = max(w1, w2), min(w1, w2)
        spec = SmoothingSpec(num_classes=10)
        base = mixup_label(2, 9, lam, 10)
        ent_hi = smooth_with_confidence(base, hi, spec).entropy()
        ent_lo = smooth_with_confidence(base, lo, spec).entropy()
        assert ent_hi < ent_lo

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.501, 1.0))
    def test_argmax_preserved(self, omega, lam):
        spec = SmoothingSpec(num_classes=10)
        base = mixup_label(4, 6, lam, 10)
        out = smooth_with_confidence(base, omega, spec)
        assert out.argmax() == 4

    def test_invalid_omega(self):
        with pytest.raises(ValueError):
            smooth_with_confidence(mixup_label(0, 1, 0.5, 10), 1.2, SmoothingSpec())

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SmoothingSpec(a=-1.0)
        with pytest.raises(ValueError):
            SmoothingSpec(b=1.0)


def soft_judgment(**kw):
    defaults = dict(
        participant_id="p",
        session_id="s",
        trial_index=1,
        stimulus=StimulusRef("p0", "a", "b", 0, 5, 0.5),
    )
    defaults.update(kw)
    return SoftLabelJudgment(**defaults)


class TestClampSoftLabel:
    def test_full_mass_top1(self):
        j = soft_judgment(top1_class=2, top1_prob=100)
        assert clamp_soft_label(j, 10) == LabelDistribution.one_hot(2, 10)

    def test_no_leftover_two_hot(self):
        j = soft_judgment(top1_class=0, top1_prob=50, top2_class=1, top2_prob=50)
        out = clamp_soft_label(j, 10)
        assert out.probs[0] == 0.5 and out.probs[1] == 0.5

    def test_hand_constructed_redistribution(self):
        j = soft_judgment(
            top1_class=0,
            top1_prob=60,
            top2_class=1,
            top2_prob=20,
            ruled_out=frozenset({2, 3, 4, 5}),
        )
        out = clamp_soft_label(j, 10)
        expected = [0.735, 0.245, 0, 0, 0, 0, 0.005, 0.005, 0.005, 0.005]
        assert out.probs == pytest.approx(expected, abs=1e-12)

    def test_ruled_out_exactly_zero(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            top1 = int(rng.integers(0, 10))
            ruled = {int(c) for c in rng.choice(10, size=3, replace=False) if c != top1}
            j = soft_judgment(
                top1_class=top1, top1_prob=int(rng.integers(10, 90)),
                ruled_out=frozenset(ruled),
            )
            out = clamp_soft_label(j, 10)
            for c in ruled:
                assert out.probs[c] == 0.0


class TestBuildTrainingLabel:
    def test_no_aug_emits_nothing(self):
        assert build_training_label(PolicyKind.NO_AUG, make_stimulus()) == []

    def test_uniform(self):
        (pair,) = build_training_label(PolicyKind.UNIFORM, make_stimulus())
        assert pair[1] == LabelDistribution.uniform(10)

    def test_mixup_uses_generating_lambda(self):
        stim = make_stimulus(lam=0.75)
        (pair,) = build_training_label(PolicyKind.MIXUP, stim)
        assert pair[1].probs[3] == 0.75 and pair[1].probs[7] == 0.25

    def test_relabel_mean(self):
        stim = make_stimulus()
        judgments = [infer_judgment(stim, 0.6, 0.5, 0), infer_judgment(stim, 0.8, 0.5, 1)]
        (pair,) = build_training_label(PolicyKind.RELABEL, stim, judgments)
        assert pair[1].probs[3] == pytest.approx(0.7)

    def test_relabel_single_judgment_matches_mixup(self):
        stim = make_stimulus(lam=0.75)
        judgments = [infer_judgment(stim, 0.75, 0.9)]
        (mix_pair,) = build_training_label(PolicyKind.MIXUP, stim)
        (rel_pair,) = build_training_label(PolicyKind.RELABEL, stim, judgments)
        assert np.array_equal(mix_pair[1].probs, rel_pair[1].probs)

    def test_separated_emits_one_per_judgment(self):
        stim = make_stimulus()
        judgments = [infer_judgment(stim, 0.6, 0.9, 0), infer_judgment(stim, 0.4, 0.2, 1)]
        pairs = build_training_label(PolicyKind.RELABEL_OMEGA_SEPARATED, stim, judgments)
        assert len(pairs) == 2
        # lower confidence -> softer label
        assert pairs[0][1].entropy() < pairs[1][1].entropy()

    def test_aggregated_smooths_mean(self):
        stim = make_stimulus()
        judgments = [infer_judgment(stim, 0.6, 0.8, 0), infer_judgment(stim, 0.8, 0.6, 1)]
        (pair,) = build_training_label(PolicyKind.RELABEL_OMEGA_AGGREGATED, stim, judgments)
        spec = SmoothingSpec(num_classes=10)
        expected = smooth_with_confidence(mixup_label(3, 7, 0.7, 10), 0.7, spec)
        assert pair[1].probs == pytest.approx(expected.probs, abs=1e-12)

    def test_random_needs_rng(self):
        with pytest.raises(PolicyError):
            build_training_label(PolicyKind.RANDOM, make_stimulus())

    def test_relabel_needs_judgments(self):
        with pytest.raises(PolicyError):
            build_training_label(PolicyKind.RELABEL, make_stimulus())

    def test_boundary_fit_policy(self):
        stim = make_stimulus(class_a=3, class_b=7, lam=0.75)
        fit = BoundaryFit(c=0.0, d=1.0, k=12.0, lambda0=0.5,
                          residual_sse=0.0, n_points=5, converged=True)
        (pair,) = build_training_label(PolicyKind.BOUNDARY_FIT, stim, fits={(3, 7): fit})
        assert pair[1].probs[3] == pytest.approx(1 / (1 + np.exp(-3)))

    def test_boundary_fit_orientation(self):
        # stimulus with classes reversed relative to the stored pair key
        stim = make_stimulus(class_a=7, class_b=3, lam=0.25)
        fit = BoundaryFit(c=0.0, d=1.0, k=12.0, lambda0=0.5,
                          residual_sse=0.0, n_points=5, converged=True)
        (pair,) = build_training_label(PolicyKind.BOUNDARY_FIT, stim, fits={(3, 7): fit})
        # weight on class 3 must equal the low-orientation mapping of 0.75
        assert pair[1].probs[3] == pytest.approx(1 / (1 + np.exp(-3)))

    def test_top2clamp_averages_reports(self):
        stim = make_stimulus(class_a=0, class_b=5)
        ref = StimulusRef.from_stimulus(stim)
        j1 = soft_judgment(stimulus=ref, top1_class=0, top1_prob=100)
        j2 = soft_judgment(stimulus=ref, participant_id="q", top1_class=5, top1_prob=100)
        (pair,) = build_training_label(PolicyKind.TOP2CLAMP, stim, [j1, j2])
        assert pair[1].probs[0] == pytest.approx(0.5)
        assert pair[1].probs[5] == pytest.approx(0.5)

    def test_policy_sweep_emits_simplex(self):
        # 10^4 random cases across policies: outputs are distributions
        rng = np.random.default_rng(31)
        policies = [
            PolicyKind.UNIFORM,
            PolicyKind.RANDOM,
            PolicyKind.MIXUP,
            PolicyKind.RELABEL,
            PolicyKind.RELABEL_OMEGA_AGGREGATED,
            PolicyKind.RELABEL_OMEGA_SEPARATED,
        ]
        emitted = 0
        case = 0
        while emitted < 10_000:
            ca, cb = rng.choice(10, size=2, replace=False)
            stim = make_stimulus(class_a=int(ca), class_b=int(cb), lam=float(rng.random()))
            judgments = [
                infer_judgment(stim, float(rng.random()), float(rng.random()), i=case * 10 + t)
                for t in range(int(rng.integers(1, 4)))
            ]
            policy = policies[case % len(policies)]
            pairs = build_training_label(policy, stim, judgments, rng=rng)
            for _, label in pairs:
                assert float(label.probs.min()) >= 0.0
                assert abs(float(label.probs.sum()) - 1.0) <= 1e-9
                emitted += 1
            case += 1
