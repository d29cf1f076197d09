import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmix.mixcore import (
    INFERENCE_COEFFICIENTS,
    SELECTION_GRID,
    BetaSpec,
    DiscreteSpec,
    ImageTensor,
    LabelDistribution,
    ShapeMismatchError,
    coefficient_from_string,
    coefficient_to_string,
    data_mix,
    label_mix,
    sample_lambda,
    sweep_stimuli,
)


def img(values) -> ImageTensor:
    arr = np.asarray(values, dtype=np.float64)
    return ImageTensor(arr.reshape(1, -1, 1))


class TestImageTensor:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ImageTensor(np.array([[[1.2]]]))
        with pytest.raises(ValueError):
            ImageTensor(np.array([[[-0.1]]]))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeMismatchError):
            ImageTensor(np.zeros((4, 4)))

    def test_immutable(self):
        t = img([0.5, 0.5])
        with pytest.raises(ValueError):
            t.data[0, 0, 0] = 0.0

    def test_dims(self):
        t = ImageTensor(np.zeros((3, 5, 2)))
        assert (t.height, t.width, t.channels) == (3, 5, 2)


class TestDataMix:
    def test_symmetry_midpoint(self):
        out = data_mix(img([1.0, 0.0]), img([0.0, 1.0]), 0.5)
        assert np.array_equal(out.data.ravel(), [0.5, 0.5])

    def test_identity_at_one(self):
        rng = np.random.default_rng(0)
        x = ImageTensor(rng.random((4, 4, 3)))
        y = ImageTensor(rng.random((4, 4, 3)))
        assert data_mix(x, y, 1.0) == x
        assert data_mix(x, y, 0.0) == y

    def test_hand_evaluated(self):
        out = data_mix(img([0.8, 0.2]), img([0.0, 0.6]), 0.75)
        assert np.allclose(out.data.ravel(), [0.6, 0.3], atol=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            data_mix(img([0.1]), img([0.1, 0.2]), 0.5)

    def test_lambda_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            data_mix(img([0.1]), img([0.2]), 1.5)


class TestLabelMix:
    def test_two_hot_midpoint(self):
        out = label_mix(LabelDistribution.one_hot(3, 10), LabelDistribution.one_hot(7, 10), 0.5)
        assert out.probs[3] == 0.5 and out.probs[7] == 0.5

    def test_identity_at_zero(self):
        yi = LabelDistribution.one_hot(0, 4)
        yj = LabelDistribution(np.array([0.1, 0.2, 0.3, 0.4]))
        assert label_mix(yi, yj, 0.0) == yj

    def test_hand_evaluated(self):
        out = label_mix(LabelDistribution.one_hot(0, 3), LabelDistribution.one_hot(1, 3), 0.75)
        assert np.array_equal(out.probs, [0.75, 0.25, 0.0])

    def test_k_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            label_mix(LabelDistribution.one_hot(0, 3), LabelDistribution.one_hot(0, 4), 0.5)


class TestMixProperties:
    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
    def test_mirror_symmetry_bit_identical(self, lam, seed):
        rng = np.random.default_rng(seed)
        x = ImageTensor(rng.random((3, 3, 2)))
        y = ImageTensor(rng.random((3, 3, 2)))
        assert np.array_equal(data_mix(x, y, lam).data, data_mix(y, x, 1.0 - lam).data)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
    def test_convexity_and_range(self, lam, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((3, 3, 2))
        b = rng.random((3, 3, 2))
        out = data_mix(ImageTensor(a), ImageTensor(b), lam).data
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        assert (out >= lo - 1e-9).all() and (out <= hi + 1e-9).all()
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_label_mix_simplex_sweep(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            k = int(rng.integers(2, 12))
            yi = LabelDistribution(rng.dirichlet(np.ones(k)))
            yj = LabelDistribution(rng.dirichlet(np.ones(k)))
            out = label_mix(yi, yj, float(rng.random()))
            assert abs(out.probs.sum() - 1.0) <= 1e-9


class TestSampleLambda:
    def test_beta_uniform_mean(self):
        rng = np.random.default_rng(5)
        spec = BetaSpec(1.0, 1.0)
        draws = np.array([sample_lambda(spec, rng) for _ in range(100_000)])
        assert abs(draws.mean() - 0.5) < 0.01

    def test_discrete_membership(self):
        rng = np.random.default_rng(6)
        spec = DiscreteSpec(values=INFERENCE_COEFFICIENTS)
        for _ in range(500):
            assert sample_lambda(spec, rng) in INFERENCE_COEFFICIENTS

    def test_deterministic_under_seed(self):
        rng1, rng2 = np.random.default_rng(9), np.random.default_rng(9)
        s1 = [sample_lambda(BetaSpec(2.0, 3.0), rng1) for _ in range(10)]
        s2 = [sample_lambda(BetaSpec(2.0, 3.0), rng2) for _ in range(10)]
        assert s1 == s2

    def test_nonpositive_beta_rejected(self):
        with pytest.raises(ValueError):
            BetaSpec(0.0, 1.0)
        with pytest.raises(ValueError):
            BetaSpec(1.0, -2.0)

    def test_weighted_discrete(self):
        rng = np.random.default_rng(0)
        spec = DiscreteSpec(values=(0.1, 0.9), weights=(0.0, 1.0))
        assert all(sample_lambda(spec, rng) == 0.9 for _ in range(20))


class TestSweepStimuli:
    def setup_method(self):
        rng = np.random.default_rng(2)
        self.x = ImageTensor(rng.random((4, 4, 3)))
        self.y = ImageTensor(rng.random((4, 4, 3)))

    def test_selection_grid_size(self):
        stimuli = sweep_stimuli(self.x, self.y, SELECTION_GRID)
        assert len(stimuli) == 11

    def test_single_midpoint(self):
        (stim,) = sweep_stimuli(self.x, self.y, [0.5])
        assert stim.lambda_f == 0.5

    def test_grid_endpoints_are_raw_images(self):
        stimuli = sweep_stimuli(self.x, self.y, SELECTION_GRID)
        assert stimuli[0].mixed_image == self.y  # lambda 0 -> all endpoint b
        assert stimuli[-1].mixed_image == self.x

    def test_lambda_round_trip(self):
        stimuli = sweep_stimuli(self.x, self.y, SELECTION_GRID)
        assert [s.lambda_f for s in stimuli] == list(SELECTION_GRID)
        for s in stimuli:
            assert coefficient_from_string(coefficient_to_string(s.lambda_f)) == s.lambda_f

    def test_unsorted_grid_rejected(self):
        with pytest.raises(ValueError):
            sweep_stimuli(self.x, self.y, [0.5, 0.1])
        with pytest.raises(ValueError):
            sweep_stimuli(self.x, self.y, [])


def test_coefficient_strings_are_exact():
    for lam in (*SELECTION_GRID, *INFERENCE_COEFFICIENTS, 1 / 3, 0.123456789012345):
        assert coefficient_from_string(coefficient_to_string(lam)) == lam
