import itertools
import math

import numpy as np
import pytest

from hmix.boundaryfit import (
    BoundaryFit,
    InsufficientDataError,
    apply_boundary,
    export_boundary_fits,
    fit_all_pairs,
    fit_boundary,
    import_boundary_fits,
)
from hmix.hmixdata import HmixFormatError, InterfaceKind, Judgment, StimulusRef

INFER_GRID = (0.1, 0.25, 0.5, 0.75, 0.9)


def curve(x, c, d, k, lam0):
    # independent generator: plain math, no shared code with the fitter
    return c + (d - c) / (1.0 + math.exp(-k * (x - lam0)))


class TestFitBoundary:
    def test_noise_free_recovery(self):
        true = (0.02, 0.98, 12.0, 0.5)
        points = [(x, curve(x, *true)) for x in INFER_GRID]
        fit = fit_boundary(points)
        for got, want in zip((fit.c, fit.d, fit.k, fit.lambda0), true):
            assert abs(got - want) < 1e-3

    def test_constant_data(self):
        fit = fit_boundary([(x, 0.5) for x in INFER_GRID])
        for lam in np.linspace(0, 1, 101):
            assert abs(apply_boundary(fit, float(lam)) - 0.5) < 1e-6

    def test_identity_data_tracks_identity(self):
        fit = fit_boundary([(x, x) for x in INFER_GRID])
        dense = np.linspace(0.1, 0.9, 401)
        preds = np.array([apply_boundary(fit, float(x)) for x in dense])
        assert np.abs(preds - dense).max() <= 0.02

    def test_identity_matches_brute_force_oracle(self):
        # coarse 4-D parameter grid as an independent least-squares oracle
        points = [(x, x) for x in INFER_GRID]
        x = np.array([p for p, _ in points])
        y = np.array([q for _, q in points])
        best_sse = math.inf
        for c, d, k, lam0 in itertools.product(
            np.linspace(-3, 0.5, 15),
            np.linspace(0.5, 4, 15),
            np.linspace(0.1, 20, 15),
            np.linspace(0.3, 0.7, 9),
        ):
            pred = c + (d - c) / (1.0 + np.exp(-k * (x - lam0)))
            sse = float(((y - pred) ** 2).sum())
            best_sse = min(best_sse, sse)
        fit = fit_boundary(points)
        assert fit.residual_sse <= best_sse + 1e-6

    def test_insufficient_points_rejected(self):
        with pytest.raises(InsufficientDataError):
            fit_boundary([(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)])

    def test_point_order_invariance(self):
        rng = np.random.default_rng(8)
        xs = np.linspace(0, 1, 20)
        ys = np.clip([curve(x, 0.05, 0.95, 9, 0.45) + rng.normal(0, 0.02) for x in xs], 0, 1)
        points = list(zip(xs, ys))
        fit_fwd = fit_boundary(points)
        fit_rev = fit_boundary(points[::-1])
        assert fit_fwd.params() == pytest.approx(fit_rev.params(), rel=1e-6)

    def test_never_worse_than_constant(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            n = int(rng.integers(4, 25))
            xs = rng.random(n)
            ys = rng.random(n)
            fit = fit_boundary(list(zip(xs, ys)))
            const_sse = float(((ys - ys.mean()) ** 2).sum())
            assert fit.residual_sse <= const_sse + 1e-9

    def test_monotone_flag(self):
        rising = fit_boundary([(x, curve(x, 0.0, 1.0, 8, 0.5)) for x in INFER_GRID])
        falling = fit_boundary([(x, curve(x, 0.0, 1.0, -8, 0.5)) for x in INFER_GRID])
        assert rising.monotone
        assert not falling.monotone

    def test_recovery_rate_under_noise(self):
        rng = np.random.default_rng(42)
        grid = np.linspace(0.0, 1.0, 30)
        hits = 0
        for _ in range(200):
            c = rng.uniform(0, 0.2)
            d = rng.uniform(0.8, 1.0)
            k = rng.uniform(4, 20)
            lam0 = rng.uniform(0.3, 0.7)
            y = np.clip(
                c + (d - c) / (1 + np.exp(-k * (grid - lam0)))
                + rng.normal(0, 0.02, size=grid.size),
                0,
                1,
            )
            fit = fit_boundary(list(zip(grid, y)))
            if abs(fit.k - k) / k <= 0.15:
                hits += 1
        assert hits >= 190  # >= 95% of 200


class TestApplyBoundary:
    def test_midpoint(self):
        fit = BoundaryFit(c=0.0, d=1.0, k=7.0, lambda0=0.4,
                          residual_sse=0.0, n_points=5, converged=True)
        assert apply_boundary(fit, 0.4) == pytest.approx(0.5)

    def test_zero_steepness_is_constant(self):
        fit = BoundaryFit(c=0.2, d=0.6, k=0.0, lambda0=0.5,
                          residual_sse=0.0, n_points=5, converged=True)
        for lam in np.linspace(0, 1, 21):
            assert apply_boundary(fit, float(lam)) == pytest.approx(0.4)

    def test_direct_evaluation(self):
        fit = BoundaryFit(c=0.0, d=1.0, k=12.0, lambda0=0.5,
                          residual_sse=0.0, n_points=5, converged=True)
        assert apply_boundary(fit, 0.75) == pytest.approx(1 / (1 + math.exp(-3)), abs=1e-12)

    def test_monotone_on_dense_grid(self):
        fit = fit_boundary([(x, curve(x, 0.03, 0.97, 11, 0.52)) for x in INFER_GRID])
        assert fit.k > 0
        values = [apply_boundary(fit, float(x)) for x in np.linspace(0, 1, 1001)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_clamped_to_unit_interval(self):
        fit = BoundaryFit(c=-2.0, d=3.0, k=5.0, lambda0=0.5,
                          residual_sse=0.0, n_points=5, converged=True)
        for lam in np.linspace(0, 1, 21):
            assert 0.0 <= apply_boundary(fit, float(lam)) <= 1.0


def _judgment(pair_classes, lam_f, lam_h, i):
    a, b = pair_classes
    return Judgment(
        participant_id=f"p{i}",
        session_id=f"s{i}",
        trial_index=1,
        stimulus=StimulusRef(f"pair-{a}-{b}-{i}", f"x{i}", f"y{i}", a, b, lam_f),
        interface=InterfaceKind.INFER_COEFFICIENT,
        lambda_h=lam_h,
        confidence=0.7,
    )


class TestFitAllPairs:
    def test_fits_per_pair_and_insufficient(self):
        records = []
        i = 0
        for lam in INFER_GRID:
            records.append(_judgment((0, 1), lam, curve(lam, 0.01, 0.99, 9, 0.5), i))
            i += 1
        for lam in (0.1, 0.5, 0.9):  # only three points for pair (2, 3)
            records.append(_judgment((2, 3), lam, lam, i))
            i += 1
        report = fit_all_pairs(records)
        assert set(report.fits) == {(0, 1)}
        assert report.insufficient == {(2, 3): 3}

    def test_orientation_flip(self):
        # identical physical data expressed with swapped class order
        records = []
        i = 0
        for lam in INFER_GRID:
            y = curve(lam, 0.02, 0.98, 10, 0.5)
            records.append(_judgment((1, 0), 1.0 - lam, 1.0 - y, i))
            i += 1
        report = fit_all_pairs(records)
        fit = report.fits[(0, 1)]
        assert fit.k > 0
        assert apply_boundary(fit, 0.5) == pytest.approx(0.5, abs=1e-3)

    def test_use_medians(self):
        records = []
        i = 0
        for lam in INFER_GRID:
            for offset in (-0.05, 0.0, 0.05):
                y = float(np.clip(curve(lam, 0.0, 1.0, 8, 0.5) + offset, 0, 1))
                records.append(_judgment((4, 5), lam, y, i))
                i += 1
        report = fit_all_pairs(records, use_medians=True)
        assert report.fits[(4, 5)].n_points == len(INFER_GRID)


class TestFitFiles:
    def test_round_trip(self, tmp_path):
        fits = {
            (0, 1): fit_boundary([(x, curve(x, 0.02, 0.98, 12, 0.5)) for x in INFER_GRID],
                                 class_pair=(0, 1)),
            (3, 7): fit_boundary([(x, x) for x in INFER_GRID], class_pair=(3, 7)),
        }
        path = export_boundary_fits(fits, tmp_path / "fits.txt")
        loaded = import_boundary_fits(path)
        assert set(loaded) == set(fits)
        for pair in fits:
            assert loaded[pair].params() == pytest.approx(fits[pair].params(), abs=0)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "fits.txt"
        path.write_text("wrong\n")
        with pytest.raises(HmixFormatError):
            import_boundary_fits(path)
