import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmix.hmixdata import (
    ConflictError,
    HmixFormatError,
    InterfaceKind,
    Judgment,
    JudgmentStore,
    LabelFrequencyTable,
    SoftLabelJudgment,
    StimulusRef,
    aggregate_relabelings,
    confidence_by_extremity,
    entropy_bucket_analysis,
    export_hmix,
    flag_high_relabel,
    import_hmix,
    label_entropy,
    records_to_text,
    repeat_consistency,
)
from hmix.simulate import (
    confidence_trend_fixture,
    high_relabel_fixture,
    repeat_consistency_fixture,
)


def ref(pair="p0", lam=0.5, class_a=0, class_b=1, a_id="imgA", b_id="imgB"):
    return StimulusRef(
        pair_id=pair,
        endpoint_a_id=a_id,
        endpoint_b_id=b_id,
        class_a=class_a,
        class_b=class_b,
        lambda_f=lam,
    )


def infer_judgment(lam_h, conf=0.5, lam_f=0.5, participant="p1", session="s1", trial=1, **kw):
    return Judgment(
        participant_id=participant,
        session_id=session,
        trial_index=trial,
        stimulus=ref(lam=lam_f, **kw.pop("ref_kw", {})),
        interface=InterfaceKind.INFER_COEFFICIENT,
        lambda_h=lam_h,
        confidence=conf,
        **kw,
    )


class TestInvariants:
    def test_lambda_h_range(self):
        with pytest.raises(ValueError):
            infer_judgment(1.3)

    def test_confidence_range(self):
        with pytest.raises(ValueError):
            infer_judgment(0.5, conf=1.2)

    def test_selection_kind_has_no_confidence(self):
        with pytest.raises(ValueError):
            Judgment(
                participant_id="p",
                session_id="s",
                trial_index=1,
                stimulus=ref(),
                interface=InterfaceKind.SELECT_SHUFFLED,
                lambda_h=0.5,
                confidence=0.5,
            )

    def test_inference_requires_confidence(self):
        with pytest.raises(ValueError):
            infer_judgment(0.5, conf=None)

    def test_repeat_references_earlier_trial(self):
        with pytest.raises(ValueError):
            infer_judgment(0.5, trial=2, repeat_of=2)
        ok = infer_judgment(0.5, trial=3, repeat_of=1)
        assert ok.is_repeat

    def test_soft_label_budget(self):
        with pytest.raises(ValueError):
            SoftLabelJudgment(
                participant_id="p",
                session_id="s",
                trial_index=1,
                stimulus=ref(),
                top1_class=0,
                top1_prob=70,
                top2_class=1,
                top2_prob=40,
            )

    def test_soft_label_disjoint(self):
        with pytest.raises(ValueError):
            SoftLabelJudgment(
                participant_id="p",
                session_id="s",
                trial_index=1,
                stimulus=ref(),
                top1_class=0,
                top1_prob=50,
                ruled_out=frozenset({0}),
            )


class TestStore:
    def test_round_trip_read_back(self):
        store = JudgmentStore()
        j = infer_judgment(0.31, conf=0.8)
        assert store.append(j) is True
        assert list(store) == [j]

    def test_idempotent_duplicate(self):
        store = JudgmentStore()
        j = infer_judgment(0.31, conf=0.8)
        assert store.append(j) is True
        assert store.append(j) is False
        assert len(store) == 1

    def test_conflicting_duplicate_rejected(self):
        store = JudgmentStore()
        store.append(infer_judgment(0.31))
        with pytest.raises(ConflictError):
            store.append(infer_judgment(0.32))

    def test_file_backed_store(self, tmp_path):
        path = tmp_path / "log.hmix"
        store = JudgmentStore(path)
        store.append(infer_judgment(0.25))
        store.append(infer_judgment(0.5, trial=2))
        reread = JudgmentStore(path)
        assert list(reread) == list(store)


def random_record(rng, i):
    """One random valid record; exercises both kinds and edge values."""
    pair_ref = StimulusRef(
        pair_id=f"pair-{int(rng.integers(0, 50)):03d}",
        endpoint_a_id=f"a{i}",
        endpoint_b_id=f"b{i}",
        class_a=int(rng.integers(0, 5)),
        class_b=int(rng.integers(5, 10)),
        lambda_f=float(rng.random()),
    )
    if rng.random() < 0.7:
        kind = list(InterfaceKind)[int(rng.integers(0, len(InterfaceKind)))]
        selection = kind in (
            InterfaceKind.CONSTRUCT_START_LOW,
            InterfaceKind.CONSTRUCT_START_HIGH,
            InterfaceKind.SELECT_SHUFFLED,
        )
        trial = int(rng.integers(1, 60))
        return Judgment(
            participant_id=f"p{i}",
            session_id=f"s{i}",
            trial_index=trial,
            stimulus=pair_ref,
            interface=InterfaceKind(kind),
            lambda_h=float(rng.random()),
            confidence=None if selection else float(rng.random()),
            repeat_of=None if trial == 1 or rng.random() < 0.8 else int(rng.integers(1, trial)),
            response_ms=int(rng.integers(100, 60_000)),
        )
    top1 = int(rng.integers(0, 10))
    top2 = None
    if rng.random() < 0.6:
        top2 = int(rng.integers(0, 10))
        if top2 == top1:
            top2 = (top1 + 1) % 10
    p1 = int(rng.integers(0, 80))
    p2 = None if top2 is None else int(rng.integers(0, 100 - p1))
    ruled = {
        int(c)
        for c in rng.choice(10, size=int(rng.integers(0, 4)), replace=False)
        if c != top1 and (top2 is None or c != top2)
    }
    return SoftLabelJudgment(
        participant_id=f"p{i}",
        session_id=f"s{i}",
        trial_index=int(rng.integers(1, 30)),
        stimulus=pair_ref,
        top1_class=top1,
        top1_prob=p1,
        top2_class=top2,
        top2_prob=p2,
        ruled_out=frozenset(ruled),
    )


class TestFormat:
    def test_empty_store_file(self, tmp_path):
        path = export_hmix(JudgmentStore(), tmp_path / "empty.hmix")
        assert path.read_text() == "hmix-v1\n"
        assert len(import_hmix(path)) == 0

    def test_thousand_record_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        records = [random_record(rng, i) for i in range(1000)]
        store = JudgmentStore()
        store.extend(records)
        path = export_hmix(store, tmp_path / "big.hmix")
        loaded = import_hmix(path)
        assert list(loaded) == list(store)

    def test_out_of_range_lambda_rejected_with_line(self, tmp_path):
        text = records_to_text([infer_judgment(0.4)])
        bad = text.replace('"lambda_h": "0.4"', '"lambda_h": "1.3"')
        path = tmp_path / "bad.hmix"
        path.write_text(bad)
        with pytest.raises(HmixFormatError) as err:
            import_hmix(path)
        assert err.value.line_no == 2

    def test_bad_header(self, tmp_path):
        path = tmp_path / "nohdr.hmix"
        path.write_text("not-a-header\n")
        with pytest.raises(HmixFormatError) as err:
            import_hmix(path)
        assert err.value.line_no == 1

    def test_bad_json_line_number(self, tmp_path):
        good = records_to_text([infer_judgment(0.4), infer_judgment(0.5, trial=2)])
        lines = good.strip().split("\n")
        lines[2] = "{broken"
        path = tmp_path / "corrupt.hmix"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(HmixFormatError) as err:
            import_hmix(path)
        assert err.value.line_no == 3


class TestAggregate:
    def test_hand_percentiles(self):
        store = JudgmentStore()
        for i, lam_h in enumerate((0.3, 0.5, 0.7)):
            store.append(infer_judgment(lam_h, participant=f"p{i}"))
        (curve,) = aggregate_relabelings(store, "global")
        (pt,) = curve.points
        assert pt.median == pytest.approx(0.5)
        assert pt.p25 == pytest.approx(0.4)
        assert pt.p75 == pytest.approx(0.6)

    def test_single_judgment(self):
        store = JudgmentStore()
        store.append(infer_judgment(0.42))
        (curve,) = aggregate_relabelings(store, "global")
        (pt,) = curve.points
        assert pt.median == pt.p25 == pt.p75 == 0.42

    def test_trend_fixture_means_exact(self):
        store = JudgmentStore()
        store.extend(confidence_trend_fixture())
        rows = {r.folded_lambda: r for r in confidence_by_extremity(store)}
        assert rows[0.1].confidence_mean == pytest.approx(0.79, abs=1e-9)
        assert rows[0.25].confidence_mean == pytest.approx(0.72, abs=1e-9)
        assert rows[0.5].confidence_mean == pytest.approx(0.63, abs=1e-9)

    def test_order_invariance(self):
        rng = np.random.default_rng(3)
        records = [
            infer_judgment(float(rng.random()), conf=float(rng.random()),
                           lam_f=float(rng.choice([0.1, 0.5, 0.9])), participant=f"p{i}")
            for i in range(60)
        ]
        curves_fwd = aggregate_relabelings(records, "global")
        curves_rev = aggregate_relabelings(records[::-1], "global")
        assert curves_fwd == curves_rev

    def test_empty_group(self):
        assert aggregate_relabelings(JudgmentStore(), "class_pair") == []

    def test_pair_grouping_orientation(self):
        # the same physical judgment expressed in both orientations lands in
        # one canonical pair bucket
        j1 = infer_judgment(0.8, lam_f=0.75, ref_kw={})
        j2 = Judgment(
            participant_id="q",
            session_id="t",
            trial_index=1,
            stimulus=StimulusRef("p1", "x", "y", class_a=1, class_b=0, lambda_f=0.25),
            interface=InterfaceKind.INFER_COEFFICIENT,
            lambda_h=0.2,
            confidence=0.5,
        )
        curves = aggregate_relabelings([j1, j2], "class_pair")
        assert len(curves) == 1
        assert curves[0].group == (0, 1)
        (pt,) = curves[0].points
        assert pt.lambda_f == 0.75 and pt.n == 2
        assert pt.mean == pytest.approx(0.8)


class TestHighRelabel:
    def test_mean_07_flagged(self):
        judgments = [
            Judgment(
                participant_id=f"p{i}",
                session_id="s",
                trial_index=1,
                stimulus=ref(),
                interface=InterfaceKind.SELECT_SHUFFLED,
                lambda_h=0.7,
            )
            for i in range(3)
        ]
        report = flag_high_relabel(judgments)
        assert report.per_interface["select-shuffled"] == ["p0"]

    def test_mean_06_not_flagged(self):
        judgments = [
            Judgment(
                participant_id="p",
                session_id="s",
                trial_index=1,
                stimulus=ref(),
                interface=InterfaceKind.SELECT_SHUFFLED,
                lambda_h=0.6,
            )
        ]
        report = flag_high_relabel(judgments)
        assert report.per_interface["select-shuffled"] == []

    def test_planted_nine_pairs_across_interfaces(self):
        judgments, planted = high_relabel_fixture()
        report = flag_high_relabel(judgments)
        assert report.across_interfaces == sorted(planted)
        assert len(report.across_interfaces) == 9

    def test_threshold_zero_flags_only_off_center(self):
        judgments, _ = high_relabel_fixture(n_flagged=2, n_clean=2)
        report = flag_high_relabel(judgments, threshold=0.0)
        for kind, flagged in report.per_interface.items():
            for pair, central in report.central_values[kind].items():
                assert (pair in flagged) == (central != 0.5)

    def test_threshold_above_half_flags_none(self):
        judgments, _ = high_relabel_fixture()
        report = flag_high_relabel(judgments, threshold=0.51)
        assert all(not v for v in report.per_interface.values())
        assert report.across_interfaces == []


class TestEntropy:
    def test_degenerate_zero(self):
        counts = np.zeros(10, dtype=int)
        counts[4] = 51
        assert label_entropy(counts) == 0.0

    def test_uniform_ln10(self):
        assert label_entropy(np.full(10, 5)) == pytest.approx(np.log(10), abs=1e-12)

    def test_two_way_split_ln2(self):
        counts = np.zeros(10, dtype=int)
        counts[0] = counts[1] = 7
        assert label_entropy(counts) == pytest.approx(np.log(2), abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            c = rng.integers(0, 40, size=10)
            if c.sum() == 0:
                c[0] = 1
            assert label_entropy(c) == pytest.approx(label_entropy(c * 10), abs=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            label_entropy(np.zeros(10))


def _freq_table():
    # hi-entropy images spread over 4 classes; lo-entropy nearly one-hot
    rows = {
        "hiA": [13, 13, 12, 12, 0, 0, 0, 0, 0, 0],
        "hiB": [0, 0, 12, 13, 13, 12, 0, 0, 0, 0],
        "loA": [50, 0, 0, 0, 0, 0, 0, 0, 0, 0],
        "loB": [0, 50, 0, 0, 0, 0, 0, 0, 0, 0],
    }
    return LabelFrequencyTable(counts=rows, num_classes=10)


class TestEntropyBuckets:
    def make(self, a_id, b_id, lam_h=0.4, conf=0.5):
        return Judgment(
            participant_id="p",
            session_id=f"s-{a_id}-{b_id}",
            trial_index=1,
            stimulus=ref(a_id=a_id, b_id=b_id),
            interface=InterfaceKind.INFER_COEFFICIENT,
            lambda_h=lam_h,
            confidence=conf,
        )

    def test_bucketing(self):
        table = _freq_table()
        report = entropy_bucket_analysis(
            [
                self.make("hiA", "hiB"),
                self.make("loA", "loB"),
                self.make("hiA", "loB"),
            ],
            table,
        )
        assert report.buckets["both-high"].n == 1
        assert report.buckets["both-low"].n == 1
        assert report.buckets["mixed"].n == 1

    def test_missing_endpoint_skipped(self):
        table = _freq_table()
        report = entropy_bucket_analysis([self.make("hiA", "unknown")], table)
        assert report.skipped == ("p0:0.5",)
        assert all(b.n == 0 for b in report.buckets.values())

    def test_stats(self):
        table = _freq_table()
        report = entropy_bucket_analysis(
            [self.make("loA", "loB", lam_h=0.4, conf=0.8)], table
        )
        stats = report.buckets["both-low"]
        assert stats.mean_confidence == pytest.approx(0.8)
        assert stats.mean_abs_relabel == pytest.approx(0.1)


class TestRepeatConsistency:
    def test_planted_medians(self):
        judgments = repeat_consistency_fixture()
        stats = repeat_consistency(judgments)[InterfaceKind.INFER_COEFFICIENT]
        assert stats.median_lambda_diff == pytest.approx(0.03)
        assert stats.median_confidence_diff == pytest.approx(0.05)
        assert stats.n == 3

    def test_identical_repeat_gives_zero(self):
        judgments = repeat_consistency_fixture(lambda_diffs=[0.0], confidence_diffs=[0.0])
        stats = repeat_consistency(judgments)[InterfaceKind.INFER_COEFFICIENT]
        assert stats.median_lambda_diff == 0.0

    def test_single_pair(self):
        judgments = repeat_consistency_fixture(lambda_diffs=[0.1], confidence_diffs=[0.0])
        stats = repeat_consistency(judgments)[InterfaceKind.INFER_COEFFICIENT]
        assert stats.median_lambda_diff == pytest.approx(0.1)

    def test_no_repeats_empty(self):
        assert repeat_consistency([infer_judgment(0.5)]) == {}


class TestFrequencyFile:
    def test_round_trip(self, tmp_path):
        table = _freq_table()
        path = table.save(tmp_path / "freq.txt")
        loaded = LabelFrequencyTable.load(path)
        assert loaded.num_classes == 10
        for key in table.counts:
            assert np.array_equal(loaded.counts[key], table.counts[key])

    def test_bad_column_count(self, tmp_path):
        path = tmp_path / "freq.txt"
        path.write_text("image_id count_0 count_1\nimg 1\n")
        with pytest.raises(HmixFormatError) as err:
            LabelFrequencyTable.load(path)
        assert err.value.line_no == 2
