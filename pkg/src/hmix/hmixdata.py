"""Judgment data model: storage, aggregation, flagging, and entropy analyses.

Records live in an append-only line log ("hmix" format, header line
``hmix-v1``): one JSON object per line, with every coefficient/confidence
field serialized as a decimal string so round-trips are bit-exact.

Two record kinds exist. A :class:`Judgment` carries a selected or inferred
mixing coefficient (``lambda_h`` is always the weight on ``class_a`` of the
referenced stimulus) plus, for the inference interface, a confidence in
[0, 1]. A :class:`SoftLabelJudgment` carries a sparse category-probability
report (top-1/top-2 percentages and ruled-out classes).

Trial indices are 1-based throughout.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .mixcore import (
    MixedStimulus,
    check_unit_interval,
    coefficient_from_string,
    coefficient_to_string,
)

HMIX_HEADER = "hmix-v1"
FREQ_HEADER_PREFIX = "image_id"


class InterfaceKind(str, Enum):
    """How a coefficient judgment was elicited."""

    CONSTRUCT_START_LOW = "construct-start-low"
    CONSTRUCT_START_HIGH = "construct-start-high"
    SELECT_SHUFFLED = "select-shuffled"
    INFER_COEFFICIENT = "infer-coefficient"


#: Interfaces where participants pick a midpoint image (no confidence report).
SELECTION_KINDS = frozenset(
    {
        InterfaceKind.CONSTRUCT_START_LOW,
        InterfaceKind.CONSTRUCT_START_HIGH,
        InterfaceKind.SELECT_SHUFFLED,
    }
)


class HmixFormatError(ValueError):
    """A judgment file failed to parse; carries the first offending line."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        self.message = message
        super().__init__(f"line {line_no}: {message}")


class ConflictError(ValueError):
    """The same (participant, session, trial) key was submitted with a new payload."""


@dataclass(frozen=True)
class StimulusRef:
    """Identity of the stimulus a record refers to.

    For inference and soft-label records ``lambda_f`` is the generating
    coefficient of the single mixed image shown. For midpoint-selection
    records it records the fixed target coefficient (0.5).
    """

    pair_id: str
    endpoint_a_id: str
    endpoint_b_id: str
    class_a: int
    class_b: int
    lambda_f: float

    def __post_init__(self) -> None:
        if self.class_a == self.class_b:
            raise ValueError("stimulus endpoints must have distinct classes")
        if self.class_a < 0 or self.class_b < 0:
            raise ValueError("class indices must be non-negative")
        object.__setattr__(
            self, "lambda_f", check_unit_interval(self.lambda_f, "lambda_f")
        )

    @classmethod
    def from_stimulus(cls, stimulus: MixedStimulus) -> "StimulusRef":
        return cls(
            pair_id=stimulus.pair_id,
            endpoint_a_id=stimulus.endpoint_a_id,
            endpoint_b_id=stimulus.endpoint_b_id,
            class_a=stimulus.class_a,
            class_b=stimulus.class_b,
            lambda_f=stimulus.lambda_f,
        )

    @property
    def stimulus_id(self) -> str:
        return f"{self.pair_id}:{coefficient_to_string(self.lambda_f)}"

    @property
    def class_pair(self) -> tuple[int, int]:
        """Unordered class pair, low index first."""
        return (min(self.class_a, self.class_b), max(self.class_a, self.class_b))


@dataclass(frozen=True)
class Judgment:
    """One participant's coefficient response for one stimulus."""

    participant_id: str
    session_id: str
    trial_index: int
    stimulus: StimulusRef
    interface: InterfaceKind
    lambda_h: float
    confidence: float | None = None
    repeat_of: int | None = None
    response_ms: int | None = None

    def __post_init__(self) -> None:
        if self.trial_index < 1:
            raise ValueError("trial_index is 1-based and must be >= 1")
        object.__setattr__(
            self, "lambda_h", check_unit_interval(self.lambda_h, "lambda_h")
        )
        kind = InterfaceKind(self.interface)
        object.__setattr__(self, "interface", kind)
        if kind in SELECTION_KINDS:
            if self.confidence is not None:
                raise ValueError("selection judgments carry no confidence")
        else:
            if self.confidence is None:
                raise ValueError("inference judgments require a confidence")
            object.__setattr__(
                self, "confidence", check_unit_interval(self.confidence, "confidence")
            )
        if self.repeat_of is not None:
            if not 1 <= self.repeat_of < self.trial_index:
                raise ValueError(
                    "repeat_of must reference an earlier trial in the same session"
                )
        if self.response_ms is not None and self.response_ms < 0:
            raise ValueError("response_ms must be non-negative")

    @property
    def is_repeat(self) -> bool:
        return self.repeat_of is not None


@dataclass(frozen=True)
class SoftLabelJudgment:
    """A sparse category-probability report for one mixed image.

    Probabilities are on the 0-100 scale the form uses; ``ruled_out`` lists
    classes the participant marked as definitely absent.
    """

    participant_id: str
    session_id: str
    trial_index: int
    stimulus: StimulusRef
    top1_class: int
    top1_prob: int
    top2_class: int | None = None
    top2_prob: int | None = None
    ruled_out: frozenset[int] = frozenset()
    response_ms: int | None = None

    def __post_init__(self) -> None:
        if self.trial_index < 1:
            raise ValueError("trial_index is 1-based and must be >= 1")
        object.__setattr__(self, "ruled_out", frozenset(int(c) for c in self.ruled_out))
        if (self.top2_class is None) != (self.top2_prob is None):
            raise ValueError("top2_class and top2_prob must be given together")
        for name, prob in (("top1_prob", self.top1_prob), ("top2_prob", self.top2_prob)):
            if prob is not None and not 0 <= prob <= 100:
                raise ValueError(f"{name} must lie in [0, 100]")
        total = self.top1_prob + (self.top2_prob or 0)
        if total > 100:
            raise ValueError("top1_prob + top2_prob must not exceed 100")
        named = {self.top1_class}
        if self.top2_class is not None:
            if self.top2_class == self.top1_class:
                raise ValueError("top1 and top2 classes must differ")
            named.add(self.top2_class)
        if named & self.ruled_out:
            raise ValueError("ruled-out classes must be disjoint from top choices")
        if self.top1_class < 0 or (self.top2_class is not None and self.top2_class < 0):
            raise ValueError("class indices must be non-negative")
        if any(c < 0 for c in self.ruled_out):
            raise ValueError("class indices must be non-negative")
        if self.response_ms is not None and self.response_ms < 0:
            raise ValueError("response_ms must be non-negative")


Record = Union[Judgment, SoftLabelJudgment]


def record_key(record: Record) -> tuple[str, str, int]:
    return (record.participant_id, record.session_id, record.trial_index)


# --------------------------------------------------------------------------
# Store
# --------------------------------------------------------------------------


class JudgmentStore:
    """Append-only record store, optionally backed by an hmix log file.

    Appends are idempotent under the (participant, session, trial) key and
    serialized by an internal lock; reads never block.
    """

    def __init__(self, path: str | Path | None = None):
        self._records: list[Record] = []
        self._by_key: dict[tuple[str, str, int], Record] = {}
        self._lock = threading.Lock()
        self._path: Path | None = Path(path) if path is not None else None
        if self._path is not None:
            if self._path.exists():
                for rec in _read_records(self._path):
                    self._remember(rec)
            else:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                self._path.write_text(HMIX_HEADER + "\n", encoding="utf-8")

    def _remember(self, record: Record) -> None:
        self._records.append(record)
        self._by_key[record_key(record)] = record

    def append(self, record: Record) -> bool:
        """Persist one record. Returns True if newly stored, False if it was
        an exact duplicate of an already-stored record."""
        if not isinstance(record, (Judgment, SoftLabelJudgment)):
            raise TypeError(f"not a judgment record: {type(record).__name__}")
        with self._lock:
            existing = self._by_key.get(record_key(record))
            if existing is not None:
                if existing == record:
                    return False
                raise ConflictError(
                    f"record key {record_key(record)} already stored with a different payload"
                )
            self._remember(record)
            if self._path is not None:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record_to_dict(record)) + "\n")
        return True

    def extend(self, records: Iterable[Record]) -> int:
        return sum(1 for r in records if self.append(r))

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[Record]:
        return iter(list(self._records))

    def judgments(self) -> list[Judgment]:
        return [r for r in self._records if isinstance(r, Judgment)]

    def soft_labels(self) -> list[SoftLabelJudgment]:
        return [r for r in self._records if isinstance(r, SoftLabelJudgment)]

    def for_session(self, session_id: str) -> list[Record]:
        return [r for r in self._records if r.session_id == session_id]


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def record_to_dict(record: Record) -> dict:
    ref = record.stimulus
    base = {
        "participant_id": record.participant_id,
        "session_id": record.session_id,
        "trial_index": record.trial_index,
        "pair_id": ref.pair_id,
        "endpoint_a_id": ref.endpoint_a_id,
        "endpoint_b_id": ref.endpoint_b_id,
        "class_a": ref.class_a,
        "class_b": ref.class_b,
        "lambda_f": coefficient_to_string(ref.lambda_f),
        "response_ms": record.response_ms,
    }
    if isinstance(record, Judgment):
        base["kind"] = "judgment"
        base["interface"] = record.interface.value
        base["lambda_h"] = coefficient_to_string(record.lambda_h)
        base["confidence"] = (
            None if record.confidence is None else coefficient_to_string(record.confidence)
        )
        base["repeat_of"] = record.repeat_of
    else:
        base["kind"] = "soft-label"
        base["top1_class"] = record.top1_class
        base["top1_prob"] = record.top1_prob
        base["top2_class"] = record.top2_class
        base["top2_prob"] = record.top2_prob
        base["ruled_out"] = sorted(record.ruled_out)
    return base


def record_from_dict(payload: Mapping) -> Record:
    kind = payload.get("kind")
    ref = StimulusRef(
        pair_id=payload["pair_id"],
        endpoint_a_id=payload["endpoint_a_id"],
        endpoint_b_id=payload["endpoint_b_id"],
        class_a=int(payload["class_a"]),
        class_b=int(payload["class_b"]),
        lambda_f=coefficient_from_string(payload["lambda_f"]),
    )
    common = dict(
        participant_id=payload["participant_id"],
        session_id=payload["session_id"],
        trial_index=int(payload["trial_index"]),
        stimulus=ref,
        response_ms=payload.get("response_ms"),
    )
    if kind == "judgment":
        confidence = payload.get("confidence")
        return Judgment(
            interface=InterfaceKind(payload["interface"]),
            lambda_h=coefficient_from_string(payload["lambda_h"]),
            confidence=None if confidence is None else coefficient_from_string(confidence),
            repeat_of=payload.get("repeat_of"),
            **common,
        )
    if kind == "soft-label":
        return SoftLabelJudgment(
            top1_class=int(payload["top1_class"]),
            top1_prob=int(payload["top1_prob"]),
            top2_class=None if payload.get("top2_class") is None else int(payload["top2_class"]),
            top2_prob=None if payload.get("top2_prob") is None else int(payload["top2_prob"]),
            ruled_out=frozenset(int(c) for c in payload.get("ruled_out", ())),
            **common,
        )
    raise ValueError(f"unknown record kind: {kind!r}")


def records_to_text(records: Iterable[Record]) -> str:
    lines = [HMIX_HEADER]
    lines.extend(json.dumps(record_to_dict(r)) for r in records)
    return "\n".join(lines) + "\n"


def export_hmix(store: JudgmentStore | Iterable[Record], path: str | Path) -> Path:
    """Write every record to ``path`` in hmix line format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_to_text(store), encoding="utf-8")
    return path


def _read_records(path: Path) -> list[Record]:
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or lines[0].strip() != HMIX_HEADER:
        raise HmixFormatError(1, f"expected header {HMIX_HEADER!r}")
    records: list[Record] = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise HmixFormatError(i, f"invalid JSON: {exc.msg}") from None
        try:
            records.append(record_from_dict(payload))
        except (KeyError, ValueError, TypeError) as exc:
            detail = exc.args[0] if exc.args else exc
            raise HmixFormatError(i, f"invalid record: {detail}") from None
    return records


def import_hmix(path: str | Path) -> JudgmentStore:
    """Load an hmix file into a fresh in-memory store."""
    store = JudgmentStore()
    for rec in _read_records(Path(path)):
        store.append(rec)
    return store


# --------------------------------------------------------------------------
# Label-frequency tables (per-image annotation counts)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelFrequencyTable:
    """Per-image class-annotation counts from many annotators."""

    counts: Mapping[str, np.ndarray]
    num_classes: int

    def __post_init__(self) -> None:
        fixed: dict[str, np.ndarray] = {}
        for image_id, row in self.counts.items():
            arr = np.asarray(row, dtype=np.int64)
            if arr.ndim != 1 or arr.size != self.num_classes:
                raise ValueError(
                    f"{image_id}: expected {self.num_classes} counts, got shape {arr.shape}"
                )
            if arr.min() < 0:
                raise ValueError(f"{image_id}: counts must be non-negative")
            if arr.sum() == 0:
                raise ValueError(f"{image_id}: at least one count must be positive")
            arr = arr.copy()
            arr.setflags(write=False)
            fixed[image_id] = arr
        object.__setattr__(self, "counts", fixed)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.counts

    def entropy(self, image_id: str) -> float:
        return label_entropy(self.counts[image_id])

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        header = " ".join(
            [FREQ_HEADER_PREFIX] + [f"count_{k}" for k in range(self.num_classes)]
        )
        lines = [header]
        for image_id in sorted(self.counts):
            row = " ".join(str(int(c)) for c in self.counts[image_id])
            lines.append(f"{image_id} {row}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "LabelFrequencyTable":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if not lines or not lines[0].startswith(FREQ_HEADER_PREFIX):
            raise HmixFormatError(1, f"expected header starting with {FREQ_HEADER_PREFIX!r}")
        num_classes = len(lines[0].split()) - 1
        if num_classes < 1:
            raise HmixFormatError(1, "header must name at least one count column")
        counts: dict[str, list[int]] = {}
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != num_classes + 1:
                raise HmixFormatError(i, f"expected {num_classes + 1} columns, got {len(parts)}")
            try:
                row = [int(p) for p in parts[1:]]
            except ValueError:
                raise HmixFormatError(i, "counts must be integers") from None
            if parts[0] in counts:
                raise HmixFormatError(i, f"duplicate image id {parts[0]!r}")
            counts[parts[0]] = row
        try:
            return cls(counts=counts, num_classes=num_classes)
        except ValueError as exc:
            raise HmixFormatError(2, str(exc)) from None


def label_entropy(freqs: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy (nats) of normalized annotation frequencies.

    Invariant to count scaling; zero-count classes contribute nothing.
    """
    arr = np.asarray(freqs, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("frequencies must be a non-empty 1-D vector")
    if arr.min() < 0:
        raise ValueError("frequencies must be non-negative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("at least one frequency must be positive")
    p = arr / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaStats:
    """Relabeling statistics for one generating-coefficient bucket."""

    lambda_f: float
    n: int
    mean: float
    median: float
    p25: float
    p75: float
    confidence_mean: float | None
    confidence_sd: float | None
    n_confidence: int


@dataclass(frozen=True)
class AggregateCurve:
    """Per-coefficient relabeling statistics for one group of judgments."""

    group: tuple[int, int] | str | None
    points: tuple[LambdaStats, ...]
    omitted: tuple[float, ...] = ()


def _bucket_stats(lambda_f: float, rows: list[tuple[float, float | None]]) -> LambdaStats:
    # Sorting first makes every statistic exactly invariant to record order.
    lams = np.sort(np.array([r[0] for r in rows], dtype=np.float64))
    confs = np.sort(np.array([r[1] for r in rows if r[1] is not None], dtype=np.float64))
    p25, med, p75 = (
        float(np.percentile(lams, q, method="linear")) for q in (25, 50, 75)
    )
    if confs.size:
        conf_mean = float(confs.mean())
        conf_sd = float(confs.std(ddof=1)) if confs.size > 1 else None
    else:
        conf_mean = None
        conf_sd = None
    return LambdaStats(
        lambda_f=lambda_f,
        n=len(rows),
        mean=float(lams.mean()),
        median=med,
        p25=p25,
        p75=p75,
        confidence_mean=conf_mean,
        confidence_sd=conf_sd,
        n_confidence=int(confs.size),
    )


def _oriented(j: Judgment) -> tuple[tuple[int, int], float, float]:
    """Canonical class pair plus (lambda_f, lambda_h) expressed as the weight
    on the lower-indexed class."""
    ref = j.stimulus
    if ref.class_a <= ref.class_b:
        return ref.class_pair, ref.lambda_f, j.lambda_h
    return ref.class_pair, 1.0 - ref.lambda_f, 1.0 - j.lambda_h


def aggregate_relabelings(
    store: JudgmentStore | Iterable[Record], group_by: str = "global"
) -> list[AggregateCurve]:
    """Aggregate coefficient judgments into per-lambda statistics.

    ``group_by`` is one of ``global``, ``class_pair``, or ``stimulus``. For
    class-pair grouping, judgments are re-oriented so lambda values measure
    the weight on the lower-indexed class; the other groupings keep each
    judgment's own orientation. An empty store yields an empty list.
    """
    if group_by not in {"global", "class_pair", "stimulus"}:
        raise ValueError(f"unknown group_by: {group_by!r}")
    judgments = [r for r in store if isinstance(r, Judgment)]
    groups: dict[object, dict[float, list[tuple[float, float | None]]]] = {}
    for j in judgments:
        if group_by == "class_pair":
            key, lam_f, lam_h = _oriented(j)
        elif group_by == "stimulus":
            key, lam_f, lam_h = j.stimulus.stimulus_id, j.stimulus.lambda_f, j.lambda_h
        else:
            key, lam_f, lam_h = None, j.stimulus.lambda_f, j.lambda_h
        groups.setdefault(key, {}).setdefault(lam_f, []).append((lam_h, j.confidence))
    all_lambdas = sorted({lam for buckets in groups.values() for lam in buckets})
    curves = []
    for key in sorted(groups, key=repr):
        buckets = groups[key]
        points = tuple(
            _bucket_stats(lam, buckets[lam]) for lam in sorted(buckets)
        )
        omitted = tuple(lam for lam in all_lambdas if lam not in buckets)
        curves.append(AggregateCurve(group=key, points=points, omitted=omitted))
    return curves


@dataclass(frozen=True)
class ExtremityRow:
    """Mean/sd of reported confidence for one folded coefficient value."""

    folded_lambda: float
    n: int
    confidence_mean: float
    confidence_sd: float | None


def confidence_by_extremity(store: JudgmentStore | Iterable[Record]) -> list[ExtremityRow]:
    """Group inference confidences by folded coefficient min(lambda, 1-lambda).

    A coefficient of 0.1 is as extreme as 0.9, so both fold to 0.1. Rows are
    sorted by folded value ascending (most extreme first).
    """
    buckets: dict[float, list[float]] = {}
    for r in store:
        if isinstance(r, Judgment) and r.confidence is not None:
            lam = r.stimulus.lambda_f
            folded = round(min(lam, 1.0 - lam), 10)
            buckets.setdefault(folded, []).append(r.confidence)
    rows = []
    for folded in sorted(buckets):
        vals = np.array(buckets[folded], dtype=np.float64)
        rows.append(
            ExtremityRow(
                folded_lambda=folded,
                n=int(vals.size),
                confidence_mean=float(vals.mean()),
                confidence_sd=float(vals.std(ddof=1)) if vals.size > 1 else None,
            )
        )
    return rows


# --------------------------------------------------------------------------
# High-relabel flagging
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HighRelabelReport:
    threshold: float
    central: str
    #: interface value -> {pair_id: central lambda_h}
    central_values: dict[str, dict[str, float]]
    #: interface value -> sorted flagged pair ids
    per_interface: dict[str, list[str]]
    #: pairs flagged under every selection interface present in the store
    across_interfaces: list[str]


def flag_high_relabel(
    store: JudgmentStore | Iterable[Record],
    threshold: float = 0.15,
    central: str = "mean",
) -> HighRelabelReport:
    """Flag pairs whose typical midpoint selection strays from 0.5.

    A pair is flagged under an interface when the central tendency c of its
    selections satisfies ``|c - 0.5| >= threshold`` (strictly ``> 0`` when
    the threshold is zero, so exact midpoints are never flagged).
    """
    if central not in {"mean", "median"}:
        raise ValueError("central must be 'mean' or 'median'")
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    per_pair: dict[str, dict[str, list[float]]] = {}
    for r in store:
        if isinstance(r, Judgment) and r.interface in SELECTION_KINDS:
            per_pair.setdefault(r.interface.value, {}).setdefault(
                r.stimulus.pair_id, []
            ).append(r.lambda_h)
    central_values: dict[str, dict[str, float]] = {}
    per_interface: dict[str, list[str]] = {}
    for kind, pairs in per_pair.items():
        centrals = {}
        flagged = []
        for pair_id, lams in pairs.items():
            arr = np.asarray(lams, dtype=np.float64)
            c = float(arr.mean()) if central == "mean" else float(np.median(arr))
            centrals[pair_id] = c
            dev = abs(c - 0.5)
            if (dev >= threshold) if threshold > 0 else (dev > 0):
                flagged.append(pair_id)
        central_values[kind] = centrals
        per_interface[kind] = sorted(flagged)
    if per_interface:
        across = set.intersection(*(set(v) for v in per_interface.values()))
    else:
        across = set()
    return HighRelabelReport(
        threshold=threshold,
        central=central,
        central_values=central_values,
        per_interface=per_interface,
        across_interfaces=sorted(across),
    )


# --------------------------------------------------------------------------
# Endpoint-entropy buckets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BucketStats:
    n: int
    mean_confidence: float | None
    mean_abs_relabel: float | None


@dataclass(frozen=True)
class EntropyBucketReport:
    hi: float
    lo: float
    buckets: dict[str, BucketStats]
    skipped: tuple[str, ...]


ENTROPY_BUCKETS = ("both-high", "both-low", "mixed")


def entropy_bucket_analysis(
    store: JudgmentStore | Iterable[Record],
    freq_table: LabelFrequencyTable,
    hi: float = 0.5,
    lo: float = 0.1,
) -> EntropyBucketReport:
    """Relate judgment confidence / relabeling to endpoint-image ambiguity.

    Each judgment's stimulus is bucketed by the label entropies of its two
    endpoint images: ``both-high`` when both >= hi, ``both-low`` when both
    <= lo, otherwise ``mixed``. Stimuli whose endpoints are missing from the
    frequency table are skipped and reported.
    """
    if not lo <= hi:
        raise ValueError("need lo <= hi")
    rows: dict[str, list[tuple[float | None, float]]] = {b: [] for b in ENTROPY_BUCKETS}
    skipped: set[str] = set()
    for r in store:
        if not isinstance(r, Judgment):
            continue
        ref = r.stimulus
        if ref.endpoint_a_id not in freq_table or ref.endpoint_b_id not in freq_table:
            skipped.add(ref.stimulus_id)
            continue
        ha = freq_table.entropy(ref.endpoint_a_id)
        hb = freq_table.entropy(ref.endpoint_b_id)
        if ha >= hi and hb >= hi:
            bucket = "both-high"
        elif ha <= lo and hb <= lo:
            bucket = "both-low"
        else:
            bucket = "mixed"
        rows[bucket].append((r.confidence, abs(r.lambda_h - ref.lambda_f)))
    buckets = {}
    for name in ENTROPY_BUCKETS:
        entries = rows[name]
        confs = [c for c, _ in entries if c is not None]
        buckets[name] = BucketStats(
            n=len(entries),
            mean_confidence=float(np.mean(confs)) if confs else None,
            mean_abs_relabel=float(np.mean([d for _, d in entries])) if entries else None,
        )
    return EntropyBucketReport(hi=hi, lo=lo, buckets=buckets, skipped=tuple(sorted(skipped)))


# --------------------------------------------------------------------------
# Repeat-trial consistency
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RepeatStats:
    n: int
    median_lambda_diff: float
    median_confidence_diff: float | None


def repeat_consistency(
    store: JudgmentStore | Iterable[Record],
) -> dict[InterfaceKind, RepeatStats]:
    """Median absolute response change on repeat trials, per interface."""
    originals: dict[tuple[str, str, int], Judgment] = {}
    repeats: list[Judgment] = []
    for r in store:
        if not isinstance(r, Judgment):
            continue
        originals[record_key(r)] = r
        if r.is_repeat:
            repeats.append(r)
    diffs: dict[InterfaceKind, list[tuple[float, float | None]]] = {}
    for rep in repeats:
        orig = originals.get((rep.participant_id, rep.session_id, rep.repeat_of))
        if orig is None:
            continue
        d_lambda = abs(rep.lambda_h - orig.lambda_h)
        d_conf = (
            abs(rep.confidence - orig.confidence)
            if rep.confidence is not None and orig.confidence is not None
            else None
        )
        diffs.setdefault(rep.interface, []).append((d_lambda, d_conf))
    out: dict[InterfaceKind, RepeatStats] = {}
    for kind, rows in diffs.items():
        lam_diffs = np.array([d for d, _ in rows], dtype=np.float64)
        conf_diffs = [c for _, c in rows if c is not None]
        out[kind] = RepeatStats(
            n=len(rows),
            median_lambda_diff=float(np.median(lam_diffs)),
            median_confidence_diff=float(np.median(conf_diffs)) if conf_diffs else None,
        )
    return out
