"""Session scheduling and response handling for the elicitation service.

Plans follow the study protocols exactly:

* selection sessions (construct / select-shuffled) run 32 trials; the final
  two repeat two earlier trials. Construct sessions alternate their sweep
  start between coefficients 0.9 and 0.1 to balance the start conditions.
* coefficient-inference sessions run 59-62 trials; the final two repeat the
  stimuli shown at trials 15 and 20.
* soft-label sessions run a configurable number of trials (default 25) over
  stimuli mixed at coefficients in {0.25, 0.5, 0.75}, no repeats.

Trial order, select-trial display order, and the left/right order of the
endpoint class names are all shuffled per participant at plan time, so a
re-fetched trial renders identically. All numeric mappings (selection index
to coefficient, slider orientation) happen server-side; clients only ever
submit indices, ids, or raw slider positions.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..hmixdata import (
    InterfaceKind,
    Judgment,
    JudgmentStore,
    Record,
    SoftLabelJudgment,
    StimulusRef,
    records_to_text,
)
from ..mixcore import SELECTION_GRID, coefficient_to_string
from .pool import StimulusPool

API_VERSION = 1

SELECTION_TRIALS = 32
INFERENCE_TRIAL_RANGE = (59, 62)
INFERENCE_REPEATED_TRIALS = (15, 20)
SOFTLABEL_COEFFICIENTS = (0.25, 0.5, 0.75)


class SessionKind(str):
    CONSTRUCT = "construct"
    SELECT_SHUFFLED = "select-shuffled"
    INFER = "infer-coefficient"
    SOFT_LABEL = "soft-label"

    ALL = (CONSTRUCT, SELECT_SHUFFLED, INFER, SOFT_LABEL)


class SessionNotFoundError(KeyError):
    pass


class PoolTooSmallError(ValueError):
    pass


class ResponseError(ValueError):
    """Out-of-order submission or malformed payload."""


@dataclass(frozen=True)
class TrialSpec:
    trial_index: int  # 1-based
    pair_id: str
    #: generating coefficient for inference / soft-label trials; None for
    #: selection trials (which show the whole sweep)
    lambda_f: float | None
    #: deterministic per-trial shuffle seed (select-shuffled display order)
    shuffle_seed: int
    #: display class_b on the left for inference trials
    display_flipped: bool
    repeat_of: int | None = None


@dataclass(frozen=True)
class SessionPlan:
    session_id: str
    participant_id: str
    kind: str
    interface: InterfaceKind | None  # resolved kind for coefficient judgments
    start_lambda: float | None  # construct only: 0.1 or 0.9
    trials: tuple[TrialSpec, ...]

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    def validate(self) -> None:
        indices = [t.trial_index for t in self.trials]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError("trial indices must be 1..N in order")
        if self.kind in (SessionKind.CONSTRUCT, SessionKind.SELECT_SHUFFLED):
            if len(self.trials) != SELECTION_TRIALS:
                raise ValueError(f"selection plans run {SELECTION_TRIALS} trials")
            tail = self.trials[-2:]
            if not all(t.repeat_of is not None and t.repeat_of < t.trial_index for t in tail):
                raise ValueError("final two selection trials must repeat earlier trials")
            if any(t.repeat_of is not None for t in self.trials[:-2]):
                raise ValueError("only the final two selection trials may be repeats")
            if self.kind == SessionKind.CONSTRUCT and self.start_lambda not in (0.1, 0.9):
                raise ValueError("construct sessions start at 0.1 or 0.9")
        elif self.kind == SessionKind.INFER:
            lo, hi = INFERENCE_TRIAL_RANGE
            if not lo <= len(self.trials) <= hi:
                raise ValueError(f"inference plans run {lo}-{hi} trials")
            tail = self.trials[-2:]
            if tuple(t.repeat_of for t in tail) != INFERENCE_REPEATED_TRIALS:
                raise ValueError(
                    f"inference repeats must duplicate trials {INFERENCE_REPEATED_TRIALS}"
                )
            for t in tail:
                original = self.trials[t.repeat_of - 1]
                if (t.pair_id, t.lambda_f) != (original.pair_id, original.lambda_f):
                    raise ValueError("repeat trials must show the original stimulus")
            if any(t.repeat_of is not None for t in self.trials[:-2]):
                raise ValueError("only the final two inference trials may be repeats")
        elif self.kind == SessionKind.SOFT_LABEL:
            if any(t.repeat_of is not None for t in self.trials):
                raise ValueError("soft-label plans have no repeats")
            if any(t.lambda_f not in SOFTLABEL_COEFFICIENTS for t in self.trials):
                raise ValueError("soft-label stimuli use coefficients in {0.25, 0.5, 0.75}")
        else:
            raise ValueError(f"unknown session kind {self.kind!r}")


@dataclass
class _SessionState:
    plan: SessionPlan
    cursor: int = 1  # next unanswered 1-based trial
    answered: dict[int, dict] = field(default_factory=dict)  # trial -> payload
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def complete(self) -> bool:
        return self.cursor > self.plan.n_trials


class ElicitationService:
    """Schedules sessions over a pool and persists responses into a store."""

    def __init__(
        self,
        pool: StimulusPool,
        store: JudgmentStore,
        rng: np.random.Generator | None = None,
        softlabel_trials: int = 25,
    ):
        self.pool = pool
        self.store = store
        self._rng = rng if rng is not None else np.random.default_rng()
        self._softlabel_trials = softlabel_trials
        self._sessions: dict[str, _SessionState] = {}
        self._construct_count = 0
        self._session_count = 0
        self._lock = threading.Lock()

    # -- session creation ---------------------------------------------------

    def create_session(self, participant_id: str, kind: str) -> SessionPlan:
        if kind not in SessionKind.ALL:
            raise ValueError(f"unknown interface kind {kind!r}")
        with self._lock:
            self._session_count += 1
            session_id = f"s-{self._session_count:06d}-{int(self._rng.integers(0, 1 << 30)):08x}"
            if kind == SessionKind.CONSTRUCT:
                # Alternate start conditions across construct sessions.
                start_lambda = 0.9 if self._construct_count % 2 == 0 else 0.1
                self._construct_count += 1
            else:
                start_lambda = None
            plan = self._make_plan(session_id, participant_id, kind, start_lambda)
            plan.validate()
            self._sessions[session_id] = _SessionState(plan=plan)
            return plan

    def _make_plan(
        self, session_id: str, participant_id: str, kind: str, start_lambda: float | None
    ) -> SessionPlan:
        rng = self._rng
        if kind in (SessionKind.CONSTRUCT, SessionKind.SELECT_SHUFFLED):
            n_base = SELECTION_TRIALS - 2
            pair_ids = sorted(self.pool.pairs)
            if len(pair_ids) < n_base:
                raise PoolTooSmallError(
                    f"selection sessions need {n_base} pairs, pool has {len(pair_ids)}"
                )
            chosen = list(rng.choice(pair_ids, size=n_base, replace=False))
            trials = [
                TrialSpec(
                    trial_index=i + 1,
                    pair_id=pid,
                    lambda_f=None,
                    shuffle_seed=int(rng.integers(0, 1 << 31)),
                    display_flipped=bool(rng.integers(0, 2)),
                )
                for i, pid in enumerate(chosen)
            ]
            repeat_targets = sorted(rng.choice(np.arange(1, n_base + 1), size=2, replace=False))
            for offset, target in enumerate(repeat_targets):
                original = trials[int(target) - 1]
                trials.append(
                    TrialSpec(
                        trial_index=n_base + 1 + offset,
                        pair_id=original.pair_id,
                        lambda_f=None,
                        shuffle_seed=original.shuffle_seed,
                        display_flipped=original.display_flipped,
                        repeat_of=int(target),
                    )
                )
            interface = (
                (
                    InterfaceKind.CONSTRUCT_START_HIGH
                    if start_lambda == 0.9
                    else InterfaceKind.CONSTRUCT_START_LOW
                )
                if kind == SessionKind.CONSTRUCT
                else InterfaceKind.SELECT_SHUFFLED
            )
            return SessionPlan(
                session_id=session_id,
                participant_id=participant_id,
                kind=kind,
                interface=interface,
                start_lambda=start_lambda,
                trials=tuple(trials),
            )

        if kind == SessionKind.INFER:
            lo, hi = INFERENCE_TRIAL_RANGE
            total = int(rng.integers(lo, hi + 1))
            n_base = total - 2
            candidates = list(self.pool.inference_stimuli)
            if len(candidates) < n_base:
                raise PoolTooSmallError(
                    f"inference sessions need {n_base} stimuli, pool has {len(candidates)}"
                )
            idx = rng.choice(len(candidates), size=n_base, replace=False)
            trials = [
                TrialSpec(
                    trial_index=i + 1,
                    pair_id=candidates[j][0],
                    lambda_f=candidates[j][1],
                    shuffle_seed=int(rng.integers(0, 1 << 31)),
                    display_flipped=bool(rng.integers(0, 2)),
                )
                for i, j in enumerate(idx)
            ]
            for offset, target in enumerate(INFERENCE_REPEATED_TRIALS):
                original = trials[target - 1]
                trials.append(
                    TrialSpec(
                        trial_index=n_base + 1 + offset,
                        pair_id=original.pair_id,
                        lambda_f=original.lambda_f,
                        shuffle_seed=original.shuffle_seed,
                        display_flipped=original.display_flipped,
                        repeat_of=target,
                    )
                )
            return SessionPlan(
                session_id=session_id,
                participant_id=participant_id,
                kind=kind,
                interface=InterfaceKind.INFER_COEFFICIENT,
                start_lambda=None,
                trials=tuple(trials),
            )

        # soft-label
        candidates = [
            (pid, lam)
            for pid, lam in self.pool.inference_stimuli
            if lam in SOFTLABEL_COEFFICIENTS
        ]
        n = self._softlabel_trials
        if len(candidates) < n:
            raise PoolTooSmallError(
                f"soft-label sessions need {n} stimuli at coefficients "
                f"{SOFTLABEL_COEFFICIENTS}, pool has {len(candidates)}"
            )
        idx = rng.choice(len(candidates), size=n, replace=False)
        trials = tuple(
            TrialSpec(
                trial_index=i + 1,
                pair_id=candidates[j][0],
                lambda_f=candidates[j][1],
                shuffle_seed=int(rng.integers(0, 1 << 31)),
                display_flipped=bool(rng.integers(0, 2)),
            )
            for i, j in enumerate(idx)
        )
        return SessionPlan(
            session_id=session_id,
            participant_id=participant_id,
            kind=kind,
            interface=None,
            start_lambda=None,
            trials=trials,
        )

    # -- trial payloads -------------------------------------------------------

    def _state(self, session_id: str) -> _SessionState:
        state = self._sessions.get(session_id)
        if state is None:
            raise SessionNotFoundError(session_id)
        return state

    def next_trial(self, session_id: str) -> dict[str, Any]:
        state = self._state(session_id)
        plan = state.plan
        if state.complete:
            return {
                "api_version": API_VERSION,
                "session_id": session_id,
                "complete": True,
                "n_trials": plan.n_trials,
            }
        trial = plan.trials[state.cursor - 1]
        payload: dict[str, Any] = {
            "api_version": API_VERSION,
            "session_id": session_id,
            "complete": False,
            "interface": plan.kind,
            "trial_index": trial.trial_index,
            "n_trials": plan.n_trials,
        }
        pair = self.pool.pairs[trial.pair_id]
        name_a = self.pool.class_names[pair.class_a]
        name_b = self.pool.class_names[pair.class_b]

        if plan.kind in (SessionKind.CONSTRUCT, SessionKind.SELECT_SHUFFLED):
            sweep = self.pool.selection_sweep(trial.pair_id)
            entries = [
                {"stimulus_id": s.stimulus_id, "url": f"/api/stimuli/{s.stimulus_id}.png"}
                for s in sweep
            ]
            payload["class_names"] = [name_a, name_b]
            payload["target_mix"] = "50/50"
            if plan.kind == SessionKind.CONSTRUCT:
                start_index = SELECTION_GRID.index(plan.start_lambda)
                payload["construct"] = {"images": entries, "start_index": start_index}
            else:
                order = np.random.default_rng(trial.shuffle_seed).permutation(len(entries))
                payload["select"] = {"images": [entries[i] for i in order]}
            return payload

        stim = self.pool.stimulus(trial.pair_id, trial.lambda_f)
        image = {
            "stimulus_id": stim.stimulus_id,
            "url": f"/api/stimuli/{stim.stimulus_id}.png",
        }
        if plan.kind == SessionKind.INFER:
            left, right = (name_b, name_a) if trial.display_flipped else (name_a, name_b)
            payload["infer"] = {
                "image": image,
                "left_class": left,
                "right_class": right,
            }
        else:
            payload["soft_label"] = {
                "image": image,
                "class_names": list(self.pool.class_names),
            }
        return payload

    # -- responses ------------------------------------------------------------

    def submit_response(
        self, session_id: str, trial_index: int, payload: Mapping[str, Any]
    ) -> dict[str, Any]:
        state = self._state(session_id)
        plan = state.plan
        with state.lock:
            if trial_index in state.answered:
                if state.answered[trial_index] == dict(payload):
                    return self._ack(state, trial_index, stored=False)
                raise ResponseError(
                    f"trial {trial_index} already answered with a different payload"
                )
            if state.complete:
                raise ResponseError("session already complete")
            if trial_index != state.cursor:
                raise ResponseError(
                    f"out-of-order submission: expected trial {state.cursor}, got {trial_index}"
                )
            record = self._record_for(plan, plan.trials[trial_index - 1], payload)
            self.store.append(record)
            state.answered[trial_index] = dict(payload)
            state.cursor += 1
            return self._ack(state, trial_index, stored=True)

    def _ack(self, state: _SessionState, trial_index: int, stored: bool) -> dict[str, Any]:
        return {
            "api_version": API_VERSION,
            "session_id": state.plan.session_id,
            "trial_index": trial_index,
            "stored": stored,
            "complete": state.complete,
            "next_trial_index": None if state.complete else state.cursor,
        }

    def _record_for(
        self, plan: SessionPlan, trial: TrialSpec, payload: Mapping[str, Any]
    ) -> Record:
        response_ms = payload.get("response_ms")
        if response_ms is not None:
            response_ms = int(response_ms)
        pair = self.pool.pairs[trial.pair_id]

        if plan.kind in (SessionKind.CONSTRUCT, SessionKind.SELECT_SHUFFLED):
            lambda_h = self._selection_lambda(plan, trial, payload)
            # Selection trials fix the 50/50 label-mix target; the ref records it.
            ref = StimulusRef(
                pair_id=pair.pair_id,
                endpoint_a_id=pair.endpoint_a_id,
                endpoint_b_id=pair.endpoint_b_id,
                class_a=pair.class_a,
                class_b=pair.class_b,
                lambda_f=0.5,
            )
            return Judgment(
                participant_id=plan.participant_id,
                session_id=plan.session_id,
                trial_index=trial.trial_index,
                stimulus=ref,
                interface=plan.interface,
                lambda_h=lambda_h,
                repeat_of=trial.repeat_of,
                response_ms=response_ms,
            )

        stim = self.pool.stimulus(trial.pair_id, trial.lambda_f)
        ref = StimulusRef.from_stimulus(stim)
        if plan.kind == SessionKind.INFER:
            try:
                mix_pos = float(payload["mix_slider"])
                conf_pos = float(payload["confidence_slider"])
            except (KeyError, TypeError, ValueError):
                raise ResponseError(
                    "inference submissions need numeric mix_slider and confidence_slider"
                ) from None
            if not (0.0 <= mix_pos <= 1.0 and 0.0 <= conf_pos <= 1.0):
                raise ResponseError("slider positions must lie in [0, 1]")
            # Slider position 0 = left endpoint = all of the left-displayed
            # class; translate into the weight on class_a.
            left_weight = 1.0 - mix_pos
            lambda_h = mix_pos if trial.display_flipped else left_weight
            return Judgment(
                participant_id=plan.participant_id,
                session_id=plan.session_id,
                trial_index=trial.trial_index,
                stimulus=ref,
                interface=InterfaceKind.INFER_COEFFICIENT,
                lambda_h=lambda_h,
                confidence=conf_pos,
                repeat_of=trial.repeat_of,
                response_ms=response_ms,
            )

        try:
            return SoftLabelJudgment(
                participant_id=plan.participant_id,
                session_id=plan.session_id,
                trial_index=trial.trial_index,
                stimulus=ref,
                top1_class=int(payload["top1_class"]),
                top1_prob=int(payload["top1_prob"]),
                top2_class=None if payload.get("top2_class") is None else int(payload["top2_class"]),
                top2_prob=None if payload.get("top2_prob") is None else int(payload["top2_prob"]),
                ruled_out=frozenset(int(c) for c in payload.get("ruled_out", ())),
                response_ms=response_ms,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ResponseError(f"invalid soft-label payload: {exc}") from None

    def _selection_lambda(
        self, plan: SessionPlan, trial: TrialSpec, payload: Mapping[str, Any]
    ) -> float:
        if plan.kind == SessionKind.CONSTRUCT:
            try:
                index = int(payload["selection_index"])
            except (KeyError, TypeError, ValueError):
                raise ResponseError("construct submissions need selection_index") from None
            if not 0 <= index < len(SELECTION_GRID):
                raise ResponseError(
                    f"selection_index must lie in [0, {len(SELECTION_GRID) - 1}]"
                )
            return SELECTION_GRID[index]
        stimulus_id = payload.get("stimulus_id")
        if not isinstance(stimulus_id, str):
            raise ResponseError("select-shuffled submissions need stimulus_id")
        try:
            stim = self.pool.stimulus_by_id(stimulus_id)
        except (KeyError, ValueError):
            raise ResponseError(f"unknown stimulus {stimulus_id!r}") from None
        if stim.pair_id != trial.pair_id:
            raise ResponseError("stimulus does not belong to this trial")
        return stim.lambda_f

    # -- export ---------------------------------------------------------------

    def export_session(self, session_id: str) -> dict[str, Any]:
        state = self._state(session_id)
        records = self.store.for_session(session_id)
        return {
            "api_version": API_VERSION,
            "session_id": session_id,
            "open": not state.complete,
            "n_records": len(records),
            "hmix": records_to_text(records),
        }

    def stimulus_png(self, stimulus_id: str) -> bytes:
        return self.pool.stimulus_png(stimulus_id)
