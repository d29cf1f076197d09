"""Multi-policy comparison harness with per-seed metrics and t-intervals."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from ..labelpolicy import SmoothingSpec
from .metrics import (
    DEFAULT_EPSILON,
    EvalSet,
    calibration_error,
    fgsm_error,
    soft_ce,
)
from .training import TrainConfig, TrainData, train_single

REPORT_VERSION = 1


@dataclass(frozen=True)
class MetricSummary:
    per_seed: tuple[float, ...]
    mean: float
    ci95_half: float | None

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "MetricSummary":
        arr = np.asarray(values, dtype=np.float64)
        half = None
        if arr.size > 1:
            half = float(
                stats.t.ppf(0.975, arr.size - 1) * arr.std(ddof=1) / np.sqrt(arr.size)
            )
        return cls(per_seed=tuple(float(v) for v in arr), mean=float(arr.mean()), ci95_half=half)


@dataclass(frozen=True)
class PolicyMetrics:
    policy: str
    seeds: tuple[int, ...]
    ce: MetricSummary
    fgsm_err: MetricSummary
    calib_rms: MetricSummary
    calib_ece: MetricSummary


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[PolicyMetrics, ...]
    epsilon: float
    bins: int
    #: policies that failed, with the error message
    failures: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        def summary(s: MetricSummary) -> dict:
            return {"per_seed": list(s.per_seed), "mean": s.mean, "ci95_half": s.ci95_half}

        return {
            "report_version": REPORT_VERSION,
            "epsilon": self.epsilon,
            "bins": self.bins,
            "fgsm_units": "robust error percent (share of perturbed eval examples misclassified)",
            "rows": [
                {
                    "policy": r.policy,
                    "seeds": list(r.seeds),
                    "ce": summary(r.ce),
                    "fgsm_err": summary(r.fgsm_err),
                    "calib_rms": summary(r.calib_rms),
                    "calib_ece": summary(r.calib_ece),
                }
                for r in self.rows
            ],
            "failures": [list(f) for f in self.failures],
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def row(self, policy: str) -> PolicyMetrics:
        for r in self.rows:
            if r.policy == policy:
                return r
        raise KeyError(policy)


def evaluate_seed(
    model, eval_set: EvalSet, epsilon: float, bins: int
) -> tuple[float, float, float, float]:
    ce = soft_ce(model, eval_set).value
    err = fgsm_error(model, eval_set, epsilon)
    rms = calibration_error(model, eval_set, bins=bins, flavor="rms")
    ece = calibration_error(model, eval_set, bins=bins, flavor="ece")
    return ce, err, rms, ece


def run_comparison(
    configs: Sequence[TrainConfig],
    data: TrainData,
    eval_set: EvalSet,
    epsilon: float = DEFAULT_EPSILON,
    bins: int = 15,
    report_path: str | Path | None = None,
) -> MetricsReport:
    """Train every config over its seeds and tabulate the metric suite.

    A failing config is recorded under ``failures`` and the table is still
    emitted for the rest.
    """
    rows = []
    failures = []
    for config in configs:
        try:
            per_metric: list[list[float]] = [[], [], [], []]
            for seed in config.seeds:
                model, _ = train_single(config, data, seed)
                for slot, value in zip(per_metric, evaluate_seed(model, eval_set, epsilon, bins)):
                    slot.append(value)
            rows.append(
                PolicyMetrics(
                    policy=config.policy.value,
                    seeds=config.seeds,
                    ce=MetricSummary.from_values(per_metric[0]),
                    fgsm_err=MetricSummary.from_values(per_metric[1]),
                    calib_rms=MetricSummary.from_values(per_metric[2]),
                    calib_ece=MetricSummary.from_values(per_metric[3]),
                )
            )
        except Exception as exc:  # keep the sweep alive; report per-policy
            failures.append((config.policy.value, f"{type(exc).__name__}: {exc}"))
    report = MetricsReport(
        rows=tuple(rows), epsilon=epsilon, bins=bins, failures=tuple(failures)
    )
    if report_path is not None:
        report.save(report_path)
    return report


@dataclass(frozen=True)
class GridSearchResult:
    best_a: float
    best_b: float
    #: (a, b, mean held-out soft CE) per grid cell
    table: tuple[tuple[float, float, float], ...]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        payload = {
            "best_a": self.best_a,
            "best_b": self.best_b,
            "table": [list(row) for row in self.table],
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
        return path


def grid_search_smoothing(
    base_config: TrainConfig,
    data: TrainData,
    eval_set: EvalSet,
    a_grid: Sequence[float] = (5.0, 10.0, 15.0, 25.0, 50.0, 100.0),
    b_grid: Sequence[float] = (0.00001, 0.0001, 0.001, 0.01, 0.1),
    results_path: str | Path | None = None,
) -> GridSearchResult:
    """Pick the smoothing (a, b) minimizing held-out soft cross-entropy.

    Trains ``base_config`` once per grid cell (averaging CE over its seeds)
    with the smoothing spec swapped in. Grids must be non-empty.
    """
    if not a_grid or not b_grid:
        raise ValueError("grids must be non-empty")
    table = []
    best: tuple[float, float, float] | None = None
    for a in a_grid:
        for b in b_grid:
            spec = SmoothingSpec(a=a, b=b, num_classes=data.num_classes)
            config = replace(base_config, smoothing=spec)
            ces = []
            for seed in config.seeds:
                model, _ = train_single(config, data, seed)
                ces.append(soft_ce(model, eval_set).value)
            mean_ce = float(np.mean(ces))
            table.append((float(a), float(b), mean_ce))
            if best is None or mean_ce < best[2]:
                best = (float(a), float(b), mean_ce)
    result = GridSearchResult(best_a=best[0], best_b=best[1], table=tuple(table))
    if results_path is not None:
        result.save(results_path)
    return result
