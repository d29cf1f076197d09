"""Per-category-pair logistic relabeling curves.

Each curve maps a generating mixing coefficient to the coefficient humans
typically report for that class pair. The model is a 4-parameter logistic

    f(x) = c + (d - c) / (1 + exp(-k * (x - lambda0)))

fitted by damped Gauss-Newton (Levenberg-Marquardt) least squares with an
analytic Jacobian. Fitting is multi-start from a fixed set of
initializations (identity-like, steep, shallow, left-shifted, right-shifted,
plus the best constant fit) and keeps the lowest-SSE result, which also
guarantees the fit is never worse than a constant.

Asymptotes are stored as fitted, which may fall outside [0, 1]: near-linear
relabeling curves need amplitude beyond the data range (a logistic clamped
to c=0, d=1 cannot track the identity map closely). Predictions are always
clamped to [0, 1] by :func:`apply_boundary`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .hmixdata import HmixFormatError, Judgment, JudgmentStore, Record, _oriented
from .mixcore import check_unit_interval

BOUNDARYFIT_HEADER = "hmix-boundaryfit-v1"

#: Fitting needs at least as many points as free parameters.
MIN_POINTS = 4


class InsufficientDataError(ValueError):
    """Fewer points than the logistic's four parameters."""


@dataclass(frozen=True)
class BoundaryFit:
    """A fitted per-pair logistic; lambda values refer to the weight on the
    lower-indexed class of the pair."""

    c: float
    d: float
    k: float
    lambda0: float
    residual_sse: float
    n_points: int
    converged: bool
    class_pair: tuple[int, int] | None = None

    @property
    def monotone(self) -> bool:
        """Nondecreasing in the generating coefficient."""
        return self.k >= 0.0

    def params(self) -> np.ndarray:
        return np.array([self.c, self.d, self.k, self.lambda0])


def logistic(x: np.ndarray | float, c: float, d: float, k: float, lambda0: float) -> np.ndarray:
    """Evaluate the 4-parameter logistic (no clamping)."""
    z = np.clip(-k * (np.asarray(x, dtype=np.float64) - lambda0), -700.0, 700.0)
    return c + (d - c) / (1.0 + np.exp(z))


def _jacobian(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    c, d, k, lam0 = p
    z = np.clip(k * (x - lam0), -700.0, 700.0)
    s = 1.0 / (1.0 + np.exp(-z))
    ds = s * (1.0 - s)
    jac = np.empty((x.size, 4))
    jac[:, 0] = 1.0 - s
    jac[:, 1] = s
    jac[:, 2] = (d - c) * ds * (x - lam0)
    jac[:, 3] = -(d - c) * ds * k
    return jac


def _sse(x: np.ndarray, y: np.ndarray, p: np.ndarray) -> float:
    r = y - logistic(x, *p)
    return float(r @ r)


def _levenberg_marquardt(
    x: np.ndarray,
    y: np.ndarray,
    p0: np.ndarray,
    max_iter: int = 300,
    step_tol: float = 1e-12,
    sse_tol: float = 1e-15,
) -> tuple[np.ndarray, float, bool]:
    """Minimize sum((y - f(x; p))^2) from p0. Returns (p, sse, converged)."""
    p = np.asarray(p0, dtype=np.float64).copy()
    sse = _sse(x, y, p)
    mu = 1e-3
    for _ in range(max_iter):
        jac = _jacobian(x, p)
        r = y - logistic(x, *p)
        grad = jac.T @ r
        if float(np.abs(grad).max()) < 1e-13:
            return p, sse, True
        a = jac.T @ jac
        diag = np.diag(a).copy()
        diag[diag < 1e-12] = 1e-12
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(a + mu * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            trial = p + step
            trial_sse = _sse(x, y, trial)
            if trial_sse < sse:
                improvement = sse - trial_sse
                p, sse = trial, trial_sse
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                if float(np.abs(step).max()) < step_tol or improvement < sse_tol * (sse + 1e-30):
                    return p, sse, True
                break
            mu *= 10.0
            if mu > 1e12:
                return p, sse, True  # damped to a standstill: local minimum
        if not accepted:
            return p, sse, True
    return p, sse, False


def _initializations(y: np.ndarray) -> list[np.ndarray]:
    y_mean = float(y.mean())
    return [
        np.array([0.0, 1.0, 6.0, 0.5]),   # identity-like
        np.array([0.0, 1.0, 25.0, 0.5]),  # steep
        np.array([0.0, 1.0, 2.0, 0.5]),   # shallow
        np.array([0.0, 1.0, 8.0, 0.35]),  # left-shifted
        np.array([0.0, 1.0, 8.0, 0.65]),  # right-shifted
        np.array([y_mean, y_mean, 0.0, 0.5]),  # best constant (nesting guarantee)
    ]


def _canonical(p: np.ndarray) -> np.ndarray:
    # (c, d, k) and (d, c, -k) describe the same curve; store c <= d.
    c, d, k, lam0 = p
    if c > d:
        return np.array([d, c, -k, lam0])
    return p.copy()


def fit_boundary(
    points: Sequence[tuple[float, float]],
    init: Sequence[float] | None = None,
    class_pair: tuple[int, int] | None = None,
) -> BoundaryFit:
    """Fit the logistic to (lambda_f, lambda_h) pairs.

    Requires at least four points. With ``init`` given, that start is tried
    alongside the standard ones. If no start converges within the iteration
    budget the best iterate is still returned, flagged ``converged=False``.
    """
    pts = [(check_unit_interval(a, "lambda_f"), check_unit_interval(b, "lambda_h")) for a, b in points]
    if len(pts) < MIN_POINTS:
        raise InsufficientDataError(
            f"need at least {MIN_POINTS} points to fit 4 parameters, got {len(pts)}"
        )
    x = np.array([a for a, _ in pts])
    y = np.array([b for _, b in pts])
    starts = _initializations(y)
    if init is not None:
        starts.insert(0, np.asarray(init, dtype=np.float64))
    best: tuple[np.ndarray, float, bool] | None = None
    for p0 in starts:
        p, sse, converged = _levenberg_marquardt(x, y, p0)
        if best is None or sse < best[1]:
            best = (p, sse, converged)
    p, sse, converged = best
    # The constant start makes this a guarantee rather than a hope, but keep
    # the explicit fallback in case a start diverges past it numerically.
    y_mean = float(y.mean())
    const_sse = float(((y - y_mean) ** 2).sum())
    if sse > const_sse:
        p, sse, converged = np.array([y_mean, y_mean, 0.0, 0.5]), const_sse, True
    p = _canonical(p)
    return BoundaryFit(
        c=float(p[0]),
        d=float(p[1]),
        k=float(p[2]),
        lambda0=float(p[3]),
        residual_sse=sse,
        n_points=len(pts),
        converged=converged,
        class_pair=class_pair,
    )


def apply_boundary(fit: BoundaryFit, lambda_f: float) -> float:
    """Map a generating coefficient through the fitted curve, clamped to [0, 1]."""
    lam = check_unit_interval(lambda_f, "lambda_f")
    value = float(logistic(lam, fit.c, fit.d, fit.k, fit.lambda0))
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class PairFitReport:
    fits: dict[tuple[int, int], BoundaryFit]
    #: class pair -> number of points available (below the minimum)
    insufficient: dict[tuple[int, int], int]

    @property
    def non_monotone_pairs(self) -> list[tuple[int, int]]:
        return sorted(p for p, f in self.fits.items() if not f.monotone)


def fit_all_pairs(
    store: JudgmentStore | Iterable[Record],
    min_points: int = MIN_POINTS,
    use_medians: bool = False,
) -> PairFitReport:
    """Fit one curve per class pair from inference judgments.

    Judgments are re-oriented so lambda is the weight on the lower-indexed
    class. ``use_medians`` collapses points to per-coefficient medians
    before fitting; the default fits raw points. Pairs with fewer than
    ``min_points`` points are reported separately rather than failing.
    """
    min_points = max(min_points, MIN_POINTS)
    by_pair: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for r in store:
        if isinstance(r, Judgment) and r.confidence is not None:
            pair, lam_f, lam_h = _oriented(r)
            by_pair.setdefault(pair, []).append((lam_f, lam_h))
    fits: dict[tuple[int, int], BoundaryFit] = {}
    insufficient: dict[tuple[int, int], int] = {}
    for pair in sorted(by_pair):
        points = by_pair[pair]
        if use_medians:
            buckets: dict[float, list[float]] = {}
            for lam_f, lam_h in points:
                buckets.setdefault(lam_f, []).append(lam_h)
            points = [(lam, float(np.median(vals))) for lam, vals in sorted(buckets.items())]
        if len(points) < min_points:
            insufficient[pair] = len(points)
            continue
        fits[pair] = fit_boundary(points, class_pair=pair)
    return PairFitReport(fits=fits, insufficient=insufficient)


# --------------------------------------------------------------------------
# Fit files
# --------------------------------------------------------------------------


def export_boundary_fits(
    fits: Mapping[tuple[int, int], BoundaryFit], path: str | Path
) -> Path:
    path = Path(path)
    lines = [BOUNDARYFIT_HEADER]
    for pair in sorted(fits):
        f = fits[pair]
        lines.append(
            json.dumps(
                {
                    "class_a": pair[0],
                    "class_b": pair[1],
                    "c": repr(f.c),
                    "d": repr(f.d),
                    "k": repr(f.k),
                    "lambda0": repr(f.lambda0),
                    "residual_sse": repr(f.residual_sse),
                    "n_points": f.n_points,
                    "monotone": f.monotone,
                    "converged": f.converged,
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def import_boundary_fits(path: str | Path) -> dict[tuple[int, int], BoundaryFit]:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if not lines or lines[0].strip() != BOUNDARYFIT_HEADER:
        raise HmixFormatError(1, f"expected header {BOUNDARYFIT_HEADER!r}")
    fits: dict[tuple[int, int], BoundaryFit] = {}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            pair = (int(row["class_a"]), int(row["class_b"]))
            fits[pair] = BoundaryFit(
                c=float(row["c"]),
                d=float(row["d"]),
                k=float(row["k"]),
                lambda0=float(row["lambda0"]),
                residual_sse=float(row["residual_sse"]),
                n_points=int(row["n_points"]),
                converged=bool(row["converged"]),
                class_pair=pair,
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            detail = getattr(exc, "msg", None) or (exc.args[0] if exc.args else exc)
            raise HmixFormatError(i, f"invalid fit record: {detail}") from None
    return fits
