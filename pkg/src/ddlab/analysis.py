"""Verdicts on loss curves: peaks, U-shapes, interpolation regime, peak loci.

The same peak detector judges the autoencoder sweeps and the ridgeless
regression control, so a "no peak" verdict on the former is only meaningful
because the detector does fire on the latter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .sweep import ResultsTable, parameterization_ratio

CLASSES = ("u_shape", "monotone_decreasing", "monotone_increasing", "double_descent", "irregular")

DEFAULT_PROMINENCE = 0.1
DEFAULT_MONOTONE_TOLERANCE = 0.05
DEFAULT_TRAIN_THRESHOLD = 1e-2


@dataclass
class LossCurve:
    capacities: np.ndarray
    losses: np.ndarray
    axis_label: str = "latent"
    label: str = ""

    def __post_init__(self):
        self.capacities = np.asarray(self.capacities, dtype=np.float64)
        self.losses = np.asarray(self.losses, dtype=np.float64)
        if self.capacities.shape != self.losses.shape or self.capacities.ndim != 1:
            raise ValueError("capacities and losses must be 1-D arrays of equal length")
        if np.any(np.diff(self.capacities) <= 0):
            raise ValueError("capacities must be strictly increasing")
        if not np.all(np.isfinite(self.losses)):
            raise ValueError("losses must be finite")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], axis_label="latent", label=""):
        pairs = sorted(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs], axis_label, label)

    def __len__(self):
        return len(self.losses)


@dataclass
class PeakReport:
    has_peak: bool
    peak_index: Optional[int]
    prominence_fraction: float
    classification: str
    argmin_index: int
    capacities: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    @property
    def argmin_capacity(self) -> float:
        return self.capacities[self.argmin_index]

    @property
    def peak_capacity(self) -> Optional[float]:
        return None if self.peak_index is None else self.capacities[self.peak_index]

    def to_json(self) -> dict:
        return {
            "has_peak": self.has_peak,
            "peak_index": self.peak_index,
            "peak_capacity": self.peak_capacity,
            "prominence_fraction": self.prominence_fraction,
            "classification": self.classification,
            "argmin_index": self.argmin_index,
            "argmin_capacity": self.argmin_capacity,
            "capacities": list(self.capacities),
            "losses": list(self.losses),
        }


def moving_average(values: np.ndarray, window: int = 3) -> np.ndarray:
    """Centered moving average; the window shrinks at the ends."""
    values = np.asarray(values, dtype=np.float64)
    if window <= 1:
        return values.copy()
    half = window // 2
    out = np.empty_like(values)
    for i in range(len(values)):
        lo, hi = max(0, i - half), min(len(values), i + half + 1)
        out[i] = values[lo:hi].mean()
    return out


def local_maxima(y: np.ndarray) -> list[int]:
    """Interior indices strictly above the left neighbour and not below the right.

    A flat top is reported once, at its left edge.
    """
    out = []
    n = len(y)
    i = 1
    while i < n - 1:
        if y[i] > y[i - 1]:
            j = i
            while j < n - 1 and y[j + 1] == y[i]:
                j += 1
            if j < n - 1 and y[j + 1] < y[i]:
                out.append(i)
            i = j + 1
        else:
            i += 1
    return out


def flanking_minima(y: np.ndarray, peak: int) -> tuple[float, float]:
    """Lowest point on each side before the curve climbs above the peak again."""
    left = peak
    while left > 0 and y[left - 1] <= y[peak]:
        left -= 1
    right = peak
    while right < len(y) - 1 and y[right + 1] <= y[peak]:
        right += 1
    return float(np.min(y[left : peak + 1])), float(np.min(y[peak : right + 1]))


def _is_monotone(y: np.ndarray, tol: float, decreasing: bool) -> bool:
    steps = np.diff(y)
    return bool(np.all(steps <= tol)) if decreasing else bool(np.all(steps >= -tol))


def classify_shape(y: np.ndarray, tol_fraction: float = DEFAULT_MONOTONE_TOLERANCE) -> str:
    """Label a curve with no double-descent peak.

    Adjacent moves against the expected direction up to ``tol_fraction`` of
    the curve's range count as noise.
    """
    span = float(y.max() - y.min())
    tol = tol_fraction * span
    if span == 0 or _is_monotone(y, tol, decreasing=True):
        return "monotone_decreasing"
    if _is_monotone(y, tol, decreasing=False):
        return "monotone_increasing"
    k = int(np.argmin(y))
    if 0 < k < len(y) - 1 and _is_monotone(y[: k + 1], tol, True) and _is_monotone(y[k:], tol, False):
        return "u_shape"
    return "irregular"


def detect_interpolation_peak(
    curve: LossCurve,
    prominence_threshold: float = DEFAULT_PROMINENCE,
    smooth_window: int = 1,
    monotone_tolerance: float = DEFAULT_MONOTONE_TOLERANCE,
) -> PeakReport:
    """Look for a double-descent interpolation peak on a capacity/loss curve.

    Every interior local maximum is scored by its prominence, the height
    above the higher of its two flanking minima, as a fraction of the whole
    curve's range. The most prominent one counts as a peak when the fraction
    reaches ``prominence_threshold`` and the curve later drops below the
    left flanking minimum (a second descent, not just the right arm of a U).

    Parameters
    ----------
    curve : LossCurve
        At least four points, capacities increasing.
    prominence_threshold : float
        In (0, 1).
    smooth_window : int
        Optional centered moving-average width applied before the extremum
        search. 1 disables smoothing.
    """
    if len(curve) < 4:
        raise ValueError(f"need at least 4 points, got {len(curve)}")
    if not 0 < prominence_threshold < 1:
        raise ValueError("prominence_threshold must lie in (0, 1)")
    y = moving_average(curve.losses, smooth_window)
    span = float(y.max() - y.min())

    scored = []
    if span > 0:
        for p in local_maxima(y):
            left, right = flanking_minima(y, p)
            redescends = bool(np.any(y[p + 1 :] < left))
            scored.append(((y[p] - max(left, right)) / span, redescends, p))
    firing = [s for s in scored if s[0] >= prominence_threshold and s[1]]
    # report the strongest firing peak, else the strongest candidate of any kind
    best = max(firing or scored, default=(0.0, False, None), key=lambda s: s[0])
    has_peak = bool(firing)
    return PeakReport(
        has_peak=has_peak,
        peak_index=best[2] if has_peak else None,
        prominence_fraction=float(best[0]),
        classification="double_descent" if has_peak else classify_shape(y, monotone_tolerance),
        argmin_index=int(np.argmin(curve.losses)),
        capacities=curve.capacities.tolist(),
        losses=curve.losses.tolist(),
    )


def local_maxima_near(curve: LossCurve, targets: Sequence[float], octaves: float = 1.0) -> list[float]:
    """Capacities of local loss maxima lying within ``octaves`` (log2) of any target."""
    y = curve.losses
    caps = curve.capacities
    hits = []
    for i in local_maxima(y):
        if any(abs(math.log2(caps[i] / t)) <= octaves for t in targets if t > 0):
            hits.append(float(caps[i]))
    return hits


# -- tables --------------------------------------------------------------------


def curve_from_table(table: ResultsTable, axis: str, fixed: dict, metric: str = "test_mse",
                     experiment_id: Optional[str] = None) -> LossCurve:
    """Seed-mean ``metric`` along ``axis`` with the keys in ``fixed`` held constant."""
    agg = table.aggregate(metric)
    pairs = []
    for cell, stats in agg.items():
        exp, latent, hidden, n_train = cell
        if experiment_id is not None and exp != experiment_id:
            continue
        values = {"latent": latent, "hidden": hidden, "n_train": n_train}
        if all(values[k] == v for k, v in fixed.items()):
            pairs.append((values[axis], stats["mean"]))
    if not pairs:
        raise ValueError(f"no rows with {fixed} in table")
    return LossCurve.from_pairs(pairs, axis_label=axis)


def _slice_key(table: ResultsTable, axis: str, experiment_id: Optional[str]) -> int:
    other = "hidden" if axis == "latent" else "latent"
    counts: dict[int, set] = {}
    for row in table.rows:
        if experiment_id is None or row.experiment_id == experiment_id:
            counts.setdefault(getattr(row, other), set()).add(getattr(row, axis))
    if not counts:
        raise ValueError("table has no autoencoder rows")
    return max(counts, key=lambda k: (len(counts[k]), -k))


def classify_ae_slices(
    table: ResultsTable,
    fixed_hidden: Optional[int] = None,
    fixed_latent: Optional[int] = None,
    prominence_threshold: float = DEFAULT_PROMINENCE,
    experiment_id: Optional[str] = "ae",
) -> dict[str, PeakReport]:
    """Peak reports for the latent sweep (hidden fixed) and hidden sweep (latent fixed).

    When the fixed widths are not given, the hidden (latent) value that has
    the most distinct latent (hidden) values in the table is used.
    """
    if fixed_hidden is None:
        fixed_hidden = _slice_key(table, "latent", experiment_id)
    if fixed_latent is None:
        fixed_latent = _slice_key(table, "hidden", experiment_id)
    latent_curve = curve_from_table(table, "latent", {"hidden": fixed_hidden}, experiment_id=experiment_id)
    hidden_curve = curve_from_table(table, "hidden", {"latent": fixed_latent}, experiment_id=experiment_id)
    if len(latent_curve) < 4 or len(hidden_curve) < 4:
        raise ValueError("latent and hidden slices need at least 4 cells each")
    return {
        "latent_slice": detect_interpolation_peak(latent_curve, prominence_threshold),
        "hidden_slice": detect_interpolation_peak(hidden_curve, prominence_threshold),
    }


def interpolating_cells(table: ResultsTable, train_threshold: float = DEFAULT_TRAIN_THRESHOLD,
                        experiment_id: Optional[str] = "ae") -> set[tuple[int, int]]:
    """``(latent, hidden)`` cells whose seed-mean train MSE is below the threshold."""
    out = set()
    for (exp, latent, hidden, _), stats in table.aggregate("train_mse").items():
        if experiment_id is not None and exp != experiment_id:
            continue
        if stats["mean"] < train_threshold:
            out.add((latent, hidden))
    return out


def interpolation_boundary(table: ResultsTable, train_threshold: float = DEFAULT_TRAIN_THRESHOLD,
                           experiment_id: Optional[str] = "ae") -> set[tuple[int, int]]:
    """Interpolating cells with at least one non-interpolating neighbour.

    Neighbours share one width and are consecutive in the other among the
    widths measured along that row or column.
    """
    cells = {(lat, hid) for (exp, lat, hid, _) in table.aggregate("train_mse")
             if experiment_id is None or exp == experiment_id}
    inside = interpolating_cells(table, train_threshold, experiment_id)
    rows: dict[int, list[int]] = {}
    cols: dict[int, list[int]] = {}
    for lat, hid in cells:
        rows.setdefault(hid, []).append(lat)
        cols.setdefault(lat, []).append(hid)

    def neighbours(lat, hid):
        out = []
        for seq, pos, make in ((sorted(rows[hid]), lat, lambda v: (v, hid)),
                               (sorted(cols[lat]), hid, lambda v: (lat, v))):
            k = seq.index(pos)
            if k > 0:
                out.append(make(seq[k - 1]))
            if k < len(seq) - 1:
                out.append(make(seq[k + 1]))
        return out

    return {c for c in inside if any(nb not in inside for nb in neighbours(*c))}


def ae_param_count(n_features: int, hidden: float, latent: int) -> float:
    """Parameters of ``n -> h -> l -> h -> n`` with biases; real-valued in ``hidden``."""
    return 2 * n_features * hidden + 2 * hidden + 2 * hidden * latent + latent + n_features


def peak_loci(n_features: int, n_train: int, out_dim_assumption: str,
              latent_values: Iterable[int]) -> list[tuple[int, float]]:
    """Hidden width where the parameter count equals ``n_train * output size``.

    ``out_dim_assumption`` is ``"features"`` (output size n) or ``"latent"``
    (output size l, the model's bottleneck width). Latent widths with no
    positive solution are dropped.
    """
    if out_dim_assumption not in ("features", "latent"):
        raise ValueError(f"unknown output-size assumption {out_dim_assumption!r}")
    out = []
    for latent in latent_values:
        out_dim = n_features if out_dim_assumption == "features" else latent
        target = n_train * out_dim
        hidden = (target - latent - n_features) / (2 * n_features + 2 + 2 * latent)
        if hidden > 0:
            out.append((int(latent), float(hidden)))
    return out


def linear_ae_curve(table: ResultsTable, out_dim: int, experiment_id: str = "linear_ae") -> LossCurve:
    """Seed-mean test MSE against parameterization ratio (ascending)."""
    pairs = []
    for (exp, _, _, n_train), stats in table.aggregate("test_mse").items():
        if exp != experiment_id:
            continue
        params = stats["param_count"]
        pairs.append((parameterization_ratio(params, n_train, out_dim), stats["mean"]))
    return LossCurve.from_pairs(pairs, axis_label="ratio")


# -- supervised positive control -------------------------------------------------


def minnorm_regression_control(
    n_features: int = 25,
    n_train_values: Sequence[int] = (5, 10, 15, 20, 24, 25, 26, 30, 40, 80, 200),
    noise_std: float = 0.5,
    trials: int = 200,
    seed: int = 0,
) -> LossCurve:
    """Test risk of minimum-norm least squares as the sample size varies.

    For each trial and sample size ``N``: ``beta* ~ N(0, I/n)``, rows of
    ``X`` standard normal, ``y = X beta* + noise``, and ``beta_hat = pinv(X) y``.
    For a fresh standard-normal input the expected squared error of
    ``beta_hat`` is ``||beta_hat - beta*||^2 + noise_std^2``; that is what gets
    averaged over trials. Each ``(seed, trial, N)`` has its own generator, so
    the result does not depend on evaluation order.
    """
    if n_features < 1 or trials < 1 or noise_std < 0:
        raise ValueError("n_features and trials must be positive, noise_std non-negative")
    sizes = sorted(int(v) for v in n_train_values)
    if sizes[0] < 1:
        raise ValueError("sample sizes must be positive")
    risks = []
    for size in sizes:
        total = 0.0
        for trial in range(trials):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, trial, size))))
            beta = rng.standard_normal(n_features) / math.sqrt(n_features)
            X = rng.standard_normal((size, n_features))
            y = X @ beta + noise_std * rng.standard_normal(size)
            beta_hat = np.linalg.pinv(X) @ y
            total += float(np.sum((beta_hat - beta) ** 2)) + noise_std**2
        risks.append(total / trials)
    return LossCurve(sizes, risks, axis_label="n_train", label="min-norm regression")


# -- report ----------------------------------------------------------------------


def _cells_json(cells) -> list:
    return [list(c) for c in sorted(cells)]


def build_report(table: ResultsTable, control: Optional[LossCurve] = None,
                 prominence_threshold: float = DEFAULT_PROMINENCE,
                 train_threshold: float = DEFAULT_TRAIN_THRESHOLD) -> dict:
    """Every verdict for a results table (and optionally the regression control)."""
    from . import __version__

    report: dict = {"tool_version": __version__, "prominence_threshold": prominence_threshold}
    verdicts: dict = {}
    ae = table.select("ae")
    if len(ae):
        fixed_hidden = _slice_key(ae, "latent", "ae")
        fixed_latent = _slice_key(ae, "hidden", "ae")
        slices = classify_ae_slices(ae, fixed_hidden, fixed_latent, prominence_threshold)
        n_features = ae.rows[0].n_features
        n_train = ae.rows[0].n_train
        hidden_curve = curve_from_table(ae, "hidden", {"latent": fixed_latent}, experiment_id="ae")
        loci = {a: peak_loci(n_features, n_train, a, [fixed_latent]) for a in ("features", "latent")}
        targets = {a: [h for _, h in pts] for a, pts in loci.items()}
        hmax = float(hidden_curve.capacities.max())
        report["ae"] = {
            "latent_slice": {"fixed_hidden": fixed_hidden, **slices["latent_slice"].to_json()},
            "hidden_slice": {"fixed_latent": fixed_latent, **slices["hidden_slice"].to_json()},
            "predicted_peak_hidden": {
                a: {"hidden": targets[a], "bracketed": all(h < hmax for h in targets[a]),
                    "local_maxima_within_one_octave": local_maxima_near(hidden_curve, targets[a])}
                for a in targets
            },
            "train_threshold": train_threshold,
            "interpolating_cells": _cells_json(interpolating_cells(ae, train_threshold)),
            "boundary_cells": _cells_json(interpolation_boundary(ae, train_threshold)),
        }
        verdicts["latent_slice"] = slices["latent_slice"].classification
        verdicts["hidden_slice"] = slices["hidden_slice"].classification
    lin = table.select("linear_ae")
    if len(lin):
        row = lin.rows[0]
        reports = {
            "features": detect_interpolation_peak(linear_ae_curve(lin, row.n_features), prominence_threshold),
            "latent": detect_interpolation_peak(linear_ae_curve(lin, row.latent), prominence_threshold),
        }
        report["linear_ae"] = {
            "param_counts": sorted({r.param_count for r in lin.rows}),
            **{f"ratio_{k}": v.to_json() for k, v in reports.items()},
        }
        verdicts["linear_ae_has_peak"] = any(r.has_peak for r in reports.values())
    if control is not None:
        rep = detect_interpolation_peak(control, prominence_threshold)
        report["control"] = rep.to_json()
        verdicts["control_has_peak"] = rep.has_peak
    report["diverged_runs"] = sum(1 for r in table.rows if r.diverged)
    report["verdicts"] = verdicts
    return report
