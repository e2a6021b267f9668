"""Evaluation: monotonicity score M_k, ROC AUC, conditioned trends, correlation.

M_k for feature k is the fraction of samples whose score stays
non-decreasing (after folding the feature's direction) while feature k is
swept over a grid in [low, high) and every other coordinate is frozen at the
sample's own values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigurationError, DataError, UndefinedMetricError
from .loss import MonotoneSpec
from .model import MlpModel, scores

DEFAULT_RESOLUTION = 20
DEFAULT_TOLERANCE = 1e-9
_CHUNK_ELEMS = 4_000_000

ScoreFn = Callable[[np.ndarray], np.ndarray]


def as_score_fn(model) -> ScoreFn:
    if isinstance(model, MlpModel):
        return lambda X: scores(model, X)
    if callable(model):
        return model
    raise TypeError(f"expected an MlpModel or a callable, got {type(model).__name__}")


@dataclass(frozen=True)
class SweepGrid:
    feature_index: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 2:
            raise ConfigurationError("sweep grid needs at least 2 points")
        if not np.all(np.diff(pts) > 0):
            raise ConfigurationError("sweep grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def even(cls, feature_index: int, low: float, high: float,
             resolution: int = DEFAULT_RESOLUTION) -> "SweepGrid":
        """``resolution`` evenly spaced points starting at ``low``, all below ``high``."""
        if resolution < 2:
            raise ConfigurationError(f"resolution must be >= 2, got {resolution}")
        if not low < high:
            raise ConfigurationError(f"empty sweep range [{low}, {high})")
        return cls(feature_index, np.linspace(low, high, resolution, endpoint=False))

    @property
    def resolution(self) -> int:
        return self.points.size


@dataclass
class FeatureMonotonicity:
    feature_index: int
    mk: float
    delta: np.ndarray  # int8 per sample
    violations: list[tuple[int, int]] = field(default_factory=list)  # (sample, segment)


@dataclass
class MonotonicityReport:
    features: dict[int, FeatureMonotonicity]

    @property
    def mk(self) -> dict[int, float]:
        return {k: f.mk for k, f in self.features.items()}

    @property
    def mean_mk(self) -> float:
        return float(np.mean([f.mk for f in self.features.values()]))


def sweep_scores(score_fn: ScoreFn, X: np.ndarray, grid: SweepGrid) -> np.ndarray:
    """(n, G) scores with column ``grid.feature_index`` replaced by each grid point."""
    n, d = X.shape
    g = grid.resolution
    out = np.empty((n, g))
    chunk = max(1, _CHUNK_ELEMS // max(1, g * d))
    for start in range(0, n, chunk):
        block = X[start:start + chunk]
        m = block.shape[0]
        tiled = np.repeat(block, g, axis=0)
        tiled[:, grid.feature_index] = np.tile(grid.points, m)
        out[start:start + m] = np.asarray(score_fn(tiled), dtype=np.float64).reshape(m, g)
    return out


def monotonicity_metric(model, X, spec: MonotoneSpec, resolution: int = DEFAULT_RESOLUTION,
                        tolerance: float = DEFAULT_TOLERANCE) -> MonotonicityReport:
    """M_k for every feature in ``spec`` over the rows of ``X``."""
    score_fn = as_score_fn(model)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("monotonicity metric needs a non-empty feature matrix")
    spec.validate(X.shape[1])
    features = {}
    for entry in spec.entries:
        grid = SweepGrid.even(entry.index, entry.low, entry.high, resolution)
        folded = entry.direction * sweep_scores(score_fn, X, grid)
        ok = np.diff(folded, axis=1) >= -tolerance
        delta = ok.all(axis=1).astype(np.int8)
        bad_i, bad_seg = np.nonzero(~ok)
        features[entry.index] = FeatureMonotonicity(
            entry.index, float(delta.mean()), delta,
            list(zip(bad_i.tolist(), bad_seg.tolist())))
    return MonotonicityReport(features)


def auc(scores_, labels) -> float:
    """ROC AUC as the Mann-Whitney U statistic; tied scores count one half."""
    s = np.asarray(scores_, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ConfigurationError(f"{s.size} scores but {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ConfigurationError("labels must be binary")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined with a single class")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class TrendCurves:
    feature_index: int
    grid: np.ndarray
    anchor_ids: np.ndarray
    values: np.ndarray  # (anchors, G)


def conditioned_trends(model, anchors, feature_index: int, grid, anchor_ids=None) -> TrendCurves:
    """Model score along ``grid`` for feature k, all else frozen at each anchor."""
    anchors = np.asarray(anchors, dtype=np.float64)
    if anchors.ndim != 2 or anchors.shape[0] == 0:
        raise DataError("conditioned trends need at least one anchor point")
    if not isinstance(grid, SweepGrid):
        grid = SweepGrid(feature_index, grid)
    values = sweep_scores(as_score_fn(model), anchors, grid)
    ids = np.arange(anchors.shape[0]) if anchor_ids is None else np.asarray(anchor_ids)
    return TrendCurves(feature_index, grid.points, ids, values)


def pearson_correlation(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ConfigurationError("arguments differ in length")
    da, db = a - a.mean(), b - b.mean()
    va, vb = np.dot(da, da), np.dot(db, db)
    if va == 0 or vb == 0:
        raise UndefinedMetricError("correlation undefined for a constant argument")
    return float(np.clip(np.dot(da, db) / np.sqrt(va * vb), -1.0, 1.0))


# CSV export ---------------------------------------------------------------

def _open(path):
    return open(path, "w", encoding="utf-8", newline="\n")


def write_trends_csv(path: str | os.PathLike, curves: TrendCurves, feature_name: str) -> None:
    with _open(path) as fh:
        fh.write("sample_id,feature,grid_value,score\n")
        for sid, row in zip(curves.anchor_ids, curves.values):
            for gv, sc in zip(curves.grid, row):
                fh.write(f"{int(sid)},{feature_name},{float(gv)!r},{float(sc)!r}\n")


def write_mk_csv(path: str | os.PathLike, report: MonotonicityReport, names=None) -> None:
    with _open(path) as fh:
        fh.write("feature,mk\n")
        for k, f in report.features.items():
            label = names[k] if names is not None else str(k)
            fh.write(f"{label},{f.mk!r}\n")


def write_delta_csv(path: str | os.PathLike, feature: FeatureMonotonicity) -> None:
    with _open(path) as fh:
        fh.write("sample_id,delta\n")
        for i, d in enumerate(feature.delta):
            fh.write(f"{i},{int(d)}\n")
