"""Four-dimensional change features and their standardization.

Feature order is fixed: (price, spread, volume, imbalance), each the raw
first difference of the period series ``mean_trade_price``, ``mean_spread``,
``total_trade_volume`` and ``mean_quote_imbalance``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import TooFewPeriods, TooFewSamples
from .ticks import PeriodAggregate

FEATURE_NAMES = ("price", "spread", "volume", "imbalance")
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    d_price: float
    d_spread: float
    d_volume: float
    d_imbalance: float
    period_start: int
    scale_minutes: int

    def values(self) -> tuple[float, float, float, float]:
        return (self.d_price, self.d_spread, self.d_volume, self.d_imbalance)

    def with_values(self, values) -> "FeatureVector":
        p, s, v, i = (float(x) for x in values)
        return FeatureVector(p, s, v, i, self.period_start, self.scale_minutes)


def as_array(features: Sequence[FeatureVector]) -> np.ndarray:
    """Stack feature vectors into an ``(n, 4)`` float array."""
    if not len(features):
        return np.empty((0, N_FEATURES))
    return np.array([f.values() for f in features], dtype=float)


def _raw(a: PeriodAggregate) -> tuple[float, float, float, float]:
    return (a.mean_trade_price, a.mean_spread, a.total_trade_volume, a.mean_quote_imbalance)


def has_predecessor(prev: PeriodAggregate | None, cur: PeriodAggregate) -> bool:
    return (prev is not None and prev.symbol == cur.symbol and prev.session == cur.session
            and prev.period_index == cur.period_index - 1)


def compute_period_features(
    aggregates: Sequence[PeriodAggregate],
) -> tuple[list[FeatureVector], list[PeriodAggregate]]:
    """First differences of the four raw series.

    Periods without an adjacent predecessor in the same session (the first
    period of each session, or the first after an empty period) yield no
    feature. Returns the features together with the aggregates they
    describe, aligned one-to-one.
    """
    features, kept = [], []
    prev = None
    for cur in aggregates:
        if has_predecessor(prev, cur):
            diff = [c - p for c, p in zip(_raw(cur), _raw(prev))]
            features.append(FeatureVector(*diff, cur.period_start, cur.scale_minutes))
            kept.append(cur)
        prev = cur
    if not features:
        raise TooFewPeriods("no session has two consecutive periods")
    return features, kept


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        safe = np.where(self.constant, 1.0, self.std)
        return np.where(self.constant, 0.0, (x - self.mean) / safe)

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.where(self.constant, self.mean, z * self.std + self.mean)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float),
                   np.asarray(d["constant"], dtype=bool))


def fit_standardizer(features: Sequence[FeatureVector] | np.ndarray) -> Standardizer:
    x = features if isinstance(features, np.ndarray) else as_array(features)
    if x.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 vectors, got {x.shape[0]}")
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    # a spread too small to square without underflow counts as constant
    constant = (np.ptp(x, axis=0) == 0) | (std == 0)
    return Standardizer(mean, np.where(constant, 0.0, std), constant)


def apply_standardizer(standardizer: Standardizer,
                       features: Sequence[FeatureVector]) -> list[FeatureVector]:
    z = standardizer.transform(as_array(features))
    return [f.with_values(row) for f, row in zip(features, z)]


def invert_standardizer(standardizer: Standardizer,
                        features: Sequence[FeatureVector]) -> list[FeatureVector]:
    x = standardizer.inverse_transform(as_array(features))
    return [f.with_values(row) for f, row in zip(features, x)]


def write_features_csv(features: Iterable[FeatureVector], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("period_start", "scale_minutes") + tuple(f"d_{n}" for n in FEATURE_NAMES))
    for f in features:
        writer.writerow((f.period_start, f.scale_minutes, *(repr(v) for v in f.values())))
