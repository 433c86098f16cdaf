"""Weighted-average rating prediction over a user similarity matrix."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from profilecf.ingest import MAX_RATING, MIN_RATING, RatingEvent
from profilecf.similarity import SimilarityMatrix

NEIGHBORHOOD, USER_MEAN, GLOBAL_MEAN = "neighborhood", "user_mean", "global_mean"
CENTERINGS = ("mean", "raw")
EMPTY_TRAIN_MEAN = 3.0


@dataclass(frozen=True)
class PredictorConfig:
    centering: str = "mean"
    k_neighbors: int | None = None
    use_negative: bool = False

    def __post_init__(self):
        if self.centering not in CENTERINGS:
            raise ValueError(f"centering must be one of {CENTERINGS}, got {self.centering!r}")
        if self.k_neighbors is not None and self.k_neighbors < 1:
            raise ValueError("k_neighbors must be a positive integer or None")


@dataclass(frozen=True)
class Prediction:
    user_id: int
    item_id: int
    predicted_rating: float
    support: int
    fallback_level: str


class TrainingIndex:
    """Lookup structures over the training ratings.

    ``catalog`` lists every item the dataset knows; predicting for anything
    outside it is an error even if nobody rated it in training.
    """

    def __init__(self, ratings: Iterable[RatingEvent], catalog: Iterable[int]):
        self.catalog = frozenset(catalog)
        self.by_user: dict[int, dict[int, int]] = defaultdict(dict)
        raters: dict[int, list[tuple[int, int]]] = defaultdict(list)
        total, count = 0, 0
        for r in ratings:
            self.by_user[r.user_id][r.item_id] = r.rating
            raters[r.item_id].append((r.user_id, r.rating))
            total += r.rating
            count += 1
        self.by_user = dict(self.by_user)
        self.global_mean = total / count if count else EMPTY_TRAIN_MEAN
        self.user_mean = {u: sum(items.values()) / len(items) for u, items in self.by_user.items()}
        self._raters = {
            item: (
                np.array([u for u, _ in pairs], dtype=np.int64),
                np.array([v for _, v in pairs], dtype=float),
            )
            for item, pairs in ((i, sorted(p)) for i, p in raters.items())
        }

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_user.values())

    def raters(self, item_id: int) -> tuple[np.ndarray, np.ndarray]:
        empty = (np.zeros(0, dtype=np.int64), np.zeros(0))
        return self._raters.get(item_id, empty)



def _clamp(value: float) -> float:
    return min(float(MAX_RATING), max(float(MIN_RATING), value))


def _fallback(user_id: int, item_id: int, train: TrainingIndex) -> Prediction:
    if user_id in train.user_mean:
        return Prediction(user_id, item_id, _clamp(train.user_mean[user_id]), 0, USER_MEAN)
    return Prediction(user_id, item_id, _clamp(train.global_mean), 0, GLOBAL_MEAN)


def predict_rating(
    user_id: int,
    item_id: int,
    sims: SimilarityMatrix,
    train: TrainingIndex,
    config: PredictorConfig = PredictorConfig(),
) -> Prediction:
    """Predict one rating from neighbours who rated ``item_id``.

    Mean-centred form: ``mean_u + sum s_uv (r_vi - mean_v) / sum |s_uv|``;
    the raw form drops both means. Falls back to the user's training mean,
    then the global training mean, when no neighbour qualifies.
    """
    if item_id not in train.catalog:
        raise ValueError(f"item {item_id} is not in the dataset")
    users, values = train.raters(item_id)
    if users.size == 0:
        return _fallback(user_id, item_id, train)
    try:
        row = sims.row(user_id)
    except KeyError:
        return _fallback(user_id, item_id, train)
    weights = row[sims.positions(users)]
    keep = (weights != 0.0) if config.use_negative else (weights > 0.0)
    keep &= users != user_id
    if not keep.any():
        return _fallback(user_id, item_id, train)
    users, values, weights = users[keep], values[keep], weights[keep]
    if config.k_neighbors is not None and weights.size > config.k_neighbors:
        # users are ascending, so a stable sort breaks ties on the lower id
        order = np.argsort(-np.abs(weights), kind="stable")[: config.k_neighbors]
        order.sort()
        users, values, weights = users[order], values[order], weights[order]

    norm = np.abs(weights).sum()
    if config.centering == "mean":
        means = np.array([train.user_mean[u] for u in users])
        base = train.user_mean.get(user_id, train.global_mean)
        estimate = base + float(weights @ (values - means)) / norm
    else:
        estimate = float(weights @ values) / norm
    return Prediction(user_id, item_id, _clamp(estimate), int(weights.size), NEIGHBORHOOD)


def predict_many(
    pairs: Sequence[tuple[int, int]],
    sims: SimilarityMatrix,
    train: TrainingIndex,
    config: PredictorConfig = PredictorConfig(),
    threads: int = 1,
) -> list[Prediction]:
    """Predictions for ``(user, item)`` pairs, returned in input order."""
    if threads <= 1:
        return [predict_rating(u, i, sims, train, config) for u, i in pairs]
    chunks = np.array_split(np.arange(len(pairs)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(
            lambda idx: [predict_rating(*pairs[k], sims, train, config) for k in idx], chunks
        )
        return [p for part in parts for p in part]


def recommend_top_n(
    user_id: int,
    n: int,
    sims: SimilarityMatrix,
    train: TrainingIndex,
    config: PredictorConfig = PredictorConfig(),
) -> list[tuple[int, float]]:
    """Top ``n`` items the user has not rated; ties go to the lower item id."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rated = train.by_user.get(user_id, {})
    scored = [
        (item, predict_rating(user_id, item, sims, train, config).predicted_rating)
        for item in sorted(train.catalog)
        if item not in rated
    ]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:n]


def predictions_to_csv(predictions: Sequence[Prediction], actuals: Sequence[int]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["user_id", "item_id", "actual", "predicted", "support", "fallback"])
    for p, actual in zip(predictions, actuals):
        writer.writerow([p.user_id, p.item_id, actual, repr(p.predicted_rating), p.support, p.fallback_level])
    return buf.getvalue()
