"""Per-user genre feature profiles.

Each rating is applied in full to every genre flagged on the rated movie, so a
feature score is the running mean of the user's ratings on that genre.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from profilecf import GENRE_COUNT
from profilecf.ingest import (
    MAX_RATING,
    MIN_RATING,
    IntegrityError,
    Movie,
    RatingEvent,
    UserDemographics,
)


@dataclass(frozen=True)
class FeatureProfile:
    """Genre scores (``None`` until first encounter) and encounter counts."""

    user_id: int
    scores: tuple[float | None, ...]
    encounters: tuple[int, ...]
    demographics: UserDemographics | None = None

    @classmethod
    def empty(cls, user_id: int, genre_count: int = GENRE_COUNT, demographics=None):
        return cls(user_id, (None,) * genre_count, (0,) * genre_count, demographics)

    @property
    def encountered(self) -> np.ndarray:
        return np.array([n > 0 for n in self.encounters], dtype=bool)

    def score_array(self) -> np.ndarray:
        """Scores as floats, NaN where unencountered."""
        return np.array([np.nan if s is None else s for s in self.scores], dtype=float)

    def display_scores(self, digits: int = 2) -> tuple[float | None, ...]:
        return tuple(None if s is None else round(s, digits) for s in self.scores)


def update_feature_score(c: float | None, n: int, f: int, rating: float) -> tuple[float, int]:
    """Fold one rating into a feature score.

    ``f`` is the movie's 0/1 flag for this feature. With ``f=1`` the score
    becomes ``(R + c*n) / (n + 1)``; with ``f=0`` it is left untouched.

    >>> update_feature_score(0.0, 0, 1, 3)
    (3.0, 1)
    """
    if f not in (0, 1):
        raise ValueError(f"feature flag must be 0 or 1, got {f!r}")
    if n < 0:
        raise ValueError(f"encounter count must be non-negative, got {n}")
    if not MIN_RATING <= rating <= MAX_RATING:
        raise ValueError(f"rating {rating} outside [{MIN_RATING}, {MAX_RATING}]")
    if f == 0:
        return c, n
    current = 0.0 if n == 0 or c is None else c
    return (f * rating + current * n) / (n + f), n + f


def build_profile(
    user_id: int,
    user_ratings: Iterable[RatingEvent],
    movies: Mapping[int, Movie],
    genre_count: int = GENRE_COUNT,
    demographics: UserDemographics | None = None,
) -> FeatureProfile:
    scores: list[float | None] = [None] * genre_count
    counts = [0] * genre_count
    for event in user_ratings:
        movie = movies.get(event.item_id)
        if movie is None:
            raise IntegrityError(f"rating {event} references unknown item {event.item_id}")
        for g, flag in enumerate(movie.genre_flags):
            scores[g], counts[g] = update_feature_score(scores[g], counts[g], int(flag), event.rating)
    return FeatureProfile(user_id, tuple(scores), tuple(counts), demographics)


def build_all_profiles(
    ratings: Iterable[RatingEvent],
    movies: Mapping[int, Movie] | Sequence[Movie],
    user_ids: Iterable[int] = (),
    genre_count: int = GENRE_COUNT,
    demographics: Mapping[int, UserDemographics] | None = None,
) -> dict[int, FeatureProfile]:
    """Profiles for every user in ``ratings`` plus any extra ``user_ids``.

    ``ratings`` must already be restricted to the training portion.
    """
    if not isinstance(movies, Mapping):
        movies = {m.item_id: m for m in movies}
    demographics = demographics or {}
    by_user: dict[int, list[RatingEvent]] = defaultdict(list)
    for event in ratings:
        by_user[event.user_id].append(event)
    for uid in user_ids:
        by_user.setdefault(uid, [])
    return {
        uid: build_profile(uid, by_user[uid], movies, genre_count, demographics.get(uid))
        for uid in sorted(by_user)
    }


def profiles_to_csv(profiles: Mapping[int, FeatureProfile], genre_names: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["user_id", "genre", "score", "encounters"])
    for uid in sorted(profiles):
        p = profiles[uid]
        for name, score, count in zip(genre_names, p.scores, p.encounters):
            writer.writerow([uid, name, "" if score is None else repr(score), count])
    return buf.getvalue()
