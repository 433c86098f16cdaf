"""Descriptive aggregates over users, occupations and genre encounters."""

from __future__ import annotations

import csv
import io
import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np

from profilecf.ingest import Dataset


@dataclass(frozen=True)
class EncounterMatrix:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def row(self, occupation: str) -> np.ndarray:
        return self.values[self.rows.index(occupation)]


def age_histogram(dataset: Dataset, bin_width: int = 1) -> dict[int, int]:
    """User counts per age bin, keyed by the bin's lowest age.

    Bins start at the youngest user's age so a width of at least the age
    range yields a single bin.
    """
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    if not dataset.users:
        return {}
    lowest = min(u.age for u in dataset.users)
    counts = Counter(lowest + (u.age - lowest) // bin_width * bin_width for u in dataset.users)
    return dict(sorted(counts.items()))


def occupation_counts(dataset: Dataset) -> dict[str, int]:
    counts = Counter(u.occupation for u in dataset.users)
    return dict(sorted(counts.items()))


def occupation_genre_encounters(dataset: Dataset) -> EncounterMatrix:
    """Cumulative genre flags over all ratings, grouped by rater occupation."""
    occupation_of = {u.user_id: u.occupation for u in dataset.users}
    rows = tuple(sorted(set(occupation_of.values())))
    row_of = {o: k for k, o in enumerate(rows)}
    flags = {m.item_id: np.array(m.genre_flags, dtype=np.int64) for m in dataset.movies}
    values = np.zeros((len(rows), len(dataset.genre_names)), dtype=np.int64)
    for r in dataset.ratings:
        values[row_of[occupation_of[r.user_id]]] += flags[r.item_id]
    return EncounterMatrix(rows, tuple(dataset.genre_names), values)


def occupation_cosines(
    dataset: Dataset, matrix: EncounterMatrix | None = None, min_users: int = 10
) -> dict[tuple[str, str], float]:
    """Cosine similarity between row-normalised genre distributions.

    Only occupations with at least ``min_users`` users take part.
    """
    matrix = matrix or occupation_genre_encounters(dataset)
    counts = occupation_counts(dataset)
    chosen = [o for o in matrix.rows if counts.get(o, 0) >= min_users and matrix.row(o).sum() > 0]
    dist = {o: matrix.row(o) / matrix.row(o).sum() for o in chosen}
    return {
        (a, b): float(dist[a] @ dist[b] / (np.linalg.norm(dist[a]) * np.linalg.norm(dist[b])))
        for a, b in itertools.combinations(chosen, 2)
    }


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def age_histogram_csv(hist: dict[int, int]) -> str:
    return _csv(["age", "count"], hist.items())


def occupation_counts_csv(counts: dict[str, int]) -> str:
    return _csv(["occupation", "count"], counts.items())


def encounters_csv(matrix: EncounterMatrix) -> str:
    return _csv(
        ["occupation", "genre", "encounters"],
        (
            (occ, genre, int(matrix.values[i, j]))
            for i, occ in enumerate(matrix.rows)
            for j, genre in enumerate(matrix.columns)
        ),
    )
