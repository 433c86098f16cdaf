"""Train/test splitting, record capping, error metrics and the experiment grid."""

from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from profilecf.ingest import (
    SPLIT_NAMES,
    Dataset,
    IntegrityError,
    RatingEvent,
    load_split_files,
)
from profilecf.predict import NEIGHBORHOOD, PredictorConfig, TrainingIndex, predict_many
from profilecf.profile import build_all_profiles
from profilecf.similarity import BCF, MCF, SimilarityMatrix, bcf_matrix, mcf_matrix

RANDOM_SPLIT = "random"
CAP_SCOPES = ("all", "sampled_novel_fraction")
CAP_TARGETS = ("similarity", "train")

Split = tuple[list[RatingEvent], list[RatingEvent]]


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = BCF
    record_cap: int | None = None
    split: str = "u1"
    rng_seed: int = 42
    test_fraction: float = 0.2
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    mcf_domain: str = "common"
    cap_scope: str = "all"
    novel_fraction: float = 0.2
    cap_target: str = "similarity"

    def __post_init__(self):
        if self.algorithm not in (BCF, MCF):
            raise ValueError(f"algorithm must be {BCF} or {MCF}, got {self.algorithm!r}")
        if self.record_cap is not None and self.record_cap < 1:
            raise ValueError("record_cap must be >= 1")
        if self.split not in SPLIT_NAMES + (RANDOM_SPLIT,):
            raise ValueError(f"unknown split {self.split!r}")
        if self.cap_scope not in CAP_SCOPES:
            raise ValueError(f"cap_scope must be one of {CAP_SCOPES}")
        if self.cap_target not in CAP_TARGETS:
            raise ValueError(f"cap_target must be one of {CAP_TARGETS}")
        if not 0.0 < self.novel_fraction <= 1.0:
            raise ValueError("novel_fraction must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EvaluationReport:
    config: ExperimentConfig
    rmse: float
    mae: float
    coverage: float
    prediction_count: int
    wall_time: float

    def row(self) -> dict:
        return {
            "algorithm": self.config.algorithm,
            "cap": self.config.record_cap or "",
            "split": self.config.split,
            "seed": self.config.rng_seed,
            "rmse": self.rmse,
            "mae": self.mae,
            "coverage": self.coverage,
            "wall_time_s": self.wall_time,
        }


def rmse(pairs: Iterable[tuple[float, float]]) -> float:
    errors = [(a - p) ** 2 for a, p in pairs]
    if not errors:
        raise ValueError("rmse of an empty list")
    return math.sqrt(math.fsum(errors) / len(errors))


def mae(pairs: Iterable[tuple[float, float]]) -> float:
    errors = [abs(a - p) for a, p in pairs]
    if not errors:
        raise ValueError("mae of an empty list")
    return math.fsum(errors) / len(errors)


def _canonical(ratings: Iterable[RatingEvent]) -> list[RatingEvent]:
    return sorted(ratings, key=lambda r: (r.user_id, r.item_id))


def check_disjoint(train: Iterable[RatingEvent], test: Iterable[RatingEvent]) -> None:
    train_pairs = {(r.user_id, r.item_id) for r in train}
    overlap = [r for r in test if (r.user_id, r.item_id) in train_pairs]
    if overlap:
        raise IntegrityError(
            f"{len(overlap)} (user, item) pairs appear in both train and test, e.g. {overlap[0]}"
        )


def split_random(ratings: Sequence[RatingEvent] | Dataset, test_fraction: float, seed: int) -> Split:
    """Uniformly sample ``round(test_fraction * N)`` events as the test set."""
    if isinstance(ratings, Dataset):
        ratings = ratings.ratings
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie strictly between 0 and 1, got {test_fraction}")
    events = _canonical(ratings)
    n_test = int(round(test_fraction * len(events)))
    rng = np.random.default_rng(seed)
    is_test = np.zeros(len(events), dtype=bool)
    is_test[rng.permutation(len(events))[:n_test]] = True
    train = [e for e, t in zip(events, is_test) if not t]
    test = [e for e, t in zip(events, is_test) if t]
    return train, test


def load_official_split(data_dir: str | Path, fold: str, dataset: Dataset | None = None) -> Split:
    train, test = load_split_files(data_dir, fold)
    check_disjoint(train, test)
    if dataset is not None:
        # referential integrity against the full dataset
        dataset.with_ratings(train)
        dataset.with_ratings(test)
    return train, test


def cap_user_records(
    train: Iterable[RatingEvent],
    cap: int,
    seed: int,
    scope: str = "all",
    novel_fraction: float = 1.0,
) -> list[RatingEvent]:
    """Keep at most ``cap`` randomly chosen training ratings per user.

    With ``scope="sampled_novel_fraction"`` only a seeded ``novel_fraction``
    of users is capped; the rest keep their full history.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if scope not in CAP_SCOPES:
        raise ValueError(f"scope must be one of {CAP_SCOPES}")
    by_user: dict[int, list[RatingEvent]] = defaultdict(list)
    for r in _canonical(train):
        by_user[r.user_id].append(r)
    users = sorted(by_user)
    rng = np.random.default_rng(seed)
    if scope == "all":
        capped_users = set(users)
    else:
        k = int(round(novel_fraction * len(users)))
        capped_users = {users[j] for j in rng.permutation(len(users))[:k]}
    kept = []
    for u in users:
        events = by_user[u]
        if u in capped_users and len(events) > cap:
            chosen = np.sort(rng.choice(len(events), size=cap, replace=False))
            events = [events[j] for j in chosen]
        kept.extend(events)
    return kept


def prepare_split(config: ExperimentConfig, dataset: Dataset, data_dir: str | Path | None) -> Split:
    if config.split == RANDOM_SPLIT:
        return split_random(dataset.ratings, config.test_fraction, config.rng_seed)
    if data_dir is None:
        raise ValueError(f"official split {config.split!r} needs a data directory")
    return load_official_split(data_dir, config.split, dataset)


def build_similarity(
    config: ExperimentConfig, dataset: Dataset, train: Sequence[RatingEvent], threads: int = 1
) -> SimilarityMatrix:
    user_ids = dataset.user_ids
    if config.algorithm == MCF:
        profiles = build_all_profiles(
            train, dataset.movie_index(), user_ids, len(dataset.genre_names)
        )
        return mcf_matrix(profiles, user_ids, config.mcf_domain, threads)
    by_user: dict[int, dict[int, int]] = defaultdict(dict)
    for r in train:
        by_user[r.user_id][r.item_id] = r.rating
    return bcf_matrix(by_user, user_ids)


def run_experiment(
    config: ExperimentConfig,
    dataset: Dataset,
    data_dir: str | Path | None = None,
    split: Split | None = None,
    threads: int = 1,
    keep_predictions: bool = False,
):
    """Split, optionally cap, build similarities, predict every test pair.

    The record cap limits what the similarity stage sees. With
    ``cap_target="train"`` the predictor's rating index is capped as well.

    Returns an :class:`EvaluationReport`, or ``(report, predictions, test)``
    when ``keep_predictions`` is set.
    """
    start = time.perf_counter()
    train, test = split if split is not None else prepare_split(config, dataset, data_dir)
    sim_train = train
    if config.record_cap is not None:
        sim_train = cap_user_records(
            train, config.record_cap, config.rng_seed, config.cap_scope, config.novel_fraction
        )
        if config.cap_target == "train":
            train = sim_train
    check_disjoint(train, test)
    check_disjoint(sim_train, test)

    sims = build_similarity(config, dataset, sim_train, threads)
    index = TrainingIndex(train, dataset.item_ids)
    predictions = predict_many(
        [(r.user_id, r.item_id) for r in test], sims, index, config.predictor, threads
    )
    pairs = [(r.rating, p.predicted_rating) for r, p in zip(test, predictions)]
    covered = sum(p.fallback_level == NEIGHBORHOOD for p in predictions)
    report = EvaluationReport(
        config=config,
        rmse=rmse(pairs),
        mae=mae(pairs),
        coverage=covered / len(predictions),
        prediction_count=len(predictions),
        wall_time=time.perf_counter() - start,
    )
    if keep_predictions:
        return report, predictions, test
    return report


@dataclass(frozen=True)
class Table3:
    reports: tuple[EvaluationReport, ...]  # BCF, MCF, BCF@cap, MCF@cap

    @property
    def rmses(self) -> dict[str, float]:
        labels = [_label(r.config) for r in self.reports]
        return {label: r.rmse for label, r in zip(labels, self.reports)}

    @property
    def overall_improvement(self) -> float:
        return improvement(self.reports[0].rmse, self.reports[1].rmse)

    @property
    def cold_start_improvement(self) -> float:
        return improvement(self.reports[2].rmse, self.reports[3].rmse)


def _label(config: ExperimentConfig) -> str:
    return config.algorithm if config.record_cap is None else f"{config.algorithm}@{config.record_cap}"


def improvement(base: float, new: float) -> float:
    """Relative RMSE reduction ``(base - new) / base``."""
    return (base - new) / base


def run_table3(
    dataset: Dataset,
    base: ExperimentConfig = ExperimentConfig(),
    data_dir: str | Path | None = None,
    cap: int = 5,
    threads: int = 1,
) -> Table3:
    """The four-cell grid: BCF, MCF, each with full and capped training data."""
    split = prepare_split(base, dataset, data_dir)
    cells = [
        replace(base, algorithm=BCF, record_cap=None),
        replace(base, algorithm=MCF, record_cap=None),
        replace(base, algorithm=BCF, record_cap=cap),
        replace(base, algorithm=MCF, record_cap=cap),
    ]
    return Table3(tuple(run_experiment(c, dataset, split=split, threads=threads) for c in cells))
