import numpy as np
import pytest

from profilecf.ingest import RatingEvent
from profilecf.predict import (
    GLOBAL_MEAN,
    NEIGHBORHOOD,
    USER_MEAN,
    PredictorConfig,
    TrainingIndex,
    predict_many,
    predict_rating,
    predictions_to_csv,
    recommend_top_n,
)
from profilecf.similarity import SimilarityMatrix


def events(triples):
    return [RatingEvent(u, i, r, 0) for u, i, r in triples]


def sim_matrix(user_ids, pairs):
    pos = {u: k for k, u in enumerate(user_ids)}
    values = np.eye(len(user_ids))
    for (a, b), s in pairs.items():
        values[pos[a], pos[b]] = values[pos[b], pos[a]] = s
    return SimilarityMatrix(tuple(user_ids), values, "MCF")


def test_single_neighbour():
    # target mean 3; neighbour mean 3, rated item 10 at mean + 1
    train = TrainingIndex(events([(1, 1, 2), (1, 2, 4), (2, 10, 4), (2, 3, 2)]), range(1, 11))
    sims = sim_matrix([1, 2], {(1, 2): 1.0})
    p = predict_rating(1, 10, sims, train)
    assert p.predicted_rating == pytest.approx(4.0)
    assert (p.support, p.fallback_level) == (1, NEIGHBORHOOD)


def test_user_mean_fallback():
    train = TrainingIndex(events([(1, 1, 3), (1, 2, 4), (1, 3, 3), (1, 4, 3), (1, 5, 4)]), range(1, 11))
    sims = sim_matrix([1, 2], {(1, 2): 0.9})
    p = predict_rating(1, 9, sims, train)
    assert p.predicted_rating == pytest.approx(3.4)
    assert (p.support, p.fallback_level) == (0, USER_MEAN)


def test_global_mean_fallback_and_empty_train():
    train = TrainingIndex(events([(2, 1, 5), (2, 2, 1), (3, 1, 3)]), range(1, 5))
    sims = sim_matrix([1, 2, 3], {})
    p = predict_rating(1, 1, sims, train)
    assert p.fallback_level == GLOBAL_MEAN and p.predicted_rating == pytest.approx(3.0)
    empty = TrainingIndex([], range(1, 5))
    assert predict_rating(1, 1, sims, empty).predicted_rating == 3.0


def test_unknown_item():
    train = TrainingIndex(events([(1, 1, 3)]), [1])
    with pytest.raises(ValueError):
        predict_rating(1, 2, sim_matrix([1], {}), train)


NEIGHBOUR_RATINGS = [
    (1, 1, 4), (1, 2, 2), (1, 3, 5),            # target, mean 11/3
    (2, 1, 5), (2, 2, 3), (2, 9, 4),            # mean 4
    (3, 3, 1), (3, 9, 2), (3, 4, 3),            # mean 2
    (4, 9, 5), (4, 1, 5), (4, 2, 4), (4, 5, 2),  # mean 4
    (5, 9, 1), (5, 2, 5),                       # negative neighbour
]
SIMS = {(1, 2): 0.8, (1, 3): 0.3, (1, 4): 0.5, (1, 5): -0.6}


def oracle(config):
    """Direct sum over neighbours, written out independently of the library."""
    by_user = {}
    for u, i, r in NEIGHBOUR_RATINGS:
        by_user.setdefault(u, {})[i] = r
    mean = {u: sum(v.values()) / len(v) for u, v in by_user.items()}
    terms = [(s, by_user[b][9], mean[b]) for (a, b), s in SIMS.items() if 9 in by_user[b]]
    terms = [t for t in terms if (t[0] != 0 if config.use_negative else t[0] > 0)]
    if config.k_neighbors:
        terms = sorted(terms, key=lambda t: -abs(t[0]))[: config.k_neighbors]
    norm = sum(abs(s) for s, _, _ in terms)
    if config.centering == "mean":
        value = mean[1] + sum(s * (r - m) for s, r, m in terms) / norm
    else:
        value = sum(s * r for s, r, _ in terms) / norm
    return min(5.0, max(1.0, value)), len(terms)


@pytest.mark.parametrize(
    "config",
    [
        PredictorConfig(),
        PredictorConfig(centering="raw"),
        PredictorConfig(use_negative=True),
        PredictorConfig(centering="raw", use_negative=True),
        PredictorConfig(k_neighbors=2),
    ],
)
def test_three_neighbours_against_oracle(config):
    train = TrainingIndex(events(NEIGHBOUR_RATINGS), range(1, 10))
    sims = sim_matrix([1, 2, 3, 4, 5], SIMS)
    p = predict_rating(1, 9, sims, train, config)
    expected, support = oracle(config)
    assert p.predicted_rating == pytest.approx(expected, abs=1e-12)
    assert p.support == support


def test_similarity_scaling_neutral():
    train = TrainingIndex(events(NEIGHBOUR_RATINGS), range(1, 10))
    base = predict_rating(1, 9, sim_matrix([1, 2, 3, 4, 5], SIMS), train)
    scaled = {k: v * 0.37 if v > 0 else v for k, v in SIMS.items()}
    other = predict_rating(1, 9, sim_matrix([1, 2, 3, 4, 5], scaled), train)
    assert other.predicted_rating == pytest.approx(base.predicted_rating, abs=1e-9)


def test_zero_similarity_user_changes_nothing():
    ratings = NEIGHBOUR_RATINGS + [(6, 9, 1), (6, 3, 1)]
    train = TrainingIndex(events(ratings), range(1, 10))
    with_zero = sim_matrix([1, 2, 3, 4, 5, 6], {**SIMS, (1, 6): 0.0})
    without = TrainingIndex(events(NEIGHBOUR_RATINGS), range(1, 10))
    a = predict_rating(1, 9, with_zero, train)
    b = predict_rating(1, 9, sim_matrix([1, 2, 3, 4, 5], SIMS), without)
    assert a == b


def test_clamping():
    train = TrainingIndex(events([(1, 1, 5), (1, 2, 5), (2, 1, 1), (2, 2, 1), (2, 3, 5)]), range(1, 4))
    sims = sim_matrix([1, 2], {(1, 2): 1.0})
    p = predict_rating(1, 3, sims, train)
    assert p.predicted_rating == 5.0


def test_predict_many_threads_identical():
    train = TrainingIndex(events(NEIGHBOUR_RATINGS), range(1, 10))
    sims = sim_matrix([1, 2, 3, 4, 5], SIMS)
    pairs = [(u, i) for u in range(1, 6) for i in range(1, 10)]
    assert predict_many(pairs, sims, train, threads=1) == predict_many(pairs, sims, train, threads=3)


class TestTopN:
    def test_user_rated_everything(self):
        train = TrainingIndex(events([(1, 1, 3), (1, 2, 4), (2, 1, 5)]), [1, 2])
        assert recommend_top_n(1, 5, sim_matrix([1, 2], {(1, 2): 1.0}), train) == []

    def test_argmax_on_toy_set(self):
        train = TrainingIndex(
            events([(1, 4, 3), (1, 5, 3), (2, 1, 2), (2, 2, 5), (2, 3, 4), (2, 4, 3)]), range(1, 6)
        )
        sims = sim_matrix([1, 2], {(1, 2): 0.7})
        candidates = {i: predict_rating(1, i, sims, train).predicted_rating for i in (1, 2, 3)}
        best = max(candidates, key=candidates.get)
        assert recommend_top_n(1, 1, sims, train) == [(best, candidates[best])]

    def test_ties_by_item_id(self):
        train = TrainingIndex(events([(1, 9, 4)]), [3, 5, 7, 9])
        top = recommend_top_n(1, 3, sim_matrix([1], {}), train)
        assert top == [(3, 4.0), (5, 4.0), (7, 4.0)]

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            recommend_top_n(1, 0, sim_matrix([1], {}), TrainingIndex([], [1]))


def test_prediction_csv():
    train = TrainingIndex(events([(1, 1, 3)]), [1, 2])
    preds = predict_many([(1, 2)], sim_matrix([1], {}), train)
    assert predictions_to_csv(preds, [4]).splitlines() == [
        "user_id,item_id,actual,predicted,support,fallback",
        "1,2,4,3.0,0,user_mean",
    ]


def test_config_validation():
    with pytest.raises(ValueError):
        PredictorConfig(centering="median")
    with pytest.raises(ValueError):
        PredictorConfig(k_neighbors=0)
