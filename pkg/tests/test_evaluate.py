import math
import shutil
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import profilecf.evaluate as ev
from profilecf.ingest import IntegrityError, RatingEvent
from profilecf.evaluate import (
    ExperimentConfig,
    Table3,
    cap_user_records,
    improvement,
    load_official_split,
    mae,
    rmse,
    run_experiment,
    split_random,
)
from profilecf.predict import GLOBAL_MEAN


class TestMetrics:
    def test_exact(self):
        assert rmse([(3, 3), (4, 4)]) == 0.0
        assert mae([(3, 3), (4, 4)]) == 0.0

    def test_hand_computed(self):
        assert rmse([(3, 4), (5, 3)]) == pytest.approx(math.sqrt(2.5), abs=1e-12)
        assert mae([(3, 4), (5, 3)]) == pytest.approx(1.5, abs=1e-12)

    def test_single_pair(self):
        assert rmse([(1, 5)]) == 4.0

    def test_empty(self):
        with pytest.raises(ValueError):
            rmse([])
        with pytest.raises(ValueError):
            mae([])

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 5), st.floats(1, 5)), min_size=1, max_size=60))
    def test_rmse_at_least_mae(self, pairs):
        assert rmse(pairs) >= mae(pairs) - 1e-12


class TestSplitRandom:
    def test_count(self, ml100k):
        train, test = split_random(ml100k, 0.2, 7)
        assert len(test) == 20000 and len(train) == 80000
        assert not {(r.user_id, r.item_id) for r in train} & {(r.user_id, r.item_id) for r in test}

    def test_deterministic(self, toy_dataset):
        assert split_random(toy_dataset, 0.25, 3) == split_random(toy_dataset, 0.25, 3)

    def test_input_order_irrelevant(self, toy_dataset):
        shuffled = list(reversed(toy_dataset.ratings))
        assert split_random(shuffled, 0.5, 11) == split_random(toy_dataset.ratings, 0.5, 11)

    @pytest.mark.parametrize("fraction", [0, 1, -0.1, 1.5])
    def test_fraction_bounds(self, toy_dataset, fraction):
        with pytest.raises(ValueError):
            split_random(toy_dataset, fraction, 1)


class TestOfficialSplit:
    def test_u1_sizes(self, data_dir, ml100k):
        train, test = load_official_split(data_dir, "u1", ml100k)
        assert len(train) + len(test) == 100000
        assert len(test) == 20000

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_official_split(tmp_path, "u2")

    def test_overlap_detected(self, tmp_path, data_dir):
        shutil.copy(data_dir / "u1.base", tmp_path / "u1.base")
        leaked = (data_dir / "u1.base").read_text().splitlines()[0]
        (tmp_path / "u1.test").write_text(leaked + "\n")
        with pytest.raises(IntegrityError):
            load_official_split(tmp_path, "u1")


def _history(user, n):
    return [RatingEvent(user, i, 1 + i % 5, i) for i in range(1, n + 1)]


class TestCap:
    def test_small_user_keeps_all(self):
        assert sorted(cap_user_records(_history(1, 3), 5, 0), key=lambda r: r.item_id) == _history(1, 3)

    def test_large_user_capped_to_subset(self):
        full = _history(1, 200)
        kept = cap_user_records(full, 5, 0)
        assert len(kept) == 5 and set(kept) <= set(full)

    def test_deterministic(self):
        train = _history(1, 50) + _history(2, 40)
        assert cap_user_records(train, 5, 9) == cap_user_records(list(reversed(train)), 5, 9)
        assert cap_user_records(train, 5, 9) != cap_user_records(train, 5, 10)

    def test_sampled_novel_fraction(self):
        train = [e for u in range(1, 11) for e in _history(u, 20)]
        kept = cap_user_records(train, 5, 1, scope="sampled_novel_fraction", novel_fraction=0.3)
        per_user = Counter(r.user_id for r in kept)
        assert sorted(per_user.values()) == [5, 5, 5] + [20] * 7

    def test_cap_validation(self):
        with pytest.raises(ValueError):
            cap_user_records([], 0, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(algorithm="XCF")
    with pytest.raises(ValueError):
        ExperimentConfig(record_cap=0)
    with pytest.raises(ValueError):
        ExperimentConfig(split="u9")


def test_improvement_arithmetic():
    assert improvement(1.2737, 1.1672) == pytest.approx(0.0836, abs=5e-5)
    assert improvement(1.1874, 1.1823) == pytest.approx(0.0043, abs=5e-5)
    assert improvement(1.3, 1.3) == 0.0


def test_identical_algorithms_zero_improvement(toy_dataset):
    report = run_experiment(ExperimentConfig(split="random", test_fraction=0.25), toy_dataset)
    table = Table3((report, report, report, report))
    assert table.overall_improvement == 0.0 and table.cold_start_improvement == 0.0


def test_users_absent_from_train(toy_dataset):
    train = [r for r in toy_dataset.ratings if r.user_id == 2]
    test = [r for r in toy_dataset.ratings if r.user_id != 2]
    for algo in ("BCF", "MCF"):
        report, predictions, _ = run_experiment(
            ExperimentConfig(algorithm=algo), toy_dataset, split=(train, test), keep_predictions=True
        )
        assert {p.fallback_level for p in predictions} == {GLOBAL_MEAN}
        assert math.isfinite(report.rmse) and report.coverage == 0.0


@pytest.mark.parametrize("algo", ["BCF", "MCF"])
@pytest.mark.parametrize("cap_target", ["similarity", "train"])
def test_no_test_rating_reaches_similarity(monkeypatch, ml100k, data_dir, algo, cap_target):
    seen = []
    real_profiles, real_bcf = ev.build_all_profiles, ev.bcf_matrix

    def spy_profiles(ratings, *args, **kwargs):
        seen.extend((r.user_id, r.item_id) for r in ratings)
        return real_profiles(ratings, *args, **kwargs)

    def spy_bcf(by_user, *args, **kwargs):
        seen.extend((u, i) for u, items in by_user.items() for i in items)
        return real_bcf(by_user, *args, **kwargs)

    monkeypatch.setattr(ev, "build_all_profiles", spy_profiles)
    monkeypatch.setattr(ev, "bcf_matrix", spy_bcf)
    config = ExperimentConfig(algorithm=algo, record_cap=5, cap_target=cap_target)
    train, test = load_official_split(data_dir, "u1")
    run_experiment(config, ml100k, split=(train, test))
    assert seen
    assert not set(seen) & {(r.user_id, r.item_id) for r in test}
    assert set(seen) <= {(r.user_id, r.item_id) for r in train}


def test_report_invariants_and_determinism(ml100k, data_dir):
    config = ExperimentConfig(algorithm="MCF", record_cap=5, rng_seed=3)
    a = run_experiment(config, ml100k, data_dir)
    b = run_experiment(config, ml100k, data_dir, threads=4)
    assert (a.rmse, a.mae, a.coverage) == (b.rmse, b.mae, b.coverage)
    assert a.rmse >= a.mae >= 0
    assert 0.0 <= a.coverage <= 1.0
    assert a.prediction_count == 20000
