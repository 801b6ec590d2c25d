"""Sliding windows, training profiles, and subgroup filtering."""

import json
import math

import numpy as np
import pytest

from driftwatch.ingest import (
    Observation,
    TrainingProfile,
    WindowStore,
    apply_subgroup_filter,
    fit_training_profile,
    parse_jsonl_stream,
    read_training_csv,
)
from driftwatch.registry import SubgroupClause, SubgroupPredicate
from driftwatch.schema import FeatureKind, ModelRef, ModelSchema, SchemaError

from conftest import CHURN_REF, CHURN_SCHEMA, make_churn_rows, AGE_MEAN, AGE_SD, VISITS_RATE

SIMPLE_REF = ModelRef("m", "1")
SIMPLE_SCHEMA = ModelSchema(features={"f": FeatureKind.NUMERIC})


def simple_rows(values, start_ts=0):
    return [
        Observation(model="m", version="1", ts=start_ts + i, features={"f": float(v)})
        for i, v in enumerate(values)
    ]


class TestFitTrainingProfile:
    def test_exact_sample_moments(self):
        profile = fit_training_profile(simple_rows([1, 2, 3]), SIMPLE_SCHEMA, SIMPLE_REF)
        stats = profile.numeric["f"]
        assert stats.mean == 2.0
        assert stats.variance == 1.0
        assert stats.count == 3

    def test_single_row_degenerates(self):
        profile = fit_training_profile(simple_rows([5.0]), SIMPLE_SCHEMA, SIMPLE_REF)
        stats = profile.numeric["f"]
        assert stats.variance == 0.0
        assert stats.reservoir == (5.0,)

    def test_churn_moments_within_three_standard_errors(self, churn_profile):
        age = churn_profile.numeric["customer_age"]
        n = age.count
        assert abs(age.mean - AGE_MEAN) <= 3 * AGE_SD / math.sqrt(n)
        visits = churn_profile.numeric["recent_page_visits"]
        # Poisson variance equals the rate; SE of the mean is sqrt(rate/n).
        assert abs(visits.mean - VISITS_RATE) <= 3 * math.sqrt(VISITS_RATE / n)

    def test_moments_match_brute_force_recomputation(self):
        rng = np.random.default_rng(3)
        values = rng.normal(10, 4, size=5000).tolist()
        profile = fit_training_profile(simple_rows(values), SIMPLE_SCHEMA, SIMPLE_REF)
        mean = sum(values) / len(values)
        variance = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        assert profile.numeric["f"].mean == mean
        assert profile.numeric["f"].variance == variance

    def test_reservoir_reproducible_and_bounded(self):
        rows = simple_rows(range(1000))
        a = fit_training_profile(rows, SIMPLE_SCHEMA, SIMPLE_REF, reservoir_size=50, seed=9)
        b = fit_training_profile(rows, SIMPLE_SCHEMA, SIMPLE_REF, reservoir_size=50, seed=9)
        c = fit_training_profile(rows, SIMPLE_SCHEMA, SIMPLE_REF, reservoir_size=50, seed=10)
        assert a.numeric["f"].reservoir == b.numeric["f"].reservoir
        assert a.numeric["f"].reservoir != c.numeric["f"].reservoir
        assert len(a.numeric["f"].reservoir) == 50

    def test_reservoir_is_roughly_uniform(self):
        """Every position has equal inclusion probability under Algorithm R."""
        rows = simple_rows(range(200))
        hits = np.zeros(200)
        for seed in range(400):
            profile = fit_training_profile(rows, SIMPLE_SCHEMA, SIMPLE_REF,
                                           reservoir_size=20, seed=seed)
            for v in profile.numeric["f"].reservoir:
                hits[int(v)] += 1
        expected = 400 * 20 / 200
        # 5 sigma binomial band around the uniform inclusion rate
        band = 5 * math.sqrt(400 * 0.1 * 0.9)
        assert np.all(np.abs(hits - expected) < band)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            fit_training_profile([], SIMPLE_SCHEMA, SIMPLE_REF)

    def test_schema_mismatch_rejected(self):
        rows = [Observation(model="m", version="1", ts=0, features={"g": 1.0})]
        with pytest.raises(SchemaError):
            fit_training_profile(rows, SIMPLE_SCHEMA, SIMPLE_REF)

    def test_categorical_counts(self, churn_profile):
        counts = churn_profile.categorical["plan_type"].counts
        assert set(counts) == {"basic", "premium"}
        assert sum(counts.values()) == 10_000

    def test_profile_json_round_trip(self, churn_profile, tmp_path):
        path = tmp_path / "profile.json"
        churn_profile.save(path)
        loaded = TrainingProfile.load(path)
        assert loaded == churn_profile


class TestWindowStore:
    def make_store(self, window_size=3):
        store = WindowStore(window_size=window_size)
        store.register(SIMPLE_REF, SIMPLE_SCHEMA)
        return store

    def test_eviction_keeps_last_w(self):
        store = self.make_store(window_size=3)
        fills = store.ingest_batch(simple_rows([1, 2, 3, 4, 5]))
        assert fills == {"m": 3}
        assert list(store.view("m").column("f")) == [3.0, 4.0, 5.0]

    def test_empty_batch_no_change(self):
        store = self.make_store()
        store.ingest_batch(simple_rows([1]))
        assert store.ingest_batch([]) == {}
        assert store.view("m").fill == 1

    def test_two_models_independent(self):
        store = WindowStore(window_size=4)
        store.register(SIMPLE_REF, SIMPLE_SCHEMA)
        other = ModelRef("k", "1")
        store.register(other, SIMPLE_SCHEMA)
        batch = simple_rows([1, 2]) + [
            Observation(model="k", version="1", ts=9, features={"f": 7.0})
        ]
        fills = store.ingest_batch(batch)
        assert fills == {"m": 2, "k": 1}

    def test_unknown_model_rejected(self):
        store = self.make_store()
        with pytest.raises(KeyError):
            store.ingest_batch([Observation(model="x", version="1", ts=0, features={"f": 1.0})])

    def test_bad_row_rejects_batch_atomically(self):
        store = self.make_store()
        batch = simple_rows([1, 2]) + [
            Observation(model="m", version="1", ts=5, features={"wrong": 1.0})
        ]
        with pytest.raises(SchemaError):
            store.ingest_batch(batch)
        assert store.view("m").fill == 0

    def test_missing_feature_rejected(self):
        store = self.make_store()
        with pytest.raises(SchemaError):
            store.ingest_batch([Observation(model="m", version="1", ts=0, features={})])

    def test_window_matches_list_model(self):
        """Any ingest sequence leaves exactly the last min(W, total) rows, in order."""
        rng = np.random.default_rng(17)
        for trial in range(50):
            w = int(rng.integers(1, 12))
            store = WindowStore(window_size=w)
            store.register(SIMPLE_REF, SIMPLE_SCHEMA)
            everything = []
            ts = 0
            for _ in range(int(rng.integers(1, 8))):
                chunk = [float(v) for v in rng.normal(size=rng.integers(0, 9))]
                store.ingest_batch(simple_rows(chunk, start_ts=ts))
                ts += len(chunk)
                everything.extend(chunk)
            expected = everything[-w:]
            assert list(store.view("m").column("f")) == expected

    def test_snapshot_unaffected_by_later_ingest(self):
        store = self.make_store(window_size=5)
        store.ingest_batch(simple_rows([1, 2]))
        view = store.view("m")
        store.ingest_batch(simple_rows([3], start_ts=10))
        assert view.fill == 2


class TestSubgroupFilter:
    def view_of_ages(self, ages):
        schema = ModelSchema(features={"customer_age": FeatureKind.NUMERIC})
        store = WindowStore(window_size=10)
        store.register(SIMPLE_REF, schema)
        store.ingest_batch([
            Observation(model="m", version="1", ts=i, features={"customer_age": float(a)})
            for i, a in enumerate(ages)
        ])
        return store.view("m")

    def test_age_filter(self):
        view = self.view_of_ages([18, 30, 22])
        young = SubgroupPredicate((SubgroupClause("customer_age", "<", 25),))
        filtered = apply_subgroup_filter(view, young)
        assert list(filtered.column("customer_age")) == [18.0, 22.0]
        assert filtered.fill == 2

    def test_always_true_is_identity(self):
        view = self.view_of_ages([18, 30, 22])
        everyone = SubgroupPredicate((SubgroupClause("customer_age", ">=", -1e9),))
        assert apply_subgroup_filter(view, everyone).rows == view.rows

    def test_empty_match(self):
        view = self.view_of_ages([18, 30, 22])
        nobody = SubgroupPredicate((SubgroupClause("customer_age", ">", 1000),))
        assert apply_subgroup_filter(view, nobody).fill == 0

    def test_filter_commutes_with_windowing(self):
        """Filtering the window equals restricting the filtered stream to the last W rows."""
        rng = np.random.default_rng(23)
        ages = [float(a) for a in rng.uniform(0, 50, size=40)]
        predicate = SubgroupPredicate((SubgroupClause("customer_age", "<", 25),))
        w = 12
        schema = ModelSchema(features={"customer_age": FeatureKind.NUMERIC})
        store = WindowStore(window_size=w)
        store.register(SIMPLE_REF, schema)
        store.ingest_batch([
            Observation(model="m", version="1", ts=i, features={"customer_age": a})
            for i, a in enumerate(ages)
        ])
        filtered = apply_subgroup_filter(store.view("m"), predicate)
        expected = [a for a in ages[-w:] if a < 25]
        assert list(filtered.column("customer_age")) == expected


class TestReaders:
    def test_jsonl_round_trip(self):
        rows = make_churn_rows(5, seed=1)
        lines = [json.dumps(r.to_json()) for r in rows]
        assert parse_jsonl_stream(lines) == rows

    def test_jsonl_error_names_line(self):
        lines = ['{"model": "m", "version": "1", "ts": 0, "features": {}}', "{broken"]
        with pytest.raises(SchemaError) as err:
            parse_jsonl_stream(lines)
        assert "line 2" in str(err.value)

    def test_training_csv(self, tmp_path):
        path = tmp_path / "train.csv"
        path.write_text(
            "customer_age,recent_page_visits,plan_type\n"
            "41.5,9,basic\n"
            "33.0,4,premium\n"
        )
        rows = read_training_csv(path, CHURN_SCHEMA, CHURN_REF)
        assert len(rows) == 2
        assert rows[0].features == {
            "customer_age": 41.5, "recent_page_visits": 9, "plan_type": "basic",
        }
        assert rows[1].ts == 1
