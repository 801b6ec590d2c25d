"""Shared fixtures: a small churn-prediction setup used across the suite."""

import numpy as np
import pytest

from driftwatch.ingest import Observation, fit_training_profile
from driftwatch.schema import FeatureKind, ModelRef, ModelSchema

CHURN_REF = ModelRef("churn", "1.0")
CHURN_SCHEMA = ModelSchema(features={
    "customer_age": FeatureKind.NUMERIC,
    "recent_page_visits": FeatureKind.COUNT,
    "plan_type": FeatureKind.CATEGORICAL,
})

AGE_MEAN, AGE_SD = 40.0, 12.0
VISITS_RATE = 8.0
PLAN_PROBS = {"basic": 0.7, "premium": 0.3}


def make_churn_rows(n, seed=0, age_mean=AGE_MEAN, age_sd=AGE_SD,
                    visits_rate=VISITS_RATE, plan_probs=None, start_ts=0):
    """Synthetic churn-model observations, reproducible from seed."""
    plan_probs = plan_probs or PLAN_PROBS
    rng = np.random.default_rng(seed)
    plans = list(plan_probs)
    probs = [plan_probs[p] for p in plans]
    rows = []
    for i in range(n):
        rows.append(Observation(
            model=CHURN_REF.name, version=CHURN_REF.version, ts=start_ts + i,
            features={
                "customer_age": float(rng.normal(age_mean, age_sd)),
                "recent_page_visits": int(rng.poisson(visits_rate)),
                "plan_type": plans[rng.choice(len(plans), p=probs)],
            },
        ))
    return rows


@pytest.fixture(scope="session")
def churn_profile():
    rows = make_churn_rows(10_000, seed=7)
    return fit_training_profile(rows, CHURN_SCHEMA, CHURN_REF, reservoir_size=2000, seed=7)
