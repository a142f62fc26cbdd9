import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vleminer.features import (
    Outcome,
    WeeklyAggregator,
    aggregate_weekly,
    day_to_week,
    features_to_csv,
    label_outcome,
    label_outcomes,
)
from vleminer.ingest import AssessmentRecord, ClickRecord, Dataset, PresentationConfig

from conftest import random_dataset

CFG = PresentationConfig()


@pytest.mark.parametrize("day, week", [(-100, 0), (-1, 0), (0, 1), (6, 1), (7, 2), (27, 4), (28, 5), (400, 5)])
def test_day_to_week(day, week):
    assert day_to_week(day, CFG) == week


def test_last_week_absorbs_the_tail():
    cfg = PresentationConfig(num_weeks=6)
    assert day_to_week(35, cfg) == 6 and day_to_week(34, cfg) == 5


@pytest.mark.parametrize("score, outcome", [(None, Outcome.NOT_SUBMITTED), (39, Outcome.FAILED),
                                            (40, Outcome.PASSED), (0, Outcome.FAILED)])
def test_outcome_threshold(score, outcome):
    rec = AssessmentRecord("a", 1, score is not None, score)
    assert label_outcome([rec], "a", CFG) == outcome


def test_missing_record_means_not_submitted():
    assert label_outcome([AssessmentRecord("a", 2, True, 90)], "a", CFG) == Outcome.NOT_SUBMITTED
    assert label_outcome([AssessmentRecord("a", 2, True, 90)], "a", CFG.with_overrides(tma_of_interest=2)) \
        == Outcome.PASSED


def test_outcome_parse():
    assert Outcome.parse("PASSED") is Outcome.PASSED
    with pytest.raises(ValueError):
        Outcome.parse("passed")
    assert Outcome.parse("NotSubmitted") is Outcome.NOT_SUBMITTED


def test_fixture_weekly_pattern(fixture40_features):
    features, outcomes = fixture40_features
    # f06 is the first "+0000" student, f01 is "+++++"
    assert features.week_active[features.index("f06"), :5].tolist() == [True, False, False, False, False]
    assert features.week_active[features.index("f01"), :5].all()
    assert outcomes["f06"] == Outcome.NOT_SUBMITTED and outcomes["f01"] == Outcome.PASSED
    assert features.total_clicks[:, 5].sum() == 0


def test_students_without_clicks_get_zero_rows():
    ds = Dataset.from_records([ClickRecord("a", 1, "quiz", 3)], [], roster=["a", "b"])
    f = aggregate_weekly(ds)
    assert f.totals("b").tolist() == [0] * 6
    assert f.totals("a").tolist() == [0, 3, 0, 0, 0, 0]
    assert f.type_clicks.flags.writeable is False


def test_feature_csv_layout(fixture40_features):
    features, outcomes = fixture40_features
    text = features_to_csv(features, outcomes)
    header = text.splitlines()[0].split(",")
    assert header[:3] == ["id_student", "w0_total", "w0_forum"]
    assert header[-1] == "outcome"
    assert len(text.splitlines()) == 41


def test_aggregator_estimator(fixture40):
    agg = WeeklyAggregator().fit(fixture40)
    X = agg.transform(fixture40)
    names = agg.get_feature_names_out()
    assert X.shape == (40, len(names))
    assert agg.get_params() == {}
    assert X[:, list(names).index("w0_total")].sum() == aggregate_weekly(fixture40).total_clicks[:, 0].sum()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_click_conservation(seed):
    ds = random_dataset(seed)
    f = aggregate_weekly(ds)
    assert int(f.type_clicks.sum()) == ds.total_clicks
    per_student = {}
    for r in ds.clicks:
        per_student[r.student] = per_student.get(r.student, 0) + r.clicks
    for s in ds.roster:
        assert int(f.totals(s).sum()) == per_student.get(s, 0)
    np.testing.assert_array_equal(f.total_clicks, f.type_clicks.sum(axis=2))


def test_label_outcomes_covers_roster(fixture40):
    out = label_outcomes(fixture40)
    assert set(out) == set(fixture40.roster)
    assert sum(o == Outcome.NOT_SUBMITTED for o in out.values()) == 19


def test_worked_aggregation_example():
    ds = Dataset.from_records([ClickRecord("s1", -2, "forum", 3), ClickRecord("s1", 1, "quiz", 4),
                               ClickRecord("s1", 3, "quiz", 1)], [])
    f = aggregate_weekly(ds)
    assert f.totals("s1").tolist() == [3, 5, 0, 0, 0, 0]
    nonzero = {(w, f.content_types[t]): int(f.type_clicks[0, w, t]) for w, t in zip(*f.type_clicks[0].nonzero())}
    assert nonzero == {(0, "forum"): 3, (1, "quiz"): 5}
    assert day_to_week(-5, CFG) == 0 and day_to_week(13, CFG) == 2


def test_generated_totals_match(small_cohort):
    f = aggregate_weekly(small_cohort.dataset)
    np.testing.assert_array_equal(f.total_clicks, small_cohort.weekly_totals)
    np.testing.assert_array_equal(f.week_active, f.total_clicks > 0)
