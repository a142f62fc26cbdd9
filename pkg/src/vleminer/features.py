"""Weekly feature families and TMA outcome labels.

Day offsets map onto study weeks: every negative offset falls into week 0
(the pre-start period), day 0 opens week 1, and activity after the last
configured week is folded into that week instead of being dropped.
"""

from __future__ import annotations

import csv
import enum
import io
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ingest import AssessmentRecord, Dataset, PresentationConfig


class Outcome(str, enum.Enum):
    NOT_SUBMITTED = "NotSubmitted"
    FAILED = "Failed"
    PASSED = "Passed"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Outcome":
        for member in cls:
            if text in (member.value, member.name):
                return member
        raise ValueError(f"unknown outcome {text!r}")


def day_to_week(day_offset: int, config: PresentationConfig) -> int:
    if day_offset < 0:
        return 0
    return min(day_offset // 7 + 1, config.num_weeks)


@dataclass(frozen=True, eq=False)
class WeeklyFeatures:
    """Per-student weekly click counts.

    ``type_clicks[i, w, t]`` holds the clicks of ``students[i]`` in week
    ``w`` on ``content_types[t]``; every other family is derived from it.
    """

    students: tuple[str, ...]
    content_types: tuple[str, ...]
    type_clicks: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.type_clicks, dtype=np.int64)
        if arr.ndim != 3 or arr.shape[0] != len(self.students) or arr.shape[2] != len(self.content_types):
            raise ValueError(f"type_clicks has shape {arr.shape}, inconsistent with students/types")
        if (arr < 0).any():
            raise ValueError("negative click counts")
        arr.setflags(write=False)
        object.__setattr__(self, "type_clicks", arr)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.students)})

    @property
    def num_weeks(self) -> int:
        return self.type_clicks.shape[1] - 1

    @property
    def weeks(self) -> range:
        return range(self.type_clicks.shape[1])

    @property
    def total_clicks(self) -> np.ndarray:
        return self.type_clicks.sum(axis=2)

    @property
    def week_active(self) -> np.ndarray:
        return self.total_clicks > 0

    @property
    def type_active(self) -> np.ndarray:
        return self.type_clicks > 0

    def __len__(self):
        return len(self.students)

    def index(self, student: str) -> int:
        return self._index[student]

    def type_index(self, content_type: str) -> int:
        return self.content_types.index(content_type)

    def totals(self, student: str) -> np.ndarray:
        return self.total_clicks[self._index[student]]

    def subset(self, students: Iterable[str]) -> "WeeklyFeatures":
        students = tuple(students)
        rows = [self._index[s] for s in students]
        return WeeklyFeatures(students, self.content_types, self.type_clicks[rows])

    def column_names(self) -> list[str]:
        names = []
        for w in self.weeks:
            names.append(f"w{w}_total")
            names.extend(f"w{w}_{t}" for t in self.content_types)
        return names

    def to_matrix(self) -> np.ndarray:
        """Flatten to (n_students, n_weeks * (1 + n_types)) in ``column_names`` order."""
        totals = self.total_clicks[:, :, None]
        return np.concatenate([totals, self.type_clicks], axis=2).reshape(len(self.students), -1)


def aggregate_weekly(dataset: Dataset, students: Sequence[str] | None = None) -> WeeklyFeatures:
    """Sum day-level records into weekly totals, explicit zeros included.

    Rows follow ``students`` when given, else the dataset roster. Records of
    students outside that list are ignored.
    """
    config = dataset.config
    students = tuple(dataset.roster if students is None else students)
    types = config.content_vocabulary
    row_of = {s: i for i, s in enumerate(students)}
    col_of = {t: j for j, t in enumerate(types)}
    out = np.zeros((len(students), config.num_weeks + 1, len(types)), dtype=np.int64)
    recs = [r for r in dataset.clicks if r.student in row_of]
    if recs:
        rows = np.fromiter((row_of[r.student] for r in recs), dtype=np.int64, count=len(recs))
        cols = np.fromiter((col_of[r.content_type] for r in recs), dtype=np.int64, count=len(recs))
        days = np.fromiter((r.day_offset for r in recs), dtype=np.int64, count=len(recs))
        clicks = np.fromiter((r.clicks for r in recs), dtype=np.int64, count=len(recs))
        weeks = np.where(days < 0, 0, np.minimum(days // 7 + 1, config.num_weeks))
        np.add.at(out, (rows, weeks, cols), clicks)
    return WeeklyFeatures(students, types, out)


def label_outcome(
    assessments: Iterable[AssessmentRecord], student: str, config: PresentationConfig
) -> Outcome:
    for rec in assessments:
        if rec.student == student and rec.tma_index == config.tma_of_interest:
            return _outcome_of(rec, config)
    return Outcome.NOT_SUBMITTED


def _outcome_of(rec: AssessmentRecord | None, config: PresentationConfig) -> Outcome:
    if rec is None or not rec.submitted:
        return Outcome.NOT_SUBMITTED
    return Outcome.PASSED if rec.score >= config.pass_threshold else Outcome.FAILED


def label_outcomes(dataset: Dataset, students: Sequence[str] | None = None) -> dict[str, Outcome]:
    """Outcome for the configured TMA of every student (roster by default)."""
    config = dataset.config
    by_student = {}
    for rec in dataset.assessments:
        if rec.tma_index == config.tma_of_interest:
            by_student.setdefault(rec.student, rec)
    students = dataset.roster if students is None else students
    return {s: _outcome_of(by_student.get(s), config) for s in students}


def features_to_csv(features: WeeklyFeatures, outcomes: dict[str, Outcome]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id_student", *features.column_names(), "outcome"])
    matrix = features.to_matrix()
    for i, student in enumerate(features.students):
        writer.writerow([student, *matrix[i].tolist(), outcomes[student].value])
    return buf.getvalue()


class WeeklyAggregator(TransformerMixin, BaseEstimator):
    """Turn a :class:`Dataset` into the flat weekly feature matrix.

    ``fit`` records the column layout (weeks and content types) so that
    ``transform`` on another presentation yields aligned columns.
    """

    def fit(self, X: Dataset, y=None):
        self.content_types_ = X.config.content_vocabulary
        self.num_weeks_ = X.config.num_weeks
        probe = WeeklyFeatures((), self.content_types_, np.zeros((0, self.num_weeks_ + 1, len(self.content_types_))))
        self._names = probe.column_names()
        return self

    def transform(self, X: Dataset):
        check_is_fitted(self, "content_types_")
        if X.config.content_vocabulary != self.content_types_ or X.config.num_weeks != self.num_weeks_:
            raise ValueError("dataset layout differs from the one seen in fit")
        return aggregate_weekly(X).to_matrix()

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "content_types_")
        return np.asarray(self._names, dtype=object)
