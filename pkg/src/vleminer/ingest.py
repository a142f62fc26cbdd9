"""Loading and validating clickstream and assessment files.

Two comma-separated inputs are understood::

    id_student,date,activity_type,sum_click      (clickstream)
    id_student,assessment,score                  (assessments)

``date`` is a signed day offset from the module start; an empty ``score``
means the assignment was not submitted.
"""

from __future__ import annotations

import csv
from collections.abc import Iterable
from dataclasses import dataclass, field, replace
from operator import itemgetter
from pathlib import Path

from .exceptions import (
    ConfigError,
    DayOutOfWindow,
    MalformedRow,
    MissingColumn,
    NegativeClicks,
    NonIntegerClicks,
    ScoreOutOfRange,
    UnknownContentType,
)

CLICK_COLUMNS = ("id_student", "date", "activity_type", "sum_click")
ASSESSMENT_COLUMNS = ("id_student", "assessment", "score")

DEFAULT_CONTENT_TYPES = (
    "forum",
    "wiki",
    "resource",
    "quiz",
    "url",
    "page",
    "homepage",
    "glossary",
    "collaborate",
    "content",
    "subpage",
)


@dataclass(frozen=True)
class PresentationConfig:
    """Settings for one module presentation.

    ``min_day`` bounds how far before the start pre-course activity may
    reach; ``None`` accepts any negative offset.
    """

    content_vocabulary: tuple[str, ...] = DEFAULT_CONTENT_TYPES
    num_weeks: int = 5
    pass_threshold: int = 40
    tma_of_interest: int = 1
    min_day: int | None = None

    def __post_init__(self):
        vocab = tuple(self.content_vocabulary)
        object.__setattr__(self, "content_vocabulary", vocab)
        if not vocab:
            raise ConfigError("content vocabulary is empty")
        if len(set(vocab)) != len(vocab):
            raise ConfigError("content vocabulary has duplicate labels")
        if any(not t or not t.strip() for t in vocab):
            raise ConfigError("content vocabulary has an empty label")
        if self.num_weeks < 5:
            raise ConfigError(f"num_weeks must be >= 5, got {self.num_weeks}")
        if not 0 < self.pass_threshold <= 100:
            raise ConfigError(f"pass_threshold must be in (0, 100], got {self.pass_threshold}")
        if self.tma_of_interest < 1:
            raise ConfigError(f"tma_of_interest must be >= 1, got {self.tma_of_interest}")
        if self.min_day is not None and self.min_day > -1:
            raise ConfigError(f"min_day must be negative, got {self.min_day}")

    def with_overrides(self, **kwargs) -> "PresentationConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs) if kwargs else self


_INT_KEYS = {"num_weeks", "pass_threshold", "tma_of_interest", "min_day"}


def parse_config(text: str) -> PresentationConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split(sep, 1))
        if key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"config line {lineno}: {key} must be an integer") from None
        elif key == "content_types":
            values["content_vocabulary"] = tuple(t.strip() for t in value.split(",") if t.strip())
        else:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
    return PresentationConfig(**values)


def load_config(path) -> PresentationConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ClickRecord:
    student: str
    day_offset: int
    content_type: str
    clicks: int


@dataclass(frozen=True)
class AssessmentRecord:
    student: str
    tma_index: int
    submitted: bool
    score: int | None = None

    def __post_init__(self):
        if self.score is not None and not self.submitted:
            raise ValueError("a score implies a submitted assessment")
        if self.score is not None and not 0 <= self.score <= 100:
            raise ValueError(f"score {self.score} outside 0-100")


def _open_rows(path, required):
    """Yield (line_number, fields) with ``fields`` in ``required`` order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn("empty file, no header", path=path, line=1) from None
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"missing column(s): {', '.join(missing)}", path=path, line=1)
        pick = itemgetter(*(header.index(c) for c in required))
        width = len(header)
        for row in reader:
            if len(row) < width:
                if not any(cell.strip() for cell in row):
                    continue
                row = row + [""] * (width - len(row))
            yield reader.line_num, [cell.strip() for cell in pick(row)]


def load_clicks(path, config: PresentationConfig | None = None) -> list[ClickRecord]:
    """Parse a clickstream file, summing duplicate (student, day, type) rows.

    Records come back in first-seen order of their key.
    """
    config = config or PresentationConfig()
    vocab = set(config.content_vocabulary)
    merged: dict[tuple[str, int, str], int] = {}
    for lineno, (student, raw_day, label, raw_clicks) in _open_rows(path, CLICK_COLUMNS):
        if not student:
            raise MalformedRow("empty id_student", path=path, line=lineno)
        try:
            day = int(raw_day)
        except ValueError:
            raise MalformedRow(f"date {raw_day!r} is not an integer", path=path, line=lineno) from None
        if config.min_day is not None and day < config.min_day:
            raise DayOutOfWindow(
                f"day offset {day} precedes window start {config.min_day}", path=path, line=lineno
            )
        if label not in vocab:
            raise UnknownContentType(label, path=path, line=lineno)
        try:
            clicks = int(raw_clicks)
        except ValueError:
            raise NonIntegerClicks(
                f"sum_click {raw_clicks!r} is not an integer", path=path, line=lineno
            ) from None
        if clicks < 0:
            raise NegativeClicks(f"sum_click {clicks} is negative", path=path, line=lineno)
        key = (student, day, label)
        merged[key] = merged.get(key, 0) + clicks
    return [ClickRecord(s, d, t, c) for (s, d, t), c in merged.items()]


def load_assessments(path) -> list[AssessmentRecord]:
    records = []
    for lineno, (student, raw_tma, raw) in _open_rows(path, ASSESSMENT_COLUMNS):
        if not student:
            raise MalformedRow("empty id_student", path=path, line=lineno)
        try:
            tma = int(raw_tma)
        except ValueError:
            raise MalformedRow(
                f"assessment {raw_tma!r} is not an integer", path=path, line=lineno
            ) from None
        if tma < 1:
            raise MalformedRow(f"assessment index {tma} must be positive", path=path, line=lineno)
        if raw == "":
            records.append(AssessmentRecord(student, tma, submitted=False))
            continue
        try:
            score = int(raw)
        except ValueError:
            raise MalformedRow(f"score {raw!r} is not an integer", path=path, line=lineno) from None
        if not 0 <= score <= 100:
            raise ScoreOutOfRange(f"score {score} outside 0-100", path=path, line=lineno)
        records.append(AssessmentRecord(student, tma, submitted=True, score=score))
    return records


@dataclass(frozen=True)
class Dataset:
    """Immutable bundle of parsed records plus the student roster."""

    clicks: tuple[ClickRecord, ...]
    assessments: tuple[AssessmentRecord, ...]
    roster: tuple[str, ...]
    config: PresentationConfig = field(default_factory=PresentationConfig)

    @classmethod
    def from_records(
        cls,
        clicks: Iterable[ClickRecord],
        assessments: Iterable[AssessmentRecord],
        config: PresentationConfig | None = None,
        roster: Iterable[str] | None = None,
    ) -> "Dataset":
        clicks = tuple(clicks)
        assessments = tuple(assessments)
        if roster is None:
            roster = {r.student for r in clicks} | {r.student for r in assessments}
        return cls(clicks, assessments, tuple(sorted(set(roster))), config or PresentationConfig())

    @classmethod
    def load(cls, clicks_path, assessments_path, config: PresentationConfig | None = None) -> "Dataset":
        config = config or PresentationConfig()
        return cls.from_records(load_clicks(clicks_path, config), load_assessments(assessments_path), config)

    @property
    def total_clicks(self) -> int:
        return sum(r.clicks for r in self.clicks)


@dataclass(frozen=True)
class ValidationReport:
    n_students: int
    n_click_records: int
    n_assessment_records: int
    total_clicks: int
    weeks_covered: tuple[int, ...]
    missing_tma: tuple[str, ...]
    orphan_records: int

    def as_dict(self) -> dict:
        return {
            "n_students": self.n_students,
            "n_click_records": self.n_click_records,
            "n_assessment_records": self.n_assessment_records,
            "total_clicks": self.total_clicks,
            "weeks_covered": list(self.weeks_covered),
            "missing_tma": list(self.missing_tma),
            "orphan_records": self.orphan_records,
        }


def validate(dataset: Dataset) -> ValidationReport:
    """Summarise a dataset; never raises on data problems."""
    from .features import day_to_week

    roster = set(dataset.roster)
    tma = dataset.config.tma_of_interest
    with_tma = {r.student for r in dataset.assessments if r.tma_index == tma}
    clicked = {r.student for r in dataset.clicks}
    orphans = sum(r.student not in roster for r in dataset.clicks)
    orphans += sum(r.student not in roster for r in dataset.assessments)
    weeks = {day_to_week(r.day_offset, dataset.config) for r in dataset.clicks}
    return ValidationReport(
        n_students=len(roster),
        n_click_records=len(dataset.clicks),
        n_assessment_records=len(dataset.assessments),
        total_clicks=dataset.total_clicks,
        weeks_covered=tuple(sorted(weeks)),
        missing_tma=tuple(sorted(clicked - with_tma)),
        orphan_records=orphans,
    )
