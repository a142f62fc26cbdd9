"""Content-type success tables and a naive Bayes failure score.

A student "fails" when their outcome for the TMA of interest is in
``fail_classes`` (not submitted or failed by default). Flags are the weekly
binary activity indicators: ``(week, None)`` for any VLE activity in a week,
``(week, content_type)`` for activity in one content type.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import EmptyCohort, FlagLengthMismatch, SingleClassCohort
from .features import Outcome, WeeklyFeatures

DEFAULT_FAIL_CLASSES = (Outcome.NOT_SUBMITTED, Outcome.FAILED)

Flag = tuple[int, "str | None"]


def _aligned_outcomes(features: WeeklyFeatures, outcomes) -> list[Outcome]:
    if isinstance(outcomes, Mapping):
        return [outcomes[s] for s in features.students]
    outcomes = list(outcomes)
    if len(outcomes) != len(features):
        raise ValueError(f"{len(outcomes)} outcomes for {len(features)} students")
    return outcomes


@dataclass(frozen=True)
class TypeSuccessRow:
    content_type: str
    n_active: int
    n_inactive: int
    passed_active: int
    passed_inactive: int

    @property
    def pass_rate_active(self) -> float | None:
        return self.passed_active / self.n_active if self.n_active else None

    @property
    def pass_rate_inactive(self) -> float | None:
        return self.passed_inactive / self.n_inactive if self.n_inactive else None

    @property
    def rate_difference(self) -> float | None:
        if self.n_active and self.n_inactive:
            return self.pass_rate_active - self.pass_rate_inactive
        return None


@dataclass(frozen=True)
class TypeSuccessTable:
    weeks: tuple[int, int]
    cohort_size: int
    rows: tuple[TypeSuccessRow, ...]

    def row(self, content_type: str) -> TypeSuccessRow:
        for r in self.rows:
            if r.content_type == content_type:
                return r
        raise KeyError(content_type)

    def to_csv(self) -> str:
        def fmt(x):
            return "" if x is None else f"{x:.6f}"

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["content_type", "weeks", "n_active", "n_inactive", "pass_rate_active",
                    "pass_rate_inactive", "rate_difference"])
        for r in self.rows:
            w.writerow([r.content_type, f"{self.weeks[0]}-{self.weeks[1]}", r.n_active, r.n_inactive,
                        fmt(r.pass_rate_active), fmt(r.pass_rate_inactive), fmt(r.rate_difference)])
        return buf.getvalue()


def type_success_table(features: WeeklyFeatures, outcomes, weeks: range | None = None) -> TypeSuccessTable:
    """Pass rates of students active vs inactive in each content type.

    A student counts as active in a type when they clicked it in any week of
    ``weeks`` (all weeks by default). An empty group's rate is ``None``.
    """
    if len(features) == 0:
        raise EmptyCohort("type success table needs at least one student")
    weeks = features.weeks if weeks is None else weeks
    passed = np.array([o == Outcome.PASSED for o in _aligned_outcomes(features, outcomes)])
    active = features.type_active[:, list(weeks), :].any(axis=1)
    rows = []
    for j, t in enumerate(features.content_types):
        a = active[:, j]
        rows.append(TypeSuccessRow(t, int(a.sum()), int((~a).sum()),
                                   int((passed & a).sum()), int((passed & ~a).sum())))
    return TypeSuccessTable((weeks[0], weeks[-1]), len(features), tuple(rows))


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> float:
    """Pooled two-proportion z statistic; 0 when the pooled rate is 0 or 1."""
    pooled = (x1 + x2) / (n1 + n2)
    var = pooled * (1 - pooled) * (1 / n1 + 1 / n2)
    if var == 0:
        return 0.0
    return (x1 / n1 - x2 / n2) / math.sqrt(var)


def select_significant_types(table: TypeSuccessTable, alpha: float = 0.05, min_group: int = 30) -> list[str]:
    """Content types whose active/inactive pass rates differ at level ``alpha``.

    Two-sided pooled z-test; both groups need ``min_group`` members.
    Returned in table order.
    """
    selected = []
    for r in table.rows:
        if r.n_active < min_group or r.n_inactive < min_group:
            continue
        z = two_proportion_z(r.passed_active, r.n_active, r.passed_inactive, r.n_inactive)
        if math.erfc(abs(z) / math.sqrt(2)) < alpha:
            selected.append(r.content_type)
    return selected


def flag_name(flag: Flag) -> str:
    week, ctype = flag
    return f"w{week}_active" if ctype is None else f"w{week}_{ctype}"


def flag_matrix(features: WeeklyFeatures, selection: Sequence[Flag]) -> np.ndarray:
    cols = []
    for week, ctype in selection:
        if ctype is None:
            cols.append(features.week_active[:, week])
        else:
            cols.append(features.type_active[:, week, features.type_index(ctype)])
    if not cols:
        return np.zeros((len(features), 0), dtype=bool)
    return np.column_stack(cols)


class BayesFailModel(ClassifierMixin, BaseEstimator):
    """Naive Bayes over binary flags with add-``alpha`` smoothing.

    ``y`` is the fail indicator (1 = fail). The class prior is the raw
    fail share; per-flag conditionals are
    ``(count(f=1, c) + alpha) / (count(c) + 2 alpha)``.
    """

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, X, y, flag_names=None):
        X, y = check_X_y(X, y, dtype=None)
        X = X.astype(bool)
        y = np.asarray(y).astype(bool)
        n_fail = int(y.sum())
        n_pass = y.size - n_fail
        if n_fail == 0 or n_pass == 0:
            raise SingleClassCohort("both fail and pass students are required")
        a = float(self.alpha)
        self.classes_ = np.array([False, True])
        self.prior_fail_ = n_fail / y.size
        self.p_given_fail_ = (X[y].sum(axis=0) + a) / (n_fail + 2 * a)
        self.p_given_pass_ = (X[~y].sum(axis=0) + a) / (n_pass + 2 * a)
        self.n_features_in_ = X.shape[1]
        self.flag_names_ = list(flag_names) if flag_names is not None else [f"f{i}" for i in range(X.shape[1])]
        if len(self.flag_names_) != X.shape[1]:
            raise ValueError("flag_names length differs from the number of columns")
        return self

    @classmethod
    def from_params(cls, prior_fail, p_given_fail, p_given_pass, flag_names=None) -> "BayesFailModel":
        """Build a fitted model from explicit probabilities."""
        p_given_fail = np.asarray(p_given_fail, dtype=float)
        p_given_pass = np.asarray(p_given_pass, dtype=float)
        probs = np.concatenate(([prior_fail], p_given_fail, p_given_pass))
        if p_given_fail.shape != p_given_pass.shape or ((probs <= 0) | (probs >= 1)).any():
            raise ValueError("probabilities must lie strictly inside (0, 1)")
        model = cls()
        model.classes_ = np.array([False, True])
        model.prior_fail_ = float(prior_fail)
        model.p_given_fail_ = p_given_fail
        model.p_given_pass_ = p_given_pass
        model.n_features_in_ = p_given_fail.size
        model.flag_names_ = list(flag_names) if flag_names is not None else [f"f{i}" for i in range(p_given_fail.size)]
        return model

    def _log_odds(self, X):
        """log P(fail, x) - log P(pass, x) per row."""
        lf = np.log(self.p_given_fail_)
        lf0 = np.log1p(-self.p_given_fail_)
        lp = np.log(self.p_given_pass_)
        lp0 = np.log1p(-self.p_given_pass_)
        fail = math.log(self.prior_fail_) + np.where(X, lf, lf0).sum(axis=1)
        ok = math.log1p(-self.prior_fail_) + np.where(X, lp, lp0).sum(axis=1)
        return fail - ok

    def predict_proba(self, X):
        check_is_fitted(self, "prior_fail_")
        X = check_array(X, dtype=None, ensure_min_features=0).astype(bool)
        if X.shape[1] != self.n_features_in_:
            raise FlagLengthMismatch(f"expected {self.n_features_in_} flags, got {X.shape[1]}")
        d = self._log_odds(X)
        # logistic of the log-odds, evaluated on the side that cannot overflow
        e = np.exp(-np.abs(d))
        p_fail = np.where(d >= 0, 1 / (1 + e), e / (1 + e))
        # saturated log-odds would round to exactly 0 or 1
        p_fail = np.clip(p_fail, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
        return np.column_stack([1 - p_fail, p_fail])

    def predict(self, X):
        return self.predict_proba(X)[:, 1] > 0.5

    def to_text(self) -> str:
        lines = ["flag_id,p_given_fail,p_given_pass"]
        for name, pf, pp in zip(self.flag_names_, self.p_given_fail_, self.p_given_pass_):
            lines.append(f"{name},{pf:.6f},{pp:.6f}")
        lines.append(f"prior_fail,{self.prior_fail_:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BayesFailModel":
        names, pf, pp, prior = [], [], [], None
        for line in text.strip().splitlines()[1:]:
            parts = line.split(",")
            if parts[0] == "prior_fail":
                prior = float(parts[1])
            else:
                names.append(parts[0])
                pf.append(float(parts[1]))
                pp.append(float(parts[2]))
        if prior is None:
            raise ValueError("model text lacks a prior_fail line")
        return cls.from_params(prior, pf, pp, names)


def fail_indicator(outcomes: Sequence[Outcome], fail_classes=DEFAULT_FAIL_CLASSES) -> np.ndarray:
    fail_classes = set(fail_classes)
    return np.array([o in fail_classes for o in outcomes], dtype=bool)


def fit_bayes(
    features: WeeklyFeatures,
    outcomes,
    flag_selection: Sequence[Flag],
    fail_classes=DEFAULT_FAIL_CLASSES,
    alpha: float = 1.0,
) -> BayesFailModel:
    y = fail_indicator(_aligned_outcomes(features, outcomes), fail_classes)
    X = flag_matrix(features, flag_selection)
    return BayesFailModel(alpha=alpha).fit(X, y, flag_names=[flag_name(f) for f in flag_selection])


def fail_probability(model: BayesFailModel, flags) -> float:
    flags = np.asarray(flags, dtype=bool).reshape(1, -1)
    if flags.shape[1] != model.n_features_in_:
        raise FlagLengthMismatch(f"expected {model.n_features_in_} flags, got {flags.shape[1]}")
    return float(model.predict_proba(flags)[0, 1])


def scores_to_csv(students: Sequence[str], p_fail: Sequence[float]) -> str:
    lines = ["id_student,p_fail"]
    lines.extend(f"{s},{p:.6f}" for s, p in zip(students, p_fail))
    return "\n".join(lines) + "\n"
