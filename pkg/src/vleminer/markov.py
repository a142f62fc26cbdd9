"""Weekly state sequences, per-week transition estimates and scenarios.

The chain is time-inhomogeneous: step ``t`` holds the transitions from the
``t``-th to the ``t+1``-th considered week, each with its own matrix. A
state never occupied at a step keeps an all-zero, *undefined* row instead
of a made-up distribution.
"""

from __future__ import annotations

import csv
import enum
import io
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .discretize import Binning, apply_array, fixed_cutpoint_bins
from .exceptions import EmptySequences, ScenarioParseError
from .features import Outcome, WeeklyFeatures

INTENSITY = "intensity"
TYPES = "types"
MAX_TYPE_STATES = 6


@dataclass(frozen=True)
class StateSpace:
    kind: str
    labels: tuple[str, ...]
    binning: Binning | None = None
    types: tuple[str, ...] = ()

    @classmethod
    def intensity(cls, binning: Binning | None = None) -> "StateSpace":
        binning = binning or fixed_cutpoint_bins()
        return cls(INTENSITY, tuple(binning.labels()), binning=binning)

    @classmethod
    def type_combinations(cls, types: Sequence[str]) -> "StateSpace":
        """All subsets of ``types``; state ``i`` has type ``j`` iff bit ``j`` of ``i`` is set."""
        types = tuple(types)
        if not types:
            raise ValueError("need at least one content type")
        if len(types) > MAX_TYPE_STATES:
            raise ValueError(f"at most {MAX_TYPE_STATES} content types, got {len(types)}")
        if len(set(types)) != len(types):
            raise ValueError("duplicate content types")
        labels = []
        for i in range(2 ** len(types)):
            members = [t for j, t in enumerate(types) if i >> j & 1]
            labels.append("+".join(members) if members else "none")
        return cls(TYPES, tuple(labels), types=types)

    @classmethod
    def parse(cls, text: str) -> "StateSpace":
        """``intensity:<step>[:<max_boundary>]`` or ``types:<t1,t2,...>``."""
        kind, _, rest = text.partition(":")
        if kind == INTENSITY:
            parts = rest.split(":") if rest else []
            try:
                step = int(parts[0]) if parts else 30
                top = int(parts[1]) if len(parts) > 1 else 3 * step
            except ValueError:
                raise ValueError(f"bad intensity space {text!r}") from None
            if len(parts) > 2:
                raise ValueError(f"bad intensity space {text!r}")
            return cls.intensity(fixed_cutpoint_bins(step, top))
        if kind == TYPES:
            return cls.type_combinations([t.strip() for t in rest.split(",") if t.strip()])
        raise ValueError(f"state space must be intensity:<step> or types:<list>, got {text!r}")

    @property
    def n_states(self) -> int:
        return len(self.labels)

    def assign(self, features: WeeklyFeatures, weeks: Sequence[int]) -> np.ndarray:
        """State index of every student in every week, shape (n_students, len(weeks))."""
        weeks = list(weeks)
        if self.kind == INTENSITY:
            return apply_array(self.binning, features.total_clicks[:, weeks])
        cols = [features.type_index(t) for t in self.types]
        active = features.type_active[:, weeks, :][:, :, cols].astype(np.int64)
        return (active << np.arange(len(cols))).sum(axis=2)


@dataclass(frozen=True)
class StateSequence:
    student: str
    states: tuple[int, ...]
    first_week: int = 0


def _check_weeks(features: WeeklyFeatures, weeks: range) -> range:
    if len(weeks) == 0 or weeks[0] < 0 or weeks[-1] > features.num_weeks:
        raise ValueError(f"weeks {weeks} outside 0..{features.num_weeks}")
    return weeks


def build_sequences(features: WeeklyFeatures, space: StateSpace, weeks: range) -> list[StateSequence]:
    weeks = _check_weeks(features, weeks)
    states = space.assign(features, weeks)
    return [StateSequence(s, tuple(int(x) for x in row), weeks[0])
            for s, row in zip(features.students, states)]


def cohort_filter(features: WeeklyFeatures, weeks: range) -> tuple[str, ...]:
    """Students with at least one zero-click week in ``weeks`` (feature order)."""
    weeks = _check_weeks(features, weeks)
    any_zero = (features.total_clicks[:, list(weeks)] == 0).any(axis=1)
    return tuple(s for s, z in zip(features.students, any_zero) if z)


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """Transition counts for consecutive week pairs.

    ``counts[t, i, j]`` is the number of sequences in state ``i`` at
    ``weeks[t]`` and in state ``j`` at ``weeks[t + 1]``; ``initial_counts``
    is the state occupancy at ``weeks[0]``.
    """

    space: StateSpace
    weeks: tuple[int, ...]
    counts: np.ndarray
    initial_counts: np.ndarray

    def __post_init__(self):
        s = self.space.n_states
        counts = np.asarray(self.counts, dtype=np.int64).reshape(len(self.weeks) - 1, s, s)
        init = np.asarray(self.initial_counts, dtype=np.int64).reshape(s)
        counts.setflags(write=False)
        init.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "initial_counts", init)

    @property
    def n_sequences(self) -> int:
        return int(self.initial_counts.sum())

    @property
    def empty(self) -> bool:
        return self.n_sequences == 0

    @property
    def defined(self) -> np.ndarray:
        """(steps, states) mask of rows with at least one outgoing transition."""
        return self.counts.sum(axis=2) > 0

    @property
    def probabilities(self) -> np.ndarray:
        totals = self.counts.sum(axis=2, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            probs = np.where(totals > 0, self.counts / np.where(totals > 0, totals, 1), 0.0)
        return probs

    def occupancy(self) -> np.ndarray:
        """(weeks, states) number of sequences in each state per week."""
        rows = [self.initial_counts]
        rows.extend(step.sum(axis=0) for step in self.counts)
        return np.vstack(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["week_step", "from_state", "to_state", "count", "probability"])
        probs = self.probabilities
        labels = self.space.labels
        for t, (w0, w1) in enumerate(zip(self.weeks, self.weeks[1:])):
            for i, j in zip(*np.nonzero(self.counts[t])):
                w.writerow([f"{w0}-{w1}", labels[i], labels[j], int(self.counts[t, i, j]),
                            f"{probs[t, i, j]:.6f}"])
        return buf.getvalue()


def transitions_from_csv(text: str, space: StateSpace | None = None) -> TransitionModel:
    """Rebuild a model from :meth:`TransitionModel.to_csv` output.

    Without ``space`` the states are the labels in order of first appearance.
    """
    rows = list(csv.DictReader(io.StringIO(text)))
    if space is None:
        labels = []
        for r in rows:
            for key in ("from_state", "to_state"):
                if r[key] not in labels:
                    labels.append(r[key])
        space = StateSpace("custom", tuple(labels))
    index = {label: i for i, label in enumerate(space.labels)}
    steps = []
    for r in rows:
        if r["week_step"] not in steps:
            steps.append(r["week_step"])
    weeks = [int(steps[0].split("-")[0])] if steps else [0]
    weeks += [int(s.split("-")[1]) for s in steps]
    counts = np.zeros((len(steps), space.n_states, space.n_states), dtype=np.int64)
    for r in rows:
        counts[steps.index(r["week_step"]), index[r["from_state"]], index[r["to_state"]]] = int(r["count"])
    initial = counts[0].sum(axis=1) if steps else np.zeros(space.n_states, dtype=np.int64)
    return TransitionModel(space, tuple(weeks), counts, initial)


class TransitionEstimator(BaseEstimator):
    """Per-step transition counts from an integer state array (n_sequences, n_weeks)."""

    def __init__(self, n_states=None):
        self.n_states = n_states

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.int64, ensure_min_features=1)
        if X.shape[0] == 0:
            raise EmptySequences("no sequences to fit")
        if (X < 0).any():
            raise ValueError("state indices must be non-negative")
        s = self.n_states if self.n_states is not None else int(X.max()) + 1
        if X.max() >= s:
            raise ValueError(f"state index {X.max()} >= n_states {s}")
        steps = X.shape[1] - 1
        flat = np.zeros(steps * s * s, dtype=np.int64)
        if steps:
            keys = (np.arange(steps) * s * s)[None, :] + X[:, :-1] * s + X[:, 1:]
            flat = np.bincount(keys.ravel(), minlength=steps * s * s)
        self.counts_ = flat.reshape(steps, s, s)
        self.initial_counts_ = np.bincount(X[:, 0], minlength=s)
        totals = self.counts_.sum(axis=2, keepdims=True)
        self.probabilities_ = np.divide(self.counts_, totals, out=np.zeros(self.counts_.shape), where=totals > 0)
        self.n_states_ = s
        return self

    def sample(self, n_samples=1, random_state=None):
        """Draw state sequences from the fitted chain."""
        check_is_fitted(self, "counts_")
        rng = check_random_state(random_state)
        init = self.initial_counts_ / self.initial_counts_.sum()
        out = np.empty((n_samples, self.counts_.shape[0] + 1), dtype=np.int64)
        out[:, 0] = rng.choice(self.n_states_, size=n_samples, p=init)
        for t, probs in enumerate(self.probabilities_):
            cum = np.cumsum(probs, axis=1)
            u = rng.random_sample(n_samples)
            rows = cum[out[:, t]]
            out[:, t + 1] = np.minimum((u[:, None] >= rows).sum(axis=1), self.n_states_ - 1)
        return out


def fit_transitions(sequences: Sequence[StateSequence], space: StateSpace) -> TransitionModel:
    if not sequences:
        raise EmptySequences("no sequences to fit")
    lengths = {len(s.states) for s in sequences}
    firsts = {s.first_week for s in sequences}
    if len(lengths) != 1 or len(firsts) != 1:
        raise ValueError("sequences must cover the same weeks")
    X = np.array([s.states for s in sequences], dtype=np.int64)
    est = TransitionEstimator(n_states=space.n_states).fit(X)
    first = firsts.pop()
    weeks = tuple(range(first, first + X.shape[1]))
    return TransitionModel(space, weeks, est.counts_, est.initial_counts_)


def sample_sequences(model: TransitionModel, n: int, random_state=None) -> list[StateSequence]:
    est = TransitionEstimator(model.space.n_states)
    est.counts_ = np.asarray(model.counts)
    est.initial_counts_ = np.asarray(model.initial_counts)
    est.probabilities_ = model.probabilities
    est.n_states_ = model.space.n_states
    draws = est.sample(n, random_state)
    return [StateSequence(f"sim{i}", tuple(int(x) for x in row), model.weeks[0]) for i, row in enumerate(draws)]


def _empty_model(space: StateSpace, weeks: tuple[int, ...]) -> TransitionModel:
    s = space.n_states
    return TransitionModel(space, weeks, np.zeros((len(weeks) - 1, s, s)), np.zeros(s))


def split_by_outcome(
    sequences: Sequence[StateSequence],
    outcomes: Mapping[str, Outcome],
    classes: Sequence[Outcome],
    space: StateSpace,
) -> dict[Outcome, TransitionModel]:
    """One model per outcome class; classes without members get an empty model."""
    if not sequences:
        raise EmptySequences("no sequences to split")
    first = sequences[0].first_week
    weeks = tuple(range(first, first + len(sequences[0].states)))
    result = {}
    for cls in classes:
        cls = Outcome(cls)
        members = [s for s in sequences if outcomes[s.student] == cls]
        result[cls] = fit_transitions(members, space) if members else _empty_model(space, weeks)
    return result


class Constraint(str, enum.Enum):
    ZERO = "Z"
    NONZERO = "N"
    ANY = "A"


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    week_constraints: tuple[tuple[int, Constraint], ...]
    exists_zero_in: tuple[int, int] | None = None

    def __post_init__(self):
        wc = tuple(sorted((int(w), Constraint(c)) for w, c in dict(self.week_constraints).items()))
        object.__setattr__(self, "week_constraints", wc)
        if self.exists_zero_in is not None:
            lo, hi = self.exists_zero_in
            if lo > hi:
                raise ValueError(f"empty exists-zero range {self.exists_zero_in}")
            clash = [w for w, c in wc if c == Constraint.NONZERO and lo <= w <= hi]
            if clash:
                raise ValueError(f"scenario {self.name!r}: weeks {clash} are NonZero inside the exists-zero range")

    @property
    def weeks(self) -> set[int]:
        out = {w for w, _ in self.week_constraints}
        if self.exists_zero_in is not None:
            out |= set(range(self.exists_zero_in[0], self.exists_zero_in[1] + 1))
        return out

    def match_totals(self, totals: np.ndarray) -> np.ndarray:
        """Row mask over a (students, weeks) total-click array indexed from week 0."""
        totals = np.atleast_2d(totals)
        ok = np.ones(totals.shape[0], dtype=bool)
        for w, c in self.week_constraints:
            if c == Constraint.ZERO:
                ok &= totals[:, w] == 0
            elif c == Constraint.NONZERO:
                ok &= totals[:, w] > 0
        if self.exists_zero_in is not None:
            lo, hi = self.exists_zero_in
            ok &= (totals[:, lo:hi + 1] == 0).any(axis=1)
        return ok

    def to_line(self) -> str:
        cons = " ".join(f"w{w}={c.value}" for w, c in self.week_constraints)
        ez = "-" if self.exists_zero_in is None else f"{self.exists_zero_in[0]}-{self.exists_zero_in[1]}"
        return f"{self.name} | {cons} | exists_zero={ez}"


def match_scenario(spec: ScenarioSpec, features: WeeklyFeatures, student: str) -> bool:
    return bool(spec.match_totals(features.totals(student))[0])


def _parse_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("-")
    return (int(lo), int(hi)) if sep else (int(lo), int(lo))


def parse_catalog(text: str) -> list[ScenarioSpec]:
    """``name | w0=Z w1=N ... | exists_zero=<a-b or ->`` per line; ``#`` comments."""
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3 or not parts[0]:
            raise ScenarioParseError(f"catalog line {lineno}: expected 'name | constraints | exists_zero=...'")
        name, cons, ez = parts
        constraints = {}
        try:
            for tok in cons.split():
                key, _, val = tok.partition("=")
                if not key.startswith("w"):
                    raise ValueError(tok)
                constraints[int(key[1:])] = Constraint(val)
            if not ez.startswith("exists_zero="):
                raise ValueError(ez)
            ez_val = ez.split("=", 1)[1].strip()
            exists = None if ez_val == "-" else _parse_range(ez_val)
            specs.append(ScenarioSpec(name, tuple(constraints.items()), exists))
        except ValueError as exc:
            raise ScenarioParseError(f"catalog line {lineno}: {exc}") from None
    return specs


def default_catalog() -> list[ScenarioSpec]:
    """The twelve weeks 0-4 scenarios shipped with the package."""
    text = resources.files("vleminer").joinpath("data/scenarios.txt").read_text(encoding="utf-8")
    return parse_catalog(text)


@dataclass(frozen=True)
class ScenarioRow:
    name: str
    matched: int
    not_submitted: int
    passed: int
    failed: int

    def _pct(self, k):
        return 100.0 * k / self.matched if self.matched else None

    @property
    def pct_not_submitted(self):
        return self._pct(self.not_submitted)

    @property
    def pct_passed(self):
        return self._pct(self.passed)

    @property
    def pct_failed(self):
        return self._pct(self.failed)


@dataclass(frozen=True)
class ScenarioReport:
    cohort_size: int
    rows: tuple[ScenarioRow, ...]

    def row(self, name: str) -> ScenarioRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        def fmt(x):
            return "" if x is None else f"{x:.6f}"

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "matched", "pct_not_submitted", "pct_passed", "pct_failed"])
        for r in self.rows:
            w.writerow([r.name, r.matched, fmt(r.pct_not_submitted), fmt(r.pct_passed), fmt(r.pct_failed)])
        return buf.getvalue()


def scenario_report(
    specs: Sequence[ScenarioSpec],
    features: WeeklyFeatures,
    outcomes: Mapping[str, Outcome],
    weeks: range = range(0, 5),
) -> ScenarioReport:
    """Outcome breakdown of each scenario within the zero-week cohort."""
    weeks = _check_weeks(features, weeks)
    for spec in specs:
        outside = spec.weeks - set(weeks)
        if outside:
            raise ValueError(f"scenario {spec.name!r} constrains weeks {sorted(outside)} outside {weeks}")
    cohort = features.subset(cohort_filter(features, weeks))
    totals = cohort.total_clicks
    labels = np.array([outcomes[s].value for s in cohort.students], dtype=object)
    rows = []
    for spec in specs:
        hit = spec.match_totals(totals) if len(cohort) else np.zeros(0, dtype=bool)
        got = labels[hit]
        rows.append(ScenarioRow(
            spec.name,
            int(hit.sum()),
            int((got == Outcome.NOT_SUBMITTED.value).sum()),
            int((got == Outcome.PASSED.value).sum()),
            int((got == Outcome.FAILED.value).sum()),
        ))
    return ScenarioReport(len(cohort), tuple(rows))
