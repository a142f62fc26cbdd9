"""Seeded synthetic cohorts with analytically known ground truth.

Each student belongs to one archetype. Per week the student is silent
with the archetype's zero probability; otherwise the weekly click count
is ``1 + Poisson(mean - 1)``. Clicks are split over (content type, day of
week) cells by a multinomial with the archetype's type propensities and
uniform days. The TMA outcome depends on the archetype only.

Random draws are keyed by ``(seed, student index, slot)``, slot 0 for the
student-level draws and ``week + 1`` for each week, so the output does not
depend on generation order.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from .discretize import Binning, fixed_cutpoint_bins
from .exceptions import InvalidSpec
from .features import Outcome
from .ingest import DEFAULT_CONTENT_TYPES, AssessmentRecord, ClickRecord, Dataset, PresentationConfig

OUTCOME_ORDER = (Outcome.NOT_SUBMITTED, Outcome.FAILED, Outcome.PASSED)


@dataclass(frozen=True)
class Archetype:
    name: str
    weight: float
    zero_prob: tuple[float, ...]
    mean_clicks: tuple[float, ...]
    type_propensity: dict[str, float]
    outcome_probs: tuple[float, float, float]  # NotSubmitted, Failed, Passed


@dataclass(frozen=True)
class CohortSpec:
    n_students: int
    archetypes: tuple[Archetype, ...]
    seed: int = 7
    num_weeks: int = 5
    content_vocabulary: tuple[str, ...] = DEFAULT_CONTENT_TYPES
    pass_threshold: int = 40
    tma_index: int = 1

    def validate(self):
        if self.n_students < 0:
            raise InvalidSpec("n_students must be >= 0")
        if not self.archetypes:
            raise InvalidSpec("at least one archetype is required")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        weights = [a.weight for a in self.archetypes]
        if any(w < 0 or w > 1 for w in weights) or abs(sum(weights) - 1) > 1e-9:
            raise InvalidSpec(f"mixture weights must lie in [0, 1] and sum to 1, got {weights}")
        n_weeks = self.num_weeks + 1
        vocab = set(self.content_vocabulary)
        for a in self.archetypes:
            if len(a.zero_prob) != n_weeks or len(a.mean_clicks) != n_weeks:
                raise InvalidSpec(f"archetype {a.name!r}: need {n_weeks} weekly values")
            if any(not 0 <= z <= 1 for z in a.zero_prob):
                raise InvalidSpec(f"archetype {a.name!r}: zero probabilities outside [0, 1]")
            if any(m < 1 for m in a.mean_clicks):
                raise InvalidSpec(f"archetype {a.name!r}: active-week mean clicks must be >= 1")
            if len(a.outcome_probs) != 3 or any(p < 0 for p in a.outcome_probs) \
                    or abs(sum(a.outcome_probs) - 1) > 1e-9:
                raise InvalidSpec(f"archetype {a.name!r}: outcome probabilities must sum to 1")
            props = a.type_propensity
            if not props or set(props) - vocab:
                raise InvalidSpec(f"archetype {a.name!r}: propensities name unknown content types")
            if any(p < 0 for p in props.values()) or abs(sum(props.values()) - 1) > 1e-9:
                raise InvalidSpec(f"archetype {a.name!r}: type propensities must sum to 1")
        try:
            PresentationConfig(tuple(self.content_vocabulary), self.num_weeks, self.pass_threshold, self.tma_index)
        except Exception as exc:
            raise InvalidSpec(str(exc)) from None
        return self

    def presentation_config(self) -> PresentationConfig:
        return PresentationConfig(tuple(self.content_vocabulary), self.num_weeks, self.pass_threshold, self.tma_index)

    def propensity_matrix(self) -> np.ndarray:
        """(archetypes, content types) in vocabulary order."""
        return np.array([[a.type_propensity.get(t, 0.0) for t in self.content_vocabulary]
                         for a in self.archetypes])

    def to_json(self) -> str:
        data = asdict(self)
        data["archetypes"] = [asdict(a) for a in self.archetypes]
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CohortSpec":
        try:
            data = json.loads(text)
            archetypes = tuple(
                Archetype(a["name"], float(a["weight"]), tuple(a["zero_prob"]), tuple(a["mean_clicks"]),
                          dict(a["type_propensity"]), tuple(a["outcome_probs"]))
                for a in data.pop("archetypes")
            )
            if "content_vocabulary" in data:
                data["content_vocabulary"] = tuple(data["content_vocabulary"])
            return cls(archetypes=archetypes, **data).validate()
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"bad cohort spec: {exc}") from None


def default_spec(n_students: int = 10_000, seed: int = 7) -> CohortSpec:
    """Three archetypes: engaged, at-risk (silent in weeks 2-4), lurker (late starter).

    Active-week means sit far from the 30-click cut points, so under step-30
    intensity bins every archetype occupies a single positive interval.
    """
    engaged = Archetype(
        "engaged", 0.4,
        zero_prob=(0.30, 0.03, 0.03, 0.03, 0.03, 0.03),
        mean_clicks=(180, 180, 180, 180, 180, 180),
        type_propensity={"resource": 0.3, "quiz": 0.2, "forum": 0.2, "content": 0.2, "homepage": 0.1},
        outcome_probs=(0.05, 0.05, 0.90),
    )
    at_risk = Archetype(
        "at-risk", 0.3,
        zero_prob=(0.50, 0.30, 0.70, 0.85, 0.90, 0.90),
        mean_clicks=(8, 8, 8, 8, 8, 8),
        type_propensity={"homepage": 0.4, "resource": 0.3, "content": 0.2, "forum": 0.1},
        outcome_probs=(0.92, 0.05, 0.03),
    )
    lurker = Archetype(
        "lurker", 0.3,
        zero_prob=(0.60, 0.50, 0.10, 0.10, 0.10, 0.10),
        mean_clicks=(10, 10, 10, 10, 10, 10),
        type_propensity={"resource": 0.5, "homepage": 0.3, "content": 0.2},
        outcome_probs=(0.10, 0.10, 0.80),
    )
    return CohortSpec(n_students, (engaged, at_risk, lurker), seed=seed).validate()


class GroundTruth:
    """Exact population quantities implied by a :class:`CohortSpec`."""

    def __init__(self, spec: CohortSpec):
        self.spec = spec
        self.weights = np.array([a.weight for a in spec.archetypes])
        self.zero = np.array([a.zero_prob for a in spec.archetypes])  # (A, W+1)
        self.means = np.array([a.mean_clicks for a in spec.archetypes], dtype=float)
        self.outcomes = np.array([a.outcome_probs for a in spec.archetypes])  # (A, 3)
        self.propensity = spec.propensity_matrix()  # (A, T)

    @property
    def archetype_names(self) -> list[str]:
        return [a.name for a in self.spec.archetypes]

    def outcome_rates(self) -> dict[Outcome, float]:
        mix = self.weights @ self.outcomes
        return {o: float(p) for o, p in zip(OUTCOME_ORDER, mix)}

    def zero_rates(self) -> np.ndarray:
        return self.weights @ self.zero

    def _class_weights(self, classes) -> np.ndarray:
        if classes is None:
            return self.weights
        cols = [OUTCOME_ORDER.index(Outcome(c)) for c in classes]
        return self.weights * self.outcomes[:, cols].sum(axis=1)

    def state_probs(self, binning: Binning) -> np.ndarray:
        """P(state | archetype, week), shape (A, W+1, bins)."""
        lam = self.means - 1
        out = np.zeros(self.zero.shape + (binning.n_bins,))
        edges = [-np.inf, *binning.boundaries, np.inf]
        first = 1 if binning.zero_separate else 0
        for k, (lo, hi) in enumerate(zip(edges, edges[1:]), start=first):
            # count = 1 + m lies in (lo, hi]  <=>  floor(lo) <= m <= floor(hi) - 1
            lo_m = 0 if lo == -np.inf else max(np.floor(lo), 0)
            hi_m = np.inf if hi == np.inf else np.floor(hi) - 1
            if hi_m < lo_m:
                mass = np.zeros_like(lam)
            else:
                upper = 1.0 if hi_m == np.inf else poisson.cdf(hi_m, lam)
                mass = upper - (poisson.cdf(lo_m - 1, lam) if lo_m > 0 else 0.0)
            out[:, :, k] += (1 - self.zero) * mass
        zero_bin = 0 if binning.zero_separate else int(np.searchsorted(binning.boundaries, 0, side="left"))
        out[:, :, zero_bin] += self.zero
        return out

    def archetype_transitions(self, binning: Binning) -> np.ndarray:
        """(A, W, S, S): within an archetype weeks are independent, so every row is the next week's law."""
        sp = self.state_probs(binning)
        nxt = sp[:, 1:, None, :]
        return np.broadcast_to(nxt, sp.shape[:1] + (sp.shape[1] - 1, sp.shape[2], sp.shape[2])).copy()

    def transition_matrices(self, binning: Binning, weeks: Sequence[int] | None = None,
                            classes=None) -> tuple[np.ndarray, np.ndarray]:
        """Population transition matrices over consecutive ``weeks``.

        ``classes`` restricts the population to students with those outcomes.
        Returns ``(probabilities, defined)`` shaped (steps, S, S) and (steps, S).
        """
        weeks = list(range(self.spec.num_weeks + 1)) if weeks is None else list(weeks)
        w = self._class_weights(classes)
        sp = self.state_probs(binning)
        probs, defined = [], []
        for w0, w1 in zip(weeks, weeks[1:]):
            joint = np.einsum("a,ai,aj->ij", w, sp[:, w0], sp[:, w1])
            row = joint.sum(axis=1, keepdims=True)
            probs.append(np.divide(joint, row, out=np.zeros_like(joint), where=row > 0))
            defined.append(row[:, 0] > 0)
        return np.array(probs), np.array(defined)

    def type_active_probs(self) -> np.ndarray:
        """P(type clicked in week | archetype), shape (A, W+1, T)."""
        lam = (self.means - 1)[:, :, None]
        pi = self.propensity[:, None, :]
        none = (1 - pi) * np.exp(-lam * pi)
        return (1 - self.zero)[:, :, None] * (1 - none)

    def flag_conditionals(self, flags, fail_classes=(Outcome.NOT_SUBMITTED, Outcome.FAILED)):
        """Exact P(flag = 1 | fail) and P(flag = 1 | pass) for ``(week, type or None)`` flags."""
        fail_classes = {Outcome(c) for c in fail_classes}
        pass_classes = [o for o in OUTCOME_ORDER if o not in fail_classes]
        wf = self._class_weights(fail_classes)
        wp = self._class_weights(pass_classes)
        types = list(self.spec.content_vocabulary)
        tap = self.type_active_probs()
        per_arch = []
        for week, ctype in flags:
            per_arch.append(1 - self.zero[:, week] if ctype is None else tap[:, week, types.index(ctype)])
        per_arch = np.array(per_arch)  # (F, A)
        return per_arch @ wf / wf.sum(), per_arch @ wp / wp.sum()


@dataclass
class GeneratedCohort:
    dataset: Dataset
    truth: GroundTruth
    archetype: np.ndarray  # per student index into spec.archetypes
    weekly_totals: np.ndarray  # (n, W+1) emitted totals
    outcomes: dict[str, Outcome] = field(default_factory=dict)

    @property
    def students(self) -> tuple[str, ...]:
        return self.dataset.roster


def _student_ids(n: int) -> list[str]:
    width = max(len(str(max(n - 1, 0))), 4)
    return [f"s{i:0{width}d}" for i in range(n)]


def _week_days(week: int) -> np.ndarray:
    return np.arange(-7, 0) if week == 0 else np.arange(7 * (week - 1), 7 * week)


def generate(spec: CohortSpec) -> GeneratedCohort:
    spec.validate()
    truth = GroundTruth(spec)
    vocab = list(spec.content_vocabulary)
    props = spec.propensity_matrix()
    n_weeks = spec.num_weeks + 1
    ids = _student_ids(spec.n_students)
    weights = truth.weights
    cell_probs = [np.repeat(p, 7) / 7 for p in props]  # (type, day) cells, type-major
    clicks, assessments = [], []
    archetype = np.zeros(spec.n_students, dtype=np.int64)
    totals = np.zeros((spec.n_students, n_weeks), dtype=np.int64)
    outcomes = {}
    day_of_cell = [np.tile(_week_days(w), len(vocab)) for w in range(n_weeks)]
    type_of_cell = np.repeat(np.arange(len(vocab)), 7)
    for i, sid in enumerate(ids):
        # one stream per student, so a cohort is a prefix of any larger one
        rng = np.random.default_rng([spec.seed, i])
        a = int(rng.choice(len(weights), p=weights))
        archetype[i] = a
        arch = spec.archetypes[a]
        outcome = OUTCOME_ORDER[int(rng.choice(3, p=arch.outcome_probs))]
        outcomes[sid] = outcome
        if outcome == Outcome.NOT_SUBMITTED:
            assessments.append(AssessmentRecord(sid, spec.tma_index, submitted=False))
        else:
            lo, hi = (0, spec.pass_threshold - 1) if outcome == Outcome.FAILED else (spec.pass_threshold, 100)
            assessments.append(AssessmentRecord(sid, spec.tma_index, True, int(rng.integers(lo, hi + 1))))
        silent = rng.random(n_weeks) < np.asarray(arch.zero_prob)
        for w in range(n_weeks):
            if silent[w]:
                continue
            count = 1 + int(rng.poisson(arch.mean_clicks[w] - 1))
            totals[i, w] = count
            cells = rng.multinomial(count, cell_probs[a])
            hit = np.flatnonzero(cells)
            clicks.extend(
                ClickRecord(sid, d, vocab[t], c)
                for d, t, c in zip(day_of_cell[w][hit].tolist(), type_of_cell[hit].tolist(), cells[hit].tolist())
            )
    dataset = Dataset.from_records(clicks, assessments, spec.presentation_config(), roster=ids)
    return GeneratedCohort(dataset, truth, archetype, totals, outcomes)


def clicks_to_csv(records: Sequence[ClickRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id_student", "date", "activity_type", "sum_click"])
    for r in records:
        w.writerow([r.student, r.day_offset, r.content_type, r.clicks])
    return buf.getvalue()


def assessments_to_csv(records: Sequence[AssessmentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id_student", "assessment", "score"])
    for r in records:
        w.writerow([r.student, r.tma_index, "" if r.score is None else r.score])
    return buf.getvalue()


def write_cohort(cohort: GeneratedCohort, out_dir, binning: Binning | None = None) -> list[Path]:
    """Write clicks/assessments CSVs and the ``ground_truth`` directory."""
    out = Path(out_dir)
    gt = out / "ground_truth"
    gt.mkdir(parents=True, exist_ok=True)
    binning = binning or fixed_cutpoint_bins()
    truth = cohort.truth
    spec = truth.spec
    written = []

    def put(path: Path, text: str):
        path.write_text(text, encoding="utf-8", newline="\n")
        written.append(path)

    put(out / "clicks.csv", clicks_to_csv(cohort.dataset.clicks))
    put(out / "assessments.csv", assessments_to_csv(cohort.dataset.assessments))
    put(gt / "spec.json", spec.to_json())
    labels = binning.labels()
    weeks = list(range(spec.num_weeks + 1))

    def transition_csv(probs):
        lines = ["week_step,from_state,to_state,probability"]
        for t, (w0, w1) in enumerate(zip(weeks, weeks[1:])):
            for i, j in zip(*np.nonzero(probs[t] > 0)):
                lines.append(f'{w0}-{w1},"{labels[i]}","{labels[j]}",{probs[t, i, j]:.6f}')
        return "\n".join(lines) + "\n"

    mix, _ = truth.transition_matrices(binning)
    put(gt / "transitions_population.csv", transition_csv(mix))
    per_arch = truth.archetype_transitions(binning)
    for name, probs in zip(truth.archetype_names, per_arch):
        put(gt / f"transitions_{name}.csv", transition_csv(probs))
    flags = [(w, None) for w in weeks] + [(w, t) for w in weeks for t in spec.content_vocabulary]
    p_fail, p_pass = truth.flag_conditionals(flags)
    lines = ["flag_id,p_given_fail,p_given_pass"]
    for (w, t), pf, pp in zip(flags, p_fail, p_pass):
        lines.append(f"{'w%d_active' % w if t is None else f'w{w}_{t}'},{pf:.6f},{pp:.6f}")
    put(gt / "conditionals.csv", "\n".join(lines) + "\n")
    rates = truth.outcome_rates()
    put(gt / "outcome_rates.csv",
        "outcome,rate\n" + "".join(f"{o.value},{rates[o]:.6f}\n" for o in OUTCOME_ORDER))
    return written
