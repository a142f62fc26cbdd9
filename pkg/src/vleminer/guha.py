"""GUHA ASSOC rule mining over categorical activity attributes.

Antecedents are conjunctions of literals ``attribute = category`` with at
most one literal per attribute; the succedent is a single TMA outcome
class. Every candidate is scored with its four-fold table::

                 succ    not succ
    ante          a         b
    not ante      c         d

and kept when the quantifier holds. Row sets are Python ints used as
bitsets, so a conjunction is an ``&`` and a count is ``int.bit_count``.
"""

from __future__ import annotations

import functools
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .discretize import Binning, apply_array, equal_frequency_bins
from .exceptions import EmptyAttributeSpace, EmptyCohort, UnknownAttribute
from .features import Outcome, WeeklyFeatures


@dataclass(frozen=True)
class WeekFlag:
    week: int


@dataclass(frozen=True)
class TypeFlag:
    week: int
    content_type: str


@dataclass(frozen=True)
class BinnedCount:
    week: int
    content_type: str | None
    binning: Binning


@dataclass(frozen=True)
class Attribute:
    id: str
    source: WeekFlag | TypeFlag | BinnedCount | None = None
    arity: int = 2

    def __post_init__(self):
        if self.arity < 2:
            raise ValueError(f"attribute {self.id!r} needs arity >= 2, got {self.arity}")
        if isinstance(self.source, BinnedCount) and self.source.binning.n_bins != self.arity:
            raise ValueError(f"attribute {self.id!r}: arity differs from its bin count")

    @property
    def is_flag(self) -> bool:
        return not isinstance(self.source, BinnedCount) and self.arity == 2

    def category_label(self, category: int) -> str:
        return str(category) if self.is_flag else f"bin{category}"


@dataclass(frozen=True, eq=False)
class CategoricalMatrix:
    """Category codes of every student on every attribute, plus outcomes."""

    attributes: tuple[Attribute, ...]
    codes: np.ndarray
    outcomes: tuple[Outcome, ...]
    students: tuple[str, ...] = ()

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 2 or codes.shape != (len(self.outcomes), len(self.attributes)):
            raise ValueError(f"codes shape {codes.shape} inconsistent with attributes/outcomes")
        for j, attr in enumerate(self.attributes):
            col = codes[:, j]
            if col.size and (col.min() < 0 or col.max() >= attr.arity):
                raise ValueError(f"attribute {attr.id!r} has codes outside 0..{attr.arity - 1}")
        ids = [a.id for a in self.attributes]
        if len(set(ids)) != len(ids):
            raise ValueError("attribute ids must be unique")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "outcomes", tuple(Outcome(o) for o in self.outcomes))
        object.__setattr__(self, "_position", {a.id: j for j, a in enumerate(self.attributes)})

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    def position(self, attribute: Attribute | str) -> int:
        key = attribute if isinstance(attribute, str) else attribute.id
        try:
            return self._position[key]
        except KeyError:
            raise UnknownAttribute(f"attribute {key!r} is not in the matrix") from None

    def attribute(self, attribute_id: str) -> Attribute:
        return self.attributes[self.position(attribute_id)]


@dataclass(frozen=True, order=True)
class Literal:
    attribute: str
    category: int

    def render(self, matrix: CategoricalMatrix | None = None, attribute: Attribute | None = None) -> str:
        attr = attribute or (matrix.attribute(self.attribute) if matrix is not None else None)
        label = attr.category_label(self.category) if attr is not None else str(self.category)
        return f"{self.attribute}={label}"


@dataclass(frozen=True)
class FourFtTable:
    a: int
    b: int
    c: int
    d: int

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def confidence(self) -> float:
        return self.a / (self.a + self.b) if self.a + self.b else 0.0

    @property
    def support(self) -> float:
        return self.a / self.n if self.n else 0.0


@dataclass(frozen=True)
class FoundedImplication:
    p: float = 0.9
    base: int = 20

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError(f"founded implication needs 0 < p <= 1, got {self.p}")
        if self.base < 1:
            raise ValueError(f"base must be >= 1, got {self.base}")

    def __str__(self):
        return f"fi:{self.p!r}:{self.base}"


@dataclass(frozen=True)
class AboveAverage:
    q: float = 1.5
    base: int = 20

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError(f"above-average dependence needs q > 1, got {self.q}")
        if self.base < 1:
            raise ValueError(f"base must be >= 1, got {self.base}")

    def __str__(self):
        return f"aa:{self.q!r}:{self.base}"


QuantifierSpec = FoundedImplication | AboveAverage


def parse_quantifier(text: str) -> QuantifierSpec:
    """``fi:<p>:<base>`` or ``aa:<q>:<base>``."""
    parts = text.strip().split(":")
    if len(parts) != 3 or parts[0] not in ("fi", "aa"):
        raise ValueError(f"quantifier must look like fi:<p>:<base> or aa:<q>:<base>, got {text!r}")
    try:
        value, base = float(parts[1]), int(parts[2])
    except ValueError:
        raise ValueError(f"bad numbers in quantifier {text!r}") from None
    return FoundedImplication(value, base) if parts[0] == "fi" else AboveAverage(value, base)


@functools.lru_cache(maxsize=64)
def _exact(x: float) -> tuple[int, int]:
    # decimal reading of the threshold, so fi:0.9 accepts 18/20
    frac = Fraction(repr(float(x)))
    return frac.numerator, frac.denominator


def eval_quantifier(table: FourFtTable, spec: QuantifierSpec) -> tuple[bool, dict]:
    """Quantifier verdict plus confidence/support (and lift for above-average).

    Comparisons are exact integer cross-multiplications.
    """
    a, b, c = table.a, table.b, table.c
    metrics = {"confidence": table.confidence, "support": table.support}
    if a + b == 0 or a < spec.base:
        return False, metrics
    if isinstance(spec, FoundedImplication):
        num, den = _exact(spec.p)
        return a * den >= num * (a + b), metrics
    num, den = _exact(spec.q)
    metrics["lift"] = a * table.n / ((a + b) * (a + c))
    return a * table.n * den >= num * (a + c) * (a + b), metrics


def prune_bound(a_partial: int, spec: QuantifierSpec) -> bool:
    """Whether extensions of an antecedent with this ``a`` can still reach ``base``.

    Adding a literal can only shrink the covered row set, so ``a`` never grows.
    """
    return a_partial >= spec.base


@dataclass(frozen=True)
class Hypothesis:
    antecedent: tuple[Literal, ...]
    succedent: Outcome
    table: FourFtTable
    quantifier_satisfied: bool = True
    quantifier: str = ""
    antecedent_text: str = field(default="", compare=False)

    @property
    def confidence(self) -> float:
        return self.table.confidence

    @property
    def support(self) -> float:
        return self.table.support


def _bitset(mask: np.ndarray) -> int:
    packed = np.packbits(mask.astype(bool), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


def _succedent_mask(matrix: CategoricalMatrix, succedent: Outcome) -> np.ndarray:
    return np.array([o == succedent for o in matrix.outcomes], dtype=bool)


def build_4ft(antecedent: Sequence[Literal], succedent: Outcome, matrix: CategoricalMatrix) -> FourFtTable:
    rows = np.ones(matrix.n_rows, dtype=bool)
    for lit in antecedent:
        rows &= matrix.codes[:, matrix.position(lit.attribute)] == lit.category
    succ = _succedent_mask(matrix, Outcome(succedent))
    a = int((rows & succ).sum())
    b = int((rows & ~succ).sum())
    c = int((~rows & succ).sum())
    return FourFtTable(a, b, c, matrix.n_rows - a - b - c)


def _render(antecedent, attrs_by_id) -> str:
    return " & ".join(lit.render(attribute=attrs_by_id[lit.attribute]) for lit in antecedent)


def hypothesis_sort_key(h: Hypothesis, positions: dict[str, int], succedent_rank: dict[Outcome, int]):
    t = h.table
    return (
        -Fraction(t.a, t.a + t.b),
        -t.a,
        tuple((positions[lit.attribute], lit.category) for lit in h.antecedent),
        succedent_rank[h.succedent],
    )


def mine_assoc(
    matrix: CategoricalMatrix,
    attribute_space: Sequence[Attribute | str] | None = None,
    succedents: Sequence[Outcome] = (Outcome.NOT_SUBMITTED, Outcome.PASSED),
    spec: QuantifierSpec | None = None,
    max_length: int = 3,
    prune: bool = True,
    n_jobs: int | None = None,
) -> list[Hypothesis]:
    """All antecedents up to ``max_length`` literals satisfying ``spec``.

    Output is sorted by confidence (desc), then support (desc), then the
    antecedent's (attribute position, category) sequence, then succedent
    order, which makes it a total order. ``n_jobs`` splits the search by
    the first attribute of the antecedent; the result does not depend on it.
    """
    spec = spec or FoundedImplication()
    if matrix.n_rows < 1:
        raise EmptyCohort("mining needs at least one student")
    if max_length < 1:
        raise ValueError(f"max_length must be >= 1, got {max_length}")
    space = list(matrix.attributes if attribute_space is None else attribute_space)
    if not space:
        raise EmptyAttributeSpace("no attributes to build antecedents from")
    attrs = [matrix.attributes[matrix.position(a)] for a in space]
    if len({a.id for a in attrs}) != len(attrs):
        raise ValueError("attribute space lists an attribute twice")
    succedents = [Outcome(s) for s in succedents]
    n = matrix.n_rows
    succ_bits = [_bitset(_succedent_mask(matrix, s)) for s in succedents]
    succ_sizes = [s.bit_count() for s in succ_bits]
    literal_bits = []
    for attr in attrs:
        col = matrix.codes[:, matrix.position(attr)]
        literal_bits.append([_bitset(col == cat) for cat in range(attr.arity)])
    attrs_by_id = {a.id: a for a in attrs}
    label = str(spec)
    m = len(attrs)

    def search(first: int) -> list[Hypothesis]:
        """Hypotheses whose antecedent starts with attribute ``first``."""
        found = []

        def extend(i, rows, lits):
            for cat, bits in enumerate(literal_bits[i]):
                covered = rows & bits
                ab = covered.bit_count()
                new_lits = lits + (Literal(attrs[i].id, cat),)
                best_a = 0
                for s_idx, sb in enumerate(succ_bits):
                    a = (covered & sb).bit_count()
                    best_a = max(best_a, a)
                    c = succ_sizes[s_idx] - a
                    table = FourFtTable(a, ab - a, c, n - ab - c)
                    if eval_quantifier(table, spec)[0]:
                        found.append(Hypothesis(new_lits, succedents[s_idx], table, True, label,
                                                _render(new_lits, attrs_by_id)))
                if len(new_lits) < max_length and (not prune or prune_bound(best_a, spec)):
                    for j in range(i + 1, m):
                        extend(j, covered, new_lits)

        extend(first, (1 << n) - 1, ())
        return found

    workers = resolve_jobs(n_jobs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(search, range(m)))
    else:
        parts = [search(i) for i in range(m)]
    hypotheses = [h for part in parts for h in part]
    positions = {a.id: j for j, a in enumerate(attrs)}
    rank = {s: r for r, s in enumerate(succedents)}
    hypotheses.sort(key=lambda h: hypothesis_sort_key(h, positions, rank))
    return hypotheses


def resolve_jobs(n_jobs: int | None) -> int:
    """``None`` reads ``VLE_MINER_THREADS``; 0 or negative means all cores."""
    if n_jobs is None:
        raw = os.environ.get("VLE_MINER_THREADS", "1").strip() or "1"
        try:
            n_jobs = int(raw)
        except ValueError:
            raise ValueError(f"VLE_MINER_THREADS must be an integer, got {raw!r}") from None
    if n_jobs <= 0:
        return os.cpu_count() or 1
    return n_jobs


def build_attribute_matrix(
    features: WeeklyFeatures,
    outcomes,
    weeks: range,
    *,
    week_flags: bool = True,
    type_flags: Sequence[str] = (),
    binned_totals: bool = True,
    binned_types: Sequence[str] = (),
    n_bins: int = 5,
) -> CategoricalMatrix:
    """Attributes from the three weekly feature families.

    Binned counts use equal-frequency cut points fitted on this cohort;
    a week whose counts have a single distinct value is skipped.
    """
    if isinstance(outcomes, dict):
        outcomes = [outcomes[s] for s in features.students]
    attrs, cols = [], []
    totals = features.total_clicks
    for w in weeks:
        if week_flags:
            attrs.append(Attribute(f"w{w}_active", WeekFlag(w)))
            cols.append(features.week_active[:, w].astype(np.int64))
        for t in type_flags:
            attrs.append(Attribute(f"w{w}_{t}", TypeFlag(w, t)))
            cols.append(features.type_active[:, w, features.type_index(t)].astype(np.int64))
        binned = []
        if binned_totals:
            binned.append((f"w{w}_total", None, totals[:, w]))
        for t in binned_types:
            binned.append((f"w{w}_{t}_clicks", t, features.type_clicks[:, w, features.type_index(t)]))
        for attr_id, t, values in binned:
            if len(values) < n_bins or np.unique(values).size < 2:
                continue
            binning = equal_frequency_bins(values, n_bins)
            attrs.append(Attribute(attr_id, BinnedCount(w, t, binning), binning.n_bins))
            cols.append(apply_array(binning, values))
    codes = np.column_stack(cols) if cols else np.zeros((len(features), 0), dtype=np.int64)
    return CategoricalMatrix(tuple(attrs), codes, tuple(outcomes), features.students)


class AssocMiner(BaseEstimator):
    """Estimator wrapper around :func:`mine_assoc`.

    ``fit(X, y)`` takes a :class:`CategoricalMatrix` (``y`` ignored) or an
    integer code array with outcome labels ``y``; found rules land in
    ``hypotheses_``.
    """

    def __init__(self, quantifier="fi:0.9:20", max_length=3,
                 succedents=(Outcome.NOT_SUBMITTED, Outcome.PASSED), prune=True, n_jobs=None):
        self.quantifier = quantifier
        self.max_length = max_length
        self.succedents = succedents
        self.prune = prune
        self.n_jobs = n_jobs

    def fit(self, X, y=None, attribute_ids=None):
        if not isinstance(X, CategoricalMatrix):
            codes = np.asarray(X, dtype=np.int64)
            if y is None:
                raise ValueError("outcome labels y are required with a code array")
            ids = attribute_ids or [f"x{j}" for j in range(codes.shape[1])]
            attrs = tuple(Attribute(i, None, max(2, int(codes[:, j].max(initial=0)) + 1))
                          for j, i in enumerate(ids))
            X = CategoricalMatrix(attrs, codes, tuple(Outcome(o) for o in y))
        spec = parse_quantifier(self.quantifier) if isinstance(self.quantifier, str) else self.quantifier
        self.matrix_ = X
        self.hypotheses_ = mine_assoc(X, None, self.succedents, spec, self.max_length,
                                      prune=self.prune, n_jobs=self.n_jobs)
        return self

    def transform(self, X=None):
        """Rule-coverage indicator matrix (students x hypotheses) on the fitted data."""
        check_is_fitted(self, "hypotheses_")
        X = self.matrix_ if X is None else X
        out = np.ones((X.n_rows, len(self.hypotheses_)), dtype=bool)
        for k, h in enumerate(self.hypotheses_):
            for lit in h.antecedent:
                out[:, k] &= X.codes[:, X.position(lit.attribute)] == lit.category
        return out
