"""Ordinal binning of click counts.

All intervals are right-closed, ``(lo, hi]``. A binning with
``zero_separate`` reserves bin 0 for the value 0 exactly, so the first
positive interval never contains a zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import TooFewValues

EQUAL_FREQUENCY = "EqualFrequency"
FIXED_CUTPOINTS = "FixedCutpoints"


def _fmt(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class Binning:
    kind: str
    boundaries: tuple[float, ...]
    zero_separate: bool = False
    degenerate: bool = False

    def __post_init__(self):
        if self.kind not in (EQUAL_FREQUENCY, FIXED_CUTPOINTS):
            raise ValueError(f"unknown binning kind {self.kind!r}")
        b = tuple(float(x) for x in self.boundaries)
        if any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise ValueError(f"boundaries must be strictly increasing: {b}")
        if self.zero_separate and b and b[0] <= 0:
            raise ValueError("zero-separated binning needs positive boundaries")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_bins(self) -> int:
        return len(self.boundaries) + 1 + int(self.zero_separate)

    def apply(self, value) -> int:
        return apply(self, value)

    def labels(self) -> list[str]:
        """Interval label of every bin, in bin order."""
        edges = ["-inf" if not self.zero_separate else "0", *map(_fmt, self.boundaries), "inf"]
        out = ["0"] if self.zero_separate else []
        for lo, hi in zip(edges, edges[1:]):
            out.append(f"({lo},{hi})" if hi == "inf" else f"({lo},{hi}]")
        return out

    def to_string(self) -> str:
        zs = "true" if self.zero_separate else "false"
        return f"{self.kind};{zs};{','.join(map(_fmt, self.boundaries))}"

    @classmethod
    def from_string(cls, text: str) -> "Binning":
        try:
            kind, zs, bounds = text.strip().split(";")
        except ValueError:
            raise ValueError(f"malformed binning {text!r}") from None
        if zs not in ("true", "false"):
            raise ValueError(f"malformed zero_separate flag {zs!r}")
        boundaries = tuple(float(x) for x in bounds.split(",")) if bounds else ()
        return cls(kind, boundaries, zs == "true")


def apply(binning: Binning, value) -> int:
    if value < 0:
        raise ValueError(f"value must be non-negative, got {value}")
    if binning.zero_separate:
        if value == 0:
            return 0
        return 1 + int(np.searchsorted(binning.boundaries, value, side="left"))
    return int(np.searchsorted(binning.boundaries, value, side="left"))


def apply_array(binning: Binning, values) -> np.ndarray:
    """Vectorised :func:`apply`."""
    values = np.asarray(values)
    if (values < 0).any():
        raise ValueError("values must be non-negative")
    idx = np.searchsorted(np.asarray(binning.boundaries, dtype=float), values, side="left")
    if binning.zero_separate:
        idx = np.where(values == 0, 0, idx + 1)
    return idx.astype(np.int64)


def equal_frequency_bins(values, k: int = 5) -> Binning:
    """Cut a multiset into ``k`` bins of (nearly) equal occupancy.

    Each cut sits on the tie-group edge nearest to its ideal rank position
    ``j * n / k``, so equal values never straddle a boundary. Boundaries are
    midpoints between the neighbouring distinct values. When that rule merges
    two cuts, or leaves a bin-size spread above the largest tie group, the
    cuts are recomputed by an exact minimum-spread search. With fewer than
    ``k`` distinct values every distinct value gets its own bin and the
    result is marked ``degenerate``.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.size
    if n < k:
        raise TooFewValues(f"need at least {k} values, got {n}")
    if (v < 0).any():
        raise ValueError("values must be non-negative")
    distinct = np.unique(v)
    if distinct.size < k:
        mids = (distinct[:-1] + distinct[1:]) / 2
        return Binning(EQUAL_FREQUENCY, tuple(mids), degenerate=True)
    # rank positions p where v[p-1] < v[p]; a cut at p puts v[:p] below it
    edges = np.flatnonzero(v[1:] > v[:-1]) + 1
    cuts = []
    for j in range(1, k):
        target = j * n / k
        pos = int(np.searchsorted(edges, target))
        candidates = [edges[i] for i in (pos - 1, pos) if 0 <= i < edges.size]
        cuts.append(int(min(candidates, key=lambda p: (abs(p - target), p))))
    largest_tie = int(np.diff(np.concatenate(([0], edges, [n]))).max())
    if len(set(cuts)) < k - 1 or np.ptp(np.diff([0, *cuts, n])) > largest_tie:
        cuts = _min_spread_cuts(np.concatenate(([0], edges, [n])), k, largest_tie)
    boundaries = tuple((v[p - 1] + v[p]) / 2 for p in cuts)
    return Binning(EQUAL_FREQUENCY, boundaries)


def _window_reach(prefix, k, lo, hi):
    """reach[j][i]: prefix[i] is attainable with j blocks, each sized in [lo, hi]."""
    m = prefix.size
    reach = np.zeros((k + 1, m), dtype=bool)
    reach[0, 0] = True
    first = np.searchsorted(prefix, prefix - hi, side="left")
    last = np.searchsorted(prefix, prefix - lo, side="right") - 1
    for j in range(1, k + 1):
        seen = np.concatenate(([0], np.cumsum(reach[j - 1])))
        ok = last >= first
        hits = seen[np.clip(last, -1, m - 1) + 1] - seen[np.clip(first, 0, m)]
        reach[j] = ok & (hits > 0)
    return reach


def _min_spread_cuts(prefix, k, bound, probes=8):
    """Exactly ``k`` blocks of tie groups with a max-min size spread <= ``bound``.

    ``prefix`` holds the cumulative group sizes (0 first, n last). A spread
    ``s`` is feasible when some window ``[lo, lo + s]`` containing ``n / k``
    admits a partition. ``bound`` is checked over every window; smaller
    spreads are then bisected using only the ``probes`` windows centred
    nearest ``n / k``. The walk back picks, per block, the admissible cut
    closest to its ideal rank.
    """
    n = int(prefix[-1])

    def solve(s, limit=None):
        options = range(max(1, int(np.ceil(n / k - s))), int(np.floor(n / k)) + 1)
        ordered = sorted(options, key=lambda lo: (abs(lo + s / 2 - n / k), lo))
        for lo in ordered[:limit]:
            reach = _window_reach(prefix, k, lo, lo + s)
            if reach[k, -1]:
                return reach, lo
        return None

    low, high = 0, bound
    best = solve(high)
    if best is None:
        raise AssertionError("no partition within the tie-group bound")
    while low < high:
        mid = (low + high) // 2
        found = solve(mid, probes)
        if found is None:
            low = mid + 1
        else:
            best, high = found, mid
    reach, lo = best
    hi = lo + high
    cuts, at = [], prefix.size - 1
    for j in range(k, 1, -1):
        size = prefix[at] - prefix
        ok = reach[j - 1] & (size >= lo) & (size <= hi)
        ok[at:] = False
        options = np.flatnonzero(ok)
        target = (j - 1) * n / k
        at = int(min(options, key=lambda i: (abs(prefix[i] - target), i)))
        cuts.append(int(prefix[at]))
    return sorted(cuts)


def fixed_cutpoint_bins(step: int = 30, max_boundary: int = 90) -> Binning:
    """Bins ``{0}, (0, step], (step, 2 step], ..., (max_boundary, inf)``."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if max_boundary < step:
        raise ValueError(f"max_boundary {max_boundary} is below step {step}")
    return Binning(FIXED_CUTPOINTS, tuple(range(step, max_boundary + 1, step)), zero_separate=True)


class EqualFrequencyDiscretizer(TransformerMixin, BaseEstimator):
    """Column-wise equal-frequency binning to ordinal bin indices."""

    def __init__(self, n_bins=5):
        self.n_bins = n_bins

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=1)
        self.binnings_ = [equal_frequency_bins(X[:, j], self.n_bins) for j in range(X.shape[1])]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "binnings_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return np.column_stack([apply_array(b, X[:, j]) for j, b in enumerate(self.binnings_)])


class FixedCutpointDiscretizer(TransformerMixin, BaseEstimator):
    """Elementwise zero-separated fixed-step binning. Stateless apart from the cut points."""

    def __init__(self, step=30, max_boundary=90):
        self.step = step
        self.max_boundary = max_boundary

    def fit(self, X=None, y=None):
        self.binning_ = fixed_cutpoint_bins(self.step, self.max_boundary)
        return self

    def transform(self, X):
        check_is_fitted(self, "binning_")
        X = check_array(X, dtype=float, ensure_2d=False)
        return apply_array(self.binning_, X)
