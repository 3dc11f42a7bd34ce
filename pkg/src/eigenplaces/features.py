"""Normalized hourly presence features.

Each user location is described by 48 values: for every hour-of-week slot
(24 weekday + 24 weekend), the fraction of the user's events in that slot
that happened at this location. Fractions are per-user, per-slot: over one
user's locations they sum to 1 wherever the user was observed at all, so
the vector captures *where* a user tends to be at a given hour independent
of how much they use the phone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyCorpusError
from .geo import LocatedUser
from .model import week_hour_index

N_SLOTS = 48


@dataclass(frozen=True, slots=True)
class PresenceCounts:
    user_id: str
    location_id: int
    counts: np.ndarray  # int64[48]


@dataclass(frozen=True, slots=True)
class PresenceVector:
    user_id: str
    location_id: int
    nhp: np.ndarray  # float64[48], entries in [0, 1]


@dataclass(slots=True)
class FeatureMatrix:
    """All presence vectors, one row per user location.

    Rows are sorted by (user_id, location_id); ``index[i]`` identifies row i
    and ``row_of`` inverts it.
    """

    values: np.ndarray  # float64[U, 48]
    index: list[tuple[str, int]]
    row_of: dict[tuple[str, int], int]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


def count_presences(user: LocatedUser, tz: str) -> list[PresenceCounts]:
    """48-slot event histogram for each of one user's locations."""
    counts = np.zeros((len(user.locations), N_SLOTS), dtype=np.int64)
    for rec, loc in zip(user.records, user.location_ids):
        counts[loc, week_hour_index(rec.timestamp, tz)] += 1
    return [
        PresenceCounts(user.user_id, loc.location_id, counts[i])
        for i, loc in enumerate(user.locations)
    ]


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Per-slot share across one user's locations; 0 where the user has no
    event in that slot anywhere."""
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=0)
    safe = np.where(totals > 0, totals, 1.0)
    return counts / safe


def normalize(per_location: Sequence[PresenceCounts]) -> list[PresenceVector]:
    """Normalize one user's complete set of presence counts."""
    counts = np.stack([p.counts for p in per_location])
    nhp = normalize_counts(counts)
    return [
        PresenceVector(p.user_id, p.location_id, nhp[i])
        for i, p in enumerate(per_location)
    ]


def assemble_matrix(vectors: Sequence[PresenceVector]) -> FeatureMatrix:
    """Stack vectors into the corpus feature matrix, sorted by (user, loc)."""
    if not vectors:
        raise EmptyCorpusError("no presence vectors to assemble")
    ordered = sorted(vectors, key=lambda v: (v.user_id, v.location_id))
    values = np.stack([v.nhp for v in ordered])
    index = [(v.user_id, v.location_id) for v in ordered]
    return FeatureMatrix(values, index, {key: i for i, key in enumerate(index)})


def build_count_matrix(
    users: Sequence[LocatedUser], tz: str
) -> tuple[np.ndarray, list[tuple[str, int]], list[slice]]:
    """Corpus-wide count matrix with per-user row slices.

    Users must be (and are, from build_user_locations) sorted by user_id;
    rows come out sorted by (user_id, location_id).
    """
    blocks = []
    index: list[tuple[str, int]] = []
    slices: list[slice] = []
    start = 0
    for user in sorted(users, key=lambda u: u.user_id):
        if not user.locations:
            continue
        per_loc = count_presences(user, tz)
        blocks.append(np.stack([p.counts for p in per_loc]))
        index.extend((p.user_id, p.location_id) for p in per_loc)
        slices.append(slice(start, start + len(per_loc)))
        start += len(per_loc)
    if not blocks:
        raise EmptyCorpusError("no users with locations")
    return np.concatenate(blocks, axis=0), index, slices


def normalize_matrix(counts: np.ndarray, user_slices: Sequence[slice]) -> np.ndarray:
    """Vectorized per-user normalization of a stacked count matrix."""
    counts = np.asarray(counts, dtype=np.float64)
    starts = np.array([s.start for s in user_slices])
    totals = np.add.reduceat(counts, starts, axis=0)
    lengths = np.array([s.stop - s.start for s in user_slices])
    denom = np.repeat(totals, lengths, axis=0)
    return counts / np.where(denom > 0, denom, 1.0)


def build_feature_matrix(users: Sequence[LocatedUser], tz: str) -> FeatureMatrix:
    """counts -> per-user normalization -> assembled corpus matrix."""
    counts, index, slices = build_count_matrix(users, tz)
    values = normalize_matrix(counts, slices)
    return FeatureMatrix(values, index, {key: i for i, key in enumerate(index)})
