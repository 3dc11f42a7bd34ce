"""Stage artifact readers and writers.

Every artifact is either a CSV with an exact documented header or a JSON
document carrying ``schema_version``. Floats are written with 9-decimal
fixed formatting so identical runs produce identical bytes. Writers stream
to ``<name>.partial`` and rename on completion, so an interrupted stage
leaves its partial output visibly suffixed instead of a corrupt final file.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Iterable, Sequence

import numpy as np

from .clustering import FuzzyClustering, HardClustering
from .eigen import Eigenbasis
from .errors import ArtifactError
from .features import FeatureMatrix, N_SLOTS
from .geo import LocatedUser, UserLocation
from .inference import RoleAssignment
from .model import GeoPoint, TowerRegistry, TraceRecord

SCHEMA_VERSION = 1

LOCATIONS_HEADER = [
    "user_id",
    "location_id",
    "leader_tower",
    "centroid_lat",
    "centroid_lon",
    "presence_count",
    "member_towers",
]
FEATURES_HEADER = ["user_id", "location_id"] + [f"h{i}" for i in range(N_SLOTS)]
EIGENCURVES_HEADER = ["component", "hour_index", "loading"]
DB_BOOTSTRAP_HEADER = ["k", "replicate", "score"]
ASSIGNMENTS_HEADER = ["user_id", "location_id", "role", "membership", "source"]
DENSITY_HEADER = ["cell_lat", "cell_lon", "home_count", "work_count"]


def fmt9(x: float) -> str:
    return f"{float(x):.9f}"


def _round9(obj):
    """Recursively snap floats to their 9-decimal representation."""
    if isinstance(obj, float):
        return float(fmt9(obj))
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    return obj


class _PartialWriter:
    """Context manager writing to ``path.partial`` and renaming on success."""

    def __init__(self, path: str):
        self.path = path
        self.partial = path + ".partial"
        self.fh = None

    def __enter__(self):
        self.fh = open(self.partial, "w", encoding="utf-8", newline="")
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is None:
            os.replace(self.partial, self.path)
        return False


def write_json(path: str, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION}
    doc.update(_round9(payload))
    with _PartialWriter(path) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ArtifactError(f"missing artifact {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"malformed artifact {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ArtifactError(
            f"{path}: schema version {version!r} incompatible with {SCHEMA_VERSION}"
        )
    return doc


def _write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with _PartialWriter(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: str, header: Sequence[str]) -> list[list[str]]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ArtifactError(f"missing artifact {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        actual = next(reader, None)
        if actual != list(header):
            raise ArtifactError(
                f"{path}: header {actual!r} incompatible with expected {list(header)}"
            )
        return [row for row in reader if row]


# -- user locations -----------------------------------------------------------

def write_locations_csv(path: str, users: Sequence[LocatedUser]) -> None:
    rows = []
    for user in users:
        for loc in user.locations:
            rows.append(
                [
                    loc.user_id,
                    loc.location_id,
                    loc.leader_tower,
                    fmt9(loc.centroid.lat_deg),
                    fmt9(loc.centroid.lon_deg),
                    loc.presence_count,
                    "|".join(sorted(loc.member_towers)),
                ]
            )
    _write_csv(path, LOCATIONS_HEADER, rows)


def read_locations_csv(path: str) -> dict[tuple[str, int], UserLocation]:
    locations: dict[tuple[str, int], UserLocation] = {}
    for row in _read_csv(path, LOCATIONS_HEADER):
        user_id = row[0]
        loc_id = int(row[1])
        locations[(user_id, loc_id)] = UserLocation(
            user_id=user_id,
            location_id=loc_id,
            member_towers=frozenset(row[6].split("|")) if row[6] else frozenset(),
            leader_tower=row[2],
            centroid=GeoPoint(float(row[3]), float(row[4])),
            presence_count=int(row[5]),
        )
    return locations


def rebuild_located_users(
    records: Sequence[TraceRecord],
    locations: dict[tuple[str, int], UserLocation],
) -> list[LocatedUser]:
    """Reattach records to their dumped locations via tower membership."""
    tower_to_loc: dict[str, dict[str, int]] = {}
    locs_by_user: dict[str, list[UserLocation]] = {}
    for (user_id, loc_id), loc in locations.items():
        locs_by_user.setdefault(user_id, []).append(loc)
        table = tower_to_loc.setdefault(user_id, {})
        for tower in loc.member_towers:
            table[tower] = loc_id
    by_user: dict[str, list[TraceRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    users = []
    for user_id in sorted(locs_by_user):
        recs = by_user.get(user_id, [])
        table = tower_to_loc[user_id]
        kept = [r for r in recs if r.tower_id in table]
        users.append(
            LocatedUser(
                user_id,
                kept,
                sorted(locs_by_user[user_id], key=lambda l: l.location_id),
                [table[r.tower_id] for r in kept],
            )
        )
    return users


# -- features ------------------------------------------------------------------

def write_features_csv(path: str, matrix: FeatureMatrix) -> None:
    rows = []
    for i, (user_id, loc_id) in enumerate(matrix.index):
        rows.append([user_id, loc_id] + [fmt9(v) for v in matrix.values[i]])
    _write_csv(path, FEATURES_HEADER, rows)


def read_features_csv(path: str) -> FeatureMatrix:
    raw = _read_csv(path, FEATURES_HEADER)
    if not raw:
        raise ArtifactError(f"{path}: no feature rows")
    index = [(row[0], int(row[1])) for row in raw]
    values = np.array([[float(v) for v in row[2:]] for row in raw], dtype=np.float64)
    return FeatureMatrix(values, index, {key: i for i, key in enumerate(index)})


# -- eigenbasis ----------------------------------------------------------------

def write_basis_json(path: str, basis: Eigenbasis) -> None:
    write_json(
        path,
        {
            "mean": basis.mean.tolist(),
            "eigenvalues": basis.eigenvalues.tolist(),
            "eigenvectors_rowmajor": basis.eigenvectors.tolist(),
            "explained_ratio": basis.explained_ratio.tolist(),
        },
    )


def read_basis_json(path: str) -> Eigenbasis:
    doc = read_json(path)
    try:
        return Eigenbasis(
            mean=np.array(doc["mean"], dtype=np.float64),
            eigenvalues=np.array(doc["eigenvalues"], dtype=np.float64),
            eigenvectors=np.array(doc["eigenvectors_rowmajor"], dtype=np.float64),
            explained_ratio=np.array(doc["explained_ratio"], dtype=np.float64),
        )
    except KeyError as exc:
        raise ArtifactError(f"{path}: missing field {exc}") from exc


def write_eigencurves_csv(path: str, basis: Eigenbasis, k: int) -> None:
    rows = []
    for component in range(k):
        for hour in range(basis.dim):
            rows.append([component, hour, fmt9(basis.eigenvectors[hour, component])])
    _write_csv(path, EIGENCURVES_HEADER, rows)


# -- clustering ----------------------------------------------------------------

def write_hard_clustering_json(path: str, clustering: HardClustering) -> None:
    write_json(
        path,
        {
            "k": clustering.k,
            "seed": list(clustering.seed)
            if isinstance(clustering.seed, (list, tuple))
            else clustering.seed,
            "centroids": clustering.centroids.tolist(),
            "objective": clustering.objective,
            "iterations": clustering.iterations,
            "assignment": clustering.assignment.tolist(),
        },
    )


def read_hard_clustering_json(path: str) -> HardClustering:
    doc = read_json(path)
    try:
        return HardClustering(
            k=int(doc["k"]),
            centroids=np.array(doc["centroids"], dtype=np.float64),
            assignment=np.array(doc["assignment"], dtype=np.int64),
            objective=float(doc["objective"]),
            iterations=int(doc["iterations"]),
            seed=doc["seed"],
        )
    except KeyError as exc:
        raise ArtifactError(f"{path}: missing field {exc}") from exc


def write_fuzzy_clustering_json(path: str, clustering: FuzzyClustering) -> None:
    write_json(
        path,
        {
            "k": clustering.k,
            "m": clustering.m,
            "seed": list(clustering.seed)
            if isinstance(clustering.seed, (list, tuple))
            else clustering.seed,
            "centroids": clustering.centroids.tolist(),
            "objective": clustering.objective,
            "iterations": clustering.iterations,
        },
    )


def write_membership_csv(
    path: str, membership: np.ndarray, index: Sequence[tuple[str, int]]
) -> None:
    k = membership.shape[1]
    header = ["user_id", "location_id"] + [f"m{j}" for j in range(k)]
    rows = [
        [user_id, loc_id] + [fmt9(v) for v in membership[i]]
        for i, (user_id, loc_id) in enumerate(index)
    ]
    _write_csv(path, header, rows)


def read_membership_csv(path: str) -> tuple[np.ndarray, list[tuple[str, int]]]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ArtifactError(f"missing artifact {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if (
            header is None
            or header[:2] != ["user_id", "location_id"]
            or any(not h.startswith("m") for h in header[2:])
        ):
            raise ArtifactError(f"{path}: bad membership header {header!r}")
        raw = [row for row in reader if row]
    index = [(row[0], int(row[1])) for row in raw]
    values = np.array([[float(v) for v in row[2:]] for row in raw], dtype=np.float64)
    return values, index


def write_db_bootstrap_csv(path: str, scores: dict[int, list[float]]) -> None:
    rows = []
    for k in sorted(scores):
        for replicate, score in enumerate(scores[k]):
            rows.append([k, replicate, fmt9(score)])
    _write_csv(path, DB_BOOTSTRAP_HEADER, rows)


# -- assignments / evaluation ---------------------------------------------------

def write_assignments_csv(path: str, assignments: Sequence[RoleAssignment]) -> None:
    rows = [
        [a.user_id, a.location_id, a.role, fmt9(a.membership), a.source]
        for a in assignments
    ]
    _write_csv(path, ASSIGNMENTS_HEADER, rows)


def read_assignments_csv(path: str) -> list[RoleAssignment]:
    return [
        RoleAssignment(row[0], int(row[1]), row[2], float(row[3]), row[4])
        for row in _read_csv(path, ASSIGNMENTS_HEADER)
    ]


def write_density_csv(path: str, cells: Sequence[tuple[float, float, int, int]]) -> None:
    rows = [
        [fmt9(lat), fmt9(lon), home_count, work_count]
        for lat, lon, home_count, work_count in cells
    ]
    _write_csv(path, DENSITY_HEADER, rows)


def write_report_text(path: str, text: str) -> None:
    with _PartialWriter(path) as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def write_trace_records_csv(path: str, records: Sequence[TraceRecord]) -> None:
    from .model import TRACE_HEADER, records_to_rows

    _write_csv(path, TRACE_HEADER, records_to_rows(records))


def write_registry_csv(path: str, registry: TowerRegistry) -> None:
    rows = [
        [tid, fmt9(registry.entries[tid].lat_deg), fmt9(registry.entries[tid].lon_deg)]
        for tid in sorted(registry.entries)
    ]
    _write_csv(path, ["tower_id", "lat", "lon"], rows)
