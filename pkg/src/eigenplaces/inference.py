"""Semantic role labeling, the frequency baseline, and evaluation metrics.

Clusters of presence curves get deterministic home / work / third-place
roles from fixed hour-window masses. Fuzzy memberships support three
operating modes trading inference rate against accuracy. The baseline
("most frequent appearance") and the accuracy / inference-rate metrics
follow the usual conventions for event-driven trace studies: accuracy is
measured over inferred users only, inference rate over all evaluable users.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .features import N_SLOTS, PresenceCounts
from .geo import UserLocation, haversine_km
from .model import TowerRegistry

ROLE_HOME = "home"
ROLE_WORK = "work"
ROLE_THIRD = "third_place"
ROLE_REMOVED = "removed"

SOURCE_KMEANS = "kmeans"
SOURCE_FCM_BALANCED = "fcm_balanced"
SOURCE_FCM_MAX_INFERENCE = "fcm_max_inference"
SOURCE_FCM_MAX_ACCURACY = "fcm_max_accuracy"
SOURCE_MFA = "mfa_baseline"

FCM_MODES = ("balanced", "max_inference", "max_accuracy")

# weekday hour windows (slot indices; weekend block starts at 24)
WORK_SLOTS = tuple(range(9, 19))                       # 9:00-18:00 weekday
HOME_SLOTS = tuple(range(19, 24)) + tuple(range(0, 7)) # weekday evening+night
HOME_WEEKEND_SLOTS = tuple(range(24 + 19, 24 + 24))    # weekend evening
MFA_HOME_SLOTS = tuple(range(0, 8)) + tuple(range(19, 24))
MFA_WORK_SLOTS = tuple(range(9, 19))

GROUND_TRUTH_HEADER = ["user_id", "role", "tower_id"]

DEFAULT_MATCH_RADIUS_KM = 1.0


@dataclass(frozen=True, slots=True)
class RoleAssignment:
    user_id: str
    location_id: int
    role: str
    membership: float
    source: str


@dataclass(slots=True)
class GroundTruth:
    home: dict[str, str]  # user_id -> tower_id
    work: dict[str, str]

    def tower_for(self, user_id: str, role: str) -> str | None:
        table = self.home if role == ROLE_HOME else self.work
        return table.get(user_id)


@dataclass(slots=True)
class EvalMetrics:
    role: str
    accuracy: float | None  # None when nothing was inferred
    inference_rate: float
    inferred: int
    correct: int
    total_users: int
    excluded_users: int = 0


def parse_ground_truth(source) -> GroundTruth:
    """Ground-truth CSV: user_id,role,tower_id with role in {home, work}."""
    if hasattr(source, "read"):
        data = source.read()
        fh = io.StringIO(data.decode("utf-8") if isinstance(data, bytes) else data)
    else:
        fh = open(source, "r", encoding="utf-8", newline="")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != GROUND_TRUTH_HEADER:
            raise InputError(
                f"bad ground-truth header {header!r}, expected {GROUND_TRUTH_HEADER}"
            )
        gt = GroundTruth({}, {})
        for row in reader:
            if not row:
                continue
            if len(row) != 3 or row[1].strip() not in (ROLE_HOME, ROLE_WORK):
                raise InputError(f"bad ground-truth row {row!r}")
            user_id, role, tower_id = (c.strip() for c in row)
            (gt.home if role == ROLE_HOME else gt.work)[user_id] = tower_id
    return gt


def _window_mass(curve: np.ndarray, slots: Sequence[int]) -> float:
    return float(curve[list(slots)].sum())


def label_clusters(centroids: np.ndarray) -> list[str]:
    """Role per cluster from the hour-window masses of its presence curve.

    The cluster with the largest work-minus-home mass is the workplace;
    home goes to up to two remaining clusters whose home mass beats their
    work mass and whose total mass is above the median centroid mass
    (matching the two-home-clusters reading of a four-way segmentation).
    Everything else, including all-zero curves, is a third place.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    k = centroids.shape[0]
    roles = [ROLE_THIRD] * k
    total_mass = centroids.sum(axis=1)
    nonzero = [i for i in range(k) if total_mass[i] > 0.0]
    if not nonzero:
        return roles
    work_mass = np.array([_window_mass(centroids[i], WORK_SLOTS) for i in range(k)])
    home_mass = np.array(
        [
            _window_mass(centroids[i], HOME_SLOTS)
            + _window_mass(centroids[i], HOME_WEEKEND_SLOTS)
            for i in range(k)
        ]
    )
    work_idx = max(nonzero, key=lambda i: (work_mass[i] - home_mass[i], -i))
    roles[work_idx] = ROLE_WORK
    median_mass = float(np.median(total_mass))
    home_candidates = [
        i
        for i in nonzero
        if i != work_idx and home_mass[i] > work_mass[i] and total_mass[i] > median_mass
    ]
    home_candidates.sort(key=lambda i: (-home_mass[i], i))
    for i in home_candidates[:2]:
        roles[i] = ROLE_HOME
    return roles


def assign_roles_hard(
    assignment: np.ndarray,
    cluster_roles: Sequence[str],
    index: Sequence[tuple[str, int]],
    source: str = SOURCE_KMEANS,
) -> list[RoleAssignment]:
    """Each location takes its cluster's role with membership 1."""
    return [
        RoleAssignment(user_id, loc_id, cluster_roles[assignment[row]], 1.0, source)
        for row, (user_id, loc_id) in enumerate(index)
    ]


def assign_roles_fuzzy(
    membership: np.ndarray,
    cluster_roles: Sequence[str],
    index: Sequence[tuple[str, int]],
    mode: str,
) -> list[RoleAssignment]:
    """Fuzzy role assignment in one of three operating modes.

    balanced: the argmax-membership cluster's role.
    max_inference: balanced, then third-place locations whose winning
        membership is below the median (over third-place winners) are
        relabeled to their second-strongest cluster's role.
    max_accuracy: balanced, then any location whose winning membership is
        below the first quartile of winning memberships for its role is
        removed (no inference).
    """
    if mode not in FCM_MODES:
        raise ValueError(f"unknown FCM mode {mode!r}")
    membership = np.asarray(membership, dtype=np.float64)
    winners = membership.argmax(axis=1)
    win_m = membership[np.arange(len(winners)), winners]
    roles = [cluster_roles[w] for w in winners]
    source = {
        "balanced": SOURCE_FCM_BALANCED,
        "max_inference": SOURCE_FCM_MAX_INFERENCE,
        "max_accuracy": SOURCE_FCM_MAX_ACCURACY,
    }[mode]

    out_roles = list(roles)
    out_member = win_m.copy()
    if mode == "max_inference":
        third_rows = [i for i, role in enumerate(roles) if role == ROLE_THIRD]
        if third_rows:
            cutoff = float(np.median(win_m[third_rows]))
            for i in third_rows:
                if win_m[i] < cutoff and membership.shape[1] >= 2:
                    order = np.argsort(-membership[i], kind="stable")
                    second = int(order[1])
                    out_roles[i] = cluster_roles[second]
                    out_member[i] = membership[i, second]
    elif mode == "max_accuracy":
        for role in set(roles):
            rows = [i for i, r in enumerate(roles) if r == role]
            cutoff = float(np.percentile(win_m[rows], 25))
            for i in rows:
                if win_m[i] < cutoff:
                    out_roles[i] = ROLE_REMOVED
    return [
        RoleAssignment(user_id, loc_id, out_roles[row], float(out_member[row]), source)
        for row, (user_id, loc_id) in enumerate(index)
    ]


def mfa_infer(
    per_location: Sequence[PresenceCounts],
) -> tuple[int | None, int | None]:
    """Most-frequent-appearance pick for one user.

    Home is the location with the most weekday events in the night/evening
    window, work the one with the most in the daytime window; ties go to the
    lower location id. A user with no weekday event gets no inference.
    """
    if not per_location:
        return None, None
    weekday_total = sum(int(p.counts[:24].sum()) for p in per_location)
    if weekday_total == 0:
        return None, None
    home_slots = list(MFA_HOME_SLOTS)
    work_slots = list(MFA_WORK_SLOTS)
    ordered = sorted(per_location, key=lambda p: p.location_id)
    home = max(ordered, key=lambda p: (int(p.counts[home_slots].sum()), -p.location_id))
    work = max(ordered, key=lambda p: (int(p.counts[work_slots].sum()), -p.location_id))
    return home.location_id, work.location_id


def mfa_baseline(
    counts_by_user: Mapping[str, Sequence[PresenceCounts]],
) -> list[RoleAssignment]:
    """Baseline assignments: one home and one work location per user."""
    assignments = []
    for user_id in sorted(counts_by_user):
        home_loc, work_loc = mfa_infer(counts_by_user[user_id])
        if home_loc is not None:
            assignments.append(
                RoleAssignment(user_id, home_loc, ROLE_HOME, 1.0, SOURCE_MFA)
            )
        if work_loc is not None:
            # a single-location user gets the same location for both roles
            assignments.append(
                RoleAssignment(user_id, work_loc, ROLE_WORK, 1.0, SOURCE_MFA)
            )
    return assignments


def _representative(
    candidates: list[tuple[RoleAssignment, UserLocation]]
) -> UserLocation:
    return max(
        candidates,
        key=lambda pair: (pair[0].membership, pair[1].presence_count, -pair[1].location_id),
    )[1]


def evaluate(
    assignments: Sequence[RoleAssignment],
    ground_truth: GroundTruth,
    locations: Mapping[tuple[str, int], UserLocation],
    registry: TowerRegistry,
    match_radius_km: float = DEFAULT_MATCH_RADIUS_KM,
) -> dict[str, EvalMetrics]:
    """Accuracy and inference rate for home and work.

    A user counts as inferred for a role when at least one non-removed
    location carries it; the representative is the highest-membership such
    location (ties: presence count, then lower id). The inference is correct
    when the ground-truth tower is a member of the representative or lies
    within match_radius_km of its centroid. Users whose ground-truth tower
    is missing from the registry are excluded and tallied.
    """
    by_user_role: dict[tuple[str, str], list[tuple[RoleAssignment, UserLocation]]] = {}
    for a in assignments:
        if a.role not in (ROLE_HOME, ROLE_WORK):
            continue
        loc = locations.get((a.user_id, a.location_id))
        if loc is None:
            continue
        by_user_role.setdefault((a.user_id, a.role), []).append((a, loc))

    results = {}
    for role, table in ((ROLE_HOME, ground_truth.home), (ROLE_WORK, ground_truth.work)):
        total = 0
        excluded = 0
        inferred = 0
        correct = 0
        for user_id in sorted(table):
            gt_tower = table[user_id]
            if gt_tower not in registry:
                excluded += 1
                continue
            total += 1
            candidates = by_user_role.get((user_id, role))
            if not candidates:
                continue
            inferred += 1
            rep = _representative(candidates)
            if gt_tower in rep.member_towers:
                correct += 1
            elif haversine_km(rep.centroid, registry[gt_tower]) <= match_radius_km:
                correct += 1
        results[role] = EvalMetrics(
            role=role,
            accuracy=(correct / inferred) if inferred else None,
            inference_rate=(inferred / total) if total else 0.0,
            inferred=inferred,
            correct=correct,
            total_users=total,
            excluded_users=excluded,
        )
    return results


def compare_report(
    metrics_by_method: Mapping[str, Mapping[str, EvalMetrics]],
    baseline: str = SOURCE_MFA,
) -> dict:
    """Per-method accuracy / inference-rate table with improvement over the
    baseline (null where the baseline is missing or zero)."""
    if len(metrics_by_method) < 2:
        raise ValueError("need at least two methods to compare")
    base = metrics_by_method.get(baseline)
    report: dict = {"baseline": baseline, "methods": {}}
    for method in metrics_by_method:
        entry: dict = {}
        for role in (ROLE_HOME, ROLE_WORK):
            m = metrics_by_method[method][role]
            improvement = None
            if (
                base is not None
                and method != baseline
                and m.accuracy is not None
                and base[role].accuracy
            ):
                improvement = (m.accuracy - base[role].accuracy) / base[role].accuracy
            entry[role] = {
                "accuracy": m.accuracy,
                "inference_rate": m.inference_rate,
                "inferred": m.inferred,
                "correct": m.correct,
                "total_users": m.total_users,
                "excluded_users": m.excluded_users,
                "improvement_vs_baseline": improvement,
            }
        report["methods"][method] = entry
    return report


def format_report_table(report: dict) -> str:
    """Aligned-column text table: method x {accuracy, inference rate}."""
    headers = ["method", "home acc", "home inf", "work acc", "work inf", "impr(h)", "impr(w)"]
    rows = [headers]
    for method in report["methods"]:
        entry = report["methods"][method]

        def fmt(value, pct=False):
            if value is None:
                return "n/a"
            return f"{value * 100:.0f}%" if pct else f"{value:.2f}"

        rows.append(
            [
                method,
                fmt(entry[ROLE_HOME]["accuracy"]),
                fmt(entry[ROLE_HOME]["inference_rate"], pct=True),
                fmt(entry[ROLE_WORK]["accuracy"]),
                fmt(entry[ROLE_WORK]["inference_rate"], pct=True),
                fmt(entry[ROLE_HOME]["improvement_vs_baseline"], pct=True),
                fmt(entry[ROLE_WORK]["improvement_vs_baseline"], pct=True),
            ]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for r_idx, r in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)).rstrip())
        if r_idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    return "\n".join(lines)


def density_grid(
    assignments: Sequence[RoleAssignment],
    locations: Mapping[tuple[str, int], UserLocation],
    cell_deg: float = 0.01,
) -> list[tuple[float, float, int, int]]:
    """Per-grid-cell counts of representative home / work locations.

    One representative per user per role (same rule as evaluation). Cells
    are indexed by their lower-left corner at cell_deg resolution.
    """
    by_user_role: dict[tuple[str, str], list[tuple[RoleAssignment, UserLocation]]] = {}
    for a in assignments:
        if a.role not in (ROLE_HOME, ROLE_WORK):
            continue
        loc = locations.get((a.user_id, a.location_id))
        if loc is not None:
            by_user_role.setdefault((a.user_id, a.role), []).append((a, loc))
    cells: dict[tuple[int, int], list[int]] = {}
    for (user_id, role), candidates in by_user_role.items():
        rep = _representative(candidates)
        key = (
            int(np.floor(rep.centroid.lat_deg / cell_deg)),
            int(np.floor(rep.centroid.lon_deg / cell_deg)),
        )
        counts = cells.setdefault(key, [0, 0])
        counts[0 if role == ROLE_HOME else 1] += 1
    return [
        (key[0] * cell_deg, key[1] * cell_deg, counts[0], counts[1])
        for key, counts in sorted(cells.items())
    ]
