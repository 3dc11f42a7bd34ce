"""Per-user tower clustering into user locations.

Towers a user contacted are ranked by activity, then merged with a
single-pass leader scan at a fixed radius: a tower joins the first existing
cluster whose *leader* (not centroid) is within the radius, else it founds
a new cluster. Clustering is strictly per-user; the same physical tower can
belong to different users' locations.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .model import GeoPoint, TowerRegistry, TraceRecord

EARTH_RADIUS_KM = 6371.0

DEFAULT_RADIUS_KM = 1.0


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance on a sphere of radius 6371.0 km."""
    lat1 = math.radians(a.lat_deg)
    lat2 = math.radians(b.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    s = (
        math.sin(dlat * 0.5) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin(dlon * 0.5) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))


@dataclass(frozen=True, slots=True)
class TowerUsage:
    tower_id: str
    active_days: int
    record_count: int


@dataclass(frozen=True, slots=True)
class UserLocation:
    """One user's cluster of towers with a usage-weighted centroid."""

    user_id: str
    location_id: int
    member_towers: frozenset[str]
    leader_tower: str
    centroid: GeoPoint
    presence_count: int


@dataclass(slots=True)
class LocatedUser:
    """A user's records with their location partition.

    ``location_ids[i]`` is the location of ``records[i]``.
    """

    user_id: str
    records: list[TraceRecord]
    locations: list[UserLocation]
    location_ids: list[int]


def rank_towers(records: Sequence[TraceRecord]) -> list[TowerUsage]:
    """Rank one user's towers: active days desc, record count desc, id asc."""
    days: dict[str, set] = {}
    counts: dict[str, int] = {}
    for rec in records:
        days.setdefault(rec.tower_id, set()).add(rec.timestamp.date())
        counts[rec.tower_id] = counts.get(rec.tower_id, 0) + 1
    usages = [
        TowerUsage(tid, len(days[tid]), counts[tid]) for tid in counts
    ]
    usages.sort(key=lambda u: (-u.active_days, -u.record_count, u.tower_id))
    return usages


def leader_cluster(
    ranked: Sequence[TowerUsage],
    registry: TowerRegistry,
    radius_km: float = DEFAULT_RADIUS_KM,
) -> tuple[list[list[str]], int]:
    """Single-pass leader clustering over towers in rank order.

    Returns (clusters, skipped) where each cluster is a tower-id list whose
    first element is the leader, and ``skipped`` counts towers missing from
    the registry. Membership is distance to the leader, first match wins in
    cluster founding order.
    """
    clusters: list[list[str]] = []
    leaders: list[GeoPoint] = []
    skipped = 0
    for usage in ranked:
        if usage.tower_id not in registry:
            skipped += 1
            continue
        point = registry[usage.tower_id]
        for idx, leader_point in enumerate(leaders):
            if haversine_km(point, leader_point) <= radius_km:
                clusters[idx].append(usage.tower_id)
                break
        else:
            clusters.append([usage.tower_id])
            leaders.append(point)
    return clusters, skipped


def weighted_centroid(
    tower_ids: Iterable[str],
    usage_by_tower: Mapping[str, TowerUsage],
    registry: TowerRegistry,
) -> GeoPoint:
    """Record-count-weighted mean of member tower coordinates (degree space;
    fine at the ~1 km cluster scale)."""
    w_sum = 0.0
    lat = 0.0
    lon = 0.0
    for tid in tower_ids:
        w = float(usage_by_tower[tid].record_count)
        p = registry[tid]
        lat += w * p.lat_deg
        lon += w * p.lon_deg
        w_sum += w
    return GeoPoint(lat / w_sum, lon / w_sum)


def assign_presences(
    user_id: str,
    records: list[TraceRecord],
    clusters: Sequence[Sequence[str]],
    usage_by_tower: Mapping[str, TowerUsage],
    registry: TowerRegistry,
) -> tuple[list[UserLocation], list[int]]:
    """Map each record to the location containing its tower.

    Locations are numbered in cluster founding order (0-based per user).
    """
    location_of_tower = {
        tid: idx for idx, cluster in enumerate(clusters) for tid in cluster
    }
    presence = [0] * len(clusters)
    location_ids = []
    for rec in records:
        loc = location_of_tower[rec.tower_id]
        presence[loc] += 1
        location_ids.append(loc)
    locations = [
        UserLocation(
            user_id=user_id,
            location_id=idx,
            member_towers=frozenset(cluster),
            leader_tower=cluster[0],
            centroid=weighted_centroid(cluster, usage_by_tower, registry),
            presence_count=presence[idx],
        )
        for idx, cluster in enumerate(clusters)
    ]
    return locations, location_ids


def locate_user(
    user_id: str,
    records: list[TraceRecord],
    registry: TowerRegistry,
    radius_km: float = DEFAULT_RADIUS_KM,
) -> LocatedUser:
    ranked = rank_towers(records)
    clusters, _ = leader_cluster(ranked, registry, radius_km)
    usage_by_tower = {u.tower_id: u for u in ranked}
    known = {tid for cluster in clusters for tid in cluster}
    kept = [r for r in records if r.tower_id in known]
    locations, location_ids = assign_presences(
        user_id, kept, clusters, usage_by_tower, registry
    )
    return LocatedUser(user_id, kept, locations, location_ids)


def build_user_locations(
    records: Sequence[TraceRecord],
    registry: TowerRegistry,
    radius_km: float = DEFAULT_RADIUS_KM,
    threads: int = 1,
) -> list[LocatedUser]:
    """Cluster every user's towers. Deterministic: users sorted by id, and
    per-user work is order-independent (results are collected in user order
    regardless of thread count)."""
    by_user: dict[str, list[TraceRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    user_ids = sorted(by_user)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(
                pool.map(
                    lambda uid: locate_user(uid, by_user[uid], registry, radius_km),
                    user_ids,
                )
            )
    return [locate_user(uid, by_user[uid], registry, radius_km) for uid in user_ids]
