"""Seeded synthetic trace corpora with known home / work ground truth.

Agents follow archetype schedules (commuter, near-home worker, non-worker,
night shifter) over a jittered tower grid; events are drawn per hour slot
and placed at the scheduled tower with positional noise. Several behaviors
deliberately confound frequency counting the way real event-driven traces
do: some agents' at-home events are thinned (landline use), and a share of
commuters work from home often enough that their daytime event mass shifts
there. Night shifters keep inverted schedules and are not filtered.

Determinism: the portable RNG is PCG64 seeded through SeedSequence with
explicit integer entropy; every distribution draw (Poisson, Bernoulli,
index choice) is an explicit transform of the uniform stream, so a seed
pins the corpus byte-for-byte. Agents use independent child streams, so
generation order cannot matter; records come out canonically sorted by
(user_id, timestamp, tower_id).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from zoneinfo import ZoneInfo

import numpy as np

from .errors import ConfigError
from .geo import haversine_km
from .inference import GroundTruth
from .model import GeoPoint, TowerRegistry, TraceRecord

ARCHETYPES = ("commuter", "near_home_worker", "non_worker", "night_shifter")

# expected events per hour slot before per-agent scaling
_WEEKDAY_RATE = (
    [0.15] * 6 + [0.25, 0.35, 0.45] + [0.55] * 9 + [0.70] * 5 + [0.25]
)
_WEEKEND_RATE = (
    [0.12] * 7 + [0.30, 0.30] + [0.50] * 9 + [0.65] * 5 + [0.25]
)
BASE_RATE = np.array(_WEEKDAY_RATE + _WEEKEND_RATE, dtype=np.float64)

_WORK_HOURS = frozenset(range(9, 19))
_NIGHT_SHIFT_HOURS = frozenset({22, 23, 0, 1, 2, 3, 4, 5})
_LUNCH_HOURS = frozenset({12, 13})
_EVENING_HOURS = frozenset({19, 20, 21, 22})
_WEEKEND_OUT_HOURS = frozenset(range(10, 23))

_LUNCH_PROB = 0.15
_NOISE_PROB = 0.2  # event placed on a neighbor tower instead of the true one
_NOISE_RADIUS_KM = 1.0


@dataclass(slots=True)
class TowerGridConfig:
    nx: int = 12
    ny: int = 12
    spacing_km: float = 0.8
    jitter_km: float = 0.08
    origin_lat: float = 31.0
    origin_lon: float = 121.0


@dataclass(slots=True)
class SynthConfig:
    n_agents: int = 100
    days: int = 30
    archetype_mix: dict[str, float] = field(
        default_factory=lambda: {
            "commuter": 0.6,
            "near_home_worker": 0.2,
            "non_worker": 0.15,
            "night_shifter": 0.05,
        }
    )
    tower_grid: TowerGridConfig = field(default_factory=TowerGridConfig)
    rng_seed: int = 0
    landline_suppression_prob: float = 0.35
    call_rate_scale: float = 1.0
    flexible_worker_prob: float = 0.3
    start_date: str = "2024-03-04"  # a Monday, so day 0 starts a full week
    timezone: str = "UTC"

    def validate(self) -> None:
        if self.n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if self.tower_grid.nx < 1 or self.tower_grid.ny < 1:
            raise ConfigError("tower grid must contain at least one tower")
        unknown = set(self.archetype_mix) - set(ARCHETYPES)
        if unknown:
            raise ConfigError(f"unknown archetypes: {sorted(unknown)}")
        total = sum(self.archetype_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"archetype_mix must sum to 1, got {total}")
        if not 0.0 <= self.landline_suppression_prob <= 1.0:
            raise ConfigError("landline_suppression_prob must be in [0, 1]")
        if self.call_rate_scale <= 0:
            raise ConfigError("call_rate_scale must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        grid = data.pop("tower_grid", None)
        try:
            if isinstance(grid, dict):
                cfg = cls(**data, tower_grid=TowerGridConfig(**grid))
            elif grid is None:
                cfg = cls(**data)
            else:
                raise TypeError("tower_grid must be an object")
        except TypeError as exc:
            raise ConfigError(f"bad synth config: {exc}") from exc
        cfg.validate()
        return cfg


@dataclass(slots=True)
class AgentProfile:
    user_id: str
    archetype: str
    home_tower: str
    work_tower: str | None
    call_rate_curve: np.ndarray  # float64[48]
    third_place_towers: list[str]
    third_place_prob: float
    home_thinning: float  # 1.0 = no landline suppression
    home_day_prob: float  # probability a scheduled work day is spent at home


def _agent_rng(seed: int, agent_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([int(seed), 1, int(agent_index)]))
    )


def _grid_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0])))


def _poisson(rng: np.random.Generator, lam: float) -> int:
    """Knuth product-of-uniforms draw; exact for the small rates used here."""
    if lam <= 0.0:
        return 0
    limit = math.exp(-lam)
    count = 0
    product = rng.random()
    while product > limit:
        count += 1
        product *= rng.random()
    return count


def _pick(rng: np.random.Generator, options: list) -> int:
    return min(int(rng.random() * len(options)), len(options) - 1)


def build_tower_grid(config: SynthConfig) -> TowerRegistry:
    """Jittered square grid; spacing below the 1 km clustering radius so the
    leader pass gets exercised non-trivially."""
    grid = config.tower_grid
    rng = _grid_rng(config.rng_seed)
    registry = TowerRegistry()
    lat0 = grid.origin_lat
    km_per_deg_lat = 111.19492664455873  # R * pi / 180 with R = 6371.0
    km_per_deg_lon = km_per_deg_lat * math.cos(math.radians(lat0))
    idx = 0
    for iy in range(grid.ny):
        for ix in range(grid.nx):
            dx = ix * grid.spacing_km + (2.0 * rng.random() - 1.0) * grid.jitter_km
            dy = iy * grid.spacing_km + (2.0 * rng.random() - 1.0) * grid.jitter_km
            point = GeoPoint(
                lat0 + dy / km_per_deg_lat,
                grid.origin_lon + dx / km_per_deg_lon,
            )
            registry.entries[f"T{idx:04d}"] = point
            idx += 1
    return registry


def _neighbor_table(registry: TowerRegistry, radius_km: float) -> dict[str, list[str]]:
    ids = sorted(registry.entries)
    out: dict[str, list[str]] = {tid: [] for tid in ids}
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if haversine_km(registry[a], registry[b]) <= radius_km:
                out[a].append(b)
                out[b].append(a)
    for tid in ids:
        out[tid].sort()
    return out


def _towers_in_band(
    registry: TowerRegistry, center: str, min_km: float, max_km: float
) -> list[str]:
    c = registry[center]
    return [
        tid
        for tid in sorted(registry.entries)
        if tid != center and min_km < haversine_km(c, registry[tid]) <= max_km
    ]


def _apportion(mix: dict[str, float], n: int) -> list[str]:
    """Largest-remainder apportionment in fixed archetype order."""
    names = [a for a in ARCHETYPES if mix.get(a, 0.0) > 0.0]
    exact = [mix[a] * n for a in names]
    counts = [int(math.floor(x)) for x in exact]
    short = n - sum(counts)
    by_frac = sorted(range(len(names)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in by_frac[:short]:
        counts[i] += 1
    out: list[str] = []
    for name, c in zip(names, counts):
        out.extend([name] * c)
    return out


def _build_profile(
    user_id: str,
    archetype: str,
    registry: TowerRegistry,
    neighbors: dict[str, list[str]],
    config: SynthConfig,
    rng: np.random.Generator,
) -> AgentProfile:
    all_ids = sorted(registry.entries)
    home = all_ids[_pick(rng, all_ids)]
    work = None
    if archetype in ("commuter", "night_shifter"):
        far = _towers_in_band(registry, home, 2.0, float("inf"))
        work = far[_pick(rng, far)] if far else None
    elif archetype == "near_home_worker":
        near = neighbors[home]
        work = near[_pick(rng, near)] if near else None

    band = _towers_in_band(registry, home, 1.0, 5.0)
    band = [t for t in band if t != work] or [t for t in all_ids if t not in (home, work)]
    n_third = 2 + (1 if rng.random() < 0.5 else 0)
    thirds: list[str] = []
    for _ in range(min(n_third, len(band))):
        j = _pick(rng, band)
        while band[j] in thirds:
            j = (j + 1) % len(band)
        thirds.append(band[j])

    base_prob = {
        "commuter": 0.15,
        "near_home_worker": 0.15,
        "non_worker": 0.20,
        "night_shifter": 0.10,
    }[archetype]
    third_prob = base_prob + (rng.random() - 0.5) * 0.1
    activity = 0.7 + 0.7 * rng.random()
    if rng.random() < config.landline_suppression_prob:
        thinning = 0.25 * rng.random()
    else:
        thinning = 1.0
    home_day_prob = 0.0
    if archetype == "commuter":
        if rng.random() < config.flexible_worker_prob:
            home_day_prob = 0.45 + 0.25 * rng.random()
        else:
            home_day_prob = 0.15 * rng.random()
    elif archetype == "near_home_worker":
        home_day_prob = 0.15 * rng.random()

    return AgentProfile(
        user_id=user_id,
        archetype=archetype,
        home_tower=home,
        work_tower=work,
        call_rate_curve=BASE_RATE * activity * config.call_rate_scale,
        third_place_towers=thirds,
        third_place_prob=max(0.0, min(1.0, third_prob)),
        home_thinning=thinning,
        home_day_prob=home_day_prob,
    )


def _scheduled_place(
    profile: AgentProfile,
    is_weekday: bool,
    hour: int,
    at_work_today: bool,
    rng: np.random.Generator,
) -> str:
    """Tower the agent is at for one hour slot (draws excursion decisions)."""
    arch = profile.archetype
    thirds = profile.third_place_towers

    if arch in ("commuter", "near_home_worker"):
        if is_weekday and at_work_today and hour in _WORK_HOURS:
            if thirds and hour in _LUNCH_HOURS and rng.random() < _LUNCH_PROB:
                return thirds[_pick(rng, thirds)]
            return profile.work_tower or profile.home_tower
        out_hours = _EVENING_HOURS if is_weekday else _WEEKEND_OUT_HOURS
        prob = profile.third_place_prob * (1.0 if is_weekday else 1.5)
        if thirds and hour in out_hours and rng.random() < prob:
            return thirds[_pick(rng, thirds)]
        return profile.home_tower

    if arch == "night_shifter":
        if is_weekday and hour in _NIGHT_SHIFT_HOURS:
            return profile.work_tower or profile.home_tower
        if thirds and not is_weekday and hour in _WEEKEND_OUT_HOURS:
            if rng.random() < profile.third_place_prob:
                return thirds[_pick(rng, thirds)]
        return profile.home_tower

    # non_worker
    if thirds and 10 <= hour <= 17 and rng.random() < profile.third_place_prob * 2.0:
        return thirds[_pick(rng, thirds)]
    if thirds and hour in _EVENING_HOURS and rng.random() < profile.third_place_prob:
        return thirds[_pick(rng, thirds)]
    return profile.home_tower


def _generate_agent_records(
    profile: AgentProfile,
    registry: TowerRegistry,
    neighbors: dict[str, list[str]],
    config: SynthConfig,
    rng: np.random.Generator,
    start: datetime,
) -> list[TraceRecord]:
    records: list[TraceRecord] = []
    for day in range(config.days):
        day_start = start + timedelta(days=day)
        is_weekday = day_start.weekday() < 5
        at_work_today = True
        if profile.work_tower is not None and is_weekday:
            at_work_today = rng.random() >= profile.home_day_prob
        for hour in range(24):
            place = _scheduled_place(profile, is_weekday, hour, at_work_today, rng)
            slot = hour if is_weekday else 24 + hour
            lam = profile.call_rate_curve[slot]
            if place == profile.home_tower:
                lam *= profile.home_thinning
            n_events = _poisson(rng, lam)
            for _ in range(n_events):
                second = min(int(rng.random() * 3600.0), 3599)
                tower = place
                if rng.random() < _NOISE_PROB:
                    near = neighbors[place]
                    if near:
                        tower = near[_pick(rng, near)]
                u = rng.random()
                event_type = "call" if u < 0.5 else ("sms" if u < 0.8 else "data")
                records.append(
                    TraceRecord(
                        user_id=profile.user_id,
                        timestamp=day_start + timedelta(hours=hour, seconds=second),
                        tower_id=tower,
                        event_type=event_type,
                    )
                )
    return records


def generate_corpus(
    config: SynthConfig,
) -> tuple[list[TraceRecord], TowerRegistry, GroundTruth, list[AgentProfile]]:
    """Build (records, registry, ground_truth, profiles) for a config.

    Records are canonically sorted by (user_id, timestamp, tower_id) and
    identical for identical configs.
    """
    config.validate()
    registry = build_tower_grid(config)
    neighbors = _neighbor_table(registry, _NOISE_RADIUS_KM)
    try:
        zone = ZoneInfo(config.timezone)
    except Exception as exc:
        raise ConfigError(f"unknown timezone {config.timezone!r}") from exc
    try:
        base_day = datetime.strptime(config.start_date, "%Y-%m-%d")
    except ValueError as exc:
        raise ConfigError(f"bad start_date {config.start_date!r}") from exc
    start = base_day.replace(tzinfo=zone)

    archetypes = _apportion(config.archetype_mix, config.n_agents)
    profiles: list[AgentProfile] = []
    records: list[TraceRecord] = []
    ground_truth = GroundTruth({}, {})
    for i, archetype in enumerate(archetypes):
        rng = _agent_rng(config.rng_seed, i)
        profile = _build_profile(
            f"u{i:04d}", archetype, registry, neighbors, config, rng
        )
        profiles.append(profile)
        ground_truth.home[profile.user_id] = profile.home_tower
        if profile.work_tower is not None:
            ground_truth.work[profile.user_id] = profile.work_tower
        records.extend(
            _generate_agent_records(profile, registry, neighbors, config, rng, start)
        )
    records.sort(key=lambda r: (r.user_id, r.timestamp, r.tower_id, r.event_type))
    return records, registry, ground_truth, profiles


def write_ground_truth_csv(ground_truth: GroundTruth, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "role", "tower_id"])
        for user_id in sorted(ground_truth.home):
            writer.writerow([user_id, "home", ground_truth.home[user_id]])
        for user_id in sorted(ground_truth.work):
            writer.writerow([user_id, "work", ground_truth.work[user_id]])
