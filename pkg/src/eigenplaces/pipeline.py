"""End-to-end pipeline over stage artifacts.

Each stage reads its predecessor's dump from the output directory and
writes its own, so subcommand-by-subcommand runs produce exactly the bytes
a full pipeline run does. Randomized stages derive their streams from the
single config seed.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import artifacts as art
from .clustering import bootstrap_db, fcm, kmeans, select_k
from .eigen import denoise, fit_eigenbasis, project_matrix, select_components
from .errors import ConfigError, EigenplacesError
from .features import build_feature_matrix, count_presences
from .geo import build_user_locations
from .inference import (
    FCM_MODES,
    SOURCE_KMEANS,
    assign_roles_fuzzy,
    assign_roles_hard,
    compare_report,
    density_grid,
    evaluate,
    format_report_table,
    label_clusters,
    mfa_baseline,
    parse_ground_truth,
)
from .model import parse_tower_registry, parse_trace

OUTPUT_DIR_ENV = "EIGENPLACES_OUTPUT_DIR"

FEATURE_SPACES = ("reconstructed", "raw_nhp", "coefficients")

STAGES = (
    "ingest",
    "cluster_towers",
    "features",
    "eigen",
    "cluster",
    "label",
    "evaluate",
)

# artifact file names within output_dir
F_RECORDS = "records.csv"
F_VALIDATION = "validation.json"
F_LOCATIONS = "locations.csv"
F_FEATURES = "features.csv"
F_BASIS = "basis.json"
F_EIGENCURVES = "eigencurves.csv"
F_KMEANS = "kmeans.json"
F_FCM = "fcm.json"
F_MEMBERSHIP = "fcm_membership.csv"
F_DB_BOOTSTRAP = "db_bootstrap.csv"
F_SELECTION = "selection.json"
F_ROLES = "cluster_roles.json"
F_ASSIGN = "assignments.csv"
F_ASSIGN_MFA = "assignments_mfa.csv"
F_REPORT_JSON = "report.json"
F_REPORT_TXT = "report.txt"
F_DENSITY = "density.csv"
F_MANIFEST = "manifest.json"


@dataclass(slots=True)
class DbBootstrapConfig:
    k_min: int = 2
    k_max: int = 8
    replicates: int = 50


@dataclass(slots=True)
class PipelineConfig:
    trace: str = ""
    towers: str = ""
    ground_truth: str | None = None
    output_dir: str = "out"
    timezone: str = ""
    radius_km: float = 1.0
    eigen_k: int = 8
    cluster_k: int | str = 4  # int or "auto"
    fcm_m: float = 2.0
    fcm_mode: str = "all"  # one of FCM_MODES or "all"
    db_bootstrap: DbBootstrapConfig = field(default_factory=DbBootstrapConfig)
    seed: int = 0
    feature_space: str = "reconstructed"
    threads: int = 1
    density_cell_deg: float = 0.01

    def validate(self, require_inputs: bool = True) -> None:
        if require_inputs:
            if not self.trace or not self.towers:
                raise ConfigError("trace and towers paths are required")
            if not self.timezone:
                raise ConfigError("timezone is required")
        if self.radius_km <= 0:
            raise ConfigError("radius_km must be positive")
        if not 1 <= self.eigen_k <= 48:
            raise ConfigError("eigen_k must be in [1, 48]")
        if self.cluster_k != "auto":
            try:
                k = int(self.cluster_k)
            except (TypeError, ValueError):
                raise ConfigError(f"cluster_k must be an int or 'auto', got {self.cluster_k!r}") from None
            if k < 1:
                raise ConfigError("cluster_k must be >= 1")
            self.cluster_k = k
        if self.fcm_m <= 1.0:
            raise ConfigError("fcm_m must be > 1")
        if self.fcm_mode not in FCM_MODES + ("all",):
            raise ConfigError(f"fcm_mode must be one of {FCM_MODES + ('all',)}")
        if self.feature_space not in FEATURE_SPACES:
            raise ConfigError(f"feature_space must be one of {FEATURE_SPACES}")
        b = self.db_bootstrap
        if not (2 <= b.k_min <= b.k_max):
            raise ConfigError("db_bootstrap range must satisfy 2 <= k_min <= k_max")
        if b.replicates < 1:
            raise ConfigError("db_bootstrap.replicates must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.density_cell_deg <= 0:
            raise ConfigError("density_cell_deg must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        boot = data.pop("db_bootstrap", None)
        try:
            cfg = cls(**data)
            if isinstance(boot, dict):
                cfg.db_bootstrap = DbBootstrapConfig(**boot)
            elif boot is not None:
                raise TypeError("db_bootstrap must be an object")
        except TypeError as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from exc
        return cfg

    def to_dict(self) -> dict:
        return {
            "trace": self.trace,
            "towers": self.towers,
            "ground_truth": self.ground_truth,
            "output_dir": self.output_dir,
            "timezone": self.timezone,
            "radius_km": self.radius_km,
            "eigen_k": self.eigen_k,
            "cluster_k": self.cluster_k,
            "fcm_m": self.fcm_m,
            "fcm_mode": self.fcm_mode,
            "db_bootstrap": {
                "k_min": self.db_bootstrap.k_min,
                "k_max": self.db_bootstrap.k_max,
                "replicates": self.db_bootstrap.replicates,
            },
            "seed": self.seed,
            "feature_space": self.feature_space,
            "threads": self.threads,
            "density_cell_deg": self.density_cell_deg,
        }


def load_config(path: str | None, overrides: dict | None = None) -> PipelineConfig:
    """Config file plus overrides; precedence: flags > env > file > defaults."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        data["output_dir"] = env_out
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return PipelineConfig.from_dict(data)


def _out(config: PipelineConfig, name: str) -> str:
    return os.path.join(config.output_dir, name)


def _ensure_output_dir(config: PipelineConfig) -> None:
    try:
        os.makedirs(config.output_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir {config.output_dir!r} not writable: {exc}") from exc


def _load_records(config: PipelineConfig):
    registry = parse_tower_registry(config.towers)
    records, _ = parse_trace(_out(config, F_RECORDS), config.timezone, registry)
    return records, registry


# -- stages ---------------------------------------------------------------------

def stage_ingest(config: PipelineConfig) -> dict:
    """Parse raw inputs into the canonical record artifact + validation report."""
    _ensure_output_dir(config)
    registry = parse_tower_registry(config.towers)
    records, report = parse_trace(config.trace, config.timezone, registry)
    records.sort(key=lambda r: (r.user_id, r.timestamp, r.tower_id, r.event_type))
    art.write_trace_records_csv(_out(config, F_RECORDS), records)
    art.write_json(_out(config, F_VALIDATION), report.to_json_dict())
    return {"records": len(records), "towers": len(registry)}


def stage_cluster_towers(config: PipelineConfig) -> dict:
    records, registry = _load_records(config)
    users = build_user_locations(records, registry, config.radius_km, config.threads)
    art.write_locations_csv(_out(config, F_LOCATIONS), users)
    return {"users": len(users), "locations": sum(len(u.locations) for u in users)}


def stage_features(config: PipelineConfig) -> dict:
    records, _ = _load_records(config)
    locations = art.read_locations_csv(_out(config, F_LOCATIONS))
    users = art.rebuild_located_users(records, locations)
    matrix = build_feature_matrix(users, config.timezone)
    art.write_features_csv(_out(config, F_FEATURES), matrix)
    return {"rows": matrix.n_rows}


def stage_eigen(config: PipelineConfig) -> dict:
    matrix = art.read_features_csv(_out(config, F_FEATURES))
    basis = fit_eigenbasis(matrix)
    art.write_basis_json(_out(config, F_BASIS), basis)
    art.write_eigencurves_csv(_out(config, F_EIGENCURVES), basis, config.eigen_k)
    truncated = select_components(basis, config.eigen_k)
    return {
        "rows": matrix.n_rows,
        "eigen_k": config.eigen_k,
        "explained": truncated.cumulative_explained,
    }


def _clustering_inputs(config: PipelineConfig):
    matrix = art.read_features_csv(_out(config, F_FEATURES))
    basis = art.read_basis_json(_out(config, F_BASIS))
    if config.feature_space == "raw_nhp":
        points = matrix.values
    elif config.feature_space == "coefficients":
        points = project_matrix(matrix.values, basis, config.eigen_k)
    else:
        points = denoise(matrix.values, basis, config.eigen_k)
    return matrix, basis, points


def stage_select_k(config: PipelineConfig) -> dict:
    _, _, points = _clustering_inputs(config)
    boot = config.db_bootstrap
    result = bootstrap_db(
        points,
        k_range=range(boot.k_min, boot.k_max + 1),
        n_replicates=boot.replicates,
        seed=config.seed,
    )
    chosen = select_k(result)
    art.write_db_bootstrap_csv(_out(config, F_DB_BOOTSTRAP), result.scores)
    art.write_json(
        _out(config, F_SELECTION),
        {
            "selected_k": chosen,
            "median": {str(k): result.median[k] for k in result.k_values},
            "q1": {str(k): result.q1[k] for k in result.k_values},
            "q3": {str(k): result.q3[k] for k in result.k_values},
            "replicates": boot.replicates,
        },
    )
    return {"selected_k": chosen}


def _resolve_cluster_k(config: PipelineConfig) -> tuple[int, bool]:
    if config.cluster_k == "auto":
        doc = art.read_json(_out(config, F_SELECTION))
        return int(doc["selected_k"]), True
    return int(config.cluster_k), False


def stage_cluster(config: PipelineConfig) -> dict:
    matrix, _, points = _clustering_inputs(config)
    info: dict = {}
    if config.cluster_k == "auto":
        info.update(stage_select_k(config))
    k, auto = _resolve_cluster_k(config)
    hard = kmeans(points, k, seed=config.seed)
    soft = fcm(points, k, m=config.fcm_m, seed=config.seed)
    art.write_hard_clustering_json(_out(config, F_KMEANS), hard)
    art.write_fuzzy_clustering_json(_out(config, F_FCM), soft)
    art.write_membership_csv(_out(config, F_MEMBERSHIP), soft.membership, matrix.index)
    info.update(
        {
            "k": k,
            "auto": auto,
            "kmeans_iterations": hard.iterations,
            "fcm_iterations": soft.iterations,
        }
    )
    return info


def _centroids_in_nhp_space(config: PipelineConfig, centroids: np.ndarray, basis) -> np.ndarray:
    if config.feature_space == "coefficients":
        return basis.mean + centroids @ basis.eigenvectors[:, : centroids.shape[1]].T
    return centroids


def stage_label(config: PipelineConfig) -> dict:
    basis = art.read_basis_json(_out(config, F_BASIS))
    hard = art.read_hard_clustering_json(_out(config, F_KMEANS))
    membership, index = art.read_membership_csv(_out(config, F_MEMBERSHIP))
    fcm_doc = art.read_json(_out(config, F_FCM))
    fcm_centroids = np.array(fcm_doc["centroids"], dtype=np.float64)

    hard_roles = label_clusters(_centroids_in_nhp_space(config, hard.centroids, basis))
    fcm_roles = label_clusters(_centroids_in_nhp_space(config, fcm_centroids, basis))

    assignments = assign_roles_hard(hard.assignment, hard_roles, index, SOURCE_KMEANS)
    modes = FCM_MODES if config.fcm_mode == "all" else (config.fcm_mode,)
    for mode in modes:
        assignments.extend(assign_roles_fuzzy(membership, fcm_roles, index, mode))
    art.write_assignments_csv(_out(config, F_ASSIGN), assignments)
    art.write_json(
        _out(config, F_ROLES),
        {"kmeans": hard_roles, "fcm": fcm_roles},
    )
    return {"kmeans_roles": hard_roles, "fcm_roles": fcm_roles}


def stage_baseline(config: PipelineConfig) -> dict:
    records, _ = _load_records(config)
    locations = art.read_locations_csv(_out(config, F_LOCATIONS))
    users = art.rebuild_located_users(records, locations)
    counts_by_user = {
        u.user_id: count_presences(u, config.timezone) for u in users
    }
    assignments = mfa_baseline(counts_by_user)
    art.write_assignments_csv(_out(config, F_ASSIGN_MFA), assignments)
    return {"assignments": len(assignments)}


def stage_evaluate(config: PipelineConfig) -> dict:
    registry = parse_tower_registry(config.towers)
    locations = art.read_locations_csv(_out(config, F_LOCATIONS))
    if not os.path.exists(_out(config, F_ASSIGN_MFA)):
        stage_baseline(config)
    behavioral = art.read_assignments_csv(_out(config, F_ASSIGN))
    baseline = art.read_assignments_csv(_out(config, F_ASSIGN_MFA))

    density_source = (
        "fcm_" + config.fcm_mode if config.fcm_mode in FCM_MODES else SOURCE_KMEANS
    )
    density_rows = density_grid(
        [a for a in behavioral if a.source == density_source] or behavioral,
        locations,
        config.density_cell_deg,
    )
    art.write_density_csv(_out(config, F_DENSITY), density_rows)

    if not config.ground_truth:
        note = {"note": "no ground truth", "evaluated": False}
        art.write_json(_out(config, F_REPORT_JSON), note)
        art.write_report_text(_out(config, F_REPORT_TXT), "no ground truth\n")
        return {"evaluated": False}

    ground_truth = parse_ground_truth(config.ground_truth)
    by_method: dict[str, dict] = {}
    for source in sorted({a.source for a in baseline}):
        by_method[source] = evaluate(
            [a for a in baseline if a.source == source],
            ground_truth,
            locations,
            registry,
            config.radius_km,
        )
    for source in sorted({a.source for a in behavioral}):
        by_method[source] = evaluate(
            [a for a in behavioral if a.source == source],
            ground_truth,
            locations,
            registry,
            config.radius_km,
        )
    report = compare_report(by_method)
    report["evaluated"] = True
    art.write_json(_out(config, F_REPORT_JSON), report)
    art.write_report_text(_out(config, F_REPORT_TXT), format_report_table(report))
    return {"evaluated": True, "methods": sorted(by_method)}


STAGE_FUNCTIONS = {
    "ingest": stage_ingest,
    "cluster_towers": stage_cluster_towers,
    "features": stage_features,
    "eigen": stage_eigen,
    "select_k": stage_select_k,
    "cluster": stage_cluster,
    "label": stage_label,
    "baseline": stage_baseline,
    "evaluate": stage_evaluate,
}


def run_pipeline(config: PipelineConfig) -> dict:
    """Run all stages in order; write a manifest with per-stage timings.

    A failing stage aborts with the stage named; artifacts written so far
    stay in place and the failing stage's partial output keeps its
    ``.partial`` suffix.
    """
    config.validate()
    _ensure_output_dir(config)
    manifest: dict = {
        "config": config.to_dict(),
        "version": __version__,
        "numpy": np.__version__,
        "stages": [],
    }
    for stage in STAGES:
        begin = time.perf_counter()
        try:
            info = STAGE_FUNCTIONS[stage](config)
        except EigenplacesError as exc:
            raise type(exc)(f"stage {stage}: {exc}") from exc
        manifest["stages"].append(
            {
                "name": stage,
                "seconds": round(time.perf_counter() - begin, 6),
                "info": info,
            }
        )
    with open(_out(config, F_MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return manifest
