"""Home / workplace / third-place inference from event-driven mobility traces.

The pipeline turns raw per-event traces into per-user tower clusters
("user locations"), describes each location by its normalized hourly
presence over a 48-slot week, extracts shared presence structures by
eigendecomposition, segments locations with hard and fuzzy clustering, and
labels the segments home / work / third place. A frequency-count baseline,
accuracy and inference-rate metrics, and a seeded synthetic corpus
generator support end-to-end evaluation.
"""

__version__ = "0.1.0"

from .errors import (
    ArtifactError,
    ConfigError,
    ContractViolationError,
    DegenerateClusteringError,
    EigenplacesError,
    EmptyCorpusError,
    InfeasibleClusteringError,
    InputError,
    InsufficientDataError,
)
from .model import (
    GeoPoint,
    TowerRegistry,
    TraceRecord,
    ValidationReport,
    parse_tower_registry,
    parse_trace,
    week_hour_index,
)
from .geo import (
    LocatedUser,
    TowerUsage,
    UserLocation,
    build_user_locations,
    haversine_km,
    leader_cluster,
    rank_towers,
    weighted_centroid,
)
from .features import (
    FeatureMatrix,
    PresenceCounts,
    PresenceVector,
    assemble_matrix,
    build_feature_matrix,
    count_presences,
    normalize,
)
from .eigen import (
    Eigenbasis,
    covariance,
    eigendecompose,
    fit_eigenbasis,
    mean_center,
    project,
    reconstruct,
    select_components,
)
from .clustering import (
    DbBootstrapResult,
    FuzzyClustering,
    HardClustering,
    bootstrap_db,
    davies_bouldin,
    fcm,
    kmeans,
    select_k,
)
from .inference import (
    EvalMetrics,
    GroundTruth,
    RoleAssignment,
    assign_roles_fuzzy,
    assign_roles_hard,
    compare_report,
    evaluate,
    label_clusters,
    mfa_baseline,
    parse_ground_truth,
)
from .synth import AgentProfile, SynthConfig, generate_corpus
from .pipeline import PipelineConfig, load_config, run_pipeline
