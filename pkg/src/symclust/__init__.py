"""Leaders and Ward-type hierarchical clustering of modal-valued symbolic data."""

from .agglom import Dendrogram, MergeRecord, agglomerate, between_dissim, merged_leader
from .diagnostics import InertiaReport, cluster_profiles, inertia
from .dissim import (
    DegenerateError,
    DomainError,
    compute_aggregates,
    cluster_error,
    delta,
    leader_from_aggregates,
    object_dissim,
    optimal_leader,
)
from .ingest import aggregate_unit, categorize, generate_synthetic, load_schema
from .leaders import InfeasibleError, LeadersConfig, leaders_run
from .model import (
    ClusterAggregates,
    Clustering,
    DendrogramNode,
    DissimKind,
    Leader,
    Schema,
    SchemaError,
    SymbolicObject,
    UnitMatrix,
    VariableSpec,
)

__version__ = "0.1.0"
