"""Edge-attribute-aware GCN link prediction on sparse attributed graphs."""

from .graph import (
    MISSING,
    AttrGroupSchema,
    AttributedGraph,
    EdgeAttr,
    NodeAttr,
    build_graph,
    export,
    ingest,
)
from .extraction import (
    PathBundle,
    PathRecord,
    Subgraph,
    TrainingExample,
    build_dataset,
    enumerate_paths,
    examples_for_pairs,
    extract_subgraph,
)
from .model import AgcnModel, ModelConfig, init_params
from .training import TrainConfig, bce_loss, train
from .baselines import ConcatModel, adamic_adar_score, common_neighbors_score
from .evaluation import (
    ScoredPair,
    SynthConfig,
    attribute_rate_table,
    auc,
    generate_synthetic,
    path_stats,
)

__version__ = "0.1.0"

__all__ = [
    "MISSING", "AttrGroupSchema", "AttributedGraph", "EdgeAttr", "NodeAttr",
    "build_graph", "export", "ingest",
    "PathBundle", "PathRecord", "Subgraph", "TrainingExample",
    "build_dataset", "enumerate_paths", "examples_for_pairs", "extract_subgraph",
    "AgcnModel", "ModelConfig", "init_params",
    "TrainConfig", "bce_loss", "train",
    "ConcatModel", "adamic_adar_score", "common_neighbors_score",
    "ScoredPair", "SynthConfig", "attribute_rate_table", "auc",
    "generate_synthetic", "path_stats",
    "__version__",
]
