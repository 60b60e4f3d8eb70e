from .base import (
    MODEL_KINDS,
    load_snapshot_state,
    AgentModel,
    DiscreteDist,
    TableHubView,
    load_snapshot,
    save_snapshot,
)
from .bayesian import (
    BayesianModel,
    BayesianRuntime,
    PowerLawRank,
    RankModel,
    decay_weight,
    fit_bayesian,
    generate_tuple,
    geometric_length,
    rank_sample,
)
from .embedding import (
    Embedding,
    GraphFactorization,
    HopeEmbedding,
    LaplacianEigenmaps,
    LpeModel,
    LpePolicy,
    fit_lpe,
    load_embedding,
    map_score,
    save_embedding,
    train_gf,
    train_hope,
    train_le,
)
from .newentity import (
    FEATURE_NAMES,
    fit_s3d_suite,
    s3d_from_json,
    s3d_to_json,
    ExplorationModel,
    FeatureTable,
    PopularityCandidateSource,
    S3DRegressor,
    attach_new_entity_behavior,
    extract_features,
    fit_s3d,
    select_lambda,
)
from .stationary import (
    BaselineModel,
    BaselinePolicy,
    GroundEventModel,
    GroundEventPolicy,
    NullModel,
    PreferentialModel,
    PreferentialPolicy,
    fit_baseline,
    fit_ground_event,
    fit_null,
    fit_preferential,
)

__all__ = [
    "MODEL_KINDS",
    "AgentModel",
    "DiscreteDist",
    "TableHubView",
    "load_snapshot",
    "load_snapshot_state",
    "save_snapshot",
    "BaselineModel",
    "BaselinePolicy",
    "GroundEventModel",
    "GroundEventPolicy",
    "NullModel",
    "PreferentialModel",
    "PreferentialPolicy",
    "fit_baseline",
    "fit_ground_event",
    "fit_null",
    "fit_preferential",
    "BayesianModel",
    "BayesianRuntime",
    "PowerLawRank",
    "RankModel",
    "decay_weight",
    "fit_bayesian",
    "generate_tuple",
    "geometric_length",
    "rank_sample",
    "Embedding",
    "GraphFactorization",
    "HopeEmbedding",
    "LaplacianEigenmaps",
    "LpeModel",
    "LpePolicy",
    "fit_lpe",
    "load_embedding",
    "map_score",
    "save_embedding",
    "train_gf",
    "train_hope",
    "train_le",
    "FEATURE_NAMES",
    "ExplorationModel",
    "FeatureTable",
    "PopularityCandidateSource",
    "S3DRegressor",
    "attach_new_entity_behavior",
    "extract_features",
    "fit_s3d",
    "fit_s3d_suite",
    "s3d_from_json",
    "s3d_to_json",
    "select_lambda",
]
