"""Typed-verb predicate clustering.

(subject, verb, object) triples are typed by selectional association,
embedded as translations, clustered into verb senses and then global
predicate clusters, and used as message features for classification.
"""

from .cluster import (
    ClusterMaps,
    KMeans,
    SenseInventory,
    SignedSpectralClustering,
    SpectralClustering,
    Thesaurus,
    apply_antonym_edges,
    cosine_affinity,
    kmeans,
    load_cluster_maps,
    predicate_clusters,
    rbf_affinity,
    save_cluster_maps,
    signed_spectral_cluster,
    spectral_cluster,
    verb_argument_clusters,
)
from .corpus import (
    AssociationTable,
    IntransitiveTriple,
    Triple,
    TypedTriple,
    TypedVerb,
    build_typed_triples,
    load_category_map,
    load_triples,
    load_typed_triples,
    resnik_associations,
    save_typed_triples,
    split_for_training,
)
from .embedding import (
    EmbeddingTable,
    TrainConfig,
    TranslationEmbedding,
    gradient_check,
    mean_reciprocal_rank,
    rank_objects,
    train_embeddings,
)
from .errors import DataError, NumericError
from .evaluate import (
    CvReport,
    LabeledInstance,
    LogisticRegression,
    cross_validate,
    f_score,
    load_labels,
    stratified_folds,
    train_logreg,
)
from .featurize import (
    ClusterFeaturizer,
    FeatureVector,
    KernelRecord,
    SvoBaselineFeaturizer,
    featurize,
    featurize_svo_baseline,
    load_features,
    load_kernels,
    save_features,
)
from .seeding import derive_seed

__version__ = "0.1.0"

__all__ = [
    "AssociationTable",
    "ClusterFeaturizer",
    "ClusterMaps",
    "CvReport",
    "DataError",
    "EmbeddingTable",
    "FeatureVector",
    "IntransitiveTriple",
    "KMeans",
    "KernelRecord",
    "LabeledInstance",
    "LogisticRegression",
    "NumericError",
    "SenseInventory",
    "SignedSpectralClustering",
    "SpectralClustering",
    "SvoBaselineFeaturizer",
    "Thesaurus",
    "TrainConfig",
    "TranslationEmbedding",
    "Triple",
    "TypedTriple",
    "TypedVerb",
    "apply_antonym_edges",
    "build_typed_triples",
    "cosine_affinity",
    "cross_validate",
    "derive_seed",
    "f_score",
    "featurize",
    "featurize_svo_baseline",
    "gradient_check",
    "kmeans",
    "load_category_map",
    "load_cluster_maps",
    "load_features",
    "load_kernels",
    "load_labels",
    "load_triples",
    "load_typed_triples",
    "mean_reciprocal_rank",
    "predicate_clusters",
    "rank_objects",
    "rbf_affinity",
    "resnik_associations",
    "save_cluster_maps",
    "save_features",
    "save_typed_triples",
    "signed_spectral_cluster",
    "spectral_cluster",
    "split_for_training",
    "stratified_folds",
    "train_embeddings",
    "train_logreg",
    "verb_argument_clusters",
]
