"""Counterfactual explanations from a conditional masked autoregressive flow.

Train once on classifier-labelled tabular data; at inference time a
single sampling pass yields diverse counterfactuals whose sparsity
(via the distance exponent p) and actionability (via feature masks) are
steered through the conditioning vector, with no per-query optimisation.
"""

from .bundle import FlowDensity, ModelBundle
from .classifiers import (
    LabeledDataset,
    LinearClassifier,
    MlpClassifier,
    fit_classifier,
    label_dataset,
)
from .encoding import (
    TabularEncoder,
    decode,
    decode_batch,
    encode,
    encode_batch,
    encoded_dim,
)
from .errors import (
    BundleError,
    ConfigError,
    DataError,
    FlowcfError,
    MissingInputError,
    NumericsError,
    SchemaError,
)
from .flow import ConditionalMaskedFlow, ConditioningContext, LogProbResult, grad_nll
from .generator import (
    CounterfactualBatch,
    CounterfactualGenerator,
    generate_counterfactuals,
)
from .metrics import MetricsReport, compute_report, lof_scores, hypervolume_exact
from .neighbors import MetricParams, NeighborSet, dist_p, dist_pm, knn, sample_qhat
from .schema import (
    ContinuousStats,
    FeatureSpec,
    Instance,
    TableSchema,
    ingest_csv,
    ingest_labeled_csv,
    read_instances,
    write_csv,
)
from .training import TrainConfig, TrainReport, train, train_density

__version__ = "0.1.0"

__all__ = [
    "BundleError",
    "ConditionalMaskedFlow",
    "ConditioningContext",
    "ConfigError",
    "ContinuousStats",
    "CounterfactualBatch",
    "CounterfactualGenerator",
    "DataError",
    "FeatureSpec",
    "FlowcfError",
    "FlowDensity",
    "Instance",
    "LabeledDataset",
    "LinearClassifier",
    "LogProbResult",
    "MetricParams",
    "MetricsReport",
    "MissingInputError",
    "MlpClassifier",
    "ModelBundle",
    "NeighborSet",
    "NumericsError",
    "SchemaError",
    "TableSchema",
    "TabularEncoder",
    "TrainConfig",
    "TrainReport",
    "compute_report",
    "decode",
    "decode_batch",
    "dist_p",
    "dist_pm",
    "encode",
    "encode_batch",
    "encoded_dim",
    "fit_classifier",
    "generate_counterfactuals",
    "grad_nll",
    "hypervolume_exact",
    "ingest_csv",
    "ingest_labeled_csv",
    "knn",
    "label_dataset",
    "lof_scores",
    "read_instances",
    "sample_qhat",
    "train",
    "train_density",
    "write_csv",
]
